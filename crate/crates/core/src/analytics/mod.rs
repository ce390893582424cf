//! Vehicle record table and the post-hoc analytics computed from it.

pub mod crossings;
pub mod export;
pub mod heatmap;
pub mod records;
pub mod transitions;
pub mod zones;

pub use crossings::{crossing_counts, detect_crossings, CrossingEvent, CrossingKind};
pub use export::AnalyticsOutput;
pub use heatmap::{accumulate_heatmaps, HeatmapSet, DEFAULT_CELL_SIZE};
pub use records::{estimate_velocity, RecordBuilder, RecordTable, VehicleRecord};
pub use transitions::{transition_matrix, TransitionMatrix};
pub use zones::{assign_zone, CountLine, Layout, LayoutConfig, Zone, ZoneId, ZoneSet, DEFAULT_ZONE};
