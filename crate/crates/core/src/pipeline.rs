//! End-to-end stages: detections to records, records to report bundle.

use std::path::Path;

use crate::analytics::export::{create, write_analytics, RECORDS_FILE};
use crate::analytics::transitions::track_endpoints;
use crate::analytics::{
    accumulate_heatmaps, detect_crossings, AnalyticsOutput, Layout, RecordBuilder, RecordTable, TransitionMatrix,
};
use crate::camera::CameraModel;
use crate::config::RunConfig;
use crate::detector_io::FrameBatch;
use crate::error::{Error, Result};
use crate::insights::write_report;
use crate::tracker::{Tracker, TrackerConfig, TrackerStats};

/// Runs the tracker over a frame stream and builds the record table.
pub fn track_stream<I>(
    batches: I,
    tracker_cfg: TrackerConfig,
    cam: &CameraModel,
    layout: &Layout,
) -> Result<(RecordTable, TrackerStats)>
where
    I: IntoIterator<Item = Result<FrameBatch>>,
{
    let mut tracker = Tracker::new(tracker_cfg)?;
    let mut builder = RecordBuilder::new(*cam, layout.zones.clone());
    for batch in batches {
        let batch = batch?;
        let step = tracker.step(&batch)?;
        builder.record_frame(&batch, &step);
    }
    Ok((builder.finish(), tracker.stats()))
}

/// Crossings, origin/destination pairs, transitions and heatmaps, computed
/// concurrently over the finished table.
pub fn analyze_table(
    table: &RecordTable,
    cam: &CameraModel,
    layout: &Layout,
    cell_size: f64,
) -> Result<AnalyticsOutput> {
    let (crossings, (od_pairs, heatmaps)) = std::thread::scope(|s| {
        let crossings = s.spawn(|| detect_crossings(table, &layout.lines));
        let od = s.spawn(|| track_endpoints(table));
        let heat = accumulate_heatmaps(table, cell_size, cam.image_w, cam.image_h);
        (
            crossings.join().expect("crossing worker panicked"),
            (od.join().expect("transition worker panicked"), heat),
        )
    });
    let heatmaps = heatmaps?;
    let transitions = TransitionMatrix::from_moves(layout.zones.ids(), od_pairs.iter().map(|&(_, a, b)| (a, b)));
    Ok(AnalyticsOutput {
        crossings,
        od_pairs,
        transitions,
        heatmaps,
    })
}

pub fn write_records(dir: &Path, table: &RecordTable) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    table.write_csv(create(&dir.join(RECORDS_FILE))?)
}

/// Writes the full analytics and insight bundle for a record table into
/// `dir`; returns the written file names.
pub fn write_bundle(dir: &Path, table: &RecordTable, cfg: &RunConfig) -> Result<Vec<String>> {
    let out = analyze_table(table, &cfg.camera, &cfg.layout, cfg.analytics.cell_size)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = write_analytics(dir, &out)?;
    let report = write_report(
        dir,
        table,
        &out.crossings,
        cfg.camera.fps,
        &cfg.layout.zones.ids(),
        &cfg.analytics.insights(),
    )?;
    files.extend(report.files);
    Ok(files)
}
