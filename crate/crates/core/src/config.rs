//! Config files: structured loading and the run configuration.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analytics::{Layout, LayoutConfig, DEFAULT_CELL_SIZE};
use crate::camera::{CameraConfig, CameraModel};
use crate::detector_io::ReaderConfig;
use crate::error::{Error, Result};
use crate::insights::InsightConfig;
use crate::tracker::TrackerConfig;

/// Parses a TOML or JSON file, chosen by extension (`.json` is JSON,
/// anything else TOML).
pub fn load_structured<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub cell_size: f64,
    pub velocity_bins: Vec<f64>,
    pub size_bins: Vec<f64>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        let bins = InsightConfig::default();
        AnalyticsConfig {
            cell_size: DEFAULT_CELL_SIZE,
            velocity_bins: bins.velocity_bins,
            size_bins: bins.size_bins,
        }
    }
}

impl AnalyticsConfig {
    pub fn insights(&self) -> InsightConfig {
        InsightConfig {
            velocity_bins: self.velocity_bins.clone(),
            size_bins: self.size_bins.clone(),
        }
    }
}

/// Run configuration file layout. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub camera: PathBuf,
    #[serde(default)]
    pub zones: Option<PathBuf>,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub detector: ReaderConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Fully loaded and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub camera: CameraModel,
    pub layout: Layout,
    pub tracker: TrackerConfig,
    pub analytics: AnalyticsConfig,
    pub detector: ReaderConfig,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Loads the run config and every file it references, validating all of
    /// them.
    pub fn load(path: &Path) -> Result<Self> {
        let file: RunConfigFile = load_structured(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let camera_cfg: CameraConfig = load_structured(&resolve(&file.camera))?;
        let camera = CameraModel::from_config(&camera_cfg)?;
        let layout = match &file.zones {
            Some(z) => load_structured::<LayoutConfig>(&resolve(z))?.build()?,
            None => Layout::default(),
        };
        let cfg = RunConfig {
            camera,
            layout,
            tracker: file.tracker,
            analytics: file.analytics,
            detector: file.detector,
            out_dir: file.out_dir.as_deref().map(resolve),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        let cs = self.analytics.cell_size;
        if !(cs.is_finite() && cs > 0.0) {
            return Err(Error::Config(format!("cell_size must be positive, got {cs}")));
        }
        for (name, edges) in [
            ("velocity_bins", &self.analytics.velocity_bins),
            ("size_bins", &self.analytics.size_bins),
        ] {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("{name} must be at least two ascending edges")));
            }
        }
        Ok(())
    }
}
