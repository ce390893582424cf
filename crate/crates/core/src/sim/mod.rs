//! Deterministic traffic simulator producing detection streams together with
//! the exact analytics they should yield.

pub mod compare;
pub mod oracle;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytics::export::{create, write_analytics, RECORDS_FILE};
use crate::analytics::{
    AnalyticsOutput, Layout, LayoutConfig, RecordTable, TransitionMatrix, VehicleRecord, DEFAULT_CELL_SIZE,
};
use crate::camera::{CameraConfig, CameraModel};
use crate::config::{AnalyticsConfig, RunConfigFile};
use crate::detector_io::{write_detection_stream, Category, Detection, FrameBatch, ReaderConfig, StreamMeta};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point2};
use crate::tracker::TrackerConfig;

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const TRUTH_DIR: &str = "truth";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimNoise {
    /// Std of the Gaussian jitter added to box position and size, px.
    pub jitter_px: f64,
    pub miss_prob: f64,
    /// Appearance descriptor length; 0 emits no descriptors.
    pub appearance_dim: usize,
    /// Std of the per-component noise added to each identity's descriptor.
    pub appearance_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub identity: u64,
    #[serde(default = "default_category")]
    pub category: Category,
    pub width_px: f64,
    pub height_px: f64,
    #[serde(default)]
    pub spawn_frame: u64,
    /// First frame the vehicle is gone; it also leaves when its path ends.
    #[serde(default)]
    pub despawn_frame: Option<u64>,
    /// Center waypoints, px. A single waypoint is a parked vehicle.
    pub path: Vec<[f64; 2]>,
    /// Ground speed on each path segment, m/s.
    #[serde(default)]
    pub speeds_mps: Vec<f64>,
}

fn default_category() -> Category {
    Category::Car
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub camera: CameraConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    pub frames: u64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub noise: SimNoise,
    #[serde(default)]
    pub seed: u64,
    pub vehicles: Vec<VehicleSpec>,
}

/// Collects every problem with a scenario.
pub fn validate(s: &Scenario) -> Result<(CameraModel, Layout)> {
    let mut errs = Vec::new();
    let cam = CameraModel::from_config(&s.camera)
        .map_err(|e| errs.push(e.to_string()))
        .ok();
    let layout = s.layout.build().map_err(|e| errs.push(e.to_string())).ok();
    if s.frames == 0 {
        errs.push("frames must be positive".into());
    }
    if !(s.cell_size.is_finite() && s.cell_size > 0.0) {
        errs.push(format!("cell_size must be positive, got {}", s.cell_size));
    }
    let n = &s.noise;
    if !(n.jitter_px.is_finite() && n.jitter_px >= 0.0) {
        errs.push(format!("jitter_px must be non-negative, got {}", n.jitter_px));
    }
    if !(0.0..=1.0).contains(&n.miss_prob) {
        errs.push(format!("miss_prob must lie in [0, 1], got {}", n.miss_prob));
    }
    if !(n.appearance_noise.is_finite() && n.appearance_noise >= 0.0) {
        errs.push(format!(
            "appearance_noise must be non-negative, got {}",
            n.appearance_noise
        ));
    }
    let mut ids: Vec<u64> = s.vehicles.iter().map(|v| v.identity).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        errs.push("vehicle identities must be unique".into());
    }
    for v in &s.vehicles {
        let tag = format!("vehicle {}", v.identity);
        if v.identity == 0 {
            errs.push(format!("{tag}: identity must be positive"));
        }
        if v.category == Category::Pedestrian {
            errs.push(format!("{tag}: pedestrians are not simulated"));
        }
        if !(v.width_px.is_finite() && v.width_px > 0.0 && v.height_px.is_finite() && v.height_px > 0.0) {
            errs.push(format!("{tag}: box size must be positive"));
        }
        if v.path.is_empty() {
            errs.push(format!("{tag}: empty path"));
        }
        if v.speeds_mps.len() + 1 != v.path.len().max(1) {
            errs.push(format!(
                "{tag}: {} waypoints need {} speeds, got {}",
                v.path.len(),
                v.path.len().saturating_sub(1),
                v.speeds_mps.len()
            ));
        }
        if v.speeds_mps.iter().any(|sp| !(sp.is_finite() && *sp >= 0.0)) {
            errs.push(format!("{tag}: speeds must be non-negative"));
        }
        if v.spawn_frame >= s.frames {
            errs.push(format!("{tag}: spawns after the last frame"));
        }
        let (w, h) = (f64::from(s.camera.image_w_px), f64::from(s.camera.image_h_px));
        for p in &v.path {
            let inside = p[0] - v.width_px / 2.0 >= 0.0
                && p[0] + v.width_px / 2.0 <= w
                && p[1] - v.height_px / 2.0 >= 0.0
                && p[1] + v.height_px / 2.0 <= h;
            if !inside {
                errs.push(format!("{tag}: box at waypoint ({}, {}) leaves the frame", p[0], p[1]));
            }
        }
    }
    match (errs.is_empty(), cam, layout) {
        (true, Some(c), Some(l)) => Ok((c, l)),
        _ => Err(Error::Validation(errs)),
    }
}

/// Waypoint path with per-segment durations.
struct Motion {
    points: Vec<Point2>,
    durations: Vec<f64>,
}

impl Motion {
    fn new(v: &VehicleSpec, cam: &CameraModel) -> Self {
        let gsd = cam.gsd();
        let points: Vec<Point2> = v.path.iter().map(|p| Point2::new(p[0], p[1])).collect();
        let durations = points
            .windows(2)
            .zip(&v.speeds_mps)
            .map(|(w, &speed)| {
                let len = ((w[1].x - w[0].x) * gsd.w).hypot((w[1].y - w[0].y) * gsd.h);
                if len == 0.0 {
                    0.0
                } else if speed == 0.0 {
                    f64::INFINITY
                } else {
                    len / speed
                }
            })
            .collect();
        Motion { points, durations }
    }

    /// Center after `t` seconds, or `None` once the path is finished.
    fn position(&self, t: f64) -> Option<Point2> {
        if self.points.len() == 1 {
            return Some(self.points[0]);
        }
        let mut rest = t;
        for (k, &d) in self.durations.iter().enumerate() {
            if rest < d {
                let (a, b) = (self.points[k], self.points[k + 1]);
                let f = rest / d;
                return Some(Point2::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f));
            }
            rest -= d;
        }
        (rest == 0.0).then(|| *self.points.last().expect("non-empty path"))
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() {
        v
    } else if n == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

/// Exact pipeline outputs for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub records: RecordTable,
    pub analytics: AnalyticsOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub meta: StreamMeta,
    pub detections: Vec<FrameBatch>,
    /// True boxes of every live vehicle, for detection evaluation.
    pub ground_truth: Vec<FrameBatch>,
    pub truth: Truth,
}

/// Runs a scenario. Equal scenarios give bit-identical outputs.
pub fn simulate(s: &Scenario) -> Result<SimOutput> {
    let (cam, layout) = validate(s)?;
    let gsd = cam.gsd();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut vehicles: Vec<&VehicleSpec> = s.vehicles.iter().collect();
    vehicles.sort_by_key(|v| v.identity);
    let motions: Vec<Motion> = vehicles.iter().map(|v| Motion::new(v, &cam)).collect();
    let dim = s.noise.appearance_dim;
    let bases: Vec<Vec<f64>> = vehicles
        .iter()
        .map(|_| unit((0..dim).map(|_| normal(&mut rng)).collect()))
        .collect();
    let noisy = s.noise.jitter_px > 0.0 || s.noise.miss_prob > 0.0;

    let mut detections = Vec::with_capacity(s.frames as usize);
    let mut ground_truth = Vec::with_capacity(s.frames as usize);
    let mut rows = Vec::new();
    let mut last: Vec<Option<(u64, Point2)>> = vec![None; vehicles.len()];
    for frame in 0..s.frames {
        let mut dets = Vec::new();
        let mut gts = Vec::new();
        for (k, v) in vehicles.iter().enumerate() {
            if frame < v.spawn_frame || v.despawn_frame.is_some_and(|d| frame >= d) {
                continue;
            }
            let t = (frame - v.spawn_frame) as f64 / cam.fps;
            let Some(c) = motions[k].position(t) else { continue };
            let bbox = BBox::from_xywh(c.x - v.width_px / 2.0, c.y - v.height_px / 2.0, v.width_px, v.height_px)?;
            gts.push(Detection {
                frame_id: frame,
                bbox,
                category: v.category,
                confidence: 1.0,
                appearance: None,
            });

            let center = bbox.center();
            let velocity = match last[k] {
                Some((f, p)) => {
                    let d = ((center.x - p.x) * gsd.w).hypot((center.y - p.y) * gsd.h);
                    3.6 * d * cam.fps / (frame - f) as f64
                }
                None => 0.0,
            };
            last[k] = Some((frame, center));
            rows.push(VehicleRecord {
                index: 0,
                frame_id: frame,
                bbox,
                vehicle_id: v.identity,
                time_s: frame as f64 / cam.fps,
                center,
                size_m2: v.width_px * v.height_px * gsd.w * gsd.h,
                velocity_kmh: velocity,
                zone: oracle::zone_of(center, &layout.zones),
            });

            let miss: f64 = rng.random();
            let conf: f64 = rng.random();
            let j = s.noise.jitter_px;
            let jit: [f64; 4] = std::array::from_fn(|_| normal(&mut rng) * j);
            let appearance = (dim > 0).then(|| {
                unit(
                    bases[k]
                        .iter()
                        .map(|b| b + normal(&mut rng) * s.noise.appearance_noise)
                        .collect(),
                )
            });
            if miss < s.noise.miss_prob {
                continue;
            }
            let det_box = BBox::from_xywh(
                bbox.x0() + jit[0],
                bbox.y0() + jit[1],
                (bbox.w() + jit[2]).max(1.0),
                (bbox.h() + jit[3]).max(1.0),
            )?;
            dets.push(Detection {
                frame_id: frame,
                bbox: det_box,
                category: v.category,
                confidence: if noisy { 0.5 + 0.5 * conf } else { 1.0 },
                appearance,
            });
        }
        detections.push(FrameBatch {
            frame_id: frame,
            detections: dets,
        });
        ground_truth.push(FrameBatch {
            frame_id: frame,
            detections: gts,
        });
    }

    let records = RecordTable::from_rows(rows)?;
    let od_pairs = oracle::od_pairs(&records);
    let analytics = AnalyticsOutput {
        crossings: oracle::crossings(&records, &layout.lines),
        transitions: TransitionMatrix::from_moves(layout.zones.ids(), od_pairs.iter().map(|&(_, a, b)| (a, b))),
        od_pairs,
        heatmaps: oracle::heatmaps(&records, s.cell_size, cam.image_w, cam.image_h)?,
    };
    Ok(SimOutput {
        meta: StreamMeta {
            embed_dim: (dim > 0).then_some(dim),
            fps: Some(cam.fps),
        },
        detections,
        ground_truth,
        truth: Truth { records, analytics },
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the detection stream, ground-truth stream, a ready-to-use run
/// config (camera, zones, run file) and the truth bundle into `dir`.
pub fn write_sim_bundle(dir: &Path, s: &Scenario, out: &SimOutput) -> Result<Vec<PathBuf>> {
    let truth_dir = dir.join(TRUTH_DIR);
    std::fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
    let mut written = Vec::new();

    for (name, batches, meta) in [
        (DETECTIONS_FILE, &out.detections, Some(&out.meta)),
        (GROUND_TRUTH_FILE, &out.ground_truth, None),
    ] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write_detection_stream(&mut w, meta, batches).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let ser = |e: toml::ser::Error| Error::Config(e.to_string());
    let path = dir.join("camera.toml");
    write_text(&path, &toml::to_string(&s.camera).map_err(ser)?)?;
    written.push(path);
    let path = dir.join("zones.json");
    let zones = serde_json::to_string_pretty(&s.layout).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&path, &(zones + "\n"))?;
    written.push(path);
    let run = RunConfigFile {
        camera: "camera.toml".into(),
        zones: Some("zones.json".into()),
        tracker: TrackerConfig::default(),
        analytics: AnalyticsConfig {
            cell_size: s.cell_size,
            ..AnalyticsConfig::default()
        },
        detector: ReaderConfig::default(),
        out_dir: None,
    };
    let path = dir.join("run.toml");
    write_text(&path, &toml::to_string(&run).map_err(ser)?)?;
    written.push(path);

    let path = truth_dir.join(RECORDS_FILE);
    let mut w = create(&path)?;
    out.truth.records.write_csv(&mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    for f in write_analytics(&truth_dir, &out.truth.analytics)? {
        written.push(truth_dir.join(f));
    }
    Ok(written)
}
