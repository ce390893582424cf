//! Online tracking-by-detection: Kalman motion model, gated association on a
//! weighted sum of motion (Mahalanobis) and appearance (cosine) distances, and
//! Hungarian assignment.

pub mod hungarian;
pub mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::detector_io::{Category, Detection, FrameBatch};
use crate::error::{Error, Result};
use crate::geometry::iou;
pub use hungarian::{hungarian_assign, CostMatrix, Matching};
pub use kalman::{measurement_from_box, Measurement, MotionState, NoiseModel};

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

/// Descriptor used when a detection carries no appearance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppearanceFallback {
    /// Unit vector built from the normalized box shape and a category one-hot.
    Geometric,
    /// Treat appearance as uninformative (distance 0).
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Weight of the motion distance in the combined cost.
    pub lambda: f64,
    pub motion_gate: f64,
    pub appearance_gate: f64,
    pub iou_min: f64,
    pub n_init: u32,
    pub max_age: u32,
    pub gallery_capacity: usize,
    pub appearance_fallback: AppearanceFallback,
    pub noise: NoiseModel,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            lambda: 0.5,
            motion_gate: CHI2_95_4DOF,
            appearance_gate: 0.4,
            iou_min: 0.1,
            n_init: 3,
            max_age: 30,
            gallery_capacity: 100,
            appearance_fallback: AppearanceFallback::Geometric,
            noise: NoiseModel::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.lambda) {
            bad.push(format!("lambda {} outside [0, 1]", self.lambda));
        }
        for (name, v) in [
            ("motion_gate", self.motion_gate),
            ("appearance_gate", self.appearance_gate),
            ("iou_min", self.iou_min),
        ] {
            if !(v > 0.0) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.n_init == 0 {
            bad.push("n_init must be at least 1".into());
        }
        if self.gallery_capacity == 0 {
            bad.push("gallery_capacity must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("tracker: {}", bad.join("; "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub state: MotionState,
    /// Most recent descriptors, oldest first.
    pub gallery: VecDeque<Vec<f64>>,
    pub hits: u32,
    pub misses: u32,
    pub status: TrackStatus,
    pub category: Category,
    pub last_frame: u64,
}

impl Track {
    fn push_descriptor(&mut self, descriptor: Vec<f64>, capacity: usize) {
        while self.gallery.len() >= capacity {
            self.gallery.pop_front();
        }
        self.gallery.push_back(descriptor);
    }
}

/// Appearance descriptor of a detection, synthesizing one when absent.
pub fn descriptor(det: &Detection, fallback: AppearanceFallback) -> Option<Vec<f64>> {
    if let Some(v) = &det.appearance {
        return Some(v.clone());
    }
    match fallback {
        AppearanceFallback::Neutral => None,
        AppearanceFallback::Geometric => {
            let (w, h) = (det.bbox.w(), det.bbox.h());
            let diag = (w * w + h * h).sqrt();
            let mut v = vec![0.0; 2 + Category::ALL.len()];
            v[0] = w / diag;
            v[1] = h / diag;
            v[2 + det.category.index()] = 1.0;
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            Some(v)
        }
    }
}

/// Squared Mahalanobis distance between a detection and the track's projected
/// state.
pub fn motion_distance(track: &Track, det: &Detection, noise: &NoiseModel) -> Result<f64> {
    track.state.mahalanobis(&measurement_from_box(&det.bbox), noise)
}

/// Smallest cosine distance `1 - r·g` between a descriptor and the gallery.
/// Returns `Ok(None)` when either side has nothing to compare.
pub fn appearance_distance(gallery: &VecDeque<Vec<f64>>, desc: Option<&[f64]>) -> Result<Option<f64>> {
    let Some(desc) = desc else { return Ok(None) };
    let mut best: Option<f64> = None;
    for g in gallery {
        if g.len() != desc.len() {
            return Err(Error::AppearanceDim {
                expected: g.len(),
                got: desc.len(),
            });
        }
        let dot: f64 = g.iter().zip(desc).map(|(a, b)| a * b).sum();
        let d = 1.0 - dot;
        best = Some(best.map_or(d, |b: f64| b.min(d)));
    }
    Ok(best)
}

/// Combined association cost, or `None` when any gate rejects the pair.
///
/// The pair is infeasible when the motion distance exceeds `motion_gate`, the
/// appearance distance exceeds `appearance_gate`, or the predicted box and the
/// detection overlap with IoU below `iou_min`.
pub fn combined_cost(track: &Track, det: &Detection, desc: Option<&[f64]>, cfg: &TrackerConfig) -> Result<Option<f64>> {
    let d_motion = motion_distance(track, det, &cfg.noise)?;
    if d_motion > cfg.motion_gate {
        return Ok(None);
    }
    let d_app = appearance_distance(&track.gallery, desc)?.unwrap_or(0.0);
    if d_app > cfg.appearance_gate {
        return Ok(None);
    }
    let overlap = track.state.predicted_box().map_or(0.0, |b| iou(&b, &det.bbox));
    if overlap < cfg.iou_min {
        return Ok(None);
    }
    Ok(Some(cfg.lambda * d_motion + (1.0 - cfg.lambda) * d_app))
}

/// How one detection of a frame was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub detection: usize,
    pub track_id: u64,
    pub status: TrackStatus,
    /// The track became confirmed on this frame.
    pub newly_confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    pub frame_id: u64,
    /// One entry per detection, in detection order.
    pub assignments: Vec<Assignment>,
    /// Ids of tracks removed during this step.
    pub deleted: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrackerStats {
    pub frames: u64,
    pub tracks_created: u64,
    pub tracks_confirmed: u64,
}

/// Sequential multi-object tracker; feed it frames in increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    stats: TrackerStats,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            stats: TrackerStats::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (tentative or confirmed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    fn mark_miss(&mut self, idx: usize, count: u32) {
        let t = &mut self.tracks[idx];
        t.misses += count;
        if t.status == TrackStatus::Tentative || t.misses > self.cfg.max_age {
            t.status = TrackStatus::Deleted;
        }
    }

    /// Processes one frame and reports the track id of every detection.
    pub fn step(&mut self, batch: &FrameBatch) -> Result<StepOutput> {
        let gap = match self.last_frame {
            Some(prev) if batch.frame_id <= prev => {
                return Err(Error::StreamOrder {
                    prev,
                    got: batch.frame_id,
                })
            }
            Some(prev) => batch.frame_id - prev,
            None => 1,
        };
        self.last_frame = Some(batch.frame_id);
        self.stats.frames += 1;
        let cfg = self.cfg;

        for t in &mut self.tracks {
            for _ in 0..gap {
                t.state = t.state.predict(&cfg.noise)?;
            }
        }
        // frames skipped by the stream count as misses
        if gap > 1 {
            let skipped = u32::try_from(gap - 1).unwrap_or(u32::MAX);
            for i in 0..self.tracks.len() {
                self.mark_miss(i, skipped);
            }
        }
        let mut deleted = Vec::new();
        self.retain_live(&mut deleted);

        let descriptors: Vec<Option<Vec<f64>>> = batch
            .detections
            .iter()
            .map(|d| descriptor(d, cfg.appearance_fallback))
            .collect();
        let mut costs = CostMatrix::new(self.tracks.len(), batch.detections.len());
        for (i, t) in self.tracks.iter().enumerate() {
            for (j, d) in batch.detections.iter().enumerate() {
                costs.set(i, j, combined_cost(t, d, descriptors[j].as_deref(), &cfg)?);
            }
        }
        let matching = hungarian_assign(&costs);

        let mut assignments = Vec::with_capacity(batch.detections.len());
        for &(ti, di) in &matching.pairs {
            let det = &batch.detections[di];
            let t = &mut self.tracks[ti];
            t.state = t.state.update(&measurement_from_box(&det.bbox), &cfg.noise)?;
            if let Some(desc) = descriptors[di].clone() {
                t.push_descriptor(desc, cfg.gallery_capacity);
            }
            t.hits += 1;
            t.misses = 0;
            t.last_frame = batch.frame_id;
            let mut newly_confirmed = false;
            if t.status == TrackStatus::Tentative && t.hits >= cfg.n_init {
                t.status = TrackStatus::Confirmed;
                newly_confirmed = true;
                self.stats.tracks_confirmed += 1;
            }
            assignments.push(Assignment {
                detection: di,
                track_id: t.track_id,
                status: t.status,
                newly_confirmed,
            });
        }
        for &ti in &matching.unmatched_rows {
            self.mark_miss(ti, 1);
        }
        self.retain_live(&mut deleted);

        for &di in &matching.unmatched_cols {
            let det = &batch.detections[di];
            let mut track = Track {
                track_id: self.next_id,
                state: MotionState::initiate(&measurement_from_box(&det.bbox), &cfg.noise),
                gallery: VecDeque::new(),
                hits: 1,
                misses: 0,
                status: TrackStatus::Tentative,
                category: det.category,
                last_frame: batch.frame_id,
            };
            self.next_id += 1;
            self.stats.tracks_created += 1;
            if let Some(desc) = descriptors[di].clone() {
                track.push_descriptor(desc, cfg.gallery_capacity);
            }
            let mut newly_confirmed = false;
            if cfg.n_init <= 1 {
                track.status = TrackStatus::Confirmed;
                newly_confirmed = true;
                self.stats.tracks_confirmed += 1;
            }
            assignments.push(Assignment {
                detection: di,
                track_id: track.track_id,
                status: track.status,
                newly_confirmed,
            });
            self.tracks.push(track);
        }
        assignments.sort_by_key(|a| a.detection);
        Ok(StepOutput {
            frame_id: batch.frame_id,
            assignments,
            deleted,
        })
    }

    fn retain_live(&mut self, deleted: &mut Vec<u64>) {
        self.tracks.retain(|t| {
            let live = t.status != TrackStatus::Deleted;
            if !live {
                deleted.push(t.track_id);
            }
            live
        });
    }
}
