use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::analytics::zones::{assign_zone, ZoneId, ZoneSet};
use crate::camera::CameraModel;
use crate::detector_io::FrameBatch;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point2};
use crate::tracker::{StepOutput, TrackStatus};

/// One row of the vehicle record table.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub index: u64,
    pub frame_id: u64,
    pub bbox: BBox,
    pub vehicle_id: u64,
    pub time_s: f64,
    pub center: Point2,
    pub size_m2: f64,
    pub velocity_kmh: f64,
    pub zone: ZoneId,
}

pub const RECORD_COLUMNS: [&str; 9] = [
    "index",
    "frame_id",
    "bbox",
    "vehicle_id",
    "time_s",
    "center",
    "size_m2",
    "velocity_kmh",
    "zone",
];

/// Ground speed between two observations of the same vehicle, km/h.
/// Returns 0 for the first observation of a track.
pub fn estimate_velocity(prev: Option<(u64, Point2)>, curr: (u64, Point2), cam: &CameraModel) -> f64 {
    let Some((prev_frame, prev_center)) = prev else {
        return 0.0;
    };
    if curr.0 <= prev_frame {
        return 0.0;
    }
    let gsd = cam.gsd();
    let alpha = (curr.1.x - prev_center.x) * gsd.w;
    let beta = (curr.1.y - prev_center.y) * gsd.h;
    let d = alpha.hypot(beta);
    3.6 * d * cam.fps / (curr.0 - prev_frame) as f64
}

/// Finished record table, sorted by `(frame_id, vehicle_id)` with 1-based
/// indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordTable {
    rows: Vec<VehicleRecord>,
}

impl RecordTable {
    /// Sorts rows and renumbers their indices.
    pub fn from_rows(mut rows: Vec<VehicleRecord>) -> Result<Self> {
        rows.sort_by_key(|r| (r.frame_id, r.vehicle_id));
        if let Some(w) = rows
            .windows(2)
            .find(|w| (w[0].frame_id, w[0].vehicle_id) == (w[1].frame_id, w[1].vehicle_id))
        {
            return Err(Error::Schema(format!(
                "duplicate record for vehicle {} in frame {}",
                w[0].vehicle_id, w[0].frame_id
            )));
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.index = i as u64 + 1;
        }
        Ok(RecordTable { rows })
    }

    pub fn rows(&self) -> &[VehicleRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by vehicle id, each in frame order.
    pub fn by_track(&self) -> BTreeMap<u64, Vec<&VehicleRecord>> {
        let mut out: BTreeMap<u64, Vec<&VehicleRecord>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.vehicle_id).or_default().push(r);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RECORD_COLUMNS)?;
        for r in &self.rows {
            let [x, y, bw, bh] = r.bbox.xywh();
            w.write_record([
                r.index.to_string(),
                r.frame_id.to_string(),
                format!("{x};{y};{bw};{bh}"),
                r.vehicle_id.to_string(),
                r.time_s.to_string(),
                format!("{};{}", r.center.x, r.center.y),
                r.size_m2.to_string(),
                r.velocity_kmh.to_string(),
                r.zone.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<records>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
            return Err(Error::Schema(format!(
                "expected columns {}, got {}",
                RECORD_COLUMNS.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let perr = |msg: String| Error::Parse { line, msg };
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| perr(format!("{}: {e}", RECORD_COLUMNS[k])))
            };
            let int = |k: usize| -> Result<u64> {
                rec[k]
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| perr(format!("{}: {e}", RECORD_COLUMNS[k])))
            };
            let tuple = |k: usize, n: usize| -> Result<Vec<f64>> {
                let v = rec[k]
                    .split(';')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| perr(format!("{}: {e}", RECORD_COLUMNS[k])))?;
                if v.len() != n {
                    return Err(perr(format!("{}: expected {n} values", RECORD_COLUMNS[k])));
                }
                Ok(v)
            };
            let b = tuple(2, 4)?;
            let c = tuple(5, 2)?;
            let zone = u32::try_from(int(8)?).map_err(|e| perr(format!("zone: {e}")))?;
            rows.push(VehicleRecord {
                index: int(0)?,
                frame_id: int(1)?,
                bbox: BBox::from_xywh(b[0], b[1], b[2], b[3]).map_err(|e| perr(e.to_string()))?,
                vehicle_id: int(3)?,
                time_s: num(4)?,
                center: Point2::new(c[0], c[1]),
                size_m2: num(6)?,
                velocity_kmh: num(7)?,
                zone,
            });
        }
        Ok(RecordTable { rows })
    }
}

/// Incrementally turns tracker output into vehicle records.
///
/// Detections of a tentative track are held back; they are emitted once the
/// track is confirmed and dropped if it is deleted first.
#[derive(Debug, Clone)]
pub struct RecordBuilder {
    cam: CameraModel,
    zones: ZoneSet,
    pending: HashMap<u64, Vec<(u64, BBox)>>,
    last_seen: HashMap<u64, (u64, Point2)>,
    rows: Vec<VehicleRecord>,
}

impl RecordBuilder {
    pub fn new(cam: CameraModel, zones: ZoneSet) -> Self {
        RecordBuilder {
            cam,
            zones,
            pending: HashMap::new(),
            last_seen: HashMap::new(),
            rows: Vec::new(),
        }
    }

    fn emit(&mut self, vehicle_id: u64, frame_id: u64, bbox: BBox) {
        let center = bbox.center();
        let prev = self.last_seen.insert(vehicle_id, (frame_id, center));
        self.rows.push(VehicleRecord {
            index: 0,
            frame_id,
            bbox,
            vehicle_id,
            time_s: self.cam.frame_time(frame_id),
            center,
            size_m2: self.cam.vehicle_size(&bbox),
            velocity_kmh: estimate_velocity(prev, (frame_id, center), &self.cam),
            zone: assign_zone(center, &self.zones),
        });
    }

    /// Appends the records of one tracked frame.
    pub fn record_frame(&mut self, batch: &FrameBatch, step: &StepOutput) {
        for id in &step.deleted {
            self.pending.remove(id);
            self.last_seen.remove(id);
        }
        let mut frame: Vec<(u64, bool, BBox)> = step
            .assignments
            .iter()
            .map(|a| {
                (
                    a.track_id,
                    a.status == TrackStatus::Confirmed,
                    batch.detections[a.detection].bbox,
                )
            })
            .collect();
        frame.sort_by_key(|f| f.0);
        for (id, confirmed, bbox) in frame {
            if confirmed {
                for (f, b) in self.pending.remove(&id).unwrap_or_default() {
                    self.emit(id, f, b);
                }
                self.emit(id, batch.frame_id, bbox);
            } else {
                self.pending.entry(id).or_default().push((batch.frame_id, bbox));
            }
        }
    }

    pub fn finish(self) -> RecordTable {
        RecordTable::from_rows(self.rows).expect("tracker emits one assignment per track and frame")
    }
}
