//! Pipeline output versus simulator truth.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::analytics::export::{
    open, read_crossings_csv, read_grid_csv, read_transitions_csv, CROSSINGS_FILE, HEATMAP_AVG, HEATMAP_CONGESTION,
    HEATMAP_MAX, RECORDS_FILE, TRANSITIONS_FILE,
};
use crate::analytics::{CrossingEvent, CrossingKind, RecordTable, VehicleRecord};
use crate::error::{Error, Result};
use crate::geometry::iou;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on real-valued fields.
    pub real: f64,
    /// Minimum IoU for a pipeline row to be attributed to a true vehicle.
    pub match_iou: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            real: 1e-9,
            match_iou: 0.5,
        }
    }
}

/// A truth row whose pipeline counterpart differs.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDelta {
    pub truth_index: u64,
    pub frame_id: u64,
    pub identity: u64,
    pub fields: Vec<&'static str>,
    pub velocity_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableComparison {
    /// Pipeline track id to true identity by majority vote.
    pub track_identity: BTreeMap<u64, u64>,
    pub rows_compared: usize,
    pub mismatched_rows: Vec<RowDelta>,
    /// `(frame, identity)` of truth rows without a pipeline counterpart.
    pub missing_rows: Vec<(u64, u64)>,
    /// `(frame, track)` of pipeline rows not attributed to any truth row.
    pub extra_rows: Vec<(u64, u64)>,
    pub identity_switches: u64,
    pub max_velocity_delta: f64,
}

impl TableComparison {
    pub fn is_clean(&self) -> bool {
        self.mismatched_rows.is_empty()
            && self.missing_rows.is_empty()
            && self.extra_rows.is_empty()
            && self.identity_switches == 0
    }
}

fn best_truth<'a>(row: &VehicleRecord, frame_rows: &[&'a VehicleRecord], min_iou: f64) -> Option<&'a VehicleRecord> {
    let mut best: Option<(&VehicleRecord, f64)> = None;
    for &t in frame_rows {
        let o = iou(&row.bbox, &t.bbox);
        if o >= min_iou && best.is_none_or(|(_, b)| o > b) {
            best = Some((t, o));
        }
    }
    best.map(|(t, _)| t)
}

pub fn compare_tables(pipeline: &RecordTable, truth: &RecordTable, tol: &Tolerances) -> TableComparison {
    let mut by_frame: BTreeMap<u64, Vec<&VehicleRecord>> = BTreeMap::new();
    for r in truth.rows() {
        by_frame.entry(r.frame_id).or_default().push(r);
    }
    let attributed: Vec<Option<u64>> = pipeline
        .rows()
        .iter()
        .map(|r| {
            let frame_rows = by_frame.get(&r.frame_id).map(Vec::as_slice).unwrap_or(&[]);
            best_truth(r, frame_rows, tol.match_iou).map(|t| t.vehicle_id)
        })
        .collect();

    let mut votes: BTreeMap<u64, BTreeMap<u64, usize>> = BTreeMap::new();
    for (r, id) in pipeline.rows().iter().zip(&attributed) {
        if let Some(id) = id {
            *votes.entry(r.vehicle_id).or_default().entry(*id).or_default() += 1;
        }
    }
    let track_identity: BTreeMap<u64, u64> = votes
        .iter()
        .map(|(&track, v)| {
            let (&id, _) = v
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .expect("non-empty votes");
            (track, id)
        })
        .collect();

    let mut identity_switches = 0;
    let mut seq: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for (r, id) in pipeline.rows().iter().zip(&attributed) {
        if let Some(id) = id {
            seq.entry(*id).or_default().push((r.frame_id, r.vehicle_id));
        }
    }
    for s in seq.values_mut() {
        s.sort_unstable();
        identity_switches += s.windows(2).filter(|w| w[0].1 != w[1].1).count() as u64;
    }

    let mut lookup: HashMap<(u64, u64), usize> = HashMap::new();
    for (i, r) in pipeline.rows().iter().enumerate() {
        if let Some(&id) = track_identity.get(&r.vehicle_id) {
            lookup.entry((r.frame_id, id)).or_insert(i);
        }
    }
    let mut used = vec![false; pipeline.len()];
    let mut out = TableComparison {
        track_identity,
        identity_switches,
        ..Default::default()
    };
    let close = |a: f64, b: f64| (a - b).abs() <= tol.real;
    for t in truth.rows() {
        let Some(&i) = lookup.get(&(t.frame_id, t.vehicle_id)) else {
            out.missing_rows.push((t.frame_id, t.vehicle_id));
            continue;
        };
        used[i] = true;
        out.rows_compared += 1;
        let p = &pipeline.rows()[i];
        let mut fields = Vec::new();
        if !p.bbox.xywh().iter().zip(t.bbox.xywh()).all(|(a, b)| close(*a, b)) {
            fields.push("bbox");
        }
        if !close(p.time_s, t.time_s) {
            fields.push("time_s");
        }
        if !(close(p.center.x, t.center.x) && close(p.center.y, t.center.y)) {
            fields.push("center");
        }
        if !close(p.size_m2, t.size_m2) {
            fields.push("size_m2");
        }
        let dv = (p.velocity_kmh - t.velocity_kmh).abs();
        out.max_velocity_delta = out.max_velocity_delta.max(dv);
        if !(dv <= tol.real) {
            fields.push("velocity_kmh");
        }
        if p.zone != t.zone {
            fields.push("zone");
        }
        if !fields.is_empty() {
            out.mismatched_rows.push(RowDelta {
                truth_index: t.index,
                frame_id: t.frame_id,
                identity: t.vehicle_id,
                fields,
                velocity_delta: dv,
            });
        }
    }
    out.extra_rows = pipeline
        .rows()
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(r, _)| (r.frame_id, r.vehicle_id))
        .collect();
    out
}

/// Crossing events that do not appear in both sets once pipeline tracks are
/// mapped to identities.
pub fn crossing_mismatches(
    pipeline: &[CrossingEvent],
    truth: &[CrossingEvent],
    track_identity: &BTreeMap<u64, u64>,
) -> usize {
    let key = |e: &CrossingEvent, id: u64| (e.frame_id, id, e.line_id, e.kind == CrossingKind::Allowed);
    let mut a: Vec<_> = pipeline
        .iter()
        .map(|e| key(e, track_identity.get(&e.track_id).copied().unwrap_or(u64::MAX)))
        .collect();
    let mut b: Vec<_> = truth.iter().map(|e| key(e, e.track_id)).collect();
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareReport {
    pub table: TableComparison,
    /// `(allowed, forbidden)` in the pipeline output and in the truth.
    pub crossings_pipeline: (usize, usize),
    pub crossings_truth: (usize, usize),
    pub crossing_mismatches: usize,
    pub transition_cells_differing: usize,
    /// Mismatched cells per heatmap file stem.
    pub heatmap_mismatches: BTreeMap<String, usize>,
}

impl CompareReport {
    pub fn is_clean(&self) -> bool {
        self.table.is_clean()
            && self.crossing_mismatches == 0
            && self.transition_cells_differing == 0
            && self.heatmap_mismatches.values().all(|&n| n == 0)
    }

    /// One `name,value` line per delta.
    pub fn lines(&self) -> Vec<String> {
        let t = &self.table;
        vec![
            format!("rows_compared,{}", t.rows_compared),
            format!("mismatched_rows,{}", t.mismatched_rows.len()),
            format!("missing_rows,{}", t.missing_rows.len()),
            format!("extra_rows,{}", t.extra_rows.len()),
            format!("identity_switches,{}", t.identity_switches),
            format!("max_velocity_delta_kmh,{}", t.max_velocity_delta),
            format!(
                "crossings_pipeline,{};{}",
                self.crossings_pipeline.0, self.crossings_pipeline.1
            ),
            format!("crossings_truth,{};{}", self.crossings_truth.0, self.crossings_truth.1),
            format!("crossing_mismatches,{}", self.crossing_mismatches),
            format!("transition_cells_differing,{}", self.transition_cells_differing),
        ]
        .into_iter()
        .chain(
            self.heatmap_mismatches
                .iter()
                .map(|(k, v)| format!("{k}_cells_differing,{v}")),
        )
        .collect()
    }
}

fn counts(events: &[CrossingEvent]) -> (usize, usize) {
    crate::analytics::crossing_counts(events)
}

/// Compares a pipeline output directory (records plus analytics bundle) with
/// a simulator truth directory.
pub fn compare_bundles(pipeline_dir: &Path, truth_dir: &Path, tol: &Tolerances) -> Result<CompareReport> {
    let p_rec = RecordTable::read_csv(open(&pipeline_dir.join(RECORDS_FILE))?)?;
    let t_rec = RecordTable::read_csv(open(&truth_dir.join(RECORDS_FILE))?)?;
    let table = compare_tables(&p_rec, &t_rec, tol);

    let p_cross = read_crossings_csv(open(&pipeline_dir.join(CROSSINGS_FILE))?)?;
    let t_cross = read_crossings_csv(open(&truth_dir.join(CROSSINGS_FILE))?)?;

    let (p_ids, p_tr) = read_transitions_csv(open(&pipeline_dir.join(TRANSITIONS_FILE))?)?;
    let (t_ids, t_tr) = read_transitions_csv(open(&truth_dir.join(TRANSITIONS_FILE))?)?;
    if p_ids != t_ids {
        return Err(Error::Schema(format!(
            "transition zones differ: {p_ids:?} vs {t_ids:?}"
        )));
    }
    let transition_cells_differing = p_tr.iter().zip(&t_tr).filter(|(a, b)| a != b).count();

    let mut heatmap_mismatches = BTreeMap::new();
    for (stem, exact) in [(HEATMAP_MAX, false), (HEATMAP_AVG, false), (HEATMAP_CONGESTION, true)] {
        let name = format!("{stem}.csv");
        let (a, ac, ar) = read_grid_csv(open(&pipeline_dir.join(&name))?)?;
        let (b, bc, br) = read_grid_csv(open(&truth_dir.join(&name))?)?;
        if (ac, ar) != (bc, br) {
            return Err(Error::Schema(format!("{name}: grid {ac}x{ar} vs {bc}x{br}")));
        }
        let bad = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| if exact { x != y } else { !((*x - *y).abs() <= tol.real) })
            .count();
        heatmap_mismatches.insert(stem.to_string(), bad);
    }

    Ok(CompareReport {
        crossing_mismatches: crossing_mismatches(&p_cross, &t_cross, &table.track_identity),
        crossings_pipeline: counts(&p_cross),
        crossings_truth: counts(&t_cross),
        table,
        transition_cells_differing,
        heatmap_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn row(frame: u64, id: u64, x: f64, v: f64) -> VehicleRecord {
        let bbox = BBox::from_xywh(x, 50.0, 20.0, 10.0).unwrap();
        VehicleRecord {
            index: 0,
            frame_id: frame,
            bbox,
            vehicle_id: id,
            time_s: frame as f64,
            center: bbox.center(),
            size_m2: 2.0,
            velocity_kmh: v,
            zone: 0,
        }
    }

    fn truth() -> RecordTable {
        let mut rows = Vec::new();
        for f in 0..10 {
            rows.push(row(f, 1, 10.0 + 2.0 * f as f64, 7.2));
            rows.push(row(f, 2, 300.0 - 2.0 * f as f64, 7.2));
        }
        RecordTable::from_rows(rows).unwrap()
    }

    #[test]
    fn relabelled_tracks_are_clean() {
        let t = truth();
        let relabelled: Vec<_> = t
            .rows()
            .iter()
            .map(|r| VehicleRecord {
                vehicle_id: r.vehicle_id + 40,
                ..r.clone()
            })
            .collect();
        let p = RecordTable::from_rows(relabelled).unwrap();
        let c = compare_tables(&p, &t, &Tolerances::default());
        assert!(c.is_clean(), "{c:?}");
        assert_eq!(c.track_identity[&41], 1);
    }

    #[test]
    fn perturbed_rows_are_flagged() {
        let t = truth();
        let mut rows = t.rows().to_vec();
        rows[3].velocity_kmh += 0.5;
        rows[8].zone = 4;
        let p = RecordTable::from_rows(rows).unwrap();
        let c = compare_tables(&p, &t, &Tolerances::default());
        let flagged: Vec<u64> = c.mismatched_rows.iter().map(|d| d.truth_index).collect();
        assert_eq!(flagged, vec![t.rows()[3].index, t.rows()[8].index]);
        assert_eq!(c.mismatched_rows[0].fields, vec!["velocity_kmh"]);
        assert_eq!(c.mismatched_rows[1].fields, vec!["zone"]);
    }

    #[test]
    fn identity_switch_counted() {
        let t = truth();
        // track 1 follows vehicle 1 for frames 0-4, then a new track 9 takes over
        let rows: Vec<_> = t
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.vehicle_id == 1 && r.frame_id >= 5 {
                    r.vehicle_id = 9;
                }
                r
            })
            .collect();
        let p = RecordTable::from_rows(rows).unwrap();
        let c = compare_tables(&p, &t, &Tolerances::default());
        assert_eq!(c.identity_switches, 1);
        assert!(!c.is_clean());
    }
}
