//! Naive reference implementations used as ground truth.

use std::collections::{BTreeMap, HashSet};

use crate::analytics::{
    CountLine, CrossingEvent, CrossingKind, HeatmapSet, RecordTable, ZoneId, ZoneSet, DEFAULT_ZONE,
};
use crate::error::Result;
use crate::geometry::{Point2, Polygon};

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Winding number of a closed polygon around `p`.
pub fn winding_number(p: Point2, poly: &Polygon) -> i32 {
    let v = poly.vertices();
    let mut wn = 0;
    for k in 0..v.len() - 1 {
        let (a, b) = (v[k], v[k + 1]);
        let is_left = cross(b.x - a.x, b.y - a.y, p.x - a.x, p.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && is_left > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && is_left < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.x - a.x - t * dx).hypot(p.y - a.y - t * dy)
}

/// Boundary-inclusive containment via the winding number.
pub fn contains(p: Point2, poly: &Polygon) -> bool {
    let v = poly.vertices();
    let on_edge = (0..v.len() - 1).any(|k| point_segment_distance(p, v[k], v[k + 1]) <= 1e-9);
    on_edge || winding_number(p, poly) != 0
}

pub fn zone_of(p: Point2, zones: &ZoneSet) -> ZoneId {
    zones
        .zones()
        .iter()
        .find(|z| contains(p, &z.polygon))
        .map_or(DEFAULT_ZONE, |z| z.id)
}

/// Crossings found by solving for the chord/line intersection parameter.
pub fn crossings(table: &RecordTable, lines: &[CountLine]) -> Vec<CrossingEvent> {
    let mut out = Vec::new();
    for (&id, recs) in &table.by_track() {
        for line in lines {
            let (ex, ey) = (line.p1.x - line.p0.x, line.p1.y - line.p0.y);
            let side = |p: Point2| cross(ex, ey, p.x - line.p0.x, p.y - line.p0.y);
            let mut prev: Option<(Point2, f64)> = None;
            for r in recs {
                let s = side(r.center);
                if s == 0.0 {
                    continue;
                }
                if let Some((a, sa)) = prev {
                    if (sa > 0.0) != (s > 0.0) {
                        let (dx, dy) = (r.center.x - a.x, r.center.y - a.y);
                        let denom = cross(ex, ey, dx, dy);
                        // position of the hit along the count line
                        let u = cross(a.x - line.p0.x, a.y - line.p0.y, dx, dy) / denom;
                        if (0.0..=1.0).contains(&u) {
                            let orient = cross(dx, dy, ex, ey).signum() as i8;
                            out.push(CrossingEvent {
                                track_id: id,
                                line_id: line.line_id,
                                frame_id: r.frame_id,
                                kind: if orient == line.allowed_sign {
                                    CrossingKind::Allowed
                                } else {
                                    CrossingKind::Forbidden
                                },
                            });
                        }
                    }
                }
                prev = Some((r.center, s));
            }
        }
    }
    out.sort_by_key(|e| (e.frame_id, e.track_id, e.line_id));
    out
}

/// First and last non-default zone per track.
pub fn od_pairs(table: &RecordTable) -> Vec<(u64, ZoneId, ZoneId)> {
    let mut first: BTreeMap<u64, ZoneId> = BTreeMap::new();
    let mut last: BTreeMap<u64, ZoneId> = BTreeMap::new();
    for r in table.rows() {
        if r.zone != DEFAULT_ZONE {
            first.entry(r.vehicle_id).or_insert(r.zone);
            last.insert(r.vehicle_id, r.zone);
        }
    }
    first.into_iter().map(|(id, f)| (id, f, last[&id])).collect()
}

/// Closed segment against closed axis-aligned cell, by separating axes.
pub fn segment_touches_cell(a: Point2, b: Point2, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    if a.x.max(b.x) < x0 || a.x.min(b.x) > x1 || a.y.max(b.y) < y0 || a.y.min(b.y) > y1 {
        return false;
    }
    let s = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)].map(|(x, y)| cross(b.x - a.x, b.y - a.y, x - a.x, y - a.y));
    !(s.iter().all(|&v| v > 0.0) || s.iter().all(|&v| v < 0.0))
}

/// Heatmaps by testing every nearby cell against every segment.
pub fn heatmaps(table: &RecordTable, cell_size: f64, image_w: u32, image_h: u32) -> Result<HeatmapSet> {
    let mut hm = HeatmapSet::new(cell_size, image_w, image_h)?;
    for recs in table.by_track().values() {
        let mut seen = HashSet::new();
        for w in recs.windows(2) {
            let (a, b) = (w[0].center, w[1].center);
            let v = w[1].velocity_kmh;
            let lo_c = ((a.x.min(b.x) / cell_size).floor() as i64 - 1).max(0);
            let hi_c = ((a.x.max(b.x) / cell_size).floor() as i64 + 1).min(hm.cols as i64 - 1);
            let lo_r = ((a.y.min(b.y) / cell_size).floor() as i64 - 1).max(0);
            let hi_r = ((a.y.max(b.y) / cell_size).floor() as i64 + 1).min(hm.rows as i64 - 1);
            for r in lo_r..=hi_r {
                for c in lo_c..=hi_c {
                    let (x0, y0) = (c as f64 * cell_size, r as f64 * cell_size);
                    let (x1, y1) = ((c + 1) as f64 * cell_size, (r + 1) as f64 * cell_size);
                    if !segment_touches_cell(a, b, x0, y0, x1, y1) {
                        continue;
                    }
                    let i = r as usize * hm.cols + c as usize;
                    hm.max_velocity[i] = hm.max_velocity[i].max(v);
                    hm.sum_velocity[i] += v;
                    hm.sample_count[i] += 1;
                    if seen.insert(i) {
                        hm.congestion[i] += 1;
                    }
                }
            }
        }
    }
    Ok(hm)
}
