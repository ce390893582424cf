use std::fmt;
use std::io::Write;

use crate::analytics::records::RecordTable;
use crate::analytics::zones::CountLine;
use crate::error::{Error, Result};
use crate::geometry::{segments_intersect, side_of_line, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrossingKind {
    Allowed,
    Forbidden,
}

impl fmt::Display for CrossingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrossingKind::Allowed => "allowed",
            CrossingKind::Forbidden => "forbidden",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossingEvent {
    pub track_id: u64,
    pub line_id: u32,
    /// Frame of the first observation past the line.
    pub frame_id: u64,
    pub kind: CrossingKind,
}

/// Crossings of one trajectory (centers in frame order) over one line.
///
/// A point lying exactly on the line is skipped, so the crossing is counted
/// on the first segment that ends strictly on the other side.
pub fn trajectory_crossings(track_id: u64, path: &[(u64, Point2)], line: &CountLine) -> Vec<CrossingEvent> {
    let mut events = Vec::new();
    let mut anchor: Option<(Point2, i8)> = None;
    for &(frame_id, p) in path {
        let side = side_of_line(line.p0, line.p1, p);
        if side == 0 {
            continue;
        }
        if let Some((a, a_side)) = anchor {
            if a_side != side {
                let hit = segments_intersect(a, p, line.p0, line.p1);
                if hit.intersects && hit.orientation != 0 {
                    let kind = if hit.orientation == line.allowed_sign {
                        CrossingKind::Allowed
                    } else {
                        CrossingKind::Forbidden
                    };
                    events.push(CrossingEvent {
                        track_id,
                        line_id: line.line_id,
                        frame_id,
                        kind,
                    });
                }
            }
        }
        anchor = Some((p, side));
    }
    events
}

/// All crossing events, ordered by `(frame, track, line)`.
pub fn detect_crossings(table: &RecordTable, lines: &[CountLine]) -> Vec<CrossingEvent> {
    let mut events = Vec::new();
    for (id, recs) in table.by_track() {
        let path: Vec<(u64, Point2)> = recs.iter().map(|r| (r.frame_id, r.center)).collect();
        for line in lines {
            events.extend(trajectory_crossings(id, &path, line));
        }
    }
    events.sort_by_key(|e| (e.frame_id, e.track_id, e.line_id));
    events
}

/// `(allowed, forbidden)` totals.
pub fn crossing_counts(events: &[CrossingEvent]) -> (usize, usize) {
    let allowed = events.iter().filter(|e| e.kind == CrossingKind::Allowed).count();
    (allowed, events.len() - allowed)
}

pub fn write_crossings_csv<W: Write>(events: &[CrossingEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["track_id", "line_id", "frame_id", "kind"])?;
    for e in events {
        w.write_record([
            e.track_id.to_string(),
            e.line_id.to_string(),
            e.frame_id.to_string(),
            e.kind.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<crossings>", e))?;
    Ok(())
}
