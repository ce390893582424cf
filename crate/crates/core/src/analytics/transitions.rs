use std::io::Write;

use crate::analytics::records::RecordTable;
use crate::analytics::zones::{ZoneId, ZoneSet, DEFAULT_ZONE};
use crate::error::{Error, Result};

/// Origin/destination tally between user zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    /// Row and column labels, ascending.
    pub zone_ids: Vec<ZoneId>,
    /// Raw move counts, row-major `[from][to]`.
    pub moves: Vec<u64>,
    pub total_moves: u64,
    /// `floor(100 * moves / total_moves)`, all zero when there are no moves.
    pub percent: Vec<u32>,
}

impl TransitionMatrix {
    /// Builds the matrix from `(origin, destination)` pairs; pairs touching
    /// unknown or default zones, or with equal ends, are ignored.
    pub fn from_moves(zone_ids: Vec<ZoneId>, pairs: impl IntoIterator<Item = (ZoneId, ZoneId)>) -> Self {
        let n = zone_ids.len();
        let pos = |z: ZoneId| zone_ids.iter().position(|&id| id == z);
        let mut moves = vec![0u64; n * n];
        for (from, to) in pairs {
            if from == to || from == DEFAULT_ZONE || to == DEFAULT_ZONE {
                continue;
            }
            if let (Some(i), Some(j)) = (pos(from), pos(to)) {
                moves[i * n + j] += 1;
            }
        }
        let total_moves: u64 = moves.iter().sum();
        let percent = moves
            .iter()
            .map(|&m| (100 * m).checked_div(total_moves).unwrap_or(0) as u32)
            .collect();
        TransitionMatrix {
            zone_ids,
            moves,
            total_moves,
            percent,
        }
    }

    pub fn percent_between(&self, from: ZoneId, to: ZoneId) -> Option<u32> {
        let i = self.zone_ids.iter().position(|&z| z == from)?;
        let j = self.zone_ids.iter().position(|&z| z == to)?;
        Some(self.percent[i * self.zone_ids.len() + j])
    }

    pub fn moves_between(&self, from: ZoneId, to: ZoneId) -> Option<u64> {
        let i = self.zone_ids.iter().position(|&z| z == from)?;
        let j = self.zone_ids.iter().position(|&z| z == to)?;
        Some(self.moves[i * self.zone_ids.len() + j])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["from\\to".to_string()];
        header.extend(self.zone_ids.iter().map(|z| format!("Z{z}")));
        w.write_record(&header)?;
        let n = self.zone_ids.len();
        for (i, z) in self.zone_ids.iter().enumerate() {
            let mut row = vec![format!("Z{z}")];
            row.extend(self.percent[i * n..(i + 1) * n].iter().map(u32::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<transitions>", e))?;
        Ok(())
    }
}

/// First and last non-default zone visited by each track.
pub fn track_endpoints(table: &RecordTable) -> Vec<(u64, ZoneId, ZoneId)> {
    table
        .by_track()
        .into_iter()
        .filter_map(|(id, recs)| {
            let mut visited = recs.iter().map(|r| r.zone).filter(|&z| z != DEFAULT_ZONE);
            let first = visited.next()?;
            let last = visited.next_back().unwrap_or(first);
            Some((id, first, last))
        })
        .collect()
}

pub fn transition_matrix(table: &RecordTable, zones: &ZoneSet) -> TransitionMatrix {
    TransitionMatrix::from_moves(zones.ids(), track_endpoints(table).into_iter().map(|(_, a, b)| (a, b)))
}
