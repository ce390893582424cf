//! Analytics bundle files shared by the pipeline and the simulator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::analytics::crossings::{write_crossings_csv, CrossingEvent, CrossingKind};
use crate::analytics::heatmap::{write_grid_csv, write_pgm, HeatmapSet};
use crate::analytics::transitions::TransitionMatrix;
use crate::analytics::zones::ZoneId;
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const CROSSINGS_FILE: &str = "crossings.csv";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const OD_PAIRS_FILE: &str = "od_pairs.csv";
pub const HEATMAP_MAX: &str = "heatmap_max_velocity";
pub const HEATMAP_AVG: &str = "heatmap_avg_velocity";
pub const HEATMAP_CONGESTION: &str = "heatmap_congestion";

/// Post-hoc analytics of one record table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticsOutput {
    pub crossings: Vec<CrossingEvent>,
    /// `(track, origin, destination)` for every track that visited a zone.
    pub od_pairs: Vec<(u64, ZoneId, ZoneId)>,
    pub transitions: TransitionMatrix,
    pub heatmaps: HeatmapSet,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn write_od_csv<W: Write>(pairs: &[(u64, ZoneId, ZoneId)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["track_id", "origin", "destination"])?;
    for (t, o, d) in pairs {
        w.write_record([t.to_string(), o.to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(OD_PAIRS_FILE, e))?;
    Ok(())
}

/// Writes crossings, origin/destination pairs, the transition matrix and the
/// three heatmaps (CSV and PGM each) into `dir`. Returns the file names.
pub fn write_analytics(dir: &Path, a: &AnalyticsOutput) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut name = |n: String| {
        files.push(n.clone());
        dir.join(n)
    };
    write_crossings_csv(&a.crossings, create(&name(CROSSINGS_FILE.into()))?)?;
    write_od_csv(&a.od_pairs, create(&name(OD_PAIRS_FILE.into()))?)?;
    a.transitions.write_csv(create(&name(TRANSITIONS_FILE.into()))?)?;

    let hm = &a.heatmaps;
    let (c, r) = (hm.cols, hm.rows);
    let avg = hm.average_velocity();
    let congestion: Vec<f64> = hm.congestion.iter().map(|&v| v as f64).collect();
    write_grid_csv(&hm.max_velocity, c, r, create(&name(format!("{HEATMAP_MAX}.csv")))?)?;
    write_grid_csv(&avg, c, r, create(&name(format!("{HEATMAP_AVG}.csv")))?)?;
    write_grid_csv(
        &hm.congestion,
        c,
        r,
        create(&name(format!("{HEATMAP_CONGESTION}.csv")))?,
    )?;
    for (stem, values) in [
        (HEATMAP_MAX, &hm.max_velocity),
        (HEATMAP_AVG, &avg),
        (HEATMAP_CONGESTION, &congestion),
    ] {
        let path = name(format!("{stem}.pgm"));
        let mut out = create(&path)?;
        write_pgm(values, c, r, &mut out).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(files)
}

/// Headerless numeric CSV matrix as `(values, cols, rows)`.
pub fn read_grid_csv<R: Read>(input: R) -> Result<(Vec<f64>, usize, usize)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Schema(format!("grid row {} has {} columns", i + 1, rec.len())));
        }
        for v in rec.iter() {
            values.push(v.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Ok((values, cols.unwrap_or(0), rows))
}

pub fn read_crossings_csv<R: Read>(input: R) -> Result<Vec<CrossingEvent>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(["track_id", "line_id", "frame_id", "kind"]) {
        return Err(Error::Schema("unexpected crossings columns".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let perr = |msg: String| Error::Parse { line: i + 2, msg };
        let kind = match &rec[3] {
            "allowed" => CrossingKind::Allowed,
            "forbidden" => CrossingKind::Forbidden,
            other => return Err(perr(format!("unknown crossing kind `{other}`"))),
        };
        out.push(CrossingEvent {
            track_id: rec[0].parse().map_err(|e| perr(format!("track_id: {e}")))?,
            line_id: rec[1].parse().map_err(|e| perr(format!("line_id: {e}")))?,
            frame_id: rec[2].parse().map_err(|e| perr(format!("frame_id: {e}")))?,
            kind,
        });
    }
    Ok(out)
}

/// Transition percentages as `(zone ids, row-major matrix)`.
pub fn read_transitions_csv<R: Read>(input: R) -> Result<(Vec<ZoneId>, Vec<u32>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let zone = |s: &str| -> Result<ZoneId> {
        s.strip_prefix('Z')
            .and_then(|z| z.parse().ok())
            .ok_or_else(|| Error::Schema(format!("bad zone label `{s}`")))
    };
    let ids = header.iter().skip(1).map(zone).collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i >= ids.len() || rec.len() != ids.len() + 1 || zone(&rec[0])? != ids[i] {
            return Err(Error::Schema(format!("bad transition row {}", i + 1)));
        }
        for v in rec.iter().skip(1) {
            values.push(v.parse().map_err(|e| Error::Parse {
                line: i + 2,
                msg: format!("{e}"),
            })?);
        }
    }
    if values.len() != ids.len() * ids.len() {
        return Err(Error::Schema("transition matrix is not square".into()));
    }
    Ok((ids, values))
}
