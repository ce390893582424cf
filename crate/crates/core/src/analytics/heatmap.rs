use std::collections::HashSet;
use std::io::Write;

use crate::analytics::records::RecordTable;
use crate::error::{Error, Result};
use crate::geometry::{raster_segment_cells, Cell};

pub const DEFAULT_CELL_SIZE: f64 = 4.0;

/// Per-cell velocity and congestion grids over the frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    pub cell_size: f64,
    pub cols: usize,
    pub rows: usize,
    /// Highest segment velocity seen in each cell, km/h.
    pub max_velocity: Vec<f64>,
    pub sum_velocity: Vec<f64>,
    pub sample_count: Vec<u64>,
    /// Distinct vehicles that passed through each cell.
    pub congestion: Vec<u64>,
}

impl HeatmapSet {
    pub fn new(cell_size: f64, image_w: u32, image_h: u32) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        let cols = (f64::from(image_w) / cell_size).ceil() as usize;
        let rows = (f64::from(image_h) / cell_size).ceil() as usize;
        let n = cols * rows;
        Ok(HeatmapSet {
            cell_size,
            cols,
            rows,
            max_velocity: vec![0.0; n],
            sum_velocity: vec![0.0; n],
            sample_count: vec![0; n],
            congestion: vec![0; n],
        })
    }

    /// Flat index of a cell, if it lies on the grid.
    pub fn index(&self, cell: Cell) -> Option<usize> {
        let (c, r) = (usize::try_from(cell.col).ok()?, usize::try_from(cell.row).ok()?);
        (c < self.cols && r < self.rows).then(|| r * self.cols + c)
    }

    /// Average velocity per cell, 0 where nothing was sampled.
    pub fn average_velocity(&self) -> Vec<f64> {
        self.sum_velocity
            .iter()
            .zip(&self.sample_count)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }
}

/// Rasterizes every consecutive-center segment of every track; a segment
/// carries the velocity of its later record.
pub fn accumulate_heatmaps(table: &RecordTable, cell_size: f64, image_w: u32, image_h: u32) -> Result<HeatmapSet> {
    let mut hm = HeatmapSet::new(cell_size, image_w, image_h)?;
    for recs in table.by_track().values() {
        let mut visited = HashSet::new();
        for pair in recs.windows(2) {
            let v = pair[1].velocity_kmh;
            for cell in raster_segment_cells(pair[0].center, pair[1].center, cell_size) {
                let Some(i) = hm.index(cell) else { continue };
                hm.max_velocity[i] = hm.max_velocity[i].max(v);
                hm.sum_velocity[i] += v;
                hm.sample_count[i] += 1;
                if visited.insert(i) {
                    hm.congestion[i] += 1;
                }
            }
        }
    }
    Ok(hm)
}

/// Plain-text graymap scaled so the grid maximum maps to 255.
pub fn write_pgm<W: Write>(values: &[f64], cols: usize, rows: usize, mut out: W) -> std::io::Result<()> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    writeln!(out, "P2\n{cols} {rows}\n255")?;
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|&v| {
                let g = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
                (g.clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Grid as a headerless CSV matrix, one line per row.
pub fn write_grid_csv<W: Write, T: ToString>(values: &[T], cols: usize, rows: usize, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..rows {
        w.write_record(values[r * cols..(r + 1) * cols].iter().map(ToString::to_string))?;
    }
    w.flush().map_err(|e| Error::io("<heatmap>", e))?;
    Ok(())
}
