//! Frame tiling: pad a frame up to whole crops, split it into a grid and map
//! tile-local detections back into frame coordinates.

use serde::{Deserialize, Serialize};

use crate::detector_io::Category;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

pub const DEFAULT_CROP: u32 = 512;

/// Tile layout of one padded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub frame_w: u32,
    pub frame_h: u32,
    pub crop_size: u32,
    pub padded_w: u32,
    pub padded_h: u32,
    pub cols: u32,
    pub rows: u32,
}

impl TileGrid {
    pub fn tile_count(&self) -> u32 {
        self.cols * self.rows
    }

    /// Pixel offset of the tile's upper-left corner in the padded frame.
    pub fn tile_origin(&self, col: u32, row: u32) -> (f64, f64) {
        (
            f64::from(self.crop_size) * f64::from(col),
            f64::from(self.crop_size) * f64::from(row),
        )
    }

    /// Tiles in row-major order.
    pub fn tiles(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.rows).flat_map(move |row| (0..self.cols).map(move |col| (col, row)))
    }
}

/// Smallest grid of `crop_size` tiles covering the frame. The padding beyond
/// the frame is black.
pub fn plan_grid(frame_w: u32, frame_h: u32, crop_size: u32) -> Result<TileGrid> {
    if frame_w == 0 || frame_h == 0 || crop_size == 0 {
        return Err(Error::Config(format!(
            "frame {frame_w}x{frame_h} and crop {crop_size} must be non-zero"
        )));
    }
    let cols = frame_w.div_ceil(crop_size);
    let rows = frame_h.div_ceil(crop_size);
    Ok(TileGrid {
        frame_w,
        frame_h,
        crop_size,
        padded_w: cols * crop_size,
        padded_h: rows * crop_size,
        cols,
        rows,
    })
}

/// A detection in the coordinate system of one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileDetection {
    pub tile_col: u32,
    pub tile_row: u32,
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
}

/// Maps a tile-local box into frame coordinates.
///
/// The part of the box lying in the padding is clipped away. `Ok(None)` means
/// the box lies entirely in the padding and was dropped.
pub fn recalibrate(d: &TileDetection, grid: &TileGrid) -> Result<Option<BBox>> {
    if d.tile_col >= grid.cols || d.tile_row >= grid.rows {
        return Err(Error::Tile {
            col: d.tile_col,
            row: d.tile_row,
            msg: format!("outside the {}x{} grid", grid.cols, grid.rows),
        });
    }
    let crop = f64::from(grid.crop_size);
    let b = &d.bbox;
    if b.x0() < 0.0 || b.y0() < 0.0 || b.x1() > crop || b.y1() > crop {
        return Err(Error::Tile {
            col: d.tile_col,
            row: d.tile_row,
            msg: format!("box {:?} exceeds the {crop} px tile", b.xywh()),
        });
    }
    let (ox, oy) = grid.tile_origin(d.tile_col, d.tile_row);
    let x0 = b.x0() + ox;
    let y0 = b.y0() + oy;
    let x1 = (b.x1() + ox).min(f64::from(grid.frame_w));
    let y1 = (b.y1() + oy).min(f64::from(grid.frame_h));
    if x1 <= x0 || y1 <= y0 {
        log::debug!(
            "dropping box {:?} of tile ({}, {}): inside padding",
            b.xywh(),
            d.tile_col,
            d.tile_row
        );
        return Ok(None);
    }
    if x1 == b.x1() + ox && y1 == b.y1() + oy {
        // unclipped: keep the width and height bit-for-bit
        return BBox::from_xywh(x0, y0, b.w(), b.h()).map(Some);
    }
    BBox::from_corners(x0, y0, x1, y1).map(Some)
}

/// Inverse of [`recalibrate`] for a frame box lying fully inside one tile.
pub fn localize(bbox: &BBox, grid: &TileGrid) -> Option<(u32, u32, BBox)> {
    let crop = f64::from(grid.crop_size);
    if bbox.x0() < 0.0 || bbox.y0() < 0.0 {
        return None;
    }
    let col = (bbox.x0() / crop).floor();
    let row = (bbox.y0() / crop).floor();
    if col >= f64::from(grid.cols) || row >= f64::from(grid.rows) {
        return None;
    }
    let (col, row) = (col as u32, row as u32);
    let (ox, oy) = grid.tile_origin(col, row);
    if bbox.x1() > ox + crop || bbox.y1() > oy + crop {
        return None;
    }
    let local = BBox::from_xywh(bbox.x0() - ox, bbox.y0() - oy, bbox.w(), bbox.h()).ok()?;
    Some((col, row, local))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub enabled: bool,
    pub iou_threshold: f64,
    /// Half-width in pixels of the band around each interior tile seam.
    pub band_width: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            enabled: false,
            iou_threshold: 0.5,
            band_width: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
}

/// Interior seams whose band the box touches, as `(vertical?, index)` pairs.
fn touched_seams(b: &BBox, grid: &TileGrid, band: f64) -> Vec<(bool, u32)> {
    let crop = f64::from(grid.crop_size);
    let mut seams = Vec::new();
    for k in 1..grid.cols {
        let x = crop * f64::from(k);
        if b.x0() <= x + band && b.x1() >= x - band {
            seams.push((true, k));
        }
    }
    for k in 1..grid.rows {
        let y = crop * f64::from(k);
        if b.y0() <= y + band && b.y1() >= y - band {
            seams.push((false, k));
        }
    }
    seams
}

/// Greedy suppression of duplicates produced where one vehicle straddles a
/// tile seam. Boxes are visited by descending confidence (ties keep input
/// order); a box is dropped when a kept box of the same category overlaps it
/// with IoU at or above the threshold and both touch the same seam band.
/// Survivors are returned in input order.
pub fn dedup_cross_tile(boxes: &[ScoredBox], grid: &TileGrid, cfg: &DedupConfig) -> Vec<ScoredBox> {
    let seams: Vec<_> = boxes
        .iter()
        .map(|b| touched_seams(&b.bbox, grid, cfg.band_width))
        .collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence));

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let duplicate = kept.iter().any(|&k| {
            boxes[k].category == boxes[i].category
                && iou(&boxes[k].bbox, &boxes[i].bbox) >= cfg.iou_threshold
                && seams[k].iter().any(|s| seams[i].contains(s))
        });
        if !duplicate {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| boxes[i].clone()).collect()
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn localize_then_recalibrate_round_trips(x in 0.0f64..3700.0, y in 0.0f64..2000.0, w in 1.0f64..100.0, h in 1.0f64..100.0) {
            let grid = plan_grid(3840, 2160, DEFAULT_CROP).unwrap();
            let b = BBox::from_xywh(x, y, w, h).unwrap();
            if let Some((col, row, local)) = localize(&b, &grid) {
                let d = TileDetection { tile_col: col, tile_row: row, bbox: local, category: Category::Car, confidence: 0.5 };
                let back = recalibrate(&d, &grid).unwrap().unwrap();
                prop_assert_eq!(back, b);
            }
        }

        #[test]
        fn grid_covers_frame(w in 1u32..5000, h in 1u32..5000, crop in 1u32..1024) {
            let g = plan_grid(w, h, crop).unwrap();
            prop_assert!(g.padded_w >= w && g.padded_w - w < crop);
            prop_assert!(g.padded_h >= h && g.padded_h - h < crop);
            prop_assert_eq!(g.tiles().count() as u32, g.tile_count());
        }
    }
}
