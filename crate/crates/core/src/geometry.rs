//! Planar primitives in image coordinates (origin top-left, y pointing down).
//!
//! Everything here is pure `f64` arithmetic; `EPS` is the tolerance used for
//! degeneracy checks and boundary classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn translate(self, dx: f64, dy: f64) -> Point2 {
        Point2::new(self.x + dx, self.y + dy)
    }
}

fn cross(a: Point2, b: Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Raw box coordinates tagged with their layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxCoords {
    /// `[x0, y0, x1, y1]`: upper-left and lower-right corners.
    Corners([f64; 4]),
    /// `[x0, y0, w, h]`: upper-left corner plus extent.
    XYWH([f64; 4]),
}

/// Axis-aligned box stored as upper-left corner plus positive extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn from_xywh(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        if !(x0.is_finite() && y0.is_finite() && w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox { w, h });
        }
        Ok(BBox { x0, y0, w, h })
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::from_xywh(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn from_coords(coords: BoxCoords) -> Result<Self> {
        match coords {
            BoxCoords::Corners([x0, y0, x1, y1]) => Self::from_corners(x0, y0, x1, y1),
            BoxCoords::XYWH([x0, y0, w, h]) => Self::from_xywh(x0, y0, w, h),
        }
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn x1(&self) -> f64 {
        self.x0 + self.w
    }
    pub fn y1(&self) -> f64 {
        self.y0 + self.h
    }

    pub fn xywh(&self) -> [f64; 4] {
        [self.x0, self.y0, self.w, self.h]
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1(), self.y1()]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Center of the box, `(x0 + w/2, y0 + h/2)`.
    pub fn center(&self) -> Point2 {
        Point2::new(self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            ..*self
        }
    }
}

/// Center of a box given in either layout. The two layouts use their own
/// formula so no intermediate conversion rounds the result.
pub fn bbox_center(coords: BoxCoords) -> Result<Point2> {
    match coords {
        BoxCoords::Corners([x0, y0, x1, y1]) => {
            BBox::from_corners(x0, y0, x1, y1)?;
            Ok(Point2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0))
        }
        BoxCoords::XYWH([x0, y0, w, h]) => Ok(BBox::from_xywh(x0, y0, w, h)?.center()),
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x1().min(b.x1()) - a.x0.max(b.x0);
    let ih = a.y1().min(b.y1()) - a.y0.max(b.y0);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Closed polygon. The vertex list always repeats its first point at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Builds a polygon, appending the closing point when the input omits it.
    pub fn new(mut points: Vec<Point2>) -> Result<Self> {
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        if points.len() >= 2 && points.first() != points.last() {
            let first = points[0];
            points.push(first);
        }
        if points.len() < 4 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 distinct vertices, got {}",
                points.len().saturating_sub(1)
            )));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidPolygon(format!(
                "consecutive vertices {i} and {} coincide",
                i + 1
            )));
        }
        let poly = Polygon { vertices: points };
        if poly.signed_area().abs() <= EPS {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        Ok(poly)
    }

    pub fn from_xy(points: &[[f64; 2]]) -> Result<Self> {
        Self::new(points.iter().map(|&[x, y]| Point2::new(x, y)).collect())
    }

    /// Closed vertex list (first point repeated last).
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    /// Shoelace area; positive for counter-clockwise order in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| cross(a, b)).sum::<f64>() / 2.0
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| p.translate(dx, dy)).collect(),
        }
    }
}

fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let ap = p.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 > 0.0 {
        ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap.x - t * ab.x;
    let dy = ap.y - t * ab.y;
    (dx * dx + dy * dy).sqrt()
}

/// Ray-casting containment test.
///
/// A horizontal ray is cast from `p` towards +x. An edge counts when one
/// endpoint lies strictly above the ray and the other at or below it, so a ray
/// through a vertex is never counted twice. Points within `EPS` of an edge are
/// reported as inside.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    if poly.edges().any(|(a, b)| distance_to_segment(p, a, b) <= EPS) {
        return true;
    }
    let mut crossings = 0u32;
    for (a, b) in poly.edges() {
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentIntersection {
    pub intersects: bool,
    /// Sign of `cross(a1 - a0, b1 - b0)`; zero for parallel or collinear segments.
    pub orientation: i8,
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test via orientation signs.
pub fn segments_intersect(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> SegmentIntersection {
    let orientation = sign(cross(a1.sub(a0), b1.sub(b0)));
    let d1 = sign(cross(a1.sub(a0), b0.sub(a0)));
    let d2 = sign(cross(a1.sub(a0), b1.sub(a0)));
    let d3 = sign(cross(b1.sub(b0), a0.sub(b0)));
    let d4 = sign(cross(b1.sub(b0), a1.sub(b0)));

    let intersects = if d1 * d2 < 0 && d3 * d4 < 0 {
        true
    } else {
        (d1 == 0 && on_segment(b0, a0, a1))
            || (d2 == 0 && on_segment(b1, a0, a1))
            || (d3 == 0 && on_segment(a0, b0, b1))
            || (d4 == 0 && on_segment(a1, b0, b1))
    };
    SegmentIntersection {
        intersects,
        orientation,
    }
}

/// Signed side of `p` relative to the directed line `a -> b`.
pub fn side_of_line(a: Point2, b: Point2, p: Point2) -> i8 {
    sign(cross(b.sub(a), p.sub(a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: i64,
    pub row: i64,
}

/// Index range of cells whose closed extent `[k*s, (k+1)*s]` meets `[lo, hi]`.
fn cell_span(lo: f64, hi: f64, cell_size: f64) -> (i64, i64) {
    let a = lo / cell_size;
    let mut first = a.floor() as i64;
    if a == a.floor() {
        first -= 1;
    }
    let last = (hi / cell_size).floor() as i64;
    (first, last)
}

/// Supercover traversal: every grid cell whose closed square the segment
/// `p0 -> p1` touches, ordered along the direction of travel.
///
/// The computation always runs on the canonically ordered endpoints so the
/// reversed segment yields exactly the same cells in reverse order.
pub fn raster_segment_cells(p0: Point2, p1: Point2, cell_size: f64) -> Vec<Cell> {
    assert!(cell_size > 0.0, "cell size must be positive");
    let swapped = (p1.x, p1.y) < (p0.x, p0.y);
    let (a, b) = if swapped { (p1, p0) } else { (p0, p1) };
    let dx = b.x - a.x;
    let dy = b.y - a.y;

    let (c_first, c_last) = cell_span(a.x, b.x, cell_size);
    let mut cells = Vec::new();
    for col in c_first..=c_last {
        let lo = a.x.max(col as f64 * cell_size);
        let hi = b.x.min((col + 1) as f64 * cell_size);
        if lo > hi {
            continue;
        }
        let (y_lo, y_hi) = if dx == 0.0 {
            (a.y.min(b.y), a.y.max(b.y))
        } else {
            let y_at = |x: f64| {
                if x == a.x {
                    a.y
                } else if x == b.x {
                    b.y
                } else {
                    a.y + (x - a.x) * dy / dx
                }
            };
            let (u, v) = (y_at(lo), y_at(hi));
            (u.min(v), u.max(v))
        };
        let (r_first, r_last) = cell_span(y_lo, y_hi, cell_size);
        if dy >= 0.0 {
            cells.extend((r_first..=r_last).map(|row| Cell { col, row }));
        } else {
            cells.extend((r_first..=r_last).rev().map(|row| Cell { col, row }));
        }
    }
    if swapped {
        cells.reverse();
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> Polygon {
        Polygon::from_xy(&[[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]]).unwrap()
    }

    #[test]
    fn centers_in_both_layouts() {
        assert_eq!(
            bbox_center(BoxCoords::Corners([0.0, 0.0, 10.0, 10.0])).unwrap(),
            Point2::new(5.0, 5.0)
        );
        assert_eq!(
            bbox_center(BoxCoords::XYWH([0.0, 0.0, 10.0, 20.0])).unwrap(),
            Point2::new(5.0, 10.0)
        );
        assert_eq!(
            bbox_center(BoxCoords::Corners([3.0, 7.0, 9.0, 19.0])).unwrap(),
            Point2::new(6.0, 13.0)
        );
    }

    #[test]
    fn non_positive_extent_is_rejected() {
        assert!(matches!(
            bbox_center(BoxCoords::XYWH([0.0, 0.0, 0.0, 1.0])),
            Err(Error::InvalidBox { .. })
        ));
        assert!(bbox_center(BoxCoords::Corners([5.0, 0.0, 4.0, 1.0])).is_err());
        assert!(BBox::from_xywh(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(BBox::from_xywh(f64::NAN, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = BBox::from_xywh(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::from_xywh(5.0, 0.0, 10.0, 10.0).unwrap();
        let far = BBox::from_xywh(50.0, 50.0, 10.0, 10.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &far), 0.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        // edge contact has no area
        let touching = BBox::from_xywh(10.0, 0.0, 5.0, 5.0).unwrap();
        assert_eq!(iou(&a, &touching), 0.0);
    }

    #[test]
    fn polygon_closure_and_validation() {
        let open = square(10.0);
        assert_eq!(open.vertices().len(), 5);
        assert_eq!(open.vertices()[0], open.vertices()[4]);

        let closed = Polygon::from_xy(&[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [0.0, 0.0]]).unwrap();
        assert_eq!(closed, open);

        assert!(Polygon::from_xy(&[[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(Polygon::from_xy(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(Polygon::from_xy(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn ray_casting_basics() {
        let sq = square(10.0);
        assert!(point_in_polygon(Point2::new(5.0, 5.0), &sq));
        assert!(!point_in_polygon(Point2::new(15.0, 5.0), &sq));
        // ray passes exactly through a vertex
        let diamond = Polygon::from_xy(&[[5.0, 0.0], [10.0, 5.0], [5.0, 10.0], [0.0, 5.0]]).unwrap();
        assert!(point_in_polygon(Point2::new(2.0, 5.0), &diamond));
        assert!(!point_in_polygon(Point2::new(-2.0, 5.0), &diamond));
        assert!(!point_in_polygon(Point2::new(11.0, 5.0), &diamond));
    }

    #[test]
    fn boundary_points_are_inside() {
        let sq = square(10.0);
        assert!(point_in_polygon(Point2::new(10.0, 5.0), &sq));
        assert!(point_in_polygon(Point2::new(0.0, 0.0), &sq));
        assert!(point_in_polygon(Point2::new(4.0, 10.0), &sq));
    }

    #[test]
    fn concave_polygon() {
        // U shape opening upwards (y down)
        let u = Polygon::from_xy(&[
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 7.0],
            [7.0, 7.0],
            [7.0, 0.0],
            [10.0, 0.0],
            [10.0, 10.0],
            [0.0, 10.0],
        ])
        .unwrap();
        assert!(point_in_polygon(Point2::new(1.0, 1.0), &u));
        assert!(!point_in_polygon(Point2::new(5.0, 3.0), &u));
        assert!(point_in_polygon(Point2::new(5.0, 8.5), &u));
    }

    #[test]
    fn segment_intersections() {
        let x = segments_intersect(
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 0.0),
        );
        assert!(x.intersects);
        assert_eq!(x.orientation, -1);

        let par = segments_intersect(
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 1.0),
        );
        assert_eq!(
            par,
            SegmentIntersection {
                intersects: false,
                orientation: 0
            }
        );

        let overlap = segments_intersect(
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(3.0, 0.0),
        );
        assert_eq!(
            overlap,
            SegmentIntersection {
                intersects: true,
                orientation: 0
            }
        );

        // T junction: endpoint touching the other segment counts
        let t = segments_intersect(
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 3.0),
        );
        assert!(t.intersects);
    }

    #[test]
    fn raster_examples() {
        let one = raster_segment_cells(Point2::new(0.5, 0.5), Point2::new(0.5, 0.5), 1.0);
        assert_eq!(one, vec![Cell { col: 0, row: 0 }]);

        let run = raster_segment_cells(Point2::new(0.5, 0.5), Point2::new(3.5, 0.5), 1.0);
        assert_eq!(run, (0..4).map(|col| Cell { col, row: 0 }).collect::<Vec<_>>());

        let back = raster_segment_cells(Point2::new(3.5, 0.5), Point2::new(0.5, 0.5), 1.0);
        assert_eq!(back, run.iter().rev().copied().collect::<Vec<_>>());
    }

    #[test]
    fn raster_touches_shared_edges_and_corners() {
        // a horizontal segment on a grid line touches both rows
        let cells = raster_segment_cells(Point2::new(0.5, 1.0), Point2::new(1.5, 1.0), 1.0);
        assert_eq!(
            cells,
            vec![
                Cell { col: 0, row: 0 },
                Cell { col: 0, row: 1 },
                Cell { col: 1, row: 0 },
                Cell { col: 1, row: 1 },
            ]
        );
        // a diagonal through a lattice point touches all four cells around it
        let diag = raster_segment_cells(Point2::new(0.5, 0.5), Point2::new(1.5, 1.5), 1.0);
        assert_eq!(diag.len(), 4);
    }

    #[test]
    fn raster_scales_with_cell_size() {
        let cells = raster_segment_cells(Point2::new(2.0, 2.0), Point2::new(14.0, 2.0), 4.0);
        assert_eq!(cells, (0..4).map(|col| Cell { col, row: 0 }).collect::<Vec<_>>());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn bbox() -> impl Strategy<Value = BBox> {
        (-100.0f64..100.0, -100.0f64..100.0, 0.5f64..50.0, 0.5f64..50.0)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
    }

    fn point() -> impl Strategy<Value = Point2> {
        (-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in bbox(), b in bbox()) {
            let v = iou(&a, &b);
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_translation_invariant(a in bbox(), b in bbox(), dx in -64i32..64, dy in -64i32..64) {
            // integer shifts keep coordinates representable
            let (dx, dy) = (f64::from(dx), f64::from(dy));
            let before = iou(&a, &b);
            let after = iou(&a.translate(dx, dy), &b.translate(dx, dy));
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn segment_intersection_symmetric(a0 in point(), a1 in point(), b0 in point(), b1 in point()) {
            let ab = segments_intersect(a0, a1, b0, b1);
            let ba = segments_intersect(b0, b1, a0, a1);
            prop_assert_eq!(ab.intersects, ba.intersects);
            prop_assert_eq!(ab.orientation, -ba.orientation);
            prop_assert_eq!(segments_intersect(a1, a0, b0, b1).intersects, ab.intersects);
        }

        #[test]
        fn side_flips_with_direction(a in point(), b in point(), p in point()) {
            prop_assert_eq!(side_of_line(a, b, p), -side_of_line(b, a, p));
        }

        #[test]
        fn raster_covers_endpoints_and_is_connected(p0 in point(), p1 in point(), s in 0.5f64..8.0) {
            let cells = raster_segment_cells(p0, p1, s);
            prop_assert!(!cells.is_empty());
            let holds = |c: &Cell, p: Point2| {
                let (x0, y0) = (c.col as f64 * s, c.row as f64 * s);
                p.x >= x0 && p.x <= x0 + s && p.y >= y0 && p.y <= y0 + s
            };
            prop_assert!(holds(&cells[0], p0));
            prop_assert!(holds(cells.last().unwrap(), p1));
            for w in cells.windows(2) {
                prop_assert!((w[0].col - w[1].col).abs() <= 1 && (w[0].row - w[1].row).abs() <= 1);
            }
            let mut rev = raster_segment_cells(p1, p0, s);
            rev.reverse();
            prop_assert_eq!(rev, cells);
        }

        #[test]
        fn point_in_polygon_translation_invariant(p in point(), dx in -64i32..64, dy in -64i32..64) {
            let poly = Polygon::from_xy(&[[-20.0, -20.0], [30.0, -10.0], [0.0, 5.0], [25.0, 30.0], [-25.0, 20.0]]).unwrap();
            let (dx, dy) = (f64::from(dx), f64::from(dy));
            prop_assert_eq!(point_in_polygon(p, &poly), point_in_polygon(p.translate(dx, dy), &poly.translate(dx, dy)));
        }
    }
}
