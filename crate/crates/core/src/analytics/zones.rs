use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Point2, Polygon};

/// Zone id; 0 is the implicit zone covering everything outside the
/// user-defined polygons.
pub type ZoneId = u32;

pub const DEFAULT_ZONE: ZoneId = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    pub polygon: Polygon,
}

/// User-defined zones, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZoneSet {
    zones: Vec<Zone>,
}

impl ZoneSet {
    pub fn new(mut zones: Vec<Zone>) -> Result<Self> {
        zones.sort_by_key(|z| z.id);
        if let Some(z) = zones.iter().find(|z| z.id == DEFAULT_ZONE) {
            return Err(Error::Config(format!("zone id {} is reserved", z.id)));
        }
        if let Some(w) = zones.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Config(format!("duplicate zone id {}", w[0].id)));
        }
        Ok(ZoneSet { zones })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn ids(&self) -> Vec<ZoneId> {
        self.zones.iter().map(|z| z.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// Zone of a vehicle center: the lowest zone id whose polygon contains it,
/// or [`DEFAULT_ZONE`].
pub fn assign_zone(center: Point2, zones: &ZoneSet) -> ZoneId {
    zones
        .zones
        .iter()
        .find(|z| point_in_polygon(center, &z.polygon))
        .map_or(DEFAULT_ZONE, |z| z.id)
}

/// Directed counting line. A crossing is allowed when the sign of
/// `cross(motion, p1 - p0)` equals `allowed_sign`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountLine {
    pub line_id: u32,
    pub p0: Point2,
    pub p1: Point2,
    pub allowed_sign: i8,
}

impl CountLine {
    pub fn new(line_id: u32, p0: Point2, p1: Point2, allowed_sign: i8) -> Result<Self> {
        if p0 == p1 {
            return Err(Error::Config(format!("count line {line_id} has coincident endpoints")));
        }
        if allowed_sign != 1 && allowed_sign != -1 {
            return Err(Error::Config(format!(
                "count line {line_id}: allowed_sign must be +1 or -1, got {allowed_sign}"
            )));
        }
        Ok(CountLine {
            line_id,
            p0,
            p1,
            allowed_sign,
        })
    }
}

/// Zones and lines file layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub id: ZoneId,
    /// Vertices; the closing point may be omitted.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub id: u32,
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub allowed_sign: i8,
}

/// Validated zones and lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    pub zones: ZoneSet,
    pub lines: Vec<CountLine>,
}

impl LayoutConfig {
    pub fn build(&self) -> Result<Layout> {
        let zones = self
            .zones
            .iter()
            .map(|z| {
                Polygon::from_xy(&z.polygon)
                    .map(|polygon| Zone { id: z.id, polygon })
                    .map_err(|e| Error::Config(format!("zone {}: {e}", z.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut lines = self
            .lines
            .iter()
            .map(|l| {
                CountLine::new(
                    l.id,
                    Point2::new(l.p0[0], l.p0[1]),
                    Point2::new(l.p1[0], l.p1[1]),
                    l.allowed_sign,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        lines.sort_by_key(|l| l.line_id);
        if let Some(w) = lines.windows(2).find(|w| w[0].line_id == w[1].line_id) {
            return Err(Error::Config(format!("duplicate line id {}", w[0].line_id)));
        }
        Ok(Layout {
            zones: ZoneSet::new(zones)?,
            lines,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(id: ZoneId, x0: f64, y0: f64, x1: f64, y1: f64) -> Zone {
        Zone {
            id,
            polygon: Polygon::from_xy(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]]).unwrap(),
        }
    }

    #[test]
    fn assignment_and_precedence() {
        let zones = ZoneSet::new(vec![rect(3, 0.0, 0.0, 10.0, 10.0), rect(1, 5.0, 5.0, 20.0, 20.0)]).unwrap();
        assert_eq!(assign_zone(Point2::new(2.0, 2.0), &zones), 3);
        // overlap: lowest id wins
        assert_eq!(assign_zone(Point2::new(7.0, 7.0), &zones), 1);
        assert_eq!(assign_zone(Point2::new(50.0, 50.0), &zones), DEFAULT_ZONE);
    }

    #[test]
    fn invalid_layouts() {
        assert!(ZoneSet::new(vec![rect(0, 0.0, 0.0, 1.0, 1.0)]).is_err());
        assert!(ZoneSet::new(vec![rect(2, 0.0, 0.0, 1.0, 1.0), rect(2, 3.0, 3.0, 4.0, 4.0)]).is_err());
        assert!(CountLine::new(1, Point2::new(1.0, 1.0), Point2::new(1.0, 1.0), 1).is_err());
        assert!(CountLine::new(1, Point2::new(0.0, 1.0), Point2::new(1.0, 1.0), 0).is_err());
    }

    #[test]
    fn layout_from_json() {
        let text = r#"{
            "zones": [{"id": 2, "polygon": [[0, 0], [4, 0], [4, 4], [0, 4]]}],
            "lines": [{"id": 7, "p0": [0, 10], "p1": [10, 10], "allowed_sign": -1}]
        }"#;
        let cfg: LayoutConfig = serde_json::from_str(text).unwrap();
        let layout = cfg.build().unwrap();
        assert_eq!(layout.zones.ids(), vec![2]);
        assert_eq!(layout.zones.zones()[0].polygon.vertices().len(), 5);
        assert_eq!(layout.lines[0].allowed_sign, -1);
    }
}
