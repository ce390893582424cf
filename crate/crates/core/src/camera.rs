//! Camera looking straight down at flat ground. Under that assumption the
//! pinhole projection reduces to a per-axis scale, the ground sample distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Camera config file layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub dag_m: f64,
    pub sensor_h_m: f64,
    pub sensor_w_m: f64,
    pub focal_m: f64,
    pub image_w_px: u32,
    pub image_h_px: u32,
    pub fps: f64,
    /// Only nadir (perpendicular) views are supported.
    #[serde(default = "default_true")]
    pub perpendicular: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Distance above ground, m.
    pub dag: f64,
    pub sensor_h: f64,
    pub sensor_w: f64,
    pub focal: f64,
    pub image_h: u32,
    pub image_w: u32,
    pub fps: f64,
}

/// Ground sample distance per axis, m/px.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gsd {
    pub h: f64,
    pub w: f64,
}

impl CameraModel {
    pub fn new(
        dag: f64,
        sensor_h: f64,
        sensor_w: f64,
        focal: f64,
        image_h: u32,
        image_w: u32,
        fps: f64,
    ) -> Result<Self> {
        let reals = [
            ("dag", dag),
            ("sensor_h", sensor_h),
            ("sensor_w", sensor_w),
            ("focal", focal),
            ("fps", fps),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("camera {name} must be positive, got {v}")));
            }
        }
        if image_h == 0 || image_w == 0 {
            return Err(Error::Config("camera image size must be positive".into()));
        }
        Ok(CameraModel {
            dag,
            sensor_h,
            sensor_w,
            focal,
            image_h,
            image_w,
            fps,
        })
    }

    pub fn from_config(cfg: &CameraConfig) -> Result<Self> {
        if !cfg.perpendicular {
            return Err(Error::Config(
                "only cameras perpendicular to the ground are supported".into(),
            ));
        }
        Self::new(
            cfg.dag_m,
            cfg.sensor_h_m,
            cfg.sensor_w_m,
            cfg.focal_m,
            cfg.image_h_px,
            cfg.image_w_px,
            cfg.fps,
        )
    }

    pub fn to_config(&self) -> CameraConfig {
        CameraConfig {
            dag_m: self.dag,
            sensor_h_m: self.sensor_h,
            sensor_w_m: self.sensor_w,
            focal_m: self.focal,
            image_w_px: self.image_w,
            image_h_px: self.image_h,
            fps: self.fps,
            perpendicular: true,
        }
    }

    /// Synthetic camera with the requested ground sample distances
    /// (unit altitude and focal length; the sensor absorbs the scale).
    pub fn with_gsd(gsd_w: f64, gsd_h: f64, image_w: u32, image_h: u32, fps: f64) -> Result<Self> {
        Self::new(
            1.0,
            gsd_h * f64::from(image_h),
            gsd_w * f64::from(image_w),
            1.0,
            image_h,
            image_w,
            fps,
        )
    }

    pub fn gsd(&self) -> Gsd {
        Gsd {
            h: self.dag * self.sensor_h / (self.focal * f64::from(self.image_h)),
            w: self.dag * self.sensor_w / (self.focal * f64::from(self.image_w)),
        }
    }

    /// Ground sample area, m²/px.
    pub fn gsa(&self) -> f64 {
        let g = self.gsd();
        g.h * g.w
    }

    /// Box area converted to m².
    pub fn vehicle_size(&self, bbox: &BBox) -> f64 {
        bbox.w() * bbox.h() * self.gsa()
    }

    /// Time of a frame, s.
    pub fn frame_time(&self, frame_id: u64) -> f64 {
        frame_id as f64 / self.fps
    }
}
