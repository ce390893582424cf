//! Constant-velocity Kalman filter over `[x, y, a, h, vx, vy, va, vh]`:
//! box center, aspect ratio `w / h`, height and their per-frame rates.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;
pub type MeasurementCovariance = SMatrix<f64, 4, 4>;

/// Noise standard deviations, expressed as multiples of the box height except
/// for the aspect-ratio terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub process_position: f64,
    pub process_velocity: f64,
    pub measurement_position: f64,
    pub initial_position: f64,
    pub initial_velocity: f64,
    pub process_aspect: f64,
    pub process_aspect_velocity: f64,
    pub measurement_aspect: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            process_position: 1.0 / 20.0,
            process_velocity: 1.0 / 160.0,
            measurement_position: 1.0 / 20.0,
            initial_position: 2.0 / 20.0,
            initial_velocity: 10.0 / 160.0,
            process_aspect: 1e-2,
            process_aspect_velocity: 1e-5,
            measurement_aspect: 1e-1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

/// `[center x, center y, w / h, h]` of a box.
pub fn measurement_from_box(b: &BBox) -> Measurement {
    let c = b.center();
    Measurement::new(c.x, c.y, b.w() / b.h(), b.h())
}

/// Box described by the first four state components, if it is non-degenerate.
pub fn box_from_measurement(m: &[f64]) -> Option<BBox> {
    let (x, y, a, h) = (m[0], m[1], m[2], m[3]);
    let w = a * h;
    BBox::from_xywh(x - w / 2.0, y - h / 2.0, w, h).ok()
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

fn check_finite(state: &MotionState) -> Result<()> {
    if state.mean.iter().chain(state.covariance.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite motion state".into()))
    }
}

impl MotionState {
    /// New track state from a first measurement; velocities start at zero.
    pub fn initiate(z: &Measurement, noise: &NoiseModel) -> Self {
        let h = z[3];
        let p = noise.initial_position * h;
        let v = noise.initial_velocity * h;
        let std = [p, p, 1e-2, p, v, v, 1e-5, v];
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        MotionState {
            mean,
            covariance: StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s))),
        }
    }

    /// One-frame constant-velocity prediction.
    pub fn predict(&self, noise: &NoiseModel) -> Result<MotionState> {
        check_finite(self)?;
        let h = self.mean[3];
        let p = noise.process_position * h;
        let v = noise.process_velocity * h;
        let std = [p, p, noise.process_aspect, p, v, v, noise.process_aspect_velocity, v];
        let q = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        let f = transition();
        let next = MotionState {
            mean: f * self.mean,
            covariance: symmetrize(&(f * self.covariance * f.transpose() + q)),
        };
        check_finite(&next)?;
        Ok(next)
    }

    /// Distribution of the expected measurement, `(y, S)`.
    pub fn project(&self, noise: &NoiseModel) -> (Measurement, MeasurementCovariance) {
        let h = self.mean[3];
        let p = noise.measurement_position * h;
        let std = [p, p, noise.measurement_aspect, p];
        let r = MeasurementCovariance::from_diagonal(&Measurement::from_iterator(std.iter().map(|s| s * s)));
        let obs = observation();
        let y = obs * self.mean;
        let s = symmetrize(&(obs * self.covariance * obs.transpose() + r));
        (y, s)
    }

    /// Kalman correction against one measurement.
    pub fn update(&self, z: &Measurement, noise: &NoiseModel) -> Result<MotionState> {
        if !z.iter().all(|v| v.is_finite()) || z[2] <= 0.0 || z[3] <= 0.0 {
            return Err(Error::Numeric(format!("invalid measurement {:?}", z.as_slice())));
        }
        check_finite(self)?;
        let (y, s) = self.project(noise);
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Numeric("innovation covariance is not positive definite".into()))?;
        let pht = self.covariance * observation().transpose();
        // K = P H^T S^-1, solved as S K^T = H P^T
        let gain = chol.solve(&pht.transpose()).transpose();
        let mean = self.mean + gain * (z - y);
        let covariance = symmetrize(&(self.covariance - gain * s * gain.transpose()));
        let next = MotionState { mean, covariance };
        check_finite(&next)?;
        Ok(next)
    }

    /// Squared Mahalanobis distance of a measurement to the projected state.
    pub fn mahalanobis(&self, z: &Measurement, noise: &NoiseModel) -> Result<f64> {
        let (y, s) = self.project(noise);
        squared_mahalanobis(z, &y, &s)
    }

    pub fn predicted_box(&self) -> Option<BBox> {
        box_from_measurement(&self.mean.as_slice()[..4])
    }
}

/// `(z - y)^T S^-1 (z - y)` via a Cholesky solve.
pub fn squared_mahalanobis(z: &Measurement, y: &Measurement, s: &MeasurementCovariance) -> Result<f64> {
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("measurement covariance is singular".into()))?;
    let r = z - y;
    let w = chol
        .l()
        .solve_lower_triangular(&r)
        .ok_or_else(|| Error::Numeric("measurement covariance is singular".into()))?;
    Ok(w.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_process() -> NoiseModel {
        NoiseModel {
            process_position: 0.0,
            process_velocity: 0.0,
            process_aspect: 0.0,
            process_aspect_velocity: 0.0,
            ..Default::default()
        }
    }

    fn state(mean: [f64; 8]) -> MotionState {
        MotionState {
            mean: StateVector::from_row_slice(&mean),
            covariance: StateCovariance::identity(),
        }
    }

    #[test]
    fn stationary_predict_grows_covariance() {
        let s = state([5.0, 6.0, 0.5, 10.0, 0.0, 0.0, 0.0, 0.0]);
        let next = s.predict(&NoiseModel::default()).unwrap();
        assert_eq!(next.mean, s.mean);
        for i in 0..8 {
            assert!(next.covariance[(i, i)] > s.covariance[(i, i)]);
        }
    }

    #[test]
    fn velocity_moves_position() {
        let s = state([0.0, 0.0, 1.0, 10.0, 2.0, 3.0, 0.0, 0.0]);
        let next = s.predict(&NoiseModel::default()).unwrap();
        assert_eq!((next.mean[0], next.mean[1]), (2.0, 3.0));
    }

    #[test]
    fn two_predicts_compose() {
        let noise = zero_process();
        let s = state([1.0, 1.0, 1.0, 10.0, 2.0, -3.0, 0.0, 0.0]);
        let twice = s.predict(&noise).unwrap().predict(&noise).unwrap();
        let mut doubled = s.clone();
        doubled.mean[4] *= 2.0;
        doubled.mean[5] *= 2.0;
        let once = doubled.predict(&noise).unwrap();
        assert_eq!(twice.mean.fixed_rows::<2>(0), once.mean.fixed_rows::<2>(0));
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let noise = NoiseModel::default();
        let s = MotionState::initiate(&Measurement::new(10.0, 20.0, 0.5, 30.0), &noise)
            .predict(&noise)
            .unwrap();
        let z = Measurement::from_iterator(s.mean.iter().take(4).copied());
        let u = s.update(&z, &noise).unwrap();
        for i in 0..8 {
            assert!((u.mean[i] - s.mean[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_measurement_noise_snaps_to_measurement() {
        let noise = NoiseModel {
            measurement_position: 1e-9,
            ..Default::default()
        };
        let s = MotionState::initiate(&Measurement::new(10.0, 20.0, 0.5, 30.0), &noise)
            .predict(&noise)
            .unwrap();
        let u = s.update(&Measurement::new(13.0, 18.0, 0.5, 30.0), &noise).unwrap();
        assert!((u.mean[0] - 13.0).abs() < 1e-6);
        assert!((u.mean[1] - 18.0).abs() < 1e-6);
    }

    #[test]
    fn mahalanobis_identity_is_euclidean() {
        let y = Measurement::new(1.0, 2.0, 3.0, 4.0);
        let z = Measurement::new(2.0, 4.0, 3.0, 1.0);
        let d = squared_mahalanobis(&z, &y, &MeasurementCovariance::identity()).unwrap();
        assert!((d - 14.0).abs() < 1e-12);
        assert_eq!(
            squared_mahalanobis(&y, &y, &MeasurementCovariance::identity()).unwrap(),
            0.0
        );
        assert!(squared_mahalanobis(&z, &y, &MeasurementCovariance::zeros()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let noise = NoiseModel::default();
        let s = state([0.0, 0.0, 1.0, 10.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(s.update(&Measurement::new(0.0, 0.0, -1.0, 10.0), &noise).is_err());
        let mut bad = s.clone();
        bad.mean[0] = f64::NAN;
        assert!(bad.predict(&noise).is_err());
    }
}
