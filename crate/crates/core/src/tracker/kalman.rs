//! Constant-velocity Kalman filter over `(cx, cy, w, h)` and their rates.

use nalgebra::{SMatrix, SVector};

use super::BBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;
type MeasurementMatrix = SMatrix<f64, 4, 8>;

/// Noise standard deviations are expressed as fractions of the box height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub process_std_weight: f64,
    pub measurement_std_weight: f64,
    /// Initial velocity uncertainty for a freshly created track.
    pub init_velocity_std_weight: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_std_weight: 1.0 / 20.0,
            measurement_std_weight: 1.0 / 10.0,
            init_velocity_std_weight: 1.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> MeasurementMatrix {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn measurement_noise(height: f64, config: &KalmanConfig) -> SMatrix<f64, 4, 4> {
    let s = config.measurement_std_weight * height;
    SMatrix::<f64, 4, 4>::from_diagonal_element(s * s)
}

impl KalmanState {
    /// Zero-velocity state at the measured box.
    pub fn initiate(bbox: &BBox, config: &KalmanConfig) -> Self {
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&bbox.to_vector());
        let pos = config.measurement_std_weight * bbox.h;
        let vel = config.init_velocity_std_weight * bbox.h;
        let mut diag = StateVector::zeros();
        for i in 0..4 {
            diag[i] = pos * pos;
            diag[i + 4] = vel * vel;
        }
        Self {
            mean,
            covariance: StateCovariance::from_diagonal(&diag),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            cx: self.mean[0],
            cy: self.mean[1],
            w: self.mean[2],
            h: self.mean[3],
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }

    /// One constant-velocity step.
    pub fn predict(&self, config: &KalmanConfig) -> Self {
        let f = transition();
        let q = config.process_std_weight * self.mean[3].abs();
        let process = StateCovariance::from_diagonal_element(q * q);
        let covariance = f * self.covariance * f.transpose() + process;
        Self {
            mean: f * self.mean,
            covariance: symmetrize(covariance),
        }
    }

    /// Corrects the state with a measured box.
    pub fn update(&self, bbox: &BBox, config: &KalmanConfig) -> Self {
        let h = observation();
        let r = measurement_noise(self.mean[3].abs(), config);
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = match s.cholesky() {
            Some(c) => c.inverse(),
            None => s
                .pseudo_inverse(1e-12)
                .unwrap_or_else(|_| SMatrix::<f64, 4, 4>::zeros()),
        };
        let gain = self.covariance * h.transpose() * s_inv;
        let z: Measurement = bbox.to_vector();
        let innovation = z - h * self.mean;
        let mean = self.mean + gain * innovation;
        // Joseph form keeps the covariance symmetric positive semi-definite.
        let i_kh = StateCovariance::identity() - gain * h;
        let covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        Self {
            mean,
            covariance: symmetrize(covariance),
        }
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(cx: f64, cy: f64) -> BBox {
        BBox {
            cx,
            cy,
            w: 10.0,
            h: 20.0,
        }
    }

    #[test]
    fn zero_velocity_prediction_keeps_position() {
        let cfg = KalmanConfig::default();
        let s = KalmanState::initiate(&bbox(5.0, 6.0), &cfg);
        assert_eq!(s.predict(&cfg).bbox(), s.bbox());
    }

    #[test]
    fn noiseless_constant_velocity_is_exact_after_three_updates() {
        let cfg = KalmanConfig {
            process_std_weight: 0.0,
            measurement_std_weight: 0.0,
            init_velocity_std_weight: 1.0 / 16.0,
        };
        let truth = |t: f64| bbox(3.0 + 1.75 * t, 40.0 - 0.5 * t);
        let mut s = KalmanState::initiate(&truth(0.0), &cfg);
        for t in 1..=3 {
            s = s.predict(&cfg).update(&truth(t as f64), &cfg);
        }
        let p = s.predict(&cfg).bbox();
        let want = truth(4.0);
        assert!((p.cx - want.cx).abs() < 1e-9 && (p.cy - want.cy).abs() < 1e-9);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let cfg = KalmanConfig::default();
        let mut s = KalmanState::initiate(&bbox(0.0, 0.0), &cfg);
        for t in 0..50 {
            s = s.predict(&cfg);
            if t % 3 != 0 {
                s = s.update(&bbox(t as f64 * 0.7, (t as f64).sin()), &cfg);
            }
            assert_eq!(s.covariance, s.covariance.transpose());
            let eig = s.covariance.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e > -1e-9), "{eig:?}");
        }
    }
}
