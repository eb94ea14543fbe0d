//! Random-walk Kalman smoother for 6-DoF velocity traces.
//!
//! State `x = (v, ω)`, prior `x ~ N(0, p0·I)`. Between samples the state
//! diffuses with covariance `q·Δt·I`; each sample observes the state directly
//! with noise `r·I`. With a single sample the output is `p0 / (p0 + r) · z`.

use nalgebra::{Matrix6, Vector6};

use super::VelocitySample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KalmanConfig {
    /// Process noise density, per second.
    pub q: f64,
    /// Measurement noise variance.
    pub r: f64,
    /// Prior variance.
    pub p0: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { q: 1e-3, r: 1e-1, p0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub t: Option<f64>,
    cfg: KalmanConfig,
}

impl KalmanState {
    pub fn new(cfg: KalmanConfig) -> Result<Self> {
        if !(cfg.q >= 0.0 && cfg.r > 0.0 && cfg.p0 > 0.0) {
            return Err(Error::Validation("Kalman noise scales must be positive".into()));
        }
        Ok(Self {
            mean: Vector6::zeros(),
            covariance: Matrix6::identity() * cfg.p0,
            t: None,
            cfg,
        })
    }

    pub fn predict(&mut self, dt: f64) {
        self.covariance += Matrix6::identity() * (self.cfg.q * dt);
    }

    /// Joseph-form update, which keeps the covariance symmetric PD.
    pub fn update(&mut self, z: &Vector6<f64>) {
        let r = Matrix6::identity() * self.cfg.r;
        let s = self.covariance + r;
        let s_inv = s.cholesky().expect("innovation covariance is PD").inverse();
        let k = self.covariance * s_inv;
        self.mean += k * (z - self.mean);
        let a = Matrix6::identity() - k;
        let p = a * self.covariance * a.transpose() + k * r * k.transpose();
        self.covariance = 0.5 * (p + p.transpose());
    }

    /// Predicts to `sample.t`, then updates with it.
    pub fn step(&mut self, sample: &VelocitySample) -> Result<VelocitySample> {
        if let Some(prev) = self.t {
            let dt = sample.t - prev;
            if !(dt >= 0.0) {
                return Err(Error::Validation(format!("sample at {} precedes {prev}", sample.t)));
            }
            self.predict(dt);
        }
        self.t = Some(sample.t);
        let z = Vector6::new(sample.v.x, sample.v.y, sample.v.z, sample.w.x, sample.w.y, sample.w.z);
        self.update(&z);
        let m = &self.mean;
        Ok(VelocitySample::new(sample.t, [m[0], m[1], m[2]], [m[3], m[4], m[5]]))
    }
}

/// Filters a time-ordered trace; output has the input timestamps.
pub fn kalman_filter(samples: &[VelocitySample], cfg: &KalmanConfig) -> Result<Vec<VelocitySample>> {
    for (i, w) in samples.windows(2).enumerate() {
        if !(w[1].t >= w[0].t) {
            return Err(Error::NonMonotoneTimestamps { index: i + 1 });
        }
    }
    let mut state = KalmanState::new(*cfg)?;
    samples.iter().map(|s| state.step(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_closed_form() {
        let cfg = KalmanConfig::default();
        let s = VelocitySample::new(0.5, [1.0, -2.0, 3.0], [0.1, 0.2, -0.3]);
        let out = kalman_filter(&[s], &cfg).unwrap();
        let g = cfg.p0 / (cfg.p0 + cfg.r);
        assert!((out[0].v - s.v * g).norm() < 1e-12);
        assert!((out[0].w - s.w * g).norm() < 1e-12);
        assert_eq!(out[0].t, 0.5);
    }

    #[test]
    fn converges_on_constant_stream() {
        let cfg = KalmanConfig::default();
        let s: Vec<_> = (0..50)
            .map(|k| VelocitySample::new(k as f64 * 0.1, [1.5, -0.5, 2.0], [0.2, 0.0, -0.1]))
            .collect();
        let out = kalman_filter(&s, &cfg).unwrap();
        let last = out.last().unwrap();
        let err = (last.v - s[0].v).amax().max((last.w - s[0].w).amax());
        assert!(err < cfg.r.sqrt() / 10.0, "{err}");
    }

    #[test]
    fn rejects_time_reversal() {
        let s = [
            VelocitySample::new(1.0, [0.0; 3], [0.0; 3]),
            VelocitySample::new(0.5, [0.0; 3], [0.0; 3]),
        ];
        assert!(matches!(
            kalman_filter(&s, &KalmanConfig::default()),
            Err(Error::NonMonotoneTimestamps { index: 1 })
        ));
    }
}
