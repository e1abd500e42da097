//! Brownian motion with constant drift, killed at a lower level.
//!
//! The method of images gives the sub-probability density
//! `p(T,x,z) = g(σ²T, z−x−bT) − e^{−2b(x−L)/σ²} g(σ²T, z+x−2L−bT)` on `z ≥ L`.

use crate::calculus::gaussian;
use crate::engine::Quantity;
use crate::error::Result;
use crate::model::TestFunction;
use crate::oracles::quad;

/// Closed-form reference for constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KilledBMOracle {
    pub sigma: f64,
    pub drift: f64,
    pub barrier: f64,
    pub start: f64,
    pub horizon: f64,
}

impl KilledBMOracle {
    pub fn new(sigma: f64, barrier: f64, start: f64, horizon: f64) -> Self {
        KilledBMOracle {
            sigma,
            drift: 0.0,
            barrier,
            start,
            horizon,
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    fn var(&self) -> f64 {
        self.sigma * self.sigma * self.horizon
    }

    fn image_weight(&self, x: f64) -> f64 {
        (-2.0 * self.drift * (x - self.barrier) / (self.sigma * self.sigma)).exp()
    }

    fn parts(&self, x: f64, z: f64) -> (f64, f64) {
        let bt = self.drift * self.horizon;
        (z - x - bt, z + x - 2.0 * self.barrier - bt)
    }

    /// Killed density at `z` from start `x`.
    pub fn density_at(&self, x: f64, z: f64) -> f64 {
        if z < self.barrier {
            return 0.0;
        }
        let (u, w) = self.parts(x, z);
        gaussian(self.var(), u) - self.image_weight(x) * gaussian(self.var(), w)
    }

    pub fn density(&self, z: f64) -> f64 {
        self.density_at(self.start, z)
    }

    /// `∂_z p(T, x, z)`.
    pub fn density_dz(&self, z: f64) -> f64 {
        let v = self.var();
        let (u, w) = self.parts(self.start, z);
        -u / v * gaussian(v, u) + self.image_weight(self.start) * w / v * gaussian(v, w)
    }

    /// `∂_x p(T, x, z)`.
    pub fn density_dx(&self, z: f64) -> f64 {
        let v = self.var();
        let x = self.start;
        let (u, w) = self.parts(x, z);
        let k = self.image_weight(x);
        let dk = -2.0 * self.drift / (self.sigma * self.sigma) * k;
        u / v * gaussian(v, u) - dk * gaussian(v, w) + k * w / v * gaussian(v, w)
    }

    fn upper(&self) -> f64 {
        self.start.max(self.barrier) + self.drift.abs() * self.horizon + 14.0 * self.var().sqrt()
    }

    /// `E[f(X_T) 1{τ > T}]` by adaptive quadrature.
    pub fn value(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        quad::integrate(|z| f(z) * self.density(z), self.barrier, self.upper(), 1e-12)
    }

    /// `∂_x E[f(X_T) 1{τ > T}]`.
    pub fn value_dx(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        quad::integrate(|z| f(z) * self.density_dx(z), self.barrier, self.upper(), 1e-12)
    }

    /// `E[f'(X_T) 1{τ > T}]`.
    pub fn derivative_value(&self, fp: impl Fn(f64) -> f64) -> Result<f64> {
        self.value(fp)
    }

    /// Exact mean of the estimator of `q`, with the engine's `T` scaling.
    pub fn expected(&self, q: Quantity, f: &TestFunction, z: f64) -> Result<f64> {
        let t = self.horizon;
        Ok(match q {
            Quantity::Value => self.value(|y| f.value(y))?,
            Quantity::Ibp => t * self.derivative_value(|y| f.derivative(y))?,
            Quantity::Bel => t * self.value_dx(|y| f.value(y))?,
            Quantity::Density => self.density(z),
            Quantity::DensityDz => t * self.density_dz(z),
            Quantity::DensityDx => t * self.density_dx(z),
        })
    }
}

/// `E[f(X_T) 1{τ > T}]` for the oracle's model.
pub fn killed_bm_value(f: impl Fn(f64) -> f64, oracle: &KilledBMOracle) -> Result<f64> {
    oracle.value(f)
}

pub fn killed_bm_dz(oracle: &KilledBMOracle, z: f64) -> f64 {
    oracle.density_dz(z)
}

pub fn killed_bm_dx(oracle: &KilledBMOracle, z: f64) -> f64 {
    oracle.density_dx(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::erf;

    #[test]
    fn absorbed_start_has_zero_value() {
        let o = KilledBMOracle::new(1.0, 0.0, 0.0, 1.0);
        assert!(o.value(|z| z).unwrap().abs() < 1e-14);
        assert!(o.with_drift(0.7).value(|z| z * z).unwrap().abs() < 1e-13);
    }

    #[test]
    fn identity_value_matches_erf_form() {
        // ∫_0^∞ z [g(1,z−1) − g(1,z+1)] dz = Φ(1) + Φ(−1) = 1: the stopped
        // process is a martingale and vanishes at L = 0.
        let o = KilledBMOracle::new(1.0, 0.0, 1.0, 1.0);
        let q = o.value(|z| z).unwrap();
        assert!((q - 1.0).abs() < 1e-11, "{q}");
        // Same argument for X − L; survival is erf((x − L)/√(2T)).
        let o = KilledBMOracle::new(1.0, 0.5, 1.0, 1.0);
        let q = o.value(|z| z - 0.5).unwrap();
        assert!((q - 0.5).abs() < 1e-11, "{q}");
        let surv = o.value(|_| 1.0).unwrap();
        assert!((surv - erf(0.5 * std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-11);
    }

    #[test]
    fn density_is_nonnegative_and_subprobability() {
        for drift in [-0.8, 0.0, 0.5] {
            let o = KilledBMOracle::new(0.7, 0.2, 0.9, 0.8).with_drift(drift);
            for k in 0..200 {
                assert!(o.density(0.2 + 0.02 * k as f64) >= -1e-15);
            }
            assert!(o.density(0.2).abs() < 1e-14);
            let mass = o.value(|_| 1.0).unwrap();
            assert!(mass > 0.0 && mass < 1.0);
        }
    }

    #[test]
    fn survival_with_drift_matches_closed_form() {
        // P(τ > T) = Φ((d + bT)/(σ√T)) − e^{−2bd/σ²} Φ((−d + bT)/(σ√T)), d = x − L.
        let (s, b, l, x, t) = (0.8, 0.3, 0.0, 0.6, 1.2);
        let o = KilledBMOracle::new(s, l, x, t).with_drift(b);
        let phi = |u: f64| 0.5 * (1.0 + erf(u / std::f64::consts::SQRT_2));
        let d = x - l;
        let v = s * t.sqrt();
        let expect = phi((d + b * t) / v) - (-2.0 * b * d / (s * s)).exp() * phi((-d + b * t) / v);
        assert!((o.value(|_| 1.0).unwrap() - expect).abs() < 1e-11);
    }

    #[test]
    fn partials_match_finite_differences() {
        for drift in [0.0, 0.4] {
            let o = KilledBMOracle::new(0.9, 0.0, 0.7, 0.6).with_drift(drift);
            let h = 1e-5;
            for z in [0.3, 0.7, 1.5] {
                let dz = (o.density(z + h) - o.density(z - h)) / (2.0 * h);
                assert!((o.density_dz(z) - dz).abs() < 1e-8);
                let dx = (o.density_at(0.7 + h, z) - o.density_at(0.7 - h, z)) / (2.0 * h);
                assert!((o.density_dx(z) - dx).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn value_dx_matches_difference_of_values() {
        let o = KilledBMOracle::new(1.0, 0.0, 0.5, 1.0).with_drift(-0.2);
        let f = |z: f64| z * z;
        let h = 1e-4;
        let up = KilledBMOracle { start: 0.5 + h, ..o }.value(f).unwrap();
        let dn = KilledBMOracle { start: 0.5 - h, ..o }.value(f).unwrap();
        assert!((o.value_dx(f).unwrap() - (up - dn) / (2.0 * h)).abs() < 1e-7);
    }
}
