//! Empirical time-degeneracy rates of the per-interval weights.
//!
//! The RMS of `1{X̄ ≥ L} θ` is measured on a grid of step lengths and a
//! straight line is fitted to `log RMS` against `log Δ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chain::{merged_mean, reflected_mean};
use crate::model::Model;
use crate::weights::{Local, Normalization, WeightContext};

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn slope_of(dts: &[f64], rms: impl Fn(f64) -> f64) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = dts.iter().map(|&d| rms(d).ln()).collect();
    fitted_slope(&xs, &ys)
}

/// Slope for the interior base weight from a fixed start `x`.
pub fn base_weight_slope(model: &Model, x: f64, dts: &[f64], samples: usize, seed: u64) -> f64 {
    let ctx = WeightContext::new(model, Normalization::Poisson { lambda: 1.0 });
    let prev = Local::at(model, x);
    let l = model.barrier;
    slope_of(dts, |dt| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0.0;
        for _ in 0..samples {
            let rho = rng.random::<bool>();
            let z: f64 = rng.sample(StandardNormal);
            let y = reflected_mean(x, rho, l) + prev.sigma.value() * dt.sqrt() * z;
            if y >= l {
                let w = ctx.base_weight(&prev, &Local::at(model, y), rho, dt, 1.0);
                s += w * w;
            }
        }
        (s / samples as f64).sqrt()
    })
}

/// Slopes `(∗, ⊛)` for the interior merged weights, started at distance
/// `σ(L)√Δ` from the barrier so that the boundary layer is resolved on the
/// diffusion's own scale at every Δ.
pub fn merged_weight_slopes(model: &Model, dts: &[f64], samples: usize, seed: u64) -> (f64, f64) {
    let ctx = WeightContext::new(model, Normalization::Poisson { lambda: 1.0 });
    let l = model.barrier;
    let sl = model.sigma(l);
    let rms = |dt: f64| {
        let x = l + sl * dt.sqrt();
        let prev = Local::at(model, x);
        let m = merged_mean(x, -sl / prev.sigma.value(), l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..samples {
            let z: f64 = rng.sample(StandardNormal);
            let y = m + sl * dt.sqrt() * z;
            if y >= l {
                let w = ctx.merged_weights(&prev, y, dt, 1.0, false);
                a += w.theta_star.powi(2);
                b += w.theta_circledast.powi(2);
            }
        }
        ((a / samples as f64).sqrt(), (b / samples as f64).sqrt())
    };
    (slope_of(dts, |d| rms(d).0), slope_of(dts, |d| rms(d).1))
}
