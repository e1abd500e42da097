//! Renewal jump-time laws and path skeletons.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

/// Law of the inter-arrival gaps of the renewal process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    /// Poisson jump times with intensity `lambda`.
    Exponential { lambda: f64 },
    /// Density `(1−α) τ̄^{α−1} t^{−α}` on `[0, τ̄]`.
    BetaOne { alpha: f64, tau: f64 },
    /// Standard Beta(α, β) shape rescaled to `[0, τ̄]`.
    BetaTwo { alpha: f64, beta: f64, tau: f64 },
}

impl JumpLaw {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let ok = match *self {
            JumpLaw::Exponential { lambda } => lambda > 0.0 && lambda.is_finite(),
            JumpLaw::BetaOne { alpha, tau } => (0.0..1.0).contains(&alpha) && alpha > 0.0 && tau > horizon,
            JumpLaw::BetaTwo { alpha, beta, tau } => {
                alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 && tau > horizon
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::JumpLaw(format!(
                "{self} is not admissible for horizon {horizon} (need λ>0, α,β∈(0,1), τ̄>T)"
            )))
        }
    }

    fn support_end(&self) -> f64 {
        match *self {
            JumpLaw::Exponential { .. } => f64::INFINITY,
            JumpLaw::BetaOne { tau, .. } | JumpLaw::BetaTwo { tau, .. } => tau,
        }
    }

    /// Gap density `f(t)`.
    pub fn density(&self, t: f64) -> f64 {
        assert!(
            t > 0.0 && t < self.support_end(),
            "density evaluated outside the support of {self}: t = {t}"
        );
        match *self {
            JumpLaw::Exponential { lambda } => lambda * (-lambda * t).exp(),
            JumpLaw::BetaOne { alpha, tau } => (1.0 - alpha) * tau.powf(alpha - 1.0) * t.powf(-alpha),
            JumpLaw::BetaTwo { alpha, beta, tau } => {
                let log = (alpha - 1.0) * t.ln() + (beta - 1.0) * (tau - t).ln()
                    - (alpha + beta - 1.0) * tau.ln()
                    - ln_beta(alpha, beta);
                log.exp()
            }
        }
    }

    /// Distribution function `F(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.support_end() {
            return 1.0;
        }
        match *self {
            JumpLaw::Exponential { lambda } => -(-lambda * t).exp_m1(),
            JumpLaw::BetaOne { alpha, tau } => (t / tau).powf(1.0 - alpha),
            JumpLaw::BetaTwo { alpha, beta, tau } => beta_reg(alpha, beta, t / tau),
        }
    }

    /// Survival `1 − F(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        assert!(
            t >= 0.0 && t < self.support_end(),
            "survival evaluated outside the support of {self}: t = {t}"
        );
        match *self {
            JumpLaw::Exponential { lambda } => (-lambda * t).exp(),
            JumpLaw::BetaOne { .. } => 1.0 - self.cdf(t),
            JumpLaw::BetaTwo { alpha, beta, tau } => beta_reg(beta, alpha, 1.0 - t / tau),
        }
    }

    /// Draw one gap by inversion.
    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.sample(Open01))
    }

    /// Inverse of `F`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            JumpLaw::Exponential { lambda } => -(-u).ln_1p() / lambda,
            JumpLaw::BetaOne { alpha, tau } => tau * u.powf(1.0 / (1.0 - alpha)),
            JumpLaw::BetaTwo { alpha, beta, tau } => {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if beta_reg(alpha, beta, mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                tau * 0.5 * (lo + hi)
            }
        }
    }

    /// Sufficient condition for a finite `p`-th moment of the estimators.
    ///
    /// Exponential gaps are reported as failing for `p ≥ 2`. For the Beta laws
    /// the condition is `p(½ − e) < 1 − e` where `t^{−e}` is the singularity of
    /// the density at zero (`e = α` for `BetaOne`, `e = 1 − α` for `BetaTwo`).
    pub fn variance_condition(&self, p: f64) -> bool {
        assert!(p >= 1.0);
        let e = match *self {
            JumpLaw::Exponential { .. } => return p < 2.0,
            JumpLaw::BetaOne { alpha, .. } => alpha,
            JumpLaw::BetaTwo { alpha, .. } => 1.0 - alpha,
        };
        p * (0.5 - e) < 1.0 - e
    }
}

impl fmt::Display for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            JumpLaw::Exponential { lambda } => write!(f, "exp:lambda={lambda}"),
            JumpLaw::BetaOne { alpha, tau } => write!(f, "beta1:alpha={alpha},tau={tau}"),
            JumpLaw::BetaTwo { alpha, beta, tau } => write!(f, "beta2:alpha={alpha},beta={beta},tau={tau}"),
        }
    }
}

impl FromStr for JumpLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::JumpLaw(format!("`{s}`: {msg}"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(|| bad("expected `<kind>:<key>=<value>,...`"))?;
        let mut params = Vec::new();
        for item in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| bad("parameter without `=`"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("parameter is not a number"))?;
            params.push((k.trim().to_string(), v));
        }
        let take = |name: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| bad(&format!("missing `{name}`")))
        };
        let allowed: &[&str] = match kind.trim() {
            "exp" => &["lambda"],
            "beta1" => &["alpha", "tau"],
            "beta2" => &["alpha", "beta", "tau"],
            other => return Err(bad(&format!("unknown law `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(bad(&format!("unknown parameter `{k}`")));
        }
        Ok(match kind.trim() {
            "exp" => JumpLaw::Exponential { lambda: take("lambda")? },
            "beta1" => JumpLaw::BetaOne {
                alpha: take("alpha")?,
                tau: take("tau")?,
            },
            _ => JumpLaw::BetaTwo {
                alpha: take("alpha")?,
                beta: take("beta")?,
                tau: take("tau")?,
            },
        })
    }
}

/// One sampled skeleton: jump times in `(0, T]`, one standard normal and one
/// Bernoulli sign per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    horizon: f64,
    times: Vec<f64>,
    gaussians: Vec<f64>,
    signs: Vec<bool>,
}

impl Path {
    /// Assemble a path from explicit draws (used by tests and oracles).
    pub fn from_parts(horizon: f64, times: Vec<f64>, gaussians: Vec<f64>, signs: Vec<bool>) -> Result<Self> {
        let increasing = times.windows(2).all(|w| w[0] < w[1]);
        let inside = times.iter().all(|&t| t > 0.0 && t <= horizon);
        if !increasing || !inside {
            return Err(Error::JumpLaw("jump times must increase strictly within (0, T]".into()));
        }
        if gaussians.len() != times.len() + 1 || signs.len() != times.len() + 1 {
            return Err(Error::JumpLaw("need one gaussian and one sign per interval".into()));
        }
        Ok(Path {
            horizon,
            times,
            gaussians,
            signs,
        })
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `ζ_i` with `ζ_0 = 0` and `ζ_{n+1} = T`.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else if i <= self.times.len() {
            self.times[i - 1]
        } else {
            self.horizon
        }
    }

    /// Length of interval `i ∈ 1..=n+1`.
    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.time(i) - self.time(i - 1)
    }

    /// Standard normal draw attached to interval `i ∈ 1..=n+1`.
    #[inline]
    pub fn gaussian(&self, i: usize) -> f64 {
        self.gaussians[i - 1]
    }

    /// Brownian increment over interval `i`.
    #[inline]
    pub fn increment(&self, i: usize) -> f64 {
        self.dt(i).sqrt() * self.gaussians[i - 1]
    }

    /// Bernoulli sign `ρ_i` of interval `i`.
    #[inline]
    pub fn sign(&self, i: usize) -> bool {
        self.signs[i - 1]
    }
}

/// Jump times generated by cumulating `gaps` until they pass `horizon`.
pub fn jump_times_from_gaps(horizon: f64, gaps: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = 0.0;
    for g in gaps {
        let next = t + g;
        if next > horizon {
            break;
        }
        // A gap below the resolution of `t` would duplicate a jump time.
        if next > t {
            times.push(next);
        }
        t = next;
    }
    times
}

/// Sample jump times from `law`, then one Gaussian and one sign per interval.
pub fn sample_path<R: Rng + ?Sized>(law: &JumpLaw, horizon: f64, rng: &mut R) -> Path {
    assert!(horizon > 0.0);
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        let next = t + law.sample_gap(rng);
        if next > horizon {
            break;
        }
        // Gaps below the floating-point resolution of `t` are dropped: they
        // would duplicate a jump time and give a zero-length interval.
        if next > t {
            times.push(next);
        }
        t = next;
    }
    let n = times.len() + 1;
    let gaussians: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let signs: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    Path {
        horizon,
        times,
        gaussians,
        signs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaps_below_time_resolution_are_dropped() {
        assert_eq!(jump_times_from_gaps(1.0, [0.3, 1e-18, 0.2, 0.9]), vec![0.3, 0.5]);
        // Strongly singular gap laws produce such gaps; every interval stays positive.
        let law = JumpLaw::BetaOne { alpha: 0.9, tau: 0.6 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20_000 {
            let p = sample_path(&law, 0.5, &mut rng);
            assert!((1..=p.n_jumps() + 1).all(|i| p.dt(i) > 0.0));
        }
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    const KS_CRIT_1PCT: f64 = 1.628;

    #[test]
    fn closed_form_examples() {
        let e = JumpLaw::Exponential { lambda: 1.0 };
        assert!((e.density(0.5) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((e.survival(0.5) - (-0.5f64).exp()).abs() < 1e-15);
        let b1 = JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 };
        assert!((b1.density(0.25) - 1.0).abs() < 1e-15);
        let b2 = JumpLaw::BetaTwo {
            alpha: 0.5,
            beta: 0.5,
            tau: 1.0,
        };
        assert!((b2.density(0.5) - 1.0 / (std::f64::consts::PI * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn densities_integrate_to_one() {
        use crate::oracles::quad::integrate;
        for law in [
            JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 },
            JumpLaw::BetaOne { alpha: 0.2, tau: 2.0 },
        ] {
            // Substitution t = τ̄ u^{1/(1−α)} removes the endpoint singularity.
            let JumpLaw::BetaOne { alpha, tau } = law else { unreachable!() };
            let k = 1.0 / (1.0 - alpha);
            let v = integrate(
                |u: f64| {
                    if u <= 0.0 {
                        return 0.0;
                    }
                    let t = tau * u.powf(k);
                    law.density(t) * tau * k * u.powf(k - 1.0)
                },
                0.0,
                1.0,
                1e-13,
            )
            .unwrap();
            assert!((v - 1.0).abs() < 1e-10, "{law}: {v}");
        }
        let e = JumpLaw::Exponential { lambda: 2.5 };
        let v = integrate(|t| e.density(t.max(1e-300)), 0.0, 40.0, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let b2 = JumpLaw::BetaTwo {
            alpha: 0.6,
            beta: 0.7,
            tau: 1.5,
        };
        // Both endpoints are singular: u ↦ t = τ̄ sin²(πu/2).
        let v = integrate(
            |u: f64| {
                let s = (std::f64::consts::FRAC_PI_2 * u).sin();
                let c = (std::f64::consts::FRAC_PI_2 * u).cos();
                let t = 1.5 * s * s;
                if t <= 0.0 || t >= 1.5 {
                    return 0.0;
                }
                b2.density(t) * 1.5 * std::f64::consts::PI * s * c
            },
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-9, "beta2 mass {v}");
    }

    #[test]
    fn cdf_and_survival_are_consistent() {
        let laws = [
            JumpLaw::Exponential { lambda: 1.7 },
            JumpLaw::BetaOne { alpha: 0.3, tau: 1.2 },
            JumpLaw::BetaTwo {
                alpha: 0.4,
                beta: 0.8,
                tau: 1.1,
            },
        ];
        for law in laws {
            for t in [0.01, 0.3, 0.9] {
                assert!((law.cdf(t) + law.survival(t) - 1.0).abs() < 1e-13);
                assert!((law.quantile(law.cdf(t)) - t).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn beta_one_inverse_cdf_is_square_for_half() {
        let law = JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 };
        for u in [0.1, 0.5, 0.9] {
            assert!((law.quantile(u) - u * u).abs() < 1e-15);
        }
    }

    #[test]
    fn variance_condition_examples() {
        assert!(JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 }.variance_condition(10.0));
        assert!(!JumpLaw::Exponential { lambda: 1.0 }.variance_condition(2.0));
        assert!(JumpLaw::Exponential { lambda: 1.0 }.variance_condition(1.5));
        assert!(JumpLaw::BetaOne { alpha: 0.1, tau: 1.0 }.variance_condition(2.0));
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["exp:lambda=2", "beta1:alpha=0.5,tau=1", "beta2:alpha=0.5,beta=0.25,tau=1.5"] {
            let law: JumpLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        assert!("exp:mu=1".parse::<JumpLaw>().is_err());
        assert!("gamma:k=1".parse::<JumpLaw>().is_err());
        assert!("beta1:alpha=0.5".parse::<JumpLaw>().is_err());
    }

    #[test]
    fn forced_long_gap_gives_no_jumps() {
        assert!(jump_times_from_gaps(0.5, [1.0, 0.1]).is_empty());
        assert_eq!(jump_times_from_gaps(1.0, [0.25, 0.5, 0.5]), vec![0.25, 0.75]);
    }

    #[test]
    fn gap_samples_pass_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let laws = [
            JumpLaw::Exponential { lambda: 2.0 },
            JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 },
            JumpLaw::BetaTwo {
                alpha: 0.5,
                beta: 0.7,
                tau: 1.0,
            },
        ];
        for law in laws {
            let n = if matches!(law, JumpLaw::BetaTwo { .. }) { 20_000 } else { 100_000 };
            let xs: Vec<f64> = (0..n).map(|_| law.sample_gap(&mut rng)).collect();
            let d = ks_statistic(xs, |t| law.cdf(t));
            assert!(d * (n as f64).sqrt() < KS_CRIT_1PCT, "{law}: D={d}");
        }
    }

    #[test]
    fn exponential_memorylessness() {
        let law = JumpLaw::Exponential { lambda: 1.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = 0.4;
        let xs: Vec<f64> = (0..300_000)
            .map(|_| law.sample_gap(&mut rng))
            .filter(|&g| g > s)
            .map(|g| g - s)
            .collect();
        let n = xs.len() as f64;
        let d = ks_statistic(xs, |t| law.cdf(t));
        assert!(d * n.sqrt() < KS_CRIT_1PCT);
    }

    #[test]
    fn no_jumps_probability_matches_poisson() {
        let law = JumpLaw::Exponential { lambda: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let zero = (0..n).filter(|_| sample_path(&law, 1.0, &mut rng).n_jumps() == 0).count();
        let p = (-2.0f64).exp();
        let phat = zero as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "{phat} vs {p}");
    }

    #[test]
    fn draws_are_uncorrelated_with_times() {
        let law = JumpLaw::BetaOne { alpha: 0.5, tau: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let n = 100_000;
        for _ in 0..n {
            let p = sample_path(&law, 0.5, &mut rng);
            let x = p.dt(1);
            let y = p.gaussian(1);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn path_shape_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = sample_path(&JumpLaw::Exponential { lambda: 5.0 }, 1.0, &mut rng);
            assert!(p.times().windows(2).all(|w| w[0] < w[1]));
            assert!(p.times().iter().all(|&t| t > 0.0 && t <= 1.0));
            assert_eq!(p.gaussians.len(), p.n_jumps() + 1);
            assert_eq!(p.signs.len(), p.n_jumps() + 1);
            let total: f64 = (1..=p.n_jumps() + 1).map(|i| p.dt(i)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
