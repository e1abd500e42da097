//! Randomised batch of the one-step identity checks.
//!
//! Shared by the `selftest` command and the acceptance tests. Each check
//! reports its worst residual over a batch of random cases against a fixed
//! tolerance.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{BiJet, Jet, MergedOps, StepOps};
use crate::error::Result;
use crate::model::{Family, Model, SineMartingale, TestFunction};
use crate::oracles::lemmas::{
    check_duality, check_extraction_reduction, check_gaussian_convolution, check_merging, check_reduction,
    check_transfer, BoundaryWeight, Convolution, MergeKind,
};
use crate::weights::{Local, Normalization, WeightContext};

/// Worst residual of one family of identities.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<12} cases={:<4} worst={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance
        )
    }
}

fn sine(s: f64, horizon: f64) -> Model {
    Family::SineMartingale(SineMartingale {
        sigma_bar: s,
        omega: s,
        c0: 0.0,
        c1: 1.0,
        c3: 1.0,
    })
    .build(0.0, horizon, 1.0)
    .expect("valid sine model")
}

fn poly(rng: &mut ChaCha8Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-2.0..2.0))
}

fn poly_jet(c: &[f64; 4], x: f64) -> Jet {
    let v = Jet::variable(x);
    ((v * c[3] + c[2]) * v + c[1]) * v + c[0]
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / (1.0 + lhs.abs())
}

fn worst(name: &'static str, tolerance: f64, residuals: impl IntoIterator<Item = f64>) -> Check {
    let mut cases = 0;
    let mut w = 0.0f64;
    for r in residuals {
        cases += 1;
        // NaN must fail.
        w = if r.is_nan() { f64::INFINITY } else { w.max(r) };
    }
    Check {
        name,
        cases,
        worst: w,
        tolerance,
    }
}

/// `E[f^{(ℓ)} H] = E[f I^ℓ(H)]` for random cubic pairs.
pub fn duality(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let r: Vec<f64> = (0..n)
        .map(|_| {
            let f = TestFunction::polynomial(&poly(rng));
            let h = TestFunction::polynomial(&poly(rng));
            let sigma = rng.random_range(0.5..1.5);
            let dt = rng.random_range(0.05..1.0);
            let x = rng.random_range(-1.0..1.0);
            let ell = rng.random_range(1..=2);
            check_duality(sigma, dt, x, rng.random(), &f, &h, ell).abs()
        })
        .collect();
    worst("duality", 1e-9, r)
}

/// `I(h₁h₂) = I(h₁)h₂ − h₁Dh₂` and its second-order form, on both the
/// reflected and the merged step.
pub fn extraction(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut r = Vec::with_capacity(4 * n);
    for _ in 0..n {
        let (a, b) = (poly(rng), poly(rng));
        let x = rng.random_range(0.1..1.5);
        let y = rng.random_range(-1.0..2.0);
        let dt = rng.random_range(0.05..2.0);
        let sig = Jet::variable(x).scale(0.5).sin() + 1.5;
        let h1 = BiJet::from_next(poly_jet(&a, y));
        let h2 = BiJet::from_next(poly_jet(&b, y));
        let pairs = |i: &dyn Fn(BiJet) -> BiJet, i2: &dyn Fn(BiJet) -> BiJet| {
            let l1 = i(h1 * h2).value();
            let r1 = i(h1).value() * h2.value() - h1.value() * h2.d_next().value();
            let l2 = i2(h1 * h2).value();
            let r2 = i2(h1).value() * h2.value() - 2.0 * i(h1).value() * h2.d_next().value()
                + h1.value() * h2.d_next().d_next().value();
            [rel(l1, r1), rel(l2, r2)]
        };
        let s = StepOps::new(sig, x, y, rng.random(), 0.0, dt);
        r.extend(pairs(&|h| s.apply_i(h), &|h| s.apply_i2(h)));
        let m = MergedOps::new(sig, 1.3, x, y, 0.0, dt);
        r.extend(pairs(&|h| m.apply_i(h), &|h| m.apply_i2(h)));
    }
    worst("extraction", 1e-12, r)
}

/// Chain rule for the total derivative on a state-dependent step.
pub fn chain_rule(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let r: Vec<f64> = (0..n)
        .map(|_| {
            let x = rng.random_range(0.1..1.5);
            let y = rng.random_range(-1.0..2.0);
            let dt = rng.random_range(0.05..1.0);
            let sig = (Jet::variable(x).scale(0.7).sin() + 2.0).scale(0.4);
            let ops = StepOps::new(sig, x, y, rng.random(), 0.0, dt);
            let h = BiJet::from_prev(poly_jet(&poly(rng), x)) * BiJet::from_next(poly_jet(&poly(rng), y));
            ops.chain_rule_residual(h, sig.value())
        })
        .collect();
    worst("chain_rule", 1e-10, r)
}

/// Transfer of the derivative across one interior or last interval.
pub fn transfer(rng: &mut ChaCha8Rng, n: usize) -> Result<Check> {
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let m = sine([0.1, 0.2, 0.3][i % 3], 0.5);
        let x = rng.random_range(0.05..1.5);
        let dt = rng.random_range(0.02..0.3);
        let last = i % 2 == 1;
        let f = if last {
            TestFunction::power_above(0.0, rng.random_range(1..=3))
        } else {
            TestFunction::polynomial(&[1.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0])
        };
        r.push(check_transfer(&m, x, dt, &f, last)?.residual().abs());
    }
    Ok(worst("transfer", 1e-5, r))
}

/// The four boundary merging identities for the weights used by the
/// estimators, on a sine and a constant-drift model.
pub fn merging() -> Result<Check> {
    let cases: [(Model, f64, f64); 3] = [
        (sine(0.2, 0.5), 0.5, 0.2),
        (sine(0.3, 0.5), 0.4, 0.3),
        (Model::constant(0.8, 0.6, 0.0, 1.0, 1.0)?, 0.3, 0.4),
    ];
    let f = TestFunction::polynomial(&[0.0, 1.0, 0.5, 0.0]);
    let mut r = Vec::new();
    for (m, x, t) in &cases {
        let ctx = WeightContext::new(m, Normalization::Poisson { lambda: 1.0 });
        let prev = Local::at(m, *x);
        for kind in [MergeKind::Star, MergeKind::Circledast, MergeKind::LastStar, MergeKind::LastCircledast] {
            let last = matches!(kind, MergeKind::LastStar | MergeKind::LastCircledast);
            let timed = matches!(kind, MergeKind::Circledast | MergeKind::LastCircledast);
            let w = |y: f64| {
                let w = ctx.merged_weights(&prev, y, *t, 1.0, last);
                if timed {
                    w.theta_circledast
                } else {
                    w.theta_star
                }
            };
            let s = check_merging(m, *x, *t, &f, kind, BoundaryWeight::Partial, &w)?;
            r.push(rel(s.lhs, s.rhs));
        }
    }
    Ok(worst("merging", 1e-4, r))
}

/// Closed-form time convolutions of Gaussian kernels.
pub fn convolutions(rng: &mut ChaCha8Rng, n: usize) -> Result<Check> {
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.random_range(0.3..1.5);
        let b = rng.random_range(0.3..1.5);
        let x = rng.random_range(0.05..2.0);
        let y = rng.random_range(0.05..1.0);
        let t = rng.random_range(0.2..2.0);
        let which = if i % 2 == 0 { Convolution::Plain } else { Convolution::Timed };
        r.push(check_gaussian_convolution(a, b, x, y, t, i % 3, which)?.abs());
    }
    Ok(worst("convolution", 1e-7, r))
}

/// Boundary parity reduction, alone and after extraction.
pub fn reduction(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut r = Vec::new();
    for i in 0..n {
        let m = sine([0.1, 0.2, 0.3][i % 3], 0.5);
        let x = rng.random_range(0.05..1.0);
        let dt = rng.random_range(0.02..0.3);
        let fl = rng.random_range(-2.0..2.0);
        let ell = rng.random_range(0..4);
        let (lhs, rhs) = check_reduction(&m, x, dt, fl, ell, rng.random_range(1..=4));
        r.push(rel(lhs, rhs));
        let c = TestFunction::polynomial(&poly(rng));
        let (lhs, rhs) = check_extraction_reduction(&m, x, dt, fl, ell, rng.random_range(1..=3), &c);
        r.push(rel(lhs, rhs));
    }
    worst("reduction", 1e-12, r)
}

/// Every identity family, `n` random cases each where applicable.
pub fn lemma_suite(seed: u64, n: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        duality(&mut rng, n),
        extraction(&mut rng, n),
        chain_rule(&mut rng, n),
        transfer(&mut rng, n.min(12))?,
        merging()?,
        convolutions(&mut rng, n)?,
        reduction(&mut rng, n),
    ])
}
