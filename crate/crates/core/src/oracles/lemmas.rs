//! Quadrature checks of the one-step identities behind the estimators.
//!
//! Weights are rebuilt here from the calculus operators, independently of
//! [`crate::weights`], with every normalisation `κ` set to 1 (all identities
//! are homogeneous in `κ`). Dirac masses at `L` are evaluated as the boundary
//! value times the Gaussian transition density.

use crate::calculus::{gaussian, integral_of_one, BiJet, Jet, StepOps};
use crate::error::Result;
use crate::model::{Model, TestFunction};
use crate::oracles::quad;

const SIGNS: [bool; 2] = [true, false];

fn mean(x: f64, rho: bool, l: f64) -> f64 {
    if rho {
        x
    } else {
        2.0 * l - x
    }
}

/// `∫_L^∞ g(v, y − m) h(y) dy` in standardised coordinates.
fn killed_gauss(l: f64, m: f64, v: f64, tol: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64> {
    let sd = v.sqrt();
    let lo = (l - m) / sd;
    let hi = 13.0_f64;
    if lo >= hi {
        return Ok(0.0);
    }
    let lo = lo.max(-hi);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    quad::integrate(|u| norm * (-0.5 * u * u).exp() * h(m + sd * u), lo, hi, tol)
}

/// Per-interval weights written directly from their definitions.
#[derive(Debug, Clone)]
pub struct OracleWeights<'m> {
    model: &'m Model,
    /// `a'(L) − b(L)`.
    boundary: f64,
}

impl<'m> OracleWeights<'m> {
    pub fn new(model: &'m Model) -> Self {
        let c = model.coefficients();
        let s = c.sigma(model.barrier);
        let a = s * s;
        OracleWeights {
            model,
            boundary: a.derivative(1) - c.drift(model.barrier).value(),
        }
    }

    fn jets(&self, x: f64) -> (Jet, Jet, Jet) {
        let c = self.model.coefficients();
        let s = c.sigma(x);
        (s, c.drift(x), s * s)
    }

    fn ops(&self, x: f64, y: f64, rho: bool, dt: f64) -> StepOps {
        StepOps::new(self.jets(x).0, x, y, rho, self.model.barrier, dt)
    }

    fn coefficients(&self, x: f64, y: f64) -> (BiJet, BiJet) {
        let (_, _, ax) = self.jets(x);
        let (_, by, ay) = self.jets(y);
        let c1 = BiJet::from_next(by);
        let c2 = (BiJet::from_next(ay) - BiJet::from_prev(ax)) * 0.5;
        (c1, c2)
    }

    fn bar_jet(&self, ops: &StepOps, x: f64, y: f64, last: bool) -> BiJet {
        if last {
            return BiJet::constant(2.0 * ops.sign);
        }
        let (c1, c2) = self.coefficients(x, y);
        (ops.apply_i2(c2) + ops.apply_i(c1)) * (2.0 * ops.sign)
    }

    fn e_jet(&self, ops: &StepOps, x: f64, y: f64, last: bool) -> BiJet {
        if last {
            return BiJet::constant(2.0);
        }
        let (c1, c2) = self.coefficients(x, y);
        let d1 = c1 - ops.total_derivative(c2) * ops.sign;
        (ops.apply_i2(c2) + ops.apply_i(d1)) * 2.0
    }

    pub fn theta_bar(&self, x: f64, y: f64, rho: bool, dt: f64, last: bool) -> f64 {
        let ops = self.ops(x, y, rho, dt);
        self.bar_jet(&ops, x, y, last).value()
    }

    pub fn theta_e(&self, x: f64, y: f64, rho: bool, dt: f64, last: bool) -> f64 {
        let ops = self.ops(x, y, rho, dt);
        self.e_jet(&ops, x, y, last).value()
    }

    /// `I(θ̄ − (2ρ−1)θ⃖ᵉ) − ∂θ⃖ᵉ − σ' I(Z θ⃖ᵉ)`.
    pub fn theta_c(&self, x: f64, y: f64, rho: bool, dt: f64, last: bool) -> f64 {
        let ops = self.ops(x, y, rho, dt);
        let bar = self.bar_jet(&ops, x, y, last);
        let e = self.e_jet(&ops, x, y, last);
        (ops.apply_i(bar - e * ops.sign) - ops.total_derivative(e) - ops.apply_i(ops.z * e) * ops.sigma_prime).value()
    }

    /// `2(2ρ−1)(a'(L) − b(L)) I(1)`.
    pub fn theta_partial(&self, x: f64, y: f64, rho: bool, dt: f64) -> f64 {
        let sig = self.model.sigma(x);
        let z = (y - mean(x, rho, self.model.barrier)) / sig;
        let s = if rho { 1.0 } else { -1.0 };
        2.0 * s * self.boundary * integral_of_one(1, sig, dt, z)
    }
}

/// `E[f^{(ℓ)}(X̄₁) H] − E[f I^ℓ(H)]` for one step from `x` by Gauss–Hermite.
pub fn check_duality(sigma: f64, dt: f64, x: f64, rho: bool, f: &TestFunction, h: &TestFunction, ell: usize) -> f64 {
    assert!((1..=2).contains(&ell));
    let (nodes, weights) = crate::oracles::quad::gauss_hermite(64);
    let m = mean(x, rho, 0.0);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (u, w) in nodes.iter().zip(&weights) {
        let y = m + sigma * dt.sqrt() * u;
        let ops = StepOps::new(Jet::constant(sigma), x, y, rho, 0.0, dt);
        let mut ih = BiJet::from_next(h.jet(y));
        for _ in 0..ell {
            ih = ops.apply_i(ih);
        }
        lhs += w * f.jet(y).derivative(ell) * h.value(y);
        rhs += w * f.value(y) * ih.value();
    }
    lhs - rhs
}

/// Sides of the one-step transfer identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSides {
    /// `E[f'(X̄₁) 1 θ̄₁]`.
    pub lhs: f64,
    /// `∂_x E[f 1 θ⃖ᵉ]`.
    pub flow: f64,
    /// `E[f 1 θ⃖ᶜ]`.
    pub correction: f64,
    /// `E[f δ_L θ⃖∂]`.
    pub boundary: f64,
}

impl TransferSides {
    pub fn residual(&self) -> f64 {
        self.lhs - self.flow - self.correction - self.boundary
    }
}

/// One-step backward transfer from `x` over `dt`, interior or last interval.
pub fn check_transfer(model: &Model, x: f64, dt: f64, f: &TestFunction, last: bool) -> Result<TransferSides> {
    let w = OracleWeights::new(model);
    let l = model.barrier;
    let tol = 1e-14;
    let expect = |x: f64, h: &dyn Fn(f64, f64, bool) -> f64| -> Result<f64> {
        let v = model.sigma(x).powi(2) * dt;
        let mut acc = 0.0;
        for rho in SIGNS {
            acc += 0.5 * killed_gauss(l, mean(x, rho, l), v, tol, |y| h(x, y, rho))?;
        }
        Ok(acc)
    };
    let lhs = expect(x, &|x, y, rho| f.derivative(y) * w.theta_bar(x, y, rho, dt, last))?;
    let e_part = |x: f64| expect(x, &|x, y, rho| f.value(y) * w.theta_e(x, y, rho, dt, last));
    let h = 1e-4;
    let flow = (8.0 * (e_part(x + h)? - e_part(x - h)?) - (e_part(x + 2.0 * h)? - e_part(x - 2.0 * h)?)) / (12.0 * h);
    let correction = expect(x, &|x, y, rho| f.value(y) * w.theta_c(x, y, rho, dt, last))?;
    let boundary = if last {
        0.0
    } else {
        let v = model.sigma(x).powi(2) * dt;
        SIGNS
            .iter()
            .map(|&rho| 0.5 * gaussian(v, l - mean(x, rho, l)) * f.value(l) * w.theta_partial(x, l, rho, dt))
            .sum()
    };
    Ok(TransferSides {
        lhs,
        flow,
        correction,
        boundary,
    })
}

/// Which boundary merging identity to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    Star,
    Circledast,
    LastStar,
    LastCircledast,
}

impl MergeKind {
    fn timed(self) -> bool {
        matches!(self, MergeKind::Circledast | MergeKind::LastCircledast)
    }

    fn last(self) -> bool {
        matches!(self, MergeKind::LastStar | MergeKind::LastCircledast)
    }
}

/// Weight placed on the Dirac mass at the intermediate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryWeight {
    /// `θ⃖∂`, produced by transferring or integrating by parts.
    Partial,
    /// `θ̄` evaluated at the boundary.
    Bar,
}

/// Both sides of a boundary merging identity, with `κ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergingSides {
    /// `∫_0^t ds E[f(X̄₂) 1 θ⃖ᵉ₂ δ_L(X̄₁) s^k w₁]` with the jump at `s`.
    pub lhs: f64,
    /// `E[f(X̄∂) 1{X̄∂ ≥ L} θ^∂]` over the merged transition.
    pub rhs: f64,
}

impl MergingSides {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Check a merging identity from `x` over total length `t` for a candidate
/// merged weight `merged(x_merged)`.
pub fn check_merging(
    model: &Model,
    x: f64,
    t: f64,
    f: &TestFunction,
    kind: MergeKind,
    boundary: BoundaryWeight,
    merged: &dyn Fn(f64) -> f64,
) -> Result<MergingSides> {
    let w = OracleWeights::new(model);
    let l = model.barrier;
    let ax = model.sigma(x).powi(2);
    let al = model.sigma(l).powi(2);
    let tol = 1e-13;
    // E over the second interval started at L, length u.
    let inner = |u: f64| -> Result<f64> {
        let mut acc = 0.0;
        for rho in SIGNS {
            acc += 0.5 * killed_gauss(l, l, al * u, tol, |y| f.value(y) * w.theta_e(l, y, rho, u, kind.last()))?;
        }
        Ok(acc)
    };
    // Boundary factor at intermediate time s: density of X̄₁ at L times weight.
    let first = |s: f64| -> f64 {
        SIGNS
            .iter()
            .map(|&rho| {
                let bw = match boundary {
                    BoundaryWeight::Partial => w.theta_partial(x, l, rho, s),
                    BoundaryWeight::Bar => w.theta_bar(x, l, rho, s, false),
                };
                0.5 * gaussian(ax * s, l - mean(x, rho, l)) * bw
            })
            .sum::<f64>()
            * if kind.timed() { s } else { 1.0 }
    };
    // s = t − r², which absorbs the (t − s)^{-1/2} edge of the inner term.
    let mut err = None;
    let lhs = quad::integrate(
        |r| {
            let s = t - r * r;
            if s <= 0.0 {
                return 0.0;
            }
            match inner(r * r) {
                Ok(v) => 2.0 * r * first(s) * v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        t.sqrt(),
        1e-11,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    let mu = -model.sigma(l) / model.sigma(x);
    let m = l + (x - l) * mu;
    let rhs = killed_gauss(l, m, al * t, tol, |y| f.value(y) * merged(y))?;
    Ok(MergingSides { lhs, rhs })
}

/// `∂_y^ℓ g(v, y)`.
fn gaussian_dy(v: f64, y: f64, ell: usize) -> f64 {
    let g = gaussian(v, y);
    match ell {
        0 => g,
        1 => -y / v * g,
        2 => (y * y / (v * v) - 1.0 / v) * g,
        _ => panic!("derivative order {ell} not supported"),
    }
}

/// `∂_y^ℓ Φ̄(v, y)` for `y > 0`.
fn tail_dy(v: f64, y: f64, ell: usize) -> f64 {
    match ell {
        0 => crate::calculus::gaussian_tail(v, y),
        k => -gaussian_dy(v, y, k - 1),
    }
}

/// Time convolutions of Gaussian kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convolution {
    /// `∫_0^t ∂_x g(α²s, x) ∂_y^ℓ g(β²(t−s), y) ds = −α^{-2} ∂_y^ℓ g(β²t, y + βx/α)`.
    Plain,
    /// The same with an extra factor `s`, equal to
    /// `−α^{-3}β^{-1} x ∂_y^ℓ Φ̄(β²t, y + βx/α)`.
    Timed,
}

/// Residual of a Gaussian time convolution for `x, y > 0`.
pub fn check_gaussian_convolution(alpha: f64, beta: f64, x: f64, y: f64, t: f64, ell: usize, which: Convolution) -> Result<f64> {
    let (a2, b2) = (alpha * alpha, beta * beta);
    let lhs = quad::integrate(
        |s| {
            if s <= 0.0 || s >= t {
                return 0.0;
            }
            let dx = gaussian_dy(a2 * s, x, 1);
            let k = if which == Convolution::Timed { s } else { 1.0 };
            k * dx * gaussian_dy(b2 * (t - s), y, ell)
        },
        0.0,
        t,
        1e-14,
    )?;
    let w = y + beta / alpha * x;
    let rhs = match which {
        Convolution::Plain => -gaussian_dy(b2 * t, w, ell) / a2,
        Convolution::Timed => -x / (a2 * alpha * beta) * tail_dy(b2 * t, w, ell),
    };
    Ok(lhs - rhs)
}

/// `E[f(X̄) δ_L(X̄) (2ρ−1)^ℓ h(X̄)]` for one step from `x`, `h` evaluated at `X̄ = L`.
fn boundary_expectation(model: &Model, x: f64, dt: f64, fl: f64, ell: u32, h: impl Fn(bool, f64) -> f64) -> f64 {
    let l = model.barrier;
    let sig = model.sigma(x);
    SIGNS
        .iter()
        .map(|&rho| {
            let m = mean(x, rho, l);
            let s: f64 = if rho { 1.0 } else { -1.0 };
            let z = (l - m) / sig;
            0.5 * gaussian(sig * sig * dt, l - m) * fl * s.powi(ell as i32) * h(rho, z)
        })
        .sum()
}

/// Parity reduction at the boundary: returns `(lhs, rhs)` where `rhs` is 0
/// for odd `ℓ + k` and the `(2ρ−1)^k` form otherwise.
pub fn check_reduction(model: &Model, x: f64, dt: f64, fl: f64, ell: u32, k: u8) -> (f64, f64) {
    let sig = model.sigma(x);
    let ik = |_: bool, z: f64| integral_of_one(k, sig, dt, z);
    let lhs = boundary_expectation(model, x, dt, fl, ell, ik);
    let rhs = if (ell + k as u32) % 2 == 1 {
        0.0
    } else {
        boundary_expectation(model, x, dt, fl, k as u32, ik)
    };
    (lhs, rhs)
}

/// Extraction followed by reduction for `I^k(c(X̄))`, `k ≤ 3`: returns
/// `(lhs, rhs)` with the surviving terms `Σ_j (−1)^j C(k,j) c^{(j)}(L) …`.
pub fn check_extraction_reduction(model: &Model, x: f64, dt: f64, fl: f64, ell: u32, k: u8, c: &TestFunction) -> (f64, f64) {
    assert!((1..=3).contains(&k));
    let l = model.barrier;
    let sig = model.sigma(x);
    let lhs = boundary_expectation(model, x, dt, fl, ell, |rho, _| {
        let ops = StepOps::new(Jet::constant(sig), x, l, rho, l, dt);
        let mut h = BiJet::from_next(c.jet(l));
        for _ in 0..k {
            h = ops.apply_i(h);
        }
        h.value()
    });
    let cj = c.jet(l);
    let mut rhs = 0.0;
    for j in 0..=k {
        if (ell + (k - j) as u32) % 2 == 1 {
            continue;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let coef = sign * crate::calculus::binomial(k as usize, j as usize) * cj.derivative(j as usize);
        rhs += coef
            * boundary_expectation(model, x, dt, fl, (k - j) as u32, |_, z| integral_of_one(k - j, sig, dt, z));
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, SineMartingale};
    use crate::weights::{LastCircledast, Local, Normalization, WeightContext};

    fn sine(s: f64) -> Model {
        Family::SineMartingale(SineMartingale {
            sigma_bar: s,
            omega: s,
            c0: 0.0,
            c1: 1.0,
            c3: 1.0,
        })
        .build(0.0, 0.5, 1.0)
        .unwrap()
    }

    #[test]
    fn duality_residuals() {
        let f = TestFunction::polynomial(&[0.0, 0.0, 1.0, 0.0]);
        let one = TestFunction::polynomial(&[1.0, 0.0, 0.0, 0.0]);
        assert!(check_duality(0.7, 0.3, 1.0, true, &f, &one, 2).abs() < 1e-10);
        let h = TestFunction::polynomial(&[0.3, -1.0, 0.5, 0.2]);
        let g = TestFunction::polynomial(&[1.0, 2.0, -0.4, 0.0]);
        for (rho, ell) in [(true, 1), (false, 1), (true, 2), (false, 2)] {
            assert!(check_duality(0.9, 0.2, 0.4, rho, &h, &g, ell).abs() < 1e-9);
        }
        let c = TestFunction::polynomial(&[2.0, 0.0, 0.0, 0.0]);
        assert!(check_duality(1.0, 1.0, 0.0, true, &c, &g, 1).abs() < 1e-12);
        let x = TestFunction::polynomial(&[0.0, 1.0, 0.0, 0.0]);
        assert!(check_duality(1.0, 1.0, 0.0, true, &x, &one, 1).abs() < 1e-12);
    }

    #[test]
    fn transfer_constant_model_is_trivial() {
        let m = Model::constant(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let f = TestFunction::power_above(0.0, 2);
        let s = check_transfer(&m, 1.0, 0.1, &f, false).unwrap();
        assert!(s.residual().abs() < 1e-10);
    }

    #[test]
    fn transfer_identity_on_sine_step() {
        let m = sine(0.1);
        let f = TestFunction::power_above(0.0, 2);
        let s = check_transfer(&m, 1.0, 0.1, &f, false).unwrap();
        assert!(s.residual().abs() < 1e-5, "{s:?}");
        let s = check_transfer(&m, 1.0, 0.1, &f, true).unwrap();
        assert!(s.residual().abs() < 1e-5, "{s:?}");
    }

    #[test]
    fn transfer_identity_near_the_boundary() {
        // Close to L the boundary term is large and the sign matters.
        let m = sine(0.3);
        let f = TestFunction::power_above(0.0, 1).shifted(0.0);
        let g = TestFunction::polynomial(&[1.0, 1.0, 0.0, 0.0]);
        for x in [0.05, 0.2] {
            let s = check_transfer(&m, x, 0.05, &g, false).unwrap();
            assert!(s.boundary.abs() > 1e-3);
            assert!(s.residual().abs() < 1e-5, "{s:?}");
            let s = check_transfer(&m, x, 0.05, &f, true).unwrap();
            assert!(s.residual().abs() < 1e-5, "{s:?}");
        }
    }

    fn derived(model: &Model, x: f64, t: f64, kind: MergeKind, variant: LastCircledast) -> impl Fn(f64) -> f64 + '_ {
        let ctx = WeightContext::new(model, Normalization::Poisson { lambda: 1.0 }).with_last_circledast(variant);
        let prev = Local::at(model, x);
        move |y| {
            let w = ctx.merged_weights(&prev, y, t, 1.0, kind.last());
            if kind.timed() {
                w.theta_circledast
            } else {
                w.theta_star
            }
        }
    }

    #[test]
    fn merging_identities_hold_for_derived_weights() {
        let m = sine(0.2);
        let f = TestFunction::polynomial(&[0.0, 1.0, 0.5, 0.0]);
        for kind in [MergeKind::Star, MergeKind::Circledast, MergeKind::LastStar, MergeKind::LastCircledast] {
            let w = derived(&m, 0.5, 0.2, kind, LastCircledast::Consistent);
            let s = check_merging(&m, 0.5, 0.2, &f, kind, BoundaryWeight::Partial, &w).unwrap();
            assert!(s.lhs.abs() > 1e-6, "{kind:?} {s:?}");
            assert!(s.residual().abs() < 1e-4 * (1.0 + s.lhs.abs()), "{kind:?} {s:?}");
        }
    }

    #[test]
    fn constant_drift_merging_identities() {
        let m = Model::constant(0.8, 0.6, 0.0, 1.0, 1.0).unwrap();
        let f = TestFunction::power_above(0.0, 2);
        for kind in [MergeKind::Star, MergeKind::Circledast, MergeKind::LastStar, MergeKind::LastCircledast] {
            let w = derived(&m, 0.3, 0.4, kind, LastCircledast::Consistent);
            let s = check_merging(&m, 0.3, 0.4, &f, kind, BoundaryWeight::Partial, &w).unwrap();
            assert!(s.residual().abs() < 1e-4 * (1.0 + s.lhs.abs()), "{kind:?} {s:?}");
        }
    }

    #[test]
    fn printed_merged_variants_fail_the_identities() {
        let m = sine(0.3);
        let f = TestFunction::polynomial(&[0.0, 1.0, 0.5, 0.0]);
        let (x, t) = (0.4, 0.3);
        // Opposite sign of the ∗ weight.
        let w = derived(&m, x, t, MergeKind::Star, LastCircledast::Consistent);
        let flipped = |y: f64| -w(y);
        let s = check_merging(&m, x, t, &f, MergeKind::Star, BoundaryWeight::Partial, &flipped).unwrap();
        assert!(s.residual().abs() > 1e-2 * s.lhs.abs());
        // Last-interval ⊛ with 2a'(L) − b(L).
        let w = derived(&m, x, t, MergeKind::LastCircledast, LastCircledast::DoubledDerivative);
        let s = check_merging(&m, x, t, &f, MergeKind::LastCircledast, BoundaryWeight::Partial, &w).unwrap();
        assert!(s.residual().abs() > 1e-2 * s.lhs.abs(), "{s:?}");
    }

    #[test]
    fn bar_boundary_weight_flips_the_circledast_sign() {
        // With θ̄ on the Dirac mass the timed identity holds with the
        // opposite sign of the weight used by the estimator.
        let m = sine(0.2);
        let f = TestFunction::polynomial(&[0.0, 1.0, 0.5, 0.0]);
        let w = derived(&m, 0.5, 0.2, MergeKind::Circledast, LastCircledast::Consistent);
        let neg = |y: f64| -w(y);
        let s = check_merging(&m, 0.5, 0.2, &f, MergeKind::Circledast, BoundaryWeight::Bar, &neg).unwrap();
        assert!(s.residual().abs() < 1e-4 * (1.0 + s.lhs.abs()), "{s:?}");
    }

    #[test]
    fn merging_vanishes_when_boundary_coefficient_does() {
        let m = Model::constant(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let f = TestFunction::power_above(0.0, 2);
        let s = check_merging(&m, 0.5, 0.2, &f, MergeKind::Star, BoundaryWeight::Partial, &|_| 0.0).unwrap();
        assert_eq!((s.lhs, s.rhs), (0.0, 0.0));
    }

    #[test]
    fn gaussian_convolution_reference_value() {
        // ℓ = 0, α = β = x = y = t = 1: the convolution equals −g(1, 2).
        let r = check_gaussian_convolution(1.0, 1.0, 1.0, 1.0, 1.0, 0, Convolution::Plain).unwrap();
        assert!(r.abs() < 1e-12);
        let lhs = -gaussian(1.0, 2.0) + r;
        assert!((lhs + 0.05399096651318806).abs() < 1e-12);
    }

    #[test]
    fn gaussian_convolutions_on_a_grid() {
        for &(a, b, x, y, t) in &[(1.0, 1.0, 1.0, 1.0, 1.0), (0.7, 1.3, 0.4, 0.9, 0.5), (1.5, 0.6, 2.0, 0.2, 2.0), (0.3, 0.3, 0.1, 0.05, 0.2)] {
            for ell in 0..=2 {
                for which in [Convolution::Plain, Convolution::Timed] {
                    let r = check_gaussian_convolution(a, b, x, y, t, ell, which).unwrap();
                    assert!(r.abs() < 1e-7, "{a} {b} {x} {y} {t} {ell} {which:?}: {r}");
                }
            }
        }
    }

    #[test]
    fn reduction_parity() {
        let m = sine(0.3);
        for ell in 0..4 {
            for k in 1..=4u8 {
                let (lhs, rhs) = check_reduction(&m, 0.3, 0.1, 1.3, ell, k);
                assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{ell} {k}");
                if (ell + k as u32) % 2 == 1 {
                    assert!(lhs.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn extraction_with_reduction() {
        let m = sine(0.2);
        let c = TestFunction::polynomial(&[0.5, -1.0, 0.7, 0.3]);
        for ell in 0..3 {
            for k in 1..=3u8 {
                let (lhs, rhs) = check_extraction_reduction(&m, 0.25, 0.05, 0.8, ell, k, &c);
                assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{ell} {k}: {lhs} {rhs}");
            }
        }
        // c(y) = y − L with k = 1: only the j-term of matching parity survives.
        let c = TestFunction::power_above(0.0, 1);
        let (lhs, _) = check_extraction_reduction(&m, 0.25, 0.05, 1.0, 0, 1, &c);
        let expect = -boundary_mass(&m, 0.25, 0.05);
        assert!((lhs - expect).abs() < 1e-12);
    }

    fn boundary_mass(m: &Model, x: f64, dt: f64) -> f64 {
        boundary_expectation(m, x, dt, 1.0, 0, |_, _| 1.0)
    }
}
