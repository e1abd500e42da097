//! Discrete Malliavin calculus on one transition of the reflection chain.
//!
//! Weights are smooth functions of `(x_prev, x_next)` (plus the Bernoulli sign
//! and the times). They are carried as bivariate truncated Taylor expansions
//! ([`BiJet`]) so that the integral operator `I`, the derivative `D` (w.r.t.
//! `x_next`) and the total flow derivative w.r.t. `x_prev` are all exact.

use std::ops::{Add, Mul, Neg, Sub};

use libm::erfc;

/// Highest derivative order carried by [`Jet`] and [`BiJet`].
pub const MAX_ORDER: usize = 3;

const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

/// Univariate truncated Taylor expansion to order 3.
///
/// Stored as Taylor coefficients `t[k] = f^(k)(x0) / k!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    t: [f64; 4],
}

impl Jet {
    /// Jet from value and derivatives `[f, f', f'', f''']`.
    pub fn from_derivatives(d: [f64; 4]) -> Self {
        Jet {
            t: [d[0], d[1], d[2] / 2.0, d[3] / 6.0],
        }
    }

    pub fn constant(c: f64) -> Self {
        Jet { t: [c, 0.0, 0.0, 0.0] }
    }

    /// The identity function expanded at `x`.
    pub fn variable(x: f64) -> Self {
        Jet { t: [x, 1.0, 0.0, 0.0] }
    }

    pub fn value(&self) -> f64 {
        self.t[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        assert!(k <= MAX_ORDER, "jet order {k} exceeds {MAX_ORDER}");
        self.t[k] * FACT[k]
    }

    pub fn derivatives(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.derivative(k))
    }

    /// Derivative jet; the top coefficient becomes zero (order drops by one).
    pub fn differentiate(&self) -> Jet {
        Jet {
            t: [self.t[1], 2.0 * self.t[2], 3.0 * self.t[3], 0.0],
        }
    }

    /// Truncate to the given order (higher coefficients set to zero).
    pub fn truncate(&self, order: usize) -> Jet {
        let mut t = self.t;
        for c in t.iter_mut().skip(order + 1) {
            *c = 0.0;
        }
        Jet { t }
    }

    /// `phi(self)` given the derivatives of `phi` at `self.value()`.
    pub fn compose(&self, phi: [f64; 4]) -> Jet {
        let [_, a1, a2, a3] = self.t;
        // (a1 e + a2 e^2 + a3 e^3)^k truncated at e^3.
        let p1 = [a1, a2, a3];
        let p2 = [0.0, a1 * a1, 2.0 * a1 * a2];
        let p3 = [0.0, 0.0, a1 * a1 * a1];
        let mut t = [phi[0], 0.0, 0.0, 0.0];
        for k in 0..3 {
            t[k + 1] = phi[1] * p1[k] + phi[2] / 2.0 * p2[k] + phi[3] / 6.0 * p3[k];
        }
        Jet { t }
    }

    pub fn recip(&self) -> Jet {
        let v = self.t[0];
        assert!(v != 0.0, "reciprocal of a jet with zero value");
        let r = 1.0 / v;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.t[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet {
            t: self.t.map(|c| c * k),
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            t: [0, 1, 2, 3].map(|k| self.t[k] + o.t[k]),
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            t: [0, 1, 2, 3].map(|k| self.t[k] - o.t[k]),
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut t = [0.0; 4];
        for (i, a) in self.t.iter().enumerate() {
            for (j, b) in o.t.iter().enumerate().take(4 - i) {
                t[i + j] += a * b;
            }
        }
        Jet { t }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.t[0] += c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

/// Bivariate truncated Taylor expansion in `(x_prev, x_next)` of total order ≤ 3.
///
/// `c[i][j]` is the coefficient of `dx_prev^i dx_next^j`. `order` records how
/// many orders are still exact; differentiation lowers it and products take the
/// minimum, so reading a derivative beyond it is caught as a contract violation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiJet {
    c: [[f64; 4]; 4],
    order: u8,
}

impl BiJet {
    pub fn constant(v: f64) -> Self {
        let mut c = [[0.0; 4]; 4];
        c[0][0] = v;
        BiJet { c, order: 3 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// The coordinate `x_prev` expanded at `x`.
    pub fn var_prev(x: f64) -> Self {
        let mut b = Self::constant(x);
        b.c[1][0] = 1.0;
        b
    }

    /// The coordinate `x_next` expanded at `y`.
    pub fn var_next(y: f64) -> Self {
        let mut b = Self::constant(y);
        b.c[0][1] = 1.0;
        b
    }

    /// A function of `x_prev` only.
    pub fn from_prev(j: Jet) -> Self {
        let mut b = Self::zero();
        for k in 0..4 {
            b.c[k][0] = j.t[k];
        }
        b
    }

    /// A function of `x_next` only.
    pub fn from_next(j: Jet) -> Self {
        let mut b = Self::zero();
        b.c[0][..4].copy_from_slice(&j.t);
        b
    }

    pub fn value(&self) -> f64 {
        self.c[0][0]
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    /// Mixed partial `∂_prev^i ∂_next^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        assert!(
            i + j <= self.order(),
            "partial of order {} requested from a bijet exact to order {}",
            i + j,
            self.order
        );
        self.c[i][j] * FACT[i] * FACT[j]
    }

    fn with_order(mut self, order: u8) -> Self {
        self.order = order;
        for i in 0..4 {
            for j in 0..4 {
                if i + j > order as usize {
                    self.c[i][j] = 0.0;
                }
            }
        }
        self
    }

    /// `∂/∂x_next` (the operator `D`).
    pub fn d_next(&self) -> BiJet {
        assert!(self.order > 0, "cannot differentiate an order-0 bijet");
        let mut c = [[0.0; 4]; 4];
        for (i, row) in c.iter_mut().enumerate() {
            for j in 0..3 {
                row[j] = (j + 1) as f64 * self.c[i][j + 1];
            }
        }
        BiJet { c, order: self.order }.with_order(self.order - 1)
    }

    /// `∂/∂x_prev` at fixed `x_next`.
    pub fn d_prev(&self) -> BiJet {
        assert!(self.order > 0, "cannot differentiate an order-0 bijet");
        let mut c = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..4 {
                c[i][j] = (i + 1) as f64 * self.c[i + 1][j];
            }
        }
        BiJet { c, order: self.order }.with_order(self.order - 1)
    }

    /// `phi(self)` given derivatives of `phi` at `self.value()`; only the first
    /// `phi.len()` are used and the order is capped at `phi.len() - 1`.
    pub fn compose(&self, phi: &[f64]) -> BiJet {
        assert!(!phi.is_empty() && phi.len() <= 4);
        let order = self.order.min((phi.len() - 1) as u8);
        let mut e = *self;
        e.c[0][0] = 0.0;
        let e = e.with_order(order);
        let mut out = BiJet::constant(phi[0]).with_order(order);
        let mut pow = BiJet::constant(1.0).with_order(order);
        for (k, dk) in phi.iter().enumerate().skip(1) {
            pow = pow * e;
            out = out + pow * (dk / FACT[k]);
        }
        out
    }

    pub fn recip(&self) -> BiJet {
        let v = self.value();
        assert!(v != 0.0, "reciprocal of a bijet with zero value");
        let r = 1.0 / v;
        self.compose(&[r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn scale(&self, k: f64) -> BiJet {
        let mut out = *self;
        for row in out.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().flatten().all(|v| v.is_finite())
    }
}

impl Add for BiJet {
    type Output = BiJet;
    fn add(self, o: BiJet) -> BiJet {
        let mut c = self.c;
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] += o.c[i][j];
            }
        }
        BiJet { c, order: self.order }.with_order(self.order.min(o.order))
    }
}

impl Sub for BiJet {
    type Output = BiJet;
    fn sub(self, o: BiJet) -> BiJet {
        self + o.scale(-1.0)
    }
}

impl Neg for BiJet {
    type Output = BiJet;
    fn neg(self) -> BiJet {
        self.scale(-1.0)
    }
}

impl Mul for BiJet {
    type Output = BiJet;
    fn mul(self, o: BiJet) -> BiJet {
        let order = self.order.min(o.order) as usize;
        let mut c = [[0.0; 4]; 4];
        for i1 in 0..=order {
            for j1 in 0..=order - i1 {
                let a = self.c[i1][j1];
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..=order - i1 - j1 {
                    for j2 in 0..=order - i1 - j1 - i2 {
                        c[i1 + i2][j1 + j2] += a * o.c[i2][j2];
                    }
                }
            }
        }
        BiJet { c, order: order as u8 }
    }
}

impl Mul<f64> for BiJet {
    type Output = BiJet;
    fn mul(self, k: f64) -> BiJet {
        self.scale(k)
    }
}

impl Add<f64> for BiJet {
    type Output = BiJet;
    fn add(mut self, k: f64) -> BiJet {
        self.c[0][0] += k;
        self
    }
}

/// `I^k(1)` for one step: `He_k(z/√Δ) / (σ√Δ)^k`, so `I(1) = z/(σΔ)` and
/// `I²(1) = (z²−Δ)/(σ²Δ²)`.
///
/// `sigma` is the diffusion coefficient at the start of the step and `z` the raw
/// Brownian increment over the step (variance `dt`).
pub fn integral_of_one(order: u8, sigma: f64, dt: f64, z: f64) -> f64 {
    assert!(dt > 0.0, "step length must be positive");
    assert!(sigma > 0.0, "diffusion coefficient must be positive");
    let sd = dt.sqrt();
    let u = z / sd;
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..order {
        let next = u * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur / (sigma * sd).powi(order as i32)
}

/// Operator context for one transition of the reflection chain, expanded at a
/// fixed `(x_prev, x_next)`.
///
/// The increment is treated as the function
/// `z(x_prev, x_next) = (x_next − m_ρ(x_prev)) / σ(x_prev)`.
#[derive(Debug, Clone, Copy)]
pub struct StepOps {
    /// Raw Brownian increment `z` as a bijet.
    pub z: BiJet,
    /// `I(1) = z / (σ(x_prev) Δ)` as a bijet.
    pub i1: BiJet,
    /// Flow derivative `∂x_next/∂x_prev = (2ρ−1) + σ'(x_prev) z` as a bijet.
    pub flow: BiJet,
    /// `σ'(x_prev)`.
    pub sigma_prime: f64,
    /// `2ρ − 1`.
    pub sign: f64,
    pub dt: f64,
}

impl StepOps {
    /// `sigma_prev` is the order-3 jet of σ at `x_prev`.
    pub fn new(sigma_prev: Jet, x_prev: f64, x_next: f64, rho: bool, barrier: f64, dt: f64) -> Self {
        assert!(dt > 0.0, "step length must be positive");
        assert!(sigma_prev.value() > 0.0, "diffusion coefficient must be positive");
        let sign = if rho { 1.0 } else { -1.0 };
        let xp = BiJet::var_prev(x_prev);
        let mean = if rho { xp } else { (xp * -1.0) + 2.0 * barrier };
        let sp = BiJet::from_prev(sigma_prev);
        let inv_s = sp.recip();
        let z = (BiJet::var_next(x_next) - mean) * inv_s;
        let i1 = z * inv_s * (1.0 / dt);
        let ds = BiJet::from_prev(sigma_prev.differentiate()).with_order(2);
        let flow = ds * z + sign;
        StepOps {
            z,
            i1,
            flow,
            sigma_prime: sigma_prev.derivative(1),
            sign,
            dt,
        }
    }

    /// `I(h) = h I(1) − D h`.
    pub fn apply_i(&self, h: BiJet) -> BiJet {
        h * self.i1 - h.d_next()
    }

    /// `I^2(h) = I(I(h))`.
    pub fn apply_i2(&self, h: BiJet) -> BiJet {
        self.apply_i(self.apply_i(h))
    }

    /// Total derivative w.r.t. `x_prev` at fixed increment:
    /// `∂_1 h + ∂_2 h · ∂x_next/∂x_prev`.
    pub fn total_derivative(&self, h: BiJet) -> BiJet {
        h.d_prev() + h.d_next() * self.flow
    }

    /// `|∂_prev I(h) − (I(∂_prev h) − (σ'/σ) I(h))|` at the expansion point.
    pub fn chain_rule_residual(&self, h: BiJet, sigma_prev: f64) -> f64 {
        let lhs = self.total_derivative(self.apply_i(h)).value();
        let rhs = self.apply_i(self.total_derivative(h)).value()
            - self.sigma_prime / sigma_prev * self.apply_i(h).value();
        (lhs - rhs).abs()
    }
}

/// Operator context for one merged boundary transition, expanded at a fixed
/// `(x_prev, x_merged)`.
#[derive(Debug, Clone, Copy)]
pub struct MergedOps {
    /// Accumulated increment `(x_merged − m(x_prev)) / σ(L)` as a bijet.
    pub z: BiJet,
    /// Spatial offset `x_merged − m(x_prev)` as a bijet.
    pub offset: BiJet,
    pub i1: BiJet,
    pub sigma_barrier: f64,
    pub dt: f64,
}

impl MergedOps {
    pub fn new(sigma_prev: Jet, sigma_barrier: f64, x_prev: f64, x_merged: f64, barrier: f64, dt: f64) -> Self {
        assert!(dt > 0.0, "step length must be positive");
        assert!(sigma_prev.value() > 0.0 && sigma_barrier > 0.0);
        let mu = BiJet::from_prev(sigma_prev).recip() * (-sigma_barrier);
        let xp = BiJet::var_prev(x_prev);
        // m(x) = L(1 − μ) + x μ = L + (x − L) μ
        let mean = (xp + (-barrier)) * mu + barrier;
        let offset = BiJet::var_next(x_merged) - mean;
        let z = offset * (1.0 / sigma_barrier);
        let i1 = z * (1.0 / (sigma_barrier * dt));
        MergedOps {
            z,
            offset,
            i1,
            sigma_barrier,
            dt,
        }
    }

    pub fn apply_i(&self, h: BiJet) -> BiJet {
        h * self.i1 - h.d_next()
    }

    pub fn apply_i2(&self, h: BiJet) -> BiJet {
        self.apply_i(self.apply_i(h))
    }
}

/// Gaussian density with variance `t` evaluated at `x`.
pub fn gaussian(t: f64, x: f64) -> f64 {
    (-0.5 * x * x / t).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
}

/// Gaussian tail `Φ̄(t, z) = ∫_{|z|}^∞ g(t, y) dy`.
pub fn gaussian_tail(t: f64, z: f64) -> f64 {
    0.5 * erfc(z.abs() / (2.0 * t).sqrt())
}

/// `e^{x²} erfc(x)` for `x ≥ 0`.
fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 6.0 / std::f64::consts::SQRT_2 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction for the Mills ratio, evaluated bottom-up.
    let mut frac = 0.0;
    for k in (1..=60).rev() {
        frac = (k as f64 / 2.0) / (x + frac);
    }
    1.0 / (std::f64::consts::PI.sqrt() * (x + frac))
}

/// Mills ratio `Φ̄(t, z) / g(t, z)` and its `z`-derivatives up to `order` (≤ 3).
///
/// The function `z ↦ Φ̄(t,|z|)/g(t,z)` is even with a kink at zero; away from
/// zero the derivatives follow from `R' = −sgn(z) + (z/t) R`. At `z = 0` odd
/// derivatives are reported as zero by symmetry.
pub fn mills_ratio_jet(t: f64, z: f64, order: usize) -> Jet {
    assert!(t > 0.0, "variance must be positive");
    assert!(order <= MAX_ORDER);
    let s = t.sqrt();
    let u = z.abs();
    let r = s * (std::f64::consts::PI / 2.0).sqrt() * erfcx(u / (std::f64::consts::SQRT_2 * s));
    // Derivatives on the half line u ≥ 0.
    let r1 = -1.0 + u / t * r;
    let r2 = r / t + u / t * r1;
    let r3 = 2.0 * r1 / t + u / t * r2;
    let sg = if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    };
    Jet::from_derivatives([r, sg * r1, r2, sg * r3]).truncate(order)
}

/// Binomial coefficient for small arguments.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly_jet(coeffs: &[f64], x: f64) -> Jet {
        let mut j = Jet::constant(0.0);
        let xv = Jet::variable(x);
        for c in coeffs.iter().rev() {
            j = j * xv + *c;
        }
        j
    }

    #[test]
    fn jet_product_and_recip_match_exact_derivatives() {
        // (sin x + 2)/(x² + 1/2) at 0.37, derivatives from a computer algebra system.
        let x = 0.37;
        let j = (Jet::variable(x).sin() + 2.0) * (Jet::variable(x) * Jet::variable(x) + 0.5).recip();
        let exact = [3.707984663157422, -2.844373222060696, -5.601997785570695, 44.85845041721633];
        for (k, e) in exact.iter().enumerate() {
            assert!((j.derivative(k) - e).abs() < 1e-12 * e.abs(), "order {k}");
        }
    }

    #[test]
    fn integral_of_one_examples() {
        assert_eq!(integral_of_one(1, 1.0, 1.0, 0.0), 0.0);
        assert_eq!(integral_of_one(2, 1.0, 1.0, 0.0), -1.0);
        assert!((integral_of_one(1, 2.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
        assert!((integral_of_one(2, 2.0, 0.5, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(integral_of_one(0, 2.0, 0.5, 1.0), 1.0);
        // He_3(u) = u³ − 3u
        let (s, dt, z): (f64, f64, f64) = (1.3, 0.4, 0.5);
        let u = z / dt.sqrt();
        let expect = (u * u * u - 3.0 * u) / (s * dt.sqrt()).powi(3);
        assert!((integral_of_one(3, s, dt, z) - expect).abs() < 1e-12);
    }

    fn ops(rho: bool) -> (StepOps, Jet) {
        let sig = (Jet::variable(0.3).scale(0.7).sin() + 2.0).scale(0.4);
        (StepOps::new(sig, 0.3, 0.45, rho, 0.0, 0.2), sig)
    }

    #[test]
    fn hermite_closed_form_matches_operator() {
        for rho in [true, false] {
            let (o, sig) = ops(rho);
            let z = o.z.value();
            let one = BiJet::constant(1.0);
            let i1 = o.apply_i(one).value();
            let i2 = o.apply_i2(one).value();
            assert!((i1 - integral_of_one(1, sig.value(), 0.2, z)).abs() < 1e-12);
            assert!((i2 - integral_of_one(2, sig.value(), 0.2, z)).abs() < 1e-12);
            let s2 = sig.value() * sig.value();
            assert!((i2 - (i1 * i1 - 1.0 / (s2 * 0.2))).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_i_examples() {
        let sig = Jet::constant(1.0);
        let o = StepOps::new(sig, 0.0, 0.5, true, -10.0, 1.0);
        let h = BiJet::var_next(0.5);
        assert!((o.apply_i(h).value() - (0.5 * 0.5 - 1.0)).abs() < 1e-15);
        let c = BiJet::constant(3.0);
        assert!((o.apply_i(c).value() - 3.0 * o.i1.value()).abs() < 1e-15);
    }

    #[test]
    fn chain_rule_for_constant_function() {
        let (o, sig) = ops(true);
        let one = BiJet::constant(1.0);
        let lhs = o.total_derivative(o.apply_i(one)).value();
        let rhs = -o.sigma_prime / sig.value() * o.apply_i(one).value();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_for_product_of_coordinates() {
        for rho in [true, false] {
            let (o, sig) = ops(rho);
            let h = BiJet::var_prev(0.3) * BiJet::var_next(0.45);
            assert!(o.chain_rule_residual(h, sig.value()) < 1e-10);
        }
    }

    #[test]
    fn chain_rule_trivial_for_constant_sigma() {
        let o = StepOps::new(Jet::constant(0.8), 0.4, 0.1, false, 0.0, 0.3);
        let h = BiJet::from_next(poly_jet(&[0.2, -1.0, 0.5, 0.3], 0.1)) * BiJet::var_prev(0.4);
        assert!(o.chain_rule_residual(h, 0.8) < 1e-12);
    }

    #[test]
    fn merged_operator_examples() {
        let m = MergedOps::new(Jet::constant(1.0), 1.0, 0.0, 1.0, 0.0, 2.0);
        let one = BiJet::constant(1.0);
        assert!((m.apply_i(one).value() - 0.5).abs() < 1e-15);
        assert!((m.apply_i2(one).value() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn mills_ratio_at_zero_and_bound() {
        for t in [0.1, 1.0, 3.0] {
            let r0 = mills_ratio_jet(t, 0.0, 1);
            assert!((r0.value() - (std::f64::consts::PI * t / 2.0).sqrt()).abs() < 1e-13);
            assert_eq!(r0.derivative(1), 0.0);
            let mut prev = r0.value();
            for k in 1..200 {
                let r = mills_ratio_jet(t, k as f64 * 0.05 * t.sqrt(), 0).value();
                assert!(r <= prev + 1e-15);
                prev = r;
            }
        }
    }

    #[test]
    fn mills_ratio_reproduces_tail() {
        for &(t, z) in &[(1.0, 3.0), (0.5, -1.2), (2.0, 0.3), (1.0, 7.5), (0.04, 1.5)] {
            let r = mills_ratio_jet(t, z, 0).value();
            let tail = gaussian_tail(t, z);
            assert!((r * gaussian(t, z) / tail - 1.0).abs() < 1e-12, "t={t} z={z}");
        }
    }

    #[test]
    fn mills_ratio_branches_agree_at_switch() {
        let x = 6.0 / std::f64::consts::SQRT_2;
        let a = (x * x).exp() * erfc(x);
        let b = erfcx(x + 1e-12);
        assert!((a / b - 1.0).abs() < 1e-11);
    }

    #[test]
    fn mills_ratio_derivatives_match_finite_differences() {
        let (t, z) = (0.7, 0.9);
        let j = mills_ratio_jet(t, z, 3);
        let f = |z| mills_ratio_jet(t, z, 0).value();
        let h = 1e-4;
        assert!((j.derivative(1) - (f(z + h) - f(z - h)) / (2.0 * h)).abs() < 1e-7);
        assert!((j.derivative(2) - (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h)).abs() < 1e-5);
    }

    #[test]
    fn bijet_mixed_partials() {
        let x = 0.2;
        let y = -0.4;
        let h = BiJet::var_prev(x) * BiJet::var_prev(x) * BiJet::var_next(y)
            + BiJet::from_prev(Jet::variable(x).sin()) * BiJet::from_next(Jet::variable(y).sin());
        let a = h.d_prev().d_next().value();
        let b = h.d_next().d_prev().value();
        assert!((a - b).abs() < 1e-14);
        assert!((a - (2.0 * x + x.cos() * y.cos())).abs() < 1e-14);
    }

    #[test]
    #[should_panic(expected = "partial of order")]
    fn reading_beyond_order_panics() {
        let h = BiJet::var_next(1.0).d_next().d_next();
        let _ = h.partial(0, 2);
    }

    proptest! {
        #[test]
        fn leibniz_rule_holds(a in proptest::array::uniform4(-2.0f64..2.0),
                              b in proptest::array::uniform4(-2.0f64..2.0),
                              x in -1.0f64..1.0) {
            let f = poly_jet(&a, x);
            let g = poly_jet(&b, x);
            let p = f * g;
            let d = f.derivatives();
            let e = g.derivatives();
            let expect2 = d[2] * e[0] + 2.0 * d[1] * e[1] + d[0] * e[2];
            let expect3 = d[3] * e[0] + 3.0 * d[2] * e[1] + 3.0 * d[1] * e[2] + d[0] * e[3];
            prop_assert!((p.derivative(2) - expect2).abs() < 1e-10);
            prop_assert!((p.derivative(3) - expect3).abs() < 1e-10);
        }

        #[test]
        fn merged_extraction_identity(a in proptest::array::uniform4(-2.0f64..2.0),
                                      b in proptest::array::uniform4(-2.0f64..2.0),
                                      y in -1.0f64..2.0,
                                      dt in 0.05f64..2.0) {
            let sig = Jet::variable(0.4).scale(0.5).sin() + 1.5;
            let m = MergedOps::new(sig, 1.3, 0.4, y, 0.0, dt);
            let h1 = BiJet::from_next(poly_jet(&a, y));
            let h2 = BiJet::from_next(poly_jet(&b, y));
            let lhs = m.apply_i(h1 * h2).value();
            let rhs = m.apply_i(h1).value() * h2.value() - h1.value() * h2.d_next().value();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            // Second order: I²(h1 h2) = I²(h1) h2 − 2 I(h1) D h2 + h1 D² h2.
            let lhs2 = m.apply_i2(h1 * h2).value();
            let rhs2 = m.apply_i2(h1).value() * h2.value()
                - 2.0 * m.apply_i(h1).value() * h2.d_next().value()
                + h1.value() * h2.d_next().d_next().value();
            prop_assert!((lhs2 - rhs2).abs() <= 1e-12 * (1.0 + lhs2.abs()));
        }
    }
}
