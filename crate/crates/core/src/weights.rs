//! Per-interval weights of the chain representation and its two
//! integration-by-parts formulas.
//!
//! Each interval carries a normalisation `κ`: `1/λ` (Poisson) or `1/f(Δ)`
//! (renewal) on interior intervals, `e^{λT}` or `1/(1 − F(Δ))` on the last one.

use crate::calculus::{mills_ratio_jet, BiJet, Jet, MergedOps, StepOps};
use crate::chain::{merged_mean, reflected_mean, MergedStep, Step};
use crate::model::Model;
use crate::renewal::JumpLaw;

/// How jump times were sampled, which fixes `κ` on each interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    Poisson { lambda: f64 },
    Renewal(JumpLaw),
}

impl Normalization {
    /// `κ` for an interval of length `dt`; `horizon` is only used by the
    /// Poisson form of the last interval.
    pub fn kappa(&self, dt: f64, is_last: bool, horizon: f64) -> f64 {
        match (*self, is_last) {
            (Normalization::Poisson { lambda }, false) => 1.0 / lambda,
            (Normalization::Poisson { lambda }, true) => (lambda * horizon).exp(),
            (Normalization::Renewal(law), false) => 1.0 / law.density(dt),
            (Normalization::Renewal(law), true) => 1.0 / law.survival(dt),
        }
    }
}

/// Coefficient jets at one state.
#[derive(Debug, Clone, Copy)]
pub struct Local {
    pub x: f64,
    pub sigma: Jet,
    pub drift: Jet,
    pub a: Jet,
}

impl Local {
    pub fn at(model: &Model, x: f64) -> Self {
        let c = model.coefficients();
        let sigma = c.sigma(x);
        Local {
            x,
            sigma,
            drift: c.drift(x),
            a: sigma * sigma,
        }
    }
}

/// Which coefficient multiplies the last-interval `⊛` merged weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LastCircledast {
    /// `a'(L) − b(L)`, the same coefficient as every other merged weight.
    #[default]
    Consistent,
    /// `2a'(L) − b(L)`.
    DoubledDerivative,
}

/// All weights of one interval, evaluated at the interval's end point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepWeights {
    /// `θ̄`.
    pub theta_bar: f64,
    /// `I(θ̄)`.
    pub ibp_weight: f64,
    pub theta_e_back: f64,
    pub theta_c_back: f64,
    pub theta_partial_back: f64,
    pub theta_e_fwd: f64,
    /// `I(θ⃗ᵉ)`.
    pub ibp_fwd: f64,
    pub theta_c_fwd: f64,
}

/// Merged-transition weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MergedWeights {
    pub theta_star: f64,
    pub theta_circledast: f64,
}

/// Model-level data shared by all weight evaluations of a run.
#[derive(Debug, Clone)]
pub struct WeightContext<'m> {
    pub model: &'m Model,
    pub norm: Normalization,
    pub at_barrier: Local,
    /// `b(L) − a'(L)`: the coefficient of every boundary term.
    boundary_coef: f64,
    pub last_circledast: LastCircledast,
}

impl<'m> WeightContext<'m> {
    pub fn new(model: &'m Model, norm: Normalization) -> Self {
        let at_barrier = Local::at(model, model.barrier);
        WeightContext {
            model,
            norm,
            at_barrier,
            boundary_coef: at_barrier.drift.value() - at_barrier.a.derivative(1),
            last_circledast: LastCircledast::default(),
        }
    }

    pub fn with_last_circledast(mut self, v: LastCircledast) -> Self {
        self.last_circledast = v;
        self
    }

    pub fn kappa(&self, dt: f64, is_last: bool) -> f64 {
        self.norm.kappa(dt, is_last, self.model.horizon)
    }

    /// `θ̄` on an interior interval, closed form.
    pub fn base_weight(&self, prev: &Local, next: &Local, rho: bool, dt: f64, kappa: f64) -> f64 {
        let l = self.model.barrier;
        let s = if rho { 1.0 } else { -1.0 };
        let sig = prev.sigma.value();
        let z = (next.x - reflected_mean(prev.x, rho, l)) / sig;
        let i1 = z / (sig * dt);
        let i2 = i1 * i1 - 1.0 / (sig * sig * dt);
        let c2 = 0.5 * (next.a.value() - prev.a.value());
        let [b, b1, ..] = next.drift.derivatives();
        let [_, a1, a2, _] = next.a.derivatives();
        2.0 * s * kappa * (b * i1 - b1 + c2 * i2 - a1 * i1 + 0.5 * a2)
    }

    /// `θ⃖ᵉ` on an interior interval, closed form.
    pub fn backward_e_weight(&self, prev: &Local, next: &Local, rho: bool, dt: f64, kappa: f64) -> f64 {
        let l = self.model.barrier;
        let s = if rho { 1.0 } else { -1.0 };
        let sig = prev.sigma.value();
        let sp1 = prev.sigma.derivative(1);
        let z = (next.x - reflected_mean(prev.x, rho, l)) / sig;
        let i1 = z / (sig * dt);
        let i2 = i1 * i1 - 1.0 / (sig * sig * dt);
        let c2 = 0.5 * (next.a.value() - prev.a.value());
        let [b, b1, ..] = next.drift.derivatives();
        let [_, a1, a2, _] = next.a.derivatives();
        let v = s + sp1 * z;
        let d1 = b - 0.5 * s * (a1 * v - prev.a.derivative(1));
        let d1p = b1 - 0.5 * s * (a2 * v + a1 * sp1 / sig);
        2.0 * kappa * (c2 * i2 - a1 * i1 + 0.5 * a2 + d1 * i1 - d1p)
    }

    /// Every weight of one interval, by operator composition on bijets.
    pub fn step_weights(&self, prev: &Local, next: &Local, rho: bool, dt: f64, kappa: f64, is_last: bool) -> StepWeights {
        let ops = StepOps::new(prev.sigma, prev.x, next.x, rho, self.model.barrier, dt);
        let s = ops.sign;
        let (bar, e_back, e_fwd) = if is_last {
            let bar = BiJet::constant(2.0 * kappa * s);
            (bar, BiJet::constant(2.0 * kappa), ops.flow * bar)
        } else {
            let c1 = BiJet::from_next(next.drift);
            let c2 = (BiJet::from_next(next.a) - BiJet::from_prev(prev.a)) * 0.5;
            let i2_c2 = ops.apply_i2(c2);
            let bar = (ops.apply_i(c1) + i2_c2) * (2.0 * kappa * s);
            let dc2 = ops.total_derivative(c2);
            let e_back = (i2_c2 + ops.apply_i(c1 - dc2 * s)) * (2.0 * kappa);
            let e_fwd = (i2_c2 + ops.apply_i(c1 + dc2 * s)) * (2.0 * kappa);
            (bar, e_back, e_fwd)
        };
        let sp = ops.sigma_prime;
        let c_back = ops.apply_i(bar - e_back * s) - ops.total_derivative(e_back) - ops.apply_i(ops.z * e_back) * sp;
        let c_fwd = ops.apply_i(bar * s - e_fwd) + ops.total_derivative(bar) + ops.apply_i(ops.z * bar) * sp;
        let partial = if is_last {
            0.0
        } else {
            -2.0 * s * kappa * self.boundary_coef * ops.i1.value()
        };
        let w = StepWeights {
            theta_bar: bar.value(),
            ibp_weight: ops.apply_i(bar).value(),
            theta_e_back: e_back.value(),
            theta_c_back: c_back.value(),
            theta_partial_back: partial,
            theta_e_fwd: e_fwd.value(),
            ibp_fwd: ops.apply_i(e_fwd).value(),
            theta_c_fwd: c_fwd.value(),
        };
        debug_assert!(
            [w.theta_bar, w.ibp_weight, w.theta_e_back, w.theta_c_back, w.theta_e_fwd, w.ibp_fwd, w.theta_c_fwd]
                .iter()
                .all(|v| v.is_finite()),
            "non-finite weight"
        );
        w
    }

    /// Weights of the merged transition from `prev` to `x_merged` over `dt`.
    pub fn merged_weights(&self, prev: &Local, x_merged: f64, dt: f64, kappa: f64, is_last: bool) -> MergedWeights {
        let l = self.model.barrier;
        let sl = self.at_barrier.sigma.value();
        let al = self.at_barrier.a.value();
        let ax = prev.a.value();
        let coef = self.boundary_coef;
        let lift = 4.0 * kappa * coef;
        let circ_scale = (prev.x - l) / (ax.powf(1.5) * sl);
        let mu = -sl / prev.sigma.value();
        let offset = x_merged - merged_mean(prev.x, mu, l);
        if is_last {
            let coef_last = match self.last_circledast {
                LastCircledast::Consistent => coef,
                LastCircledast::DoubledDerivative => coef - self.at_barrier.a.derivative(1),
            };
            let r = mills_ratio_jet(al * dt, offset, 0).value();
            return MergedWeights {
                theta_star: lift / ax,
                theta_circledast: 4.0 * kappa * coef_last * circ_scale * r,
            };
        }
        if coef == 0.0 {
            return MergedWeights::default();
        }
        let next = Local::at(self.model, x_merged);
        let ops = MergedOps::new(prev.sigma, sl, prev.x, x_merged, l, dt);
        let d1 = BiJet::from_next(next.drift) - BiJet::from_next(next.a.differentiate()) * 0.5;
        let d2 = (BiJet::from_next(next.a) + (-al)) * 0.5;
        let star = (ops.apply_i2(d2) + ops.apply_i(d1)).value() * lift / ax;
        let rj = mills_ratio_jet(al * dt, offset, 3).derivatives();
        let ratio = ops.offset.compose(&rj);
        let circ = (ops.apply_i2(d2 * ratio) + ops.apply_i(d1 * ratio)).value() * lift * circ_scale;
        MergedWeights {
            theta_star: star,
            theta_circledast: circ,
        }
    }
}

/// `θ̄` for a chain step (interior or last).
pub fn base_weight(norm: Normalization, model: &Model, step: &Step, is_last: bool) -> f64 {
    let ctx = WeightContext::new(model, norm);
    let kappa = ctx.kappa(step.dt(), is_last);
    if is_last {
        return 2.0 * kappa * if step.rho { 1.0 } else { -1.0 };
    }
    let prev = Local::at(model, step.x_prev);
    let next = Local::at(model, step.x_next);
    ctx.base_weight(&prev, &next, step.rho, step.dt(), kappa)
}

/// `(θ⃖ᵉ, θ⃖ᶜ, θ⃖∂)` for a chain step.
pub fn backward_triple(norm: Normalization, model: &Model, step: &Step, is_last: bool) -> (f64, f64, f64) {
    let w = full_step(norm, model, step, is_last);
    (w.theta_e_back, w.theta_c_back, w.theta_partial_back)
}

/// `(θ⃗ᵉ, θ⃗ᶜ)` for a chain step.
pub fn forward_triple(norm: Normalization, model: &Model, step: &Step, is_last: bool) -> (f64, f64) {
    let w = full_step(norm, model, step, is_last);
    (w.theta_e_fwd, w.theta_c_fwd)
}

fn full_step(norm: Normalization, model: &Model, step: &Step, is_last: bool) -> StepWeights {
    let ctx = WeightContext::new(model, norm);
    let prev = Local::at(model, step.x_prev);
    let next = Local::at(model, step.x_next);
    ctx.step_weights(&prev, &next, step.rho, step.dt(), ctx.kappa(step.dt(), is_last), is_last)
}

/// `θ^{∂*e}` for a merged step.
pub fn merged_star(norm: Normalization, model: &Model, step: &MergedStep, is_last: bool) -> f64 {
    merged(norm, model, step, is_last).theta_star
}

/// `θ^{∂⊛e}` for a merged step.
pub fn merged_circledast(norm: Normalization, model: &Model, step: &MergedStep, is_last: bool) -> f64 {
    merged(norm, model, step, is_last).theta_circledast
}

fn merged(norm: Normalization, model: &Model, step: &MergedStep, is_last: bool) -> MergedWeights {
    let ctx = WeightContext::new(model, norm);
    let prev = Local::at(model, step.x_prev);
    ctx.merged_weights(&prev, step.x_merged, step.dt(), ctx.kappa(step.dt(), is_last), is_last)
}
