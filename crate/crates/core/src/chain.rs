//! The reflection chain and the merged boundary transition.

use crate::model::Model;
use crate::renewal::Path;

/// Mean of the reflection step: `x` when `ρ = 1`, its mirror `2L − x` otherwise.
#[inline]
pub fn reflected_mean(x: f64, rho: bool, barrier: f64) -> f64 {
    if rho {
        x
    } else {
        2.0 * barrier - x
    }
}

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub index: usize,
    pub x_prev: f64,
    pub x_next: f64,
    pub rho: bool,
    pub t_prev: f64,
    pub t_next: f64,
    /// Raw Brownian increment over the step.
    pub z: f64,
    pub sigma_prev: f64,
}

impl Step {
    /// Advance from `x_prev` with increment `z`.
    pub fn advance(model: &Model, index: usize, x_prev: f64, rho: bool, t_prev: f64, t_next: f64, z: f64) -> Step {
        let sigma_prev = model.sigma(x_prev);
        let x_next = reflected_mean(x_prev, rho, model.barrier) + sigma_prev * z;
        Step {
            index,
            x_prev,
            x_next,
            rho,
            t_prev,
            t_next,
            z,
            sigma_prev,
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_next - self.t_prev
    }

    /// Increment recovered from the two states.
    pub fn reconstructed_increment(&self, barrier: f64) -> f64 {
        (self.x_next - reflected_mean(self.x_prev, self.rho, barrier)) / self.sigma_prev
    }

    /// `(∂x_next/∂x_prev, ∂²x_next/∂x_prev²)` at fixed increment.
    pub fn flow_derivatives(&self, model: &Model) -> (f64, f64) {
        let s = model.coefficients().sigma(self.x_prev);
        let sign = if self.rho { 1.0 } else { -1.0 };
        (sign + s.derivative(1) * self.z, s.derivative(2) * self.z)
    }
}

/// One merged boundary transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedStep {
    pub x_prev: f64,
    pub x_merged: f64,
    pub z_sum: f64,
    pub t_prev: f64,
    pub t_end: f64,
    /// `μ(x_prev) = −σ(L)/σ(x_prev)`.
    pub mu: f64,
}

impl MergedStep {
    pub fn dt(&self) -> f64 {
        self.t_end - self.t_prev
    }
}

/// Mean of the merged transition, `L(1 − μ) + x μ`.
#[inline]
pub fn merged_mean(x_prev: f64, mu: f64, barrier: f64) -> f64 {
    barrier * (1.0 - mu) + x_prev * mu
}

/// `X̄∂ = L(1 − μ) + x_prev μ + σ(L) z_sum`.
pub fn merged_transition(model: &Model, x_prev: f64, z_sum: f64, t_prev: f64, t_end: f64) -> MergedStep {
    let sl = model.sigma(model.barrier);
    let sp = model.sigma(x_prev);
    assert!(sp > 0.0 && sl > 0.0, "diffusion coefficient must be positive");
    let mu = -sl / sp;
    MergedStep {
        x_prev,
        x_merged: merged_mean(x_prev, mu, model.barrier) + sl * z_sum,
        z_sum,
        t_prev,
        t_end,
        mu,
    }
}

/// States `X̄_0..X̄_{n+1}` and alive flags `1{X̄_i ≥ L}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub states: Vec<f64>,
    pub alive: Vec<bool>,
}

/// Run the chain along `path` from the model's start point.
pub fn propagate(model: &Model, path: &Path) -> ChainState {
    let n = path.n_jumps();
    let mut states = Vec::with_capacity(n + 2);
    let mut alive = Vec::with_capacity(n + 2);
    let mut x = model.start;
    states.push(x);
    alive.push(x >= model.barrier);
    for i in 1..=n + 1 {
        let s = Step::advance(model, i, x, path.sign(i), path.time(i - 1), path.time(i), path.increment(i));
        x = s.x_next;
        states.push(x);
        alive.push(x >= model.barrier);
    }
    ChainState { states, alive }
}
