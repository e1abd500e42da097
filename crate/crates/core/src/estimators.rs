//! One replication of each estimator.
//!
//! Every estimator is a product of per-interval weights along the chain,
//! closed by a terminal functional on the last interval: either a test
//! function of the sampled end point or a killed transition density at a
//! fixed point `z`. The IBP and BEL terms are scaled by `T`: their means are
//! `T E[f'(X_T) 1{τ>T}]` and `T ∂_x E[f(X_T) 1{τ>T}]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::gaussian;
use crate::chain::{merged_mean, reflected_mean};
use crate::model::{Model, TestFunction};
use crate::renewal::Path;
use crate::weights::{Local, Normalization, StepWeights, WeightContext};

/// How the Gaussian factor of a density terminal is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFactor {
    /// `½ Σ_ρ g(a(X̄_n)Δ, z − m_ρ(X̄_n))`, last-interval weights evaluated at `z`.
    #[default]
    Mixture,
    /// `g(a(X̄_n)Δ, z − X̄_n)` times the sampled last-interval weights.
    Printed,
}

/// Terminal functional applied on the last interval.
#[derive(Clone, Copy)]
pub enum Terminal<'a> {
    Function(&'a TestFunction),
    Density { z: f64, factor: DensityFactor },
}

impl fmt::Debug for Terminal<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Function(t) => write!(f, "Function({t:?})"),
            Terminal::Density { z, factor } => write!(f, "Density {{ z: {z}, factor: {factor:?} }}"),
        }
    }
}

/// Distinguished symbol of a branch of the IBP expansions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchSymbol {
    /// Local integration by parts on interval `k`.
    I(usize),
    /// Transfer correction on interval `j`.
    C(usize),
    /// Boundary-merged `∗` weight on interval `j`.
    B(usize),
    /// Boundary-merged `⊛` weight on interval `k`.
    CircB(usize),
    /// Forward local integration by parts on interval `k`.
    ForwardI(usize),
    /// Forward transfer correction on interval `j`.
    ForwardC(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

/// All branch symbols for `n` jumps.
pub fn enumerate_branches(n: usize, direction: Direction) -> Vec<BranchSymbol> {
    match direction {
        Direction::Backward => (1..=n + 1)
            .map(BranchSymbol::I)
            .chain((2..=n + 1).map(BranchSymbol::C))
            .chain((2..=n + 1).map(BranchSymbol::B))
            .chain((1..=n + 1).map(BranchSymbol::CircB))
            .collect(),
        Direction::Forward => (1..=n + 1)
            .map(BranchSymbol::ForwardI)
            .chain((1..=n).map(BranchSymbol::ForwardC))
            .collect(),
    }
}

/// The three estimator terms of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReplicationResult {
    pub value_term: f64,
    pub ibp_term: f64,
    pub bel_term: f64,
}

/// Weighted end points of the last interval.
#[derive(Debug, Clone, Copy, Default)]
struct Sample {
    factor: f64,
    weights: StepWeights,
}

type Samples = [Sample; 2];

/// Per-replication evaluator bound to a model and a time normalisation.
#[derive(Debug, Clone)]
pub struct Estimator<'m> {
    ctx: WeightContext<'m>,
}

/// Base chain of one path with its interior weights.
struct Chain {
    /// `X̄_0..X̄_n` with coefficient jets.
    locals: Vec<Local>,
    /// Interior weights, index `i − 1` for interval `i ≤ n`.
    weights: Vec<StepWeights>,
    alive: Vec<bool>,
}

impl<'m> Estimator<'m> {
    pub fn new(model: &'m Model, norm: Normalization) -> Self {
        Estimator {
            ctx: WeightContext::new(model, norm),
        }
    }

    pub fn with_context(ctx: WeightContext<'m>) -> Self {
        Estimator { ctx }
    }

    pub fn model(&self) -> &'m Model {
        self.ctx.model
    }

    fn barrier(&self) -> f64 {
        self.ctx.model.barrier
    }

    fn kappa(&self, path: &Path, i: usize) -> f64 {
        self.ctx.kappa(path.dt(i), i == path.n_jumps() + 1)
    }

    /// Base chain `X̄_0..X̄_n`; stops early at the first death when `full` is false.
    fn chain(&self, path: &Path, full_weights: bool) -> Chain {
        let n = path.n_jumps();
        let l = self.barrier();
        let mut locals = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n);
        let mut alive = Vec::with_capacity(n);
        let mut prev = Local::at(self.ctx.model, self.ctx.model.start);
        locals.push(prev);
        for i in 1..=n {
            let rho = path.sign(i);
            let y = reflected_mean(prev.x, rho, l) + prev.sigma.value() * path.increment(i);
            let next = Local::at(self.ctx.model, y);
            let dt = path.dt(i);
            let k = self.kappa(path, i);
            let w = if full_weights {
                self.ctx.step_weights(&prev, &next, rho, dt, k, false)
            } else {
                StepWeights {
                    theta_bar: self.ctx.base_weight(&prev, &next, rho, dt, k),
                    ..Default::default()
                }
            };
            locals.push(next);
            weights.push(w);
            alive.push(y >= l);
            prev = next;
        }
        Chain { locals, weights, alive }
    }

    /// End points of the last interval from `prev`, with last-interval weights.
    fn terminal(&self, term: Terminal<'_>, prev: &Local, path: &Path) -> Samples {
        let n = path.n_jumps();
        let l = self.barrier();
        let dt = path.dt(n + 1);
        let k = self.kappa(path, n + 1);
        let mut out = Samples::default();
        let rho = path.sign(n + 1);
        let sampled = reflected_mean(prev.x, rho, l) + prev.sigma.value() * path.increment(n + 1);
        let at = |y: f64, rho: bool| {
            let next = Local::at(self.ctx.model, y);
            self.ctx.step_weights(prev, &next, rho, dt, k, true)
        };
        match term {
            Terminal::Function(f) => {
                if sampled >= l {
                    out[0] = Sample {
                        factor: f.value(sampled),
                        weights: at(sampled, rho),
                    };
                }
            }
            Terminal::Density { z, factor } => {
                if z < l {
                    return out;
                }
                let v = prev.a.value() * dt;
                match factor {
                    DensityFactor::Mixture => {
                        for (slot, r) in out.iter_mut().zip([true, false]) {
                            *slot = Sample {
                                factor: 0.5 * gaussian(v, z - reflected_mean(prev.x, r, l)),
                                weights: at(z, r),
                            };
                        }
                    }
                    DensityFactor::Printed => {
                        if sampled >= l {
                            out[0] = Sample {
                                factor: gaussian(v, z - prev.x),
                                weights: at(sampled, rho),
                            };
                        }
                    }
                }
            }
        }
        out
    }

    /// Merged last interval from `prev`: `(factor, x_merged)` pairs.
    fn merged_terminal(&self, term: Terminal<'_>, prev: &Local, path: &Path) -> [(f64, f64); 1] {
        let n = path.n_jumps();
        let l = self.barrier();
        let sl = self.ctx.at_barrier.sigma.value();
        let mu = -sl / prev.sigma.value();
        let m = merged_mean(prev.x, mu, l);
        match term {
            Terminal::Function(f) => {
                let y = m + sl * path.increment(n + 1);
                if y >= l {
                    [(f.value(y), y)]
                } else {
                    [(0.0, y)]
                }
            }
            Terminal::Density { z, .. } => {
                if z < l {
                    return [(0.0, z)];
                }
                [(gaussian(self.ctx.at_barrier.a.value() * path.dt(n + 1), z - m), z)]
            }
        }
    }

    /// `f(X̄_{n+1}) Π 1{X̄_i ≥ L} θ̄_i`.
    pub fn value_term(&self, term: Terminal<'_>, path: &Path) -> f64 {
        let n = path.n_jumps();
        let l = self.barrier();
        let mut prod = 1.0;
        let mut prev = Local::at(self.ctx.model, self.ctx.model.start);
        for i in 1..=n {
            let rho = path.sign(i);
            let y = reflected_mean(prev.x, rho, l) + prev.sigma.value() * path.increment(i);
            if y < l {
                return 0.0;
            }
            let next = Local::at(self.ctx.model, y);
            prod *= self.ctx.base_weight(&prev, &next, rho, path.dt(i), self.kappa(path, i));
            if prod == 0.0 {
                return 0.0;
            }
            prev = next;
        }
        let last: f64 = self
            .terminal(term, &prev, path)
            .iter()
            .map(|s| s.factor * s.weights.theta_bar)
            .sum();
        prod * last
    }

    /// Backward IBP term; contributions per branch are pushed to `branches`.
    pub fn ibp_term_with_branches(&self, term: Terminal<'_>, path: &Path, mut branches: Option<&mut Vec<(BranchSymbol, f64)>>) -> f64 {
        let n = path.n_jumps();
        let l = self.barrier();
        let ch = self.chain(path, true);
        // P_k = Π_{i<k} A_i θ̄_i for k = 1..n+1.
        let mut p = vec![1.0; n + 2];
        for k in 2..=n + 1 {
            let i = k - 1;
            p[k] = if ch.alive[i - 1] { p[k - 1] * ch.weights[i - 1].theta_bar } else { 0.0 };
        }
        // S'_k = Π_{k<i≤n} A_i θ⃖ᵉ_i for k = 1..n.
        let mut s = vec![1.0; n + 2];
        for k in (1..n).rev() {
            let i = k + 1;
            s[k] = if ch.alive[i - 1] { s[k + 1] * ch.weights[i - 1].theta_e_back } else { 0.0 };
        }
        let last = self.terminal(term, &ch.locals[n], path);
        let sum_last = |f: fn(&StepWeights) -> f64| last.iter().map(|x| x.factor * f(&x.weights)).sum::<f64>();
        let le = sum_last(|w| w.theta_e_back);
        let mut total = 0.0;
        let mut push = |sym: BranchSymbol, v: f64, total: &mut f64| {
            *total += v;
            if let Some(b) = branches.as_deref_mut() {
                b.push((sym, v));
            }
        };
        for k in 1..=n {
            let w = &ch.weights[k - 1];
            let a = if ch.alive[k - 1] { 1.0 } else { 0.0 };
            let v = path.dt(k) * p[k] * a * w.ibp_weight * s[k] * le;
            push(BranchSymbol::I(k), v, &mut total);
        }
        push(BranchSymbol::I(n + 1), path.dt(n + 1) * p[n + 1] * sum_last(|w| w.ibp_weight), &mut total);
        for j in 2..=n {
            let w = &ch.weights[j - 1];
            let a = if ch.alive[j - 1] { 1.0 } else { 0.0 };
            let v = path.time(j - 1) * p[j] * a * w.theta_c_back * s[j] * le;
            push(BranchSymbol::C(j), v, &mut total);
        }
        if n >= 1 {
            push(BranchSymbol::C(n + 1), path.time(n) * p[n + 1] * sum_last(|w| w.theta_c_back), &mut total);
        }
        // Merged branches.
        let sl = self.ctx.at_barrier.sigma.value();
        for j in 1..=n + 1 {
            if p[j] == 0.0 {
                if j >= 2 {
                    push(BranchSymbol::B(j), 0.0, &mut total);
                }
                push(BranchSymbol::CircB(j), 0.0, &mut total);
                continue;
            }
            let prev = &ch.locals[j - 1];
            let pre = path.time(j - 1);
            let (star, circ) = if j == n + 1 {
                let k = self.kappa(path, j);
                let mut star = 0.0;
                let mut circ = 0.0;
                for (factor, y) in self.merged_terminal(term, prev, path) {
                    if factor != 0.0 {
                        let mw = self.ctx.merged_weights(prev, y, path.dt(j), k, true);
                        star += factor * mw.theta_star;
                        circ += factor * mw.theta_circledast;
                    }
                }
                (pre * star, circ)
            } else {
                let mu = -sl / prev.sigma.value();
                let y = merged_mean(prev.x, mu, l) + sl * path.increment(j);
                if y < l {
                    (0.0, 0.0)
                } else {
                    let mw = self.ctx.merged_weights(prev, y, path.dt(j), self.kappa(path, j), false);
                    let tail = self.merged_tail(term, path, j, Local::at(self.ctx.model, y));
                    (pre * mw.theta_star * tail, mw.theta_circledast * tail)
                }
            };
            if j >= 2 {
                push(BranchSymbol::B(j), p[j] * star, &mut total);
            }
            push(BranchSymbol::CircB(j), p[j] * circ, &mut total);
        }
        total
    }

    /// Backward IBP term, mean `T E[f'(X_T) 1{τ>T}]` for a function terminal.
    pub fn ibp_term(&self, term: Terminal<'_>, path: &Path) -> f64 {
        self.ibp_term_with_branches(term, path, None)
    }

    /// `Π_{j<i≤n} 1 θ⃖ᵉ_i` along the chain restarted at `start` after interval
    /// `j`, closed by the terminal's `θ⃖ᵉ`.
    fn merged_tail(&self, term: Terminal<'_>, path: &Path, j: usize, start: Local) -> f64 {
        let n = path.n_jumps();
        let l = self.barrier();
        let mut prev = start;
        let mut prod = 1.0;
        for i in j + 1..=n {
            let rho = path.sign(i);
            let y = reflected_mean(prev.x, rho, l) + prev.sigma.value() * path.increment(i);
            if y < l {
                return 0.0;
            }
            let next = Local::at(self.ctx.model, y);
            prod *= self.ctx.backward_e_weight(&prev, &next, rho, path.dt(i), self.kappa(path, i));
            if prod == 0.0 {
                return 0.0;
            }
            prev = next;
        }
        let last: f64 = self
            .terminal(term, &prev, path)
            .iter()
            .map(|s| s.factor * s.weights.theta_e_back)
            .sum();
        prod * last
    }

    /// BEL term; contributions per branch are pushed to `branches`.
    pub fn bel_term_with_branches(&self, term: Terminal<'_>, path: &Path, mut branches: Option<&mut Vec<(BranchSymbol, f64)>>) -> f64 {
        let n = path.n_jumps();
        let horizon = path.horizon();
        let ch = self.chain(path, true);
        let alive = |i: usize| if ch.alive[i - 1] { 1.0 } else { 0.0 };
        // Q_k = Π_{i<k} A_i θ⃗ᵉ_i.
        let mut q = vec![1.0; n + 2];
        for k in 2..=n + 1 {
            q[k] = q[k - 1] * alive(k - 1) * ch.weights[k - 2].theta_e_fwd;
        }
        // R'_k = Π_{k<i≤n} A_i θ̄_i.
        let mut r = vec![1.0; n + 2];
        for k in (1..n).rev() {
            r[k] = r[k + 1] * alive(k + 1) * ch.weights[k].theta_bar;
        }
        let last = self.terminal(term, &ch.locals[n], path);
        let lbar: f64 = last.iter().map(|s| s.factor * s.weights.theta_bar).sum();
        let lif: f64 = last.iter().map(|s| s.factor * s.weights.ibp_fwd).sum();
        let mut total = 0.0;
        let mut push = |sym: BranchSymbol, v: f64| {
            total += v;
            if let Some(b) = branches.as_deref_mut() {
                b.push((sym, v));
            }
        };
        for k in 1..=n {
            let w = &ch.weights[k - 1];
            push(BranchSymbol::ForwardI(k), path.dt(k) * q[k] * alive(k) * w.ibp_fwd * r[k] * lbar);
        }
        push(BranchSymbol::ForwardI(n + 1), path.dt(n + 1) * q[n + 1] * lif);
        for j in 1..=n {
            let w = &ch.weights[j - 1];
            push(BranchSymbol::ForwardC(j), (horizon - path.time(j - 1)) * q[j] * alive(j) * w.theta_c_fwd * r[j] * lbar);
        }
        total
    }

    /// BEL term, mean `T ∂_x E[f(X_T) 1{τ>T}]` for a function terminal.
    pub fn bel_term(&self, term: Terminal<'_>, path: &Path) -> f64 {
        self.bel_term_with_branches(term, path, None)
    }

    /// All three terms for a function terminal.
    pub fn replicate(&self, f: &TestFunction, path: &Path) -> ReplicationResult {
        let t = Terminal::Function(f);
        ReplicationResult {
            value_term: self.value_term(t, path),
            ibp_term: self.ibp_term(t, path),
            bel_term: self.bel_term(t, path),
        }
    }
}

/// `f(X̄_{n+1}) Π 1 θ̄`; mean `E[f(X_T) 1{τ>T}]`.
pub fn value_term(model: &Model, norm: Normalization, f: &TestFunction, path: &Path) -> f64 {
    Estimator::new(model, norm).value_term(Terminal::Function(f), path)
}

/// Mean `T E[f'(X_T) 1{τ>T}]`; `f` is shifted to vanish at `L` first.
pub fn ibp_backward_term(model: &Model, norm: Normalization, f: &TestFunction, path: &Path) -> f64 {
    let g = f.shifted(model.barrier);
    Estimator::new(model, norm).ibp_term(Terminal::Function(&g), path)
}

/// Mean `T ∂_x E[f(X_T) 1{τ>T}]`; requires `f(L) = 0`.
pub fn bel_term(model: &Model, norm: Normalization, f: &TestFunction, path: &Path) -> f64 {
    debug_assert!(f.vanishes_at(model.barrier), "the forward formula needs f(L) = 0");
    Estimator::new(model, norm).bel_term(Terminal::Function(f), path)
}

/// Mean `p(T, x, z)`, the killed density.
pub fn density_value(model: &Model, norm: Normalization, path: &Path, z: f64) -> f64 {
    Estimator::new(model, norm).value_term(
        Terminal::Density {
            z,
            factor: DensityFactor::Mixture,
        },
        path,
    )
}

/// Mean `T ∂_z p(T, x, z)`.
pub fn density_derivative_terminal(model: &Model, norm: Normalization, path: &Path, z: f64, factor: DensityFactor) -> f64 {
    -Estimator::new(model, norm).ibp_term(Terminal::Density { z, factor }, path)
}

/// Mean `T ∂_x p(T, x, z)`.
pub fn density_derivative_initial(model: &Model, norm: Normalization, path: &Path, z: f64, factor: DensityFactor) -> f64 {
    Estimator::new(model, norm).bel_term(Terminal::Density { z, factor }, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, SineMartingale};
    use crate::renewal::{sample_path, JumpLaw};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bm() -> Model {
        Model::constant(1.0, 0.0, 0.0, 1.0, 1.0).unwrap()
    }

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

    fn poisson() -> Normalization {
        Normalization::Poisson { lambda: 1.0 }
    }

    #[test]
    fn branch_counts() {
        assert_eq!(enumerate_branches(0, Direction::Backward), vec![BranchSymbol::I(1), BranchSymbol::CircB(1)]);
        assert_eq!(enumerate_branches(0, Direction::Forward), vec![BranchSymbol::ForwardI(1)]);
        for n in 0..8 {
            assert_eq!(enumerate_branches(n, Direction::Backward).len(), 4 * n + 2);
            assert_eq!(enumerate_branches(n, Direction::Forward).len(), 2 * n + 1);
        }
        assert_eq!(enumerate_branches(4, Direction::Backward).len(), 18);
    }

    #[test]
    fn branch_lists_match_enumeration() {
        let m = sine(0.3);
        let f = TestFunction::power_above(0.0, 2);
        let est = Estimator::new(&m, poisson());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let path = sample_path(&JumpLaw::Exponential { lambda: 2.0 }, m.horizon, &mut rng);
            let n = path.n_jumps();
            let mut b = Vec::new();
            let total = est.ibp_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
            let mut syms: Vec<_> = b.iter().map(|x| x.0).collect();
            let mut expect = enumerate_branches(n, Direction::Backward);
            syms.sort_by_key(|s| format!("{s:?}"));
            expect.sort_by_key(|s| format!("{s:?}"));
            assert_eq!(syms, expect);
            let sum: f64 = b.iter().map(|x| x.1).sum();
            assert!((sum - total).abs() <= 1e-12 * (1.0 + total.abs()));
            let mut b = Vec::new();
            est.bel_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
            assert_eq!(b.len(), 2 * n + 1);
        }
    }

    #[test]
    fn constant_model_single_interval_terms() {
        let m = bm();
        let f = TestFunction::polynomial(&[0.0, 1.0, 0.0, 0.0]);
        let path = Path::from_parts(1.0, vec![], vec![0.3], vec![true]).unwrap();
        let e = 1f64.exp();
        let v = value_term(&m, poisson(), &f, &path);
        assert!((v - 2.0 * e * 1.3).abs() < 1e-12);
        // T f(X̄₁) 2e^{λT} (2ρ−1) Z/(σT), Z = 0.3
        let ibp = ibp_backward_term(&m, poisson(), &f, &path);
        assert!((ibp - 1.3 * 2.0 * e * 0.3).abs() < 1e-12);
        let bel = bel_term(&m, poisson(), &f, &path);
        assert!((bel - 1.3 * 2.0 * e * 0.3).abs() < 1e-12);
        let path = Path::from_parts(1.0, vec![], vec![0.3], vec![false]).unwrap();
        assert_eq!(value_term(&m, poisson(), &f, &path), 0.0);
    }

    #[test]
    fn constant_model_with_jumps_has_zero_value_and_bel() {
        let m = bm();
        let f = TestFunction::power_above(0.0, 2);
        let path = Path::from_parts(1.0, vec![0.3, 0.6], vec![0.1, 0.2, -0.1], vec![true, true, false]).unwrap();
        assert_eq!(value_term(&m, poisson(), &f, &path), 0.0);
        let mut b = Vec::new();
        let total = Estimator::new(&m, poisson()).bel_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
        assert_eq!(total, 0.0);
        assert!(b.iter().all(|x| x.1 == 0.0));
        // With zero drift every merged weight vanishes too.
        assert_eq!(ibp_backward_term(&m, poisson(), &f, &path), 0.0);
    }

    #[test]
    fn zero_on_death() {
        let m = sine(0.3);
        let f = TestFunction::power_above(0.0, 2);
        let est = Estimator::new(&m, poisson());
        // Second state is far below the barrier.
        let path = Path::from_parts(0.5, vec![0.1, 0.2, 0.3], vec![0.0, -9.0, 0.1, 0.1], vec![true, true, true, true]).unwrap();
        let mut b = Vec::new();
        est.ibp_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
        for (sym, v) in b {
            let idx = match sym {
                BranchSymbol::I(k) | BranchSymbol::CircB(k) | BranchSymbol::C(k) | BranchSymbol::B(k) => k,
                _ => unreachable!(),
            };
            if idx > 2 {
                assert_eq!(v, 0.0, "{sym:?}");
            }
        }
    }

    #[test]
    fn merged_branches_vanish_without_boundary_coefficient() {
        let m = Model::constant(0.7, 0.0, 0.0, 1.0, 0.3).unwrap();
        let f = TestFunction::power_above(0.0, 2);
        let est = Estimator::new(&m, poisson());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let path = sample_path(&JumpLaw::Exponential { lambda: 1.5 }, m.horizon, &mut rng);
            let mut b = Vec::new();
            est.ibp_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
            for (sym, v) in b {
                if matches!(sym, BranchSymbol::B(_) | BranchSymbol::CircB(_)) {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn collapsed_sums_match_explicit_double_sums() {
        // Σ_k Δ_k Σ_{j>k} X_j = Σ_j ζ_{j−1} X_j for the correction family.
        let m = sine(0.3);
        let f = TestFunction::power_above(0.0, 2);
        let est = Estimator::new(&m, poisson());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let path = sample_path(&JumpLaw::Exponential { lambda: 3.0 }, m.horizon, &mut rng);
            let mut b = Vec::new();
            est.ibp_term_with_branches(Terminal::Function(&f), &path, Some(&mut b));
            for (sym, v) in b {
                if let BranchSymbol::C(j) | BranchSymbol::B(j) = sym {
                    let zeta = path.time(j - 1);
                    if zeta == 0.0 {
                        continue;
                    }
                    let x = v / zeta;
                    let explicit: f64 = (1..j).map(|k| path.dt(k) * x).sum();
                    assert!((explicit - v).abs() <= 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }

    #[test]
    fn density_terminal_at_large_z_vanishes() {
        let m = bm();
        let path = Path::from_parts(1.0, vec![], vec![0.3], vec![true]).unwrap();
        assert!(density_derivative_terminal(&m, poisson(), &path, 60.0, DensityFactor::Mixture).abs() < 1e-300);
        assert!(density_value(&m, poisson(), &path, 60.0).abs() < 1e-300);
    }

    #[test]
    fn density_terminal_single_interval_constant_model() {
        // n = 0 with the mixture: Σ_ρ ½ g(T, z − m_ρ(x)) 2e^{λT}(2ρ−1) is the
        // killed density times e^{λT}.
        let m = bm();
        let path = Path::from_parts(1.0, vec![], vec![0.3], vec![true]).unwrap();
        let z = 0.8;
        let expect = 1f64.exp() * (gaussian(1.0, z - 1.0) - gaussian(1.0, z + 1.0));
        assert!((density_value(&m, poisson(), &path, z) - expect).abs() < 1e-14);
        // and its z-derivative times T from the IBP form.
        let dz = 1f64.exp() * (-(z - 1.0) * gaussian(1.0, z - 1.0) + (z + 1.0) * gaussian(1.0, z + 1.0));
        let got = density_derivative_terminal(&m, poisson(), &path, z, DensityFactor::Mixture);
        assert!((got - dz).abs() < 1e-12, "{got} {dz}");
        let dx = 1f64.exp() * ((z - 1.0) * gaussian(1.0, z - 1.0) + (z + 1.0) * gaussian(1.0, z + 1.0));
        let got = density_derivative_initial(&m, poisson(), &path, z, DensityFactor::Mixture);
        assert!((got - dx).abs() < 1e-12, "{got} {dx}");
    }

    #[test]
    fn terms_are_finite() {
        let m = sine(0.3);
        let f = TestFunction::power_above(0.0, 3);
        let est = Estimator::new(&m, Normalization::Renewal(JumpLaw::BetaOne { alpha: 0.5, tau: 2.0 }));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let path = sample_path(&JumpLaw::BetaOne { alpha: 0.5, tau: 2.0 }, m.horizon, &mut rng);
            let r = est.replicate(&f, &path);
            assert!(r.value_term.is_finite() && r.ibp_term.is_finite() && r.bel_term.is_finite());
        }
    }
}
