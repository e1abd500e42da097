//! SDE coefficients, barrier, horizon and test functions.

use std::fmt;
use std::sync::Arc;

use crate::calculus::Jet;
use crate::error::{Error, Result};

/// Coefficients supplied as order-3 jets.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Jet of the drift `b` at `x`.
    fn drift(&self, x: f64) -> Jet;
    /// Jet of the diffusion coefficient `σ` at `x`.
    fn sigma(&self, x: f64) -> Jet;
}

/// Constant coefficients: `σ ≡ sigma`, `b ≡ drift`.
///
/// With `drift = 0` this is scaled Brownian motion, whose killed law is known
/// in closed form by the reflection principle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub sigma: f64,
    pub drift: f64,
}

impl Coefficients for Constant {
    fn drift(&self, _x: f64) -> Jet {
        Jet::constant(self.drift)
    }
    fn sigma(&self, _x: f64) -> Jet {
        Jet::constant(self.sigma)
    }
}

/// `σ(x) = σ̄(sin(ωx) + 2)` with the drift that makes `c3 x³ + c1 x + c0` a
/// space-time harmonic function: `b(x) = −x σ²(x) / (x² + c1/(3 c3))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineMartingale {
    pub sigma_bar: f64,
    pub omega: f64,
    pub c0: f64,
    pub c1: f64,
    pub c3: f64,
}

impl SineMartingale {
    /// The harmonic polynomial `c3 x³ + c1 x + c0`.
    pub fn harmonic(&self) -> TestFunction {
        TestFunction::polynomial(&[self.c0, self.c1, 0.0, self.c3])
    }
}

impl Coefficients for SineMartingale {
    fn sigma(&self, x: f64) -> Jet {
        (Jet::variable(x).scale(self.omega).sin() + 2.0).scale(self.sigma_bar)
    }

    fn drift(&self, x: f64) -> Jet {
        let s = self.sigma(x);
        let v = Jet::variable(x);
        let den = v * v + self.c1 / (3.0 * self.c3);
        -(v * s * s * den.recip())
    }
}

/// Which coefficient [`Model::coefficient_jet`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Drift,
    Sigma,
    /// `a = σ²`.
    Diffusivity,
}

/// A one-dimensional diffusion killed at `barrier`, observed at `horizon`.
#[derive(Debug, Clone)]
pub struct Model {
    coefficients: Arc<dyn Coefficients>,
    pub barrier: f64,
    pub horizon: f64,
    pub start: f64,
}

impl Model {
    pub fn new(coefficients: Arc<dyn Coefficients>, barrier: f64, horizon: f64, start: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Model(format!("horizon must be positive, got {horizon}")));
        }
        if !(start >= barrier) {
            return Err(Error::Model(format!("start {start} lies below the barrier {barrier}")));
        }
        Ok(Model {
            coefficients,
            barrier,
            horizon,
            start,
        })
    }

    pub fn constant(sigma: f64, drift: f64, barrier: f64, horizon: f64, start: f64) -> Result<Self> {
        Self::new(Arc::new(Constant { sigma, drift }), barrier, horizon, start)
    }

    /// Same coefficients and barrier, different start point.
    pub fn with_start(&self, start: f64) -> Result<Self> {
        Self::new(self.coefficients.clone(), self.barrier, self.horizon, start)
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    /// Value and derivatives up to `order` of b, σ or a = σ² at `x`.
    pub fn coefficient_jet(&self, which: Coefficient, x: f64, order: usize) -> Jet {
        assert!(order <= 3, "coefficient jets are available up to order 3");
        let j = match which {
            Coefficient::Drift => self.coefficients.drift(x),
            Coefficient::Sigma => self.coefficients.sigma(x),
            Coefficient::Diffusivity => {
                let s = self.coefficients.sigma(x);
                s * s
            }
        };
        j.truncate(order)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.coefficients.sigma(x).value()
    }

    /// Probe σ² over `grid`; reject non-positive values.
    pub fn validate(&self, grid: &[f64]) -> Result<ValidationReport> {
        if grid.is_empty() {
            return Err(Error::Model("validation grid is empty".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in grid {
            let s = self.sigma(x);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Model(format!(
                    "ellipticity fails: sigma({x}) = {s} is not positive"
                )));
            }
            lo = lo.min(s * s);
            hi = hi.max(s * s);
        }
        let drift_bound = grid
            .iter()
            .map(|&x| self.coefficients.drift(x).value().abs())
            .fold(0.0, f64::max);
        Ok(ValidationReport {
            min_diffusivity: lo,
            max_diffusivity: hi,
            max_abs_drift: drift_bound,
            generator_residual: None,
        })
    }

    /// Default probe grid `[L, L + 10 σ(x) √T]` with 201 points.
    pub fn default_grid(&self) -> Vec<f64> {
        let width = 10.0 * self.sigma(self.start).abs().max(1e-3) * self.horizon.sqrt();
        (0..=200)
            .map(|k| self.barrier + width * k as f64 / 200.0)
            .collect()
    }

    /// `|b f' + ½ σ² f''|` maximised over `grid`.
    pub fn generator_residual(&self, f: &Jet2Fn, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&x| {
                let j = f(x);
                let b = self.coefficients.drift(x).value();
                let s = self.sigma(x);
                (b * j.derivative(1) + 0.5 * s * s * j.derivative(2)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A test function returning its own jet.
pub type Jet2Fn = dyn Fn(f64) -> Jet + Send + Sync;

/// Result of probing a model on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub min_diffusivity: f64,
    pub max_diffusivity: f64,
    /// Largest |b| on the grid; an unbounded drift is accepted but reported.
    pub max_abs_drift: f64,
    /// `max |𝓛f|` for the built-in martingale family.
    pub generator_residual: Option<f64>,
}

/// Built-in coefficient families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Constant { sigma_bar: f64, drift: f64 },
    SineMartingale(SineMartingale),
}

impl Family {
    pub fn build(&self, barrier: f64, horizon: f64, start: f64) -> Result<Model> {
        match *self {
            Family::Constant { sigma_bar, drift } => Model::constant(sigma_bar, drift, barrier, horizon, start),
            Family::SineMartingale(s) => Model::new(Arc::new(s), barrier, horizon, start),
        }
    }

    /// Build and probe; the martingale family also reports its generator residual.
    pub fn build_validated(&self, barrier: f64, horizon: f64, start: f64) -> Result<(Model, ValidationReport)> {
        let model = self.build(barrier, horizon, start)?;
        let grid = model.default_grid();
        let mut report = model.validate(&grid)?;
        if let Family::SineMartingale(s) = self {
            let h = s.harmonic();
            let jet = move |x: f64| h.jet(x);
            report.generator_residual = Some(model.generator_residual(&jet, &grid));
        }
        Ok((model, report))
    }
}

/// A test function `f`, with its derivative where known.
#[derive(Clone)]
pub struct TestFunction {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    poly: Option<[f64; 4]>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.poly {
            Some(c) => write!(f, "TestFunction(poly {c:?})"),
            None => write!(f, "TestFunction(custom)"),
        }
    }
}

impl TestFunction {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            poly: None,
        }
    }

    /// `c[0] + c[1] x + c[2] x² + c[3] x³`.
    pub fn polynomial(c: &[f64; 4]) -> Self {
        let c = *c;
        TestFunction {
            value: Arc::new(move |x| ((c[3] * x + c[2]) * x + c[1]) * x + c[0]),
            derivative: Arc::new(move |x| (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1]),
            poly: Some(c),
        }
    }

    /// `(x − L)^k` for `k ∈ {1, 2, 3}`.
    pub fn power_above(barrier: f64, k: u32) -> Self {
        assert!((1..=3).contains(&k));
        let l = barrier;
        let c = match k {
            1 => [-l, 1.0, 0.0, 0.0],
            2 => [l * l, -2.0 * l, 1.0, 0.0],
            _ => [-l * l * l, 3.0 * l * l, -3.0 * l, 1.0],
        };
        Self::polynomial(&c)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    /// Order-3 jet; exact for polynomials, second-order otherwise.
    pub fn jet(&self, x: f64) -> Jet {
        match self.poly {
            Some(c) => {
                let v = Jet::variable(x);
                ((v * c[3] + c[2]) * v + c[1]) * v + c[0]
            }
            None => Jet::from_derivatives([self.value(x), self.derivative(x), 0.0, 0.0]).truncate(1),
        }
    }

    pub fn vanishes_at(&self, barrier: f64) -> bool {
        self.value(barrier).abs() <= 1e-12
    }

    /// `f − f(L)`.
    pub fn shifted(&self, barrier: f64) -> Self {
        let f0 = self.value(barrier);
        if f0 == 0.0 {
            return self.clone();
        }
        match self.poly {
            Some(mut c) => {
                c[0] -= f0;
                Self::polynomial(&c)
            }
            None => {
                let v = self.value.clone();
                TestFunction {
                    value: Arc::new(move |x| v(x) - f0),
                    derivative: self.derivative.clone(),
                    poly: None,
                }
            }
        }
    }

    /// The derivative as a test function in its own right (polynomials only).
    pub fn derivative_function(&self) -> Option<Self> {
        self.poly
            .map(|c| Self::polynomial(&[c[1], 2.0 * c[2], 3.0 * c[3], 0.0]))
    }
}
