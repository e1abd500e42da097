//! Parallel replication driver and streaming statistics.
//!
//! Replication `r` always draws from the ChaCha8 stream `(seed, r)`, and
//! replications are grouped into fixed-size chunks whose accumulators are
//! merged in chunk order. Results are therefore bit-identical for any number
//! of worker threads.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DensityFactor, Estimator, Terminal};
use crate::model::{Model, TestFunction};
use crate::renewal::{sample_path, JumpLaw, Path};
use crate::weights::{LastCircledast, Normalization, WeightContext};

/// Replications per scheduling unit.
pub const CHUNK: u64 = 4096;

/// Normal quantile used for the 95% interval.
pub const Z95: f64 = 1.96;

/// Pilot runs draw from streams disjoint from the main run.
const PILOT_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Target quantity of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `E[f(X_T) 1{τ>T}]`.
    Value,
    /// `T E[f'(X_T) 1{τ>T}]`.
    Ibp,
    /// `T ∂_x E[f(X_T) 1{τ>T}]`.
    Bel,
    /// `p(T, x, z)`.
    Density,
    /// `T ∂_z p(T, x, z)`.
    DensityDz,
    /// `T ∂_x p(T, x, z)`.
    DensityDx,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Value => "value",
            Quantity::Ibp => "ibp",
            Quantity::Bel => "bel",
            Quantity::Density => "density",
            Quantity::DensityDz => "density_dz",
            Quantity::DensityDx => "density_dx",
        }
    }

    fn needs_point(self) -> bool {
        matches!(self, Quantity::Density | Quantity::DensityDz | Quantity::DensityDx)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "value" => Quantity::Value,
            "ibp" => Quantity::Ibp,
            "bel" => Quantity::Bel,
            "density" => Quantity::Density,
            "density_dz" => Quantity::DensityDz,
            "density_dx" => Quantity::DensityDx,
            _ => return Err(Error::Config(format!("unknown quantity `{s}`"))),
        })
    }
}

/// Pilot-run tuning of the jump law.
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    pub grid: Vec<JumpLaw>,
    pub samples: u64,
}

/// Everything needed for one estimate.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Model,
    pub f: TestFunction,
    pub quantity: Quantity,
    pub law: JumpLaw,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    /// Terminal point for the density quantities.
    pub z: Option<f64>,
    pub density_factor: DensityFactor,
    pub last_circledast: LastCircledast,
    pub pilot: Option<Pilot>,
}

impl RunConfig {
    pub fn new(model: Model, f: TestFunction, quantity: Quantity, law: JumpLaw) -> Self {
        RunConfig {
            model,
            f,
            quantity,
            law,
            samples: 100_000,
            seed: 0,
            workers: 1,
            z: None,
            density_factor: DensityFactor::default(),
            last_circledast: LastCircledast::default(),
            pilot: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.law.validate(self.model.horizon)?;
        let l = self.model.barrier;
        match self.quantity {
            Quantity::Bel if !self.f.vanishes_at(l) => Err(Error::Config(format!(
                "bel needs f(L) = 0, got f({l}) = {}",
                self.f.value(l)
            ))),
            q if q.needs_point() => match self.z {
                Some(z) if z >= l && z.is_finite() => Ok(()),
                Some(z) => Err(Error::Config(format!("density point z = {z} lies below the barrier {l}"))),
                None => Err(Error::Config(format!("{q} needs a terminal point z"))),
            },
            _ => Ok(()),
        }
    }
}

/// Time normalisation matching a jump law; exponential gaps use the Poisson form.
pub fn normalization(law: JumpLaw) -> Normalization {
    match law {
        JumpLaw::Exponential { lambda } => Normalization::Poisson { lambda },
        other => Normalization::Renewal(other),
    }
}

/// Random stream of replication `r`.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// One-pass mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += d * nb / n as f64;
        self.m2 += other.m2 + d * d * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        iter.into_iter().for_each(|x| w.push(x));
        w
    }
}

/// Summary of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub quantity: Quantity,
    pub sampler: String,
    pub samples: u64,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub ci95: f64,
    /// Mean absolute deviation from the sample mean.
    pub mad: f64,
    pub runtime_s: f64,
}

impl EstimateReport {
    fn from_stats(quantity: Quantity, law: JumpLaw, seed: u64, w: &Welford, mad: f64, runtime_s: f64) -> Self {
        let variance = w.variance();
        let stderr = (variance / w.count() as f64).sqrt();
        EstimateReport {
            quantity,
            sampler: law.to_string(),
            samples: w.count(),
            seed,
            mean: w.mean(),
            variance,
            stderr,
            ci95: Z95 * stderr,
            mad,
            runtime_s,
        }
    }

    /// Whether the 95% interval covers `target`.
    pub fn covers(&self, target: f64) -> bool {
        (self.mean - target).abs() <= self.ci95
    }
}

/// Samples of `samples` replications, evaluated in parallel and returned in
/// replication order.
pub fn run_replications<T, F>(samples: u64, seed: u64, workers: usize, per_rep: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(samples);
                (lo..hi)
                    .map(|r| per_rep(&mut replication_rng(seed, r)))
                    .collect()
            })
            .collect()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Per-replication sample of the configured quantity.
pub fn replicate(cfg: &RunConfig, est: &Estimator<'_>, f: &TestFunction, path: &Path) -> f64 {
    let density = |z| Terminal::Density {
        z,
        factor: cfg.density_factor,
    };
    let z = cfg.z.unwrap_or(f64::NAN);
    match cfg.quantity {
        Quantity::Value => est.value_term(Terminal::Function(f), path),
        Quantity::Ibp => est.ibp_term(Terminal::Function(f), path),
        Quantity::Bel => est.bel_term(Terminal::Function(f), path),
        Quantity::Density => est.value_term(density(z), path),
        Quantity::DensityDz => -est.ibp_term(density(z), path),
        Quantity::DensityDx => est.bel_term(density(z), path),
    }
}

fn run_with_law(cfg: &RunConfig, law: JumpLaw, samples: u64) -> Result<EstimateReport> {
    let start = Instant::now();
    let ctx = WeightContext::new(&cfg.model, normalization(law)).with_last_circledast(cfg.last_circledast);
    let est = Estimator::with_context(ctx);
    let f = match cfg.quantity {
        Quantity::Ibp => cfg.f.shifted(cfg.model.barrier),
        _ => cfg.f.clone(),
    };
    let horizon = cfg.model.horizon;
    let values = run_replications(samples, cfg.seed, cfg.workers, |rng| {
        let path = sample_path(&law, horizon, rng);
        replicate(cfg, &est, &f, &path)
    })?;
    let mut w = Welford::new();
    for chunk in values.chunks(CHUNK as usize) {
        w.merge(&chunk.iter().copied().collect());
    }
    let mad = values.iter().map(|v| (v - w.mean()).abs()).sum::<f64>() / values.len() as f64;
    Ok(EstimateReport::from_stats(
        cfg.quantity,
        law,
        cfg.seed,
        &w,
        mad,
        start.elapsed().as_secs_f64(),
    ))
}

/// Run the configured estimate, tuning the jump law first when a pilot is set.
pub fn run(cfg: &RunConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let law = match &cfg.pilot {
        Some(p) => pilot_tune(cfg, p)?.0,
        None => cfg.law,
    };
    run_with_law(cfg, law, cfg.samples)
}

/// Pilot variances over the grid; returns the minimiser (first on ties).
pub fn pilot_tune(cfg: &RunConfig, pilot: &Pilot) -> Result<(JumpLaw, Vec<(JumpLaw, f64)>)> {
    let Some(&first) = pilot.grid.first() else {
        return Err(Error::Config("pilot grid is empty".into()));
    };
    if pilot.samples == 0 {
        eprintln!("warning: pilot sample size is 0; using the first grid entry {first}");
        return Ok((first, Vec::new()));
    }
    let mut scores = Vec::with_capacity(pilot.grid.len());
    let pilot_cfg = RunConfig {
        seed: cfg.seed.wrapping_add(PILOT_SEED_OFFSET),
        ..cfg.clone()
    };
    for &law in &pilot.grid {
        law.validate(cfg.model.horizon)?;
        let rep = run_with_law(&pilot_cfg, law, pilot.samples)?;
        scores.push((law, rep.variance));
    }
    let best = scores
        .iter()
        .fold(None::<(JumpLaw, f64)>, |acc, &(law, v)| match acc {
            Some((_, bv)) if !(v < bv) => acc,
            _ if v.is_finite() => Some((law, v)),
            _ => acc,
        })
        .map_or(first, |b| b.0);
    Ok((best, scores))
}
