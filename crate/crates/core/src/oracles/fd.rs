//! Finite-difference consistency of the BEL estimator.
//!
//! The value estimator is run at `x ± h` on common random numbers, and the
//! paired difference `T (V₊ − V₋)/(2h) − B` is tested for zero mean.

use crate::engine::{normalization, run_replications, Welford};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Terminal};
use crate::model::{Model, TestFunction};
use crate::renewal::{sample_path, JumpLaw};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// `T ∂_x` by central difference.
    pub fd: f64,
    pub bel: f64,
    /// Standard error of the paired difference.
    pub stderr: f64,
    pub z: f64,
}

pub fn fd_consistency_bel(
    model: &Model,
    f: &TestFunction,
    law: JumpLaw,
    samples: u64,
    h: f64,
    seed: u64,
) -> Result<FdReport> {
    if !f.vanishes_at(model.barrier) {
        return Err(Error::Config("bel needs f(L) = 0".into()));
    }
    let up = model.with_start(model.start + h)?;
    let down = model.with_start(model.start - h)?;
    let norm = normalization(law);
    let (e0, ep, em) = (
        Estimator::new(model, norm),
        Estimator::new(&up, norm),
        Estimator::new(&down, norm),
    );
    let t = model.horizon;
    let pairs = run_replications(samples, seed, rayon::current_num_threads(), |rng| {
        let path = sample_path(&law, t, rng);
        let term = Terminal::Function(f);
        let fd = t * (ep.value_term(term, &path) - em.value_term(term, &path)) / (2.0 * h);
        (fd, e0.bel_term(term, &path))
    })?;
    let fd: Welford = pairs.iter().map(|p| p.0).collect();
    let bel: Welford = pairs.iter().map(|p| p.1).collect();
    let diff: Welford = pairs.iter().map(|p| p.0 - p.1).collect();
    let stderr = (diff.variance() / samples as f64).sqrt();
    Ok(FdReport {
        fd: fd.mean(),
        bel: bel.mean(),
        stderr,
        z: diff.mean() / stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model_is_consistent() {
        let m = Model::constant(1.0, 0.0, 0.0, 1.0, 0.5).unwrap();
        let f = TestFunction::power_above(0.0, 2);
        let r = fd_consistency_bel(&m, &f, JumpLaw::Exponential { lambda: 1.0 }, 20_000, 1e-3, 3).unwrap();
        assert!(r.z.abs() < 4.0, "{r:?}");
    }

    #[test]
    fn rejects_nonvanishing_f() {
        let m = Model::constant(1.0, 0.0, 0.0, 1.0, 0.5).unwrap();
        let f = TestFunction::polynomial(&[1.0, 0.0, 0.0, 0.0]);
        assert!(fd_consistency_bel(&m, &f, JumpLaw::Exponential { lambda: 1.0 }, 10, 1e-3, 0).is_err());
    }
}
