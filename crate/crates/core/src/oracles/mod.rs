//! Independent reference computations used to check the estimators.

pub mod degeneracy;
pub mod fd;
pub mod killed;
pub mod lemmas;
pub mod quad;
pub mod suite;

pub use fd::{fd_consistency_bel, FdReport};
pub use killed::{killed_bm_dx, killed_bm_dz, killed_bm_value, KilledBMOracle};
