//! Stabilizer Renyi entropies, mana and long-range magic of matrix product
//! states of qudit chains.
//!
//! The tensor code is generic over the real scalar `T: Real` (`f32` or
//! `f64`); the aliases at the crate root fix `T = f64`. Dense oracles,
//! statistics, fits and exact diagonalization are `f64` only.

pub mod dmrg;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod mps;
pub mod partition;
pub mod pauli;
pub mod pauli_mps;
pub mod sampling;
pub mod scalar;
pub mod stats;

pub use dmrg::{dmrg_from_state, dmrg_ground_state, DmrgSettings};
pub use error::{Error, Result};
pub use fit::{fit_inverse_chi_squared, FitPoint, InverseChiSquaredFit};
pub use markov::{
    estimate_long_range_magic, estimate_mutual_info2, estimate_sre_markov, estimate_w, LongRangeEstimate, MarkovConfig,
};
pub use model::{build_mpo, critical_point_presets, exact_diagonalization, preset, CriticalPoint, ModelParams};
pub use mps::{Environments, MatrixProductState, SiteTensor};
pub use partition::{Partition, PartitionScheme};
pub use pauli::{PauliString, QuditAlgebra};
pub use pauli_mps::{long_range_magic_pauli_mps, sre_replica, PauliMps, ReplicaMode, ReplicaResult};
pub use sampling::{estimate_sre, estimate_sre_seeded, Estimate, PerfectSampler};
pub use scalar::Real;
pub use stats::{autocorr_function, corrected_std_error, integrated_autocorr_time, AutocorrTime, ChainTrace};

pub type Mps = mps::MatrixProductState<f64>;
pub type Mpo = model::MatrixProductOperator<f64>;
pub type Site = mps::SiteTensor<f64>;
pub type PauliMpsF64 = pauli_mps::PauliMps<f64>;
pub type DmrgResultF64 = dmrg::DmrgResult<f64>;
pub type CMatrixF64 = linalg::CMatrix<f64>;
