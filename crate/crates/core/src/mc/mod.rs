//! Finite-N ground truth by exhaustive enumeration, plus the incremental
//! optimization algorithm at large N.

pub mod enumerate;
pub mod free_energy;
pub mod gibbs;
pub mod ground_state;
pub mod identities;
pub mod incremental;

pub use free_energy::{
    enriched_free_energy, exact_log_partition, gibbs_expectation, quenched_free_energy, Convention,
    FreeEnergyEstimate, GibbsParameters,
};
pub use gibbs::{GibbsObservable, Observable};
pub use ground_state::{max_energy, max_energy_sweep, MaxEnergySweep, MaxMethod};
pub use identities::{derivative_identity_check, gibbs_variational_check};
pub use incremental::{incremental_optimize, IncrementalResult};
