//! Time-dependent Hartree-Fock and fermionic Hartree dynamics of orbital sets.

pub mod diagnostics;
pub mod evolve;
pub mod mean_field;

pub use diagnostics::{exchange_commutator_hs, fit_exponential_growth, GrowthFit};
pub use evolve::{
    context_for, evolve, evolve_in, hartree_vs_hf_gap, DiagnosticRecord, EvolveConfig, Snapshot, Trajectory,
    TrajectoryStatus, REORTHONORMALIZE_TOL,
};
pub use mean_field::{
    exchange_strategies, exchange_strategy, mean_field_apply, AutoExchange, DenseExchange, ExchangeOperator,
    ExchangeStrategy, FactoredExchange, MeanField, MeanFieldContext,
};
