//! Semiclassical diagnostics: commutator trace norms, kernel distances,
//! Wigner transform and Vlasov transport.

pub mod commutator;
pub mod norms;
pub mod phase_space;
pub mod vlasov;

pub use commutator::{
    commutator_report, commutator_trace_norm, fourier_commutator_check, trace_norm_method, trace_norm_methods,
    CommutatorKind, CommutatorReport, DenseSvd, FourierEntry, FourierReport, LowRank, TraceNormMethod,
    DENSE_POINT_LIMIT,
};
pub use norms::{density_kernel, hs_distance, trace_distance};
pub use phase_space::{
    edge_fraction, high_momentum_fraction, max_fermi_velocity, phase_space_l1_distance, wigner_transform, PhaseSpaceDensity, WignerGrid, WignerWindow,
};
pub use vlasov::{evolve_vlasov, VlasovConfig, VlasovTrajectory, MASS_DRIFT_LIMIT};
