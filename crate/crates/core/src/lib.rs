//! Driven atom coupled to a cavity photon mode and a mechanical phonon mode
//! through a single tripartite interaction.
//!
//! All frequencies and rates are in units of the phonon frequency `ω_b`.
//! The crate covers the truncated operator algebra ([`hilbert`]), the
//! Hamiltonians ([`model`]), level scans and anticrossings ([`spectrum`]),
//! closed and Lindblad dynamics ([`dynamics`]), stationary correlations and
//! emission spectra ([`correlations`]), perturbative rates
//! ([`perturbation`]) and quantum trajectories ([`trajectories`]).

pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod expm;
pub mod hilbert;
pub mod model;
pub mod ode;
pub mod perturbation;
pub mod sparse;
pub mod spectrum;
pub mod trajectories;

pub use correlations::{
    cross_g2, default_tau_grid, emission_spectrum, two_time_correlation, CorrelationSeries,
    SpectrumSeries,
};
pub use dynamics::{
    evolve_closed, evolve_open, liouvillian, model_channels, steady_state, Channel,
    CollapseChannel, EvolutionResult, EvolveOptions, FinalState, Observables, Superoperator,
};
pub use error::{Error, Result};
pub use hilbert::{
    atom_operator, expectation, ladder_operator, number_operator, AtomLevel, AtomOp, BasisState,
    DensityMatrix, Expectation, HilbertSpace, Mode, Operator, StateVector,
};

pub use model::{
    boson_parity_operator, build_h_dressed, build_h_eff, derive_effective_params, dressed_basis,
    resonance_drive, BareLabel, Branch, DressedBasis, EffectiveDerivation, ModelParams,
    PhysicalParams, ResonanceDrive,
};
pub use perturbation::{
    compare_rates, effective_coupling, rate_from_gap, w11_analytic, w22_analytic, RateComparison,
    Resonance, TransitionSpec,
};
pub use spectrum::{
    eigenlevels, locate_anticrossing, scan_drive, Anticrossing, Eigen, LevelLabel, LevelScan,
};
pub use trajectories::{
    count_correlated_emissions, ensemble_average, run_trajectories, trajectory_populations,
    EmissionStats, EnsembleAverage, JumpEvent, TrajectoryOptions, TrajectoryRecord,
};

pub type C64 = num_complex::Complex64;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
