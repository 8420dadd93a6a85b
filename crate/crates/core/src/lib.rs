//! Robustness analysis of coherently controlled quantum dynamics.
//!
//! The library decomposes the controlled propagator of a driven N-level
//! system into quantum pathways by Fourier encoding of the Dyson series,
//! propagates independent Gaussian parameter uncertainty through that
//! decomposition to exact (truncation-limited) moments of transition
//! amplitudes, probabilities and inter-order interferences, and complements
//! the analytic engine with a Monte Carlo sampling oracle, a first-order
//! worst-case analysis over confidence ellipsoids, and a real-coded genetic
//! field optimizer.
//!
//! Pipeline overview:
//!
//! 1. [`QuantumSystem`] + [`ControlField`] define the bilinear dynamics
//!    `dU/dt = -i (H0 - mu eps(t)) U`.
//! 2. [`propagate`] integrates it; [`dyson_decompose`] splits `U(T)` into
//!    per-order terms by graded co-propagation.
//! 3. [`extract_amplitude_pathways`] / [`extract_dipole_pathways`] tag each
//!    parameter with an integer harmonic `e^{i gamma s}`, propagate over an
//!    `s`-grid and decode one pathway per DFT bin into a [`PathwayTable`].
//! 4. [`moment_report`] turns the table plus an [`UncertaintyModel`] into
//!    expected amplitudes, probabilities, variances and interference moments;
//!    [`estimate_statistics`] cross-validates them by sampling.
//! 5. [`gradient_dipole`] + [`worst_case_deviation`] bound first-order
//!    worst-case excursions; [`optimize`] synthesizes fields.

pub mod dyson;
pub mod error;
pub mod experiments;
pub mod moments;
pub mod montecarlo;
pub mod pathway;
pub mod presets;
pub mod propagate;
pub mod rcga;
pub mod serde_complex;
pub mod system;
pub mod worstcase;

pub use dyson::{dyson_decompose, DysonDecomposition};
pub use error::CoreError;
pub use experiments::{
    amplitude_tradeoff, field_trajectory, interference_sweep, mode_sigma_sweep,
    moment_growth_series, order_amplitude_series, order_interference_matrix,
    AmplitudeTradeoffRow, InterferenceSweepRow, ModeSigmaSweepRow, MomentGrowthRow,
    OrderAmplitudeRow, OrderInterferenceRow, TrajectoryRow,
};
pub use moments::{
    distributional_worst_case, expected_pathway, expected_transition_amplitude,
    expected_transition_probability, gaussian_raw_moment, interference_moments, moment_report,
    variance_transition_amplitude, InterferenceMatrix, MomentReport, UncertaintyKind,
    UncertaintyModel,
};
pub use montecarlo::{
    estimate_order_statistics, estimate_statistics, sample_parameters, OrderStatistics,
    SampleStatistics,
};
pub use pathway::{
    alpha_to_gamma, assign_encoding_frequencies, extract_amplitude_pathways,
    extract_dipole_pathways, gamma_to_alpha, pathway_compare, pathway_order_sum, EncodingScheme,
    PathwayEntry, PathwayIndex, PathwayKind, PathwayTable,
};
pub use propagate::{
    propagate, propagate_generalized, step_doubling_delta, transition_probability,
    unitarity_defect,
};
pub use rcga::{
    default_bounds, evaluate, gaussian_mutate, optimize, sbx_crossover, tournament_select,
    GaConfig, GaHistoryRow, GaObjective, GaOutcome, Individual,
};
pub use system::{ControlField, FieldMode, PropagationSettings, QuantumSystem, Waveform};

pub use worstcase::{
    gradient_dipole, linearized_sigma_j, worst_case_deviation, worst_case_report,
    ConfidenceEllipsoid, ParameterCovariance, WorstCaseDeviation, WorstCaseReport,
};

/// Crate version, stamped into serialized artifacts by downstream tooling.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
