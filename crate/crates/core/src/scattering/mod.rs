//! The scattering criterion, its sufficient conditions, the decomposition of
//! the Hodge-Laplacian difference and wave-operator diagnostics.

pub mod criterion;
pub mod decomposition;
pub mod wave;

pub use criterion::{
    cross_section_volume, deviation_field, ms_conditions, phi_profile, scattering_integral, warped_beta_check, BetaReport,
    ControlFunction, DeviationReport, MsReport, PhiProfile, PhiSample, WarpKind,
};
pub use decomposition::{
    decomposition_residual, decomposition_study, lhs_matrix, resolvent_power, schatten_diagnostics, schatten_study,
    sector_oracle, v_matrix, v_terms, LevelResidual, ResolventConfig, ResolventPower, SchattenMode, SchattenRecord,
    SchattenStudy, SectorNorms, SectorOracle, VAssembly, VTerm,
};
pub use wave::{
    radial_packet, sector_bottom, wave_experiment, wave_operator, ChainRecord, CutoffSpec, PHatRecord, ThirdMetric,
    WaveExperiment, WaveOpDiagnostics,
};
