//! Cross-section eigendata, truncated spectra and threshold predictions.

pub mod cross_section;
pub mod prediction;
pub mod truncated;

pub use cross_section::{cross_section_spectrum, CrossSectionKind, CrossSectionSpectrum, SpectrumEntry, SpectrumSource};
pub use prediction::{ac_prediction, AcPrediction, Relation, ThresholdSet};
pub use truncated::{
    essential_bottom_estimate, spectral_sweep, truncated_spectrum, BottomEstimate, SpectralReport, TruncatedSpectrum, COUNT_GAP,
};
