//! Finite sections of the Hodge-Laplacian on truncated ends and the
//! extrapolation of their lower accumulation threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prediction::AcPrediction;
use crate::error::{Error, Result};
use crate::exterior::{build_graded_complex, BoundaryCondition, ComplexSpec, GradedComplex};
use crate::geometry::WarpedModel;
use crate::linalg::{self, EigenMethod};

/// Residual above which an eigensolve is reported as failed.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Width below the bottom used for the counting data.
pub const COUNT_GAP: f64 = 0.1;

/// Relative spread below which an eigenvalue is treated as independent of `R`.
pub const STATIONARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSpectrum {
    pub r_max: f64,
    pub degree: usize,
    pub dr: f64,
    pub dim: usize,
    pub values: Vec<f64>,
    pub max_residual: f64,
    pub method: EigenMethod,
}

impl TruncatedSpectrum {
    /// Number of computed eigenvalues strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.values.iter().filter(|v| **v < lambda).count()
    }
}

/// The `count` smallest eigenvalues of `(Δ^{(j)}, M_j)` on the complex.
pub fn truncated_spectrum(c: &GradedComplex, j: usize, count: usize, seed: u64) -> Result<TruncatedSpectrum> {
    if j < c.offset || j - c.offset >= c.slots() {
        return Err(Error::Invalid(format!("degree {j} is not carried by the complex")));
    }
    let s = j - c.offset;
    let dim = c.dim(s);
    if count == 0 || count > dim {
        return Err(Error::Invalid(format!("requested {count} eigenvalues of a {dim}-dimensional block")));
    }
    let pairs = linalg::lowest_eigenpairs(&c.stiffness(s), &c.mass[s], count, seed)?;
    let max_residual = pairs.residuals.iter().copied().fold(0.0, f64::max);
    if !(max_residual <= RESIDUAL_TOL) {
        return Err(Error::NoConvergence { residual: max_residual, detail: format!("degree {j}, dimension {dim}") });
    }
    let top = pairs.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    // Roundoff around harmonic forms can leave tiny negative values.
    let values = pairs.values.iter().map(|&v| if v < 0.0 && v > -1e-10 * top { 0.0 } else { v }).collect();
    Ok(TruncatedSpectrum { r_max: c.r_max, degree: j, dr: c.dr, dim, values, max_residual, method: pairs.method })
}

/// Truncations of `model` at each radius with `per_unit` radial intervals per
/// unit length; `template` fixes the layout, its `nr` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn spectral_sweep(
    model: &WarpedModel,
    template: ComplexSpec,
    per_unit: usize,
    radii: &[f64],
    bc: BoundaryCondition,
    j: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TruncatedSpectrum>> {
    check_radii(radii)?;
    radii
        .par_iter()
        .map(|&r| {
            let nr = ((r - 1.0) * per_unit as f64).round() as usize;
            let spec = match template {
                ComplexSpec::Product { ntheta, .. } => ComplexSpec::Product { nr, ntheta },
                ComplexSpec::Mode { p, mu, .. } => ComplexSpec::Mode { nr, p, mu },
            };
            let c = build_graded_complex(&model.with_r_max(r), None, spec, bc)?;
            truncated_spectrum(&c, j, count, seed)
        })
        .collect()
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.iter().any(|r| !(*r > 1.0) || !r.is_finite()) {
        return Err(Error::Invalid("truncation radii must be finite and exceed 1".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid(format!("truncation radii {radii:?} are not strictly increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottomEstimate {
    /// Extrapolated threshold `a` of the fit `λ(R) = a + c/(R-1)^2`.
    pub bottom: f64,
    /// Half-width: largest deviation of the two-point fits from the full fit,
    /// plus the fit's rms residual.
    pub band: f64,
    pub slope: f64,
    /// Lowest moving eigenvalue per radius, the data of the fit.
    pub moving: Vec<f64>,
    /// Eigenvalues that do not move with `R` (bound states, harmonic forms).
    pub stationary: Vec<f64>,
    /// Eigenvalues below `bottom - COUNT_GAP`, per radius.
    pub counts_below: Vec<usize>,
    /// Whether every computed eigenvalue lies below `bottom - COUNT_GAP` for some radius.
    pub saturated: bool,
    /// Counts agree over the last two radii.
    pub count_stable: bool,
}

fn fit(s: &[f64], y: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let ms = s.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|x| (x - ms).powi(2)).sum();
    let sxy: f64 = s.iter().zip(y).map(|(x, v)| (x - ms) * (v - my)).sum();
    let c = sxy / sxx;
    (my - c * ms, c)
}

/// Extrapolate the lowest accumulation threshold from truncations at increasing `R`.
pub fn essential_bottom_estimate(truncs: &[TruncatedSpectrum]) -> Result<BottomEstimate> {
    if truncs.len() < 3 {
        return Err(Error::Invalid(format!("{} truncations, at least 3 required", truncs.len())));
    }
    check_radii(&truncs.iter().map(|t| t.r_max).collect::<Vec<_>>())?;
    let dr = truncs[0].dr;
    if truncs.iter().any(|t| (t.dr - dr).abs() > 1e-9 * dr || t.degree != truncs[0].degree) {
        return Err(Error::Invalid("truncations differ in grid spacing or degree".into()));
    }
    let mut idx = vec![0usize; truncs.len()];
    let mut stationary = Vec::new();
    let moving = loop {
        if truncs.iter().zip(&idx).any(|(t, &i)| i >= t.values.len()) {
            return Err(Error::Numerical("no eigenvalue moves with R; request more eigenvalues".into()));
        }
        let v: Vec<f64> = truncs.iter().zip(&idx).map(|(t, &i)| t.values[i]).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        if hi - lo <= STATIONARY_TOL * hi.abs().max(1.0) {
            stationary.push(v[v.len() - 1]);
            idx.iter_mut().for_each(|i| *i += 1);
        } else {
            break v;
        }
    };
    let s: Vec<f64> = truncs.iter().map(|t| (t.r_max - 1.0).powi(-2)).collect();
    let (bottom, slope) = fit(&s, &moving);
    let rms = (s.iter().zip(&moving).map(|(x, y)| (y - bottom - slope * x).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
    let spread = s
        .windows(2)
        .zip(moving.windows(2))
        .map(|(x, y)| (fit(x, y).0 - bottom).abs())
        .fold(0.0, f64::max);
    let cut = bottom - COUNT_GAP;
    let counts_below: Vec<usize> = truncs.iter().map(|t| t.count_below(cut)).collect();
    let saturated = truncs.iter().zip(&counts_below).any(|(t, &n)| n == t.values.len());
    let k = counts_below.len();
    let count_stable = !saturated && counts_below[k - 1] == counts_below[k - 2];
    Ok(BottomEstimate { bottom, band: spread + rms, slope, moving, stationary, counts_below, saturated, count_stable })
}

/// Truncated spectra of one degree over increasing `R` with the predicted and
/// extrapolated thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub degree: usize,
    pub truncations: Vec<TruncatedSpectrum>,
    pub prediction: Option<AcPrediction>,
    pub bottom: Option<BottomEstimate>,
}

impl SpectralReport {
    pub fn new(truncations: Vec<TruncatedSpectrum>, prediction: Option<AcPrediction>) -> Result<SpectralReport> {
        let degree = truncations.first().map(|t| t.degree).ok_or_else(|| Error::Invalid("no truncations".into()))?;
        let bottom = if truncations.len() >= 3 { Some(essential_bottom_estimate(&truncations)?) } else { None };
        Ok(SpectralReport { degree, truncations, prediction, bottom })
    }

    /// Counting function `N(λ)` per truncation.
    pub fn counting(&self, lambda: f64) -> Vec<usize> {
        self.truncations.iter().map(|t| t.count_below(lambda)).collect()
    }

    /// Rows `(R, degree, index, eigenvalue)`.
    pub fn rows(&self) -> Vec<(f64, usize, usize, f64)> {
        self.truncations
            .iter()
            .flat_map(|t| t.values.iter().enumerate().map(move |(i, v)| (t.r_max, t.degree, i, *v)))
            .collect()
    }
}
