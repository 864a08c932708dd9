//! Wave operators `W(T) = e^{iT H_2} I e^{-iT H_1} P` on truncated complexes by
//! exact eigendecomposition-based evolution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ops::IdentificationMaps;
use crate::exterior::{build_graded_complex, BoundaryCondition, ComplexSpec, GradedComplex};
use crate::geometry::{ConformalFactor, WarpedModel};
use crate::linalg::{self, Vector};
use crate::spectral::{essential_bottom_estimate, truncated_spectrum};

/// Largest block evolved by full eigendecomposition.
pub const EVOLUTION_LIMIT: usize = 4000;
/// Grid cells next to the outer boundary that must stay empty.
pub const BOUNDARY_CELLS: usize = 5;
/// Allowed norm fraction in those cells.
pub const BOUNDARY_TOL: f64 = 1e-3;
/// Gap below and above the essential bottom used by the projection.
pub const CUTOFF_GAP: f64 = 0.1;

/// Spectral cutoff defining the surrogate `P` of the absolutely continuous projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    /// Essential-bottom estimate.
    pub bottom: f64,
    /// Upper end `Lambda` of the support.
    pub lambda_max: f64,
    /// Width of the smooth ramps at both ends.
    pub ramp: f64,
}

/// Auditable record of the constructed projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PHatRecord {
    pub bottom: f64,
    /// Eigenvectors below this value are projected off.
    pub discard_below: f64,
    /// Support of the smooth cutoff.
    pub support: (f64, f64),
    pub ramp: f64,
    pub projected_out: usize,
    /// `|P u_0| / |u_0|` before normalization.
    pub kept_fraction: f64,
    pub dim: usize,
}

/// `C^infinity` step from 0 at `x <= 0` to 1 at `x >= 1`.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

impl CutoffSpec {
    fn validate(&self) -> Result<()> {
        let lo = self.bottom + CUTOFF_GAP;
        if !(self.ramp > 0.0 && lo + 2.0 * self.ramp <= self.lambda_max && self.bottom.is_finite()) {
            return Err(Error::Invalid(format!(
                "cutoff support [{lo}, {}] cannot hold two ramps of width {}",
                self.lambda_max, self.ramp
            )));
        }
        Ok(())
    }

    pub fn chi(&self, lambda: f64) -> f64 {
        let lo = self.bottom + CUTOFF_GAP;
        smooth_step((lambda - lo) / self.ramp) * smooth_step((self.lambda_max - lambda) / self.ramp)
    }
}

/// Eigendecomposition of one slot: `H = V diag(vals) V^{-1}` with `V^T M V = 1`.
struct Eigen {
    vals: Vec<f64>,
    vecs: DMatrix<f64>,
    mass: Vec<f64>,
}

impl Eigen {
    fn new(c: &GradedComplex, s: usize) -> Result<Eigen> {
        let n = c.dim(s);
        if n > EVOLUTION_LIMIT {
            return Err(Error::Dimension(format!("evolution block of dimension {n} exceeds {EVOLUTION_LIMIT}")));
        }
        let (vals, vecs) = linalg::dense_eigen(&c.stiffness(s), &c.mass[s]);
        Ok(Eigen { vals, vecs, mass: c.mass[s].clone() })
    }

    /// Spectral coefficients `V^T M x`.
    fn coeffs(&self, x: &Vector) -> Vector {
        let mx = Vector::from_iterator(x.len(), x.iter().zip(&self.mass).map(|(a, m)| a * m));
        self.vecs.tr_mul(&mx)
    }

    /// `V2^T M2 I V1` from `self` = 1 into `to` = 2.
    fn overlap(&self, to: &Eigen, i: &[f64]) -> DMatrix<f64> {
        let mut left = to.vecs.clone();
        for (r, (m, w)) in to.mass.iter().zip(i).enumerate() {
            left.row_mut(r).scale_mut(m * w);
        }
        left.tr_mul(&self.vecs)
    }
}

/// A complex vector in spectral coordinates, stored as real and imaginary parts.
#[derive(Debug, Clone)]
struct Cvec {
    re: Vector,
    im: Vector,
}

impl Cvec {
    fn real(x: Vector) -> Cvec {
        let n = x.len();
        Cvec { re: x, im: Vector::zeros(n) }
    }

    /// Multiply by `e^{i t vals}`.
    fn phase(&self, vals: &[f64], t: f64) -> Cvec {
        let mut out = self.clone();
        for (k, l) in vals.iter().enumerate() {
            let (s, c) = (t * l).sin_cos();
            let (a, b) = (self.re[k], self.im[k]);
            out.re[k] = c * a - s * b;
            out.im[k] = s * a + c * b;
        }
        out
    }

    fn map(&self, m: &DMatrix<f64>) -> Cvec {
        Cvec { re: m * &self.re, im: m * &self.im }
    }

    fn scale_by(&self, vals: &[f64]) -> Cvec {
        let f = |v: &Vector| Vector::from_iterator(v.len(), v.iter().zip(vals).map(|(a, l)| a * l));
        Cvec { re: f(&self.re), im: f(&self.im) }
    }

    fn norm(&self) -> f64 {
        (self.re.norm_squared() + self.im.norm_squared()).sqrt()
    }

    fn minus(&self, o: &Cvec) -> Cvec {
        Cvec { re: &self.re - &o.re, im: &self.im - &o.im }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRecord {
    /// `T` for `W_31` and `W_21`.
    pub t: f64,
    /// `T'` for `W_32`.
    pub t_prime: f64,
    /// `|W_31(T) u - W_32(T') W_21(T) u|`.
    pub defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveOpDiagnostics {
    pub schedule: Vec<f64>,
    /// `|W(T_{i+1}) u - W(T_i) u|`.
    pub cauchy: Vec<f64>,
    /// `| |W(T) u| - |P u| |` per time.
    pub isometry: Vec<f64>,
    /// `|H_2 W(T) u - W(T) H_1 u| / |H_1 u|` per time.
    pub intertwining: Vec<f64>,
    /// Values at the last scheduled time.
    pub isometry_defect: f64,
    pub intertwining_defect: f64,
    pub chain: Option<ChainRecord>,
    pub p_hat: PHatRecord,
    /// Norm fraction within [`BOUNDARY_CELLS`] cells of the outer boundary, per time.
    pub boundary_mass: Vec<f64>,
}

impl WaveOpDiagnostics {
    pub fn cauchy_decreasing(&self) -> bool {
        self.cauchy.windows(2).all(|w| w[1] < w[0])
    }

    pub fn max_defect(&self) -> f64 {
        self.cauchy
            .iter()
            .chain(&self.isometry)
            .chain(&self.intertwining)
            .chain(self.chain.as_ref().map(|c| &c.defect))
            .copied()
            .fold(0.0, f64::max)
    }

    /// `T, cauchy, isometry, intertwining` rows; `cauchy` is attached to the later time.
    pub fn csv(&self) -> String {
        let mut out = String::from("T,cauchy,isometry,intertwining\n");
        for (i, t) in self.schedule.iter().enumerate() {
            let c = if i == 0 { String::new() } else { format!("{:.12e}", self.cauchy[i - 1]) };
            out.push_str(&format!("{t},{c},{:.12e},{:.12e}\n", self.isometry[i], self.intertwining[i]));
        }
        out
    }
}

/// A third metric for the chain rule: its complex and the identifications from
/// the second and first metrics.
pub struct ThirdMetric<'a> {
    pub complex: &'a GradedComplex,
    pub maps_32: &'a IdentificationMaps,
    pub maps_31: &'a IdentificationMaps,
}

fn check_schedule(t: &[f64]) -> Result<()> {
    if t.is_empty() || t[0] < 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("schedule must be nonempty, nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// Boundary cells of slot `s`: dofs within [`BOUNDARY_CELLS`] cells of `r_max`.
fn boundary_mask(c: &GradedComplex, s: usize) -> Vec<bool> {
    let edge = c.r_max - BOUNDARY_CELLS as f64 * c.dr - 1e-9 * c.dr;
    c.dofs[s].iter().map(|d| d.r >= edge).collect()
}

fn physical(e: &Eigen, x: &Cvec) -> Cvec {
    Cvec { re: &e.vecs * &x.re, im: &e.vecs * &x.im }
}

fn boundary_fraction(e: &Eigen, x: &Cvec, mask: &[bool]) -> f64 {
    let p = physical(e, x);
    let (mut tail, mut all) = (0.0, 0.0);
    for k in 0..p.re.len() {
        let w = e.mass[k] * (p.re[k] * p.re[k] + p.im[k] * p.im[k]);
        all += w;
        if mask[k] {
            tail += w;
        }
    }
    if all == 0.0 {
        0.0
    } else {
        (tail / all).sqrt()
    }
}

/// Wave-operator diagnostics on slot `slot` for `H_1` of `c1`, `H_2` of `c2` and
/// the identification `maps`, starting from `P u0`.
///
/// With a third metric the chain rule is checked as `W_31(T) u` against
/// `W_32(T') W_21(T) u` for the last two scheduled times `T' < T`.
pub fn wave_operator(
    c1: &GradedComplex,
    c2: &GradedComplex,
    maps: &IdentificationMaps,
    u0: &Vector,
    schedule: &[f64],
    slot: usize,
    cutoff: &CutoffSpec,
    third: Option<ThirdMetric<'_>>,
) -> Result<WaveOpDiagnostics> {
    check_schedule(schedule)?;
    cutoff.validate()?;
    if !c1.same_grid(c2) {
        return Err(Error::Dimension("wave operators need both complexes on one grid".into()));
    }
    if slot >= c1.slots() || u0.len() != c1.dim(slot) {
        return Err(Error::Dimension(format!("state of length {} does not fit slot {slot}", u0.len())));
    }
    if third.is_some() && schedule.len() < 2 {
        return Err(Error::Invalid("the chain rule needs at least two scheduled times".into()));
    }
    let mut eig = vec![c1, c2];
    if let Some(t) = &third {
        if !c1.same_grid(t.complex) {
            return Err(Error::Dimension("third complex is on a different grid".into()));
        }
        eig.push(t.complex);
    }
    let eig: Vec<Eigen> = eig.par_iter().map(|c| Eigen::new(c, slot)).collect::<Result<_>>()?;
    let (e1, e2) = (&eig[0], &eig[1]);

    // P: drop modes below bottom - gap, then apply the smooth cutoff.
    let c0 = e1.coeffs(u0);
    let discard_below = cutoff.bottom - CUTOFF_GAP;
    let projected_out = e1.vals.iter().filter(|l| **l < discard_below).count();
    let weights: Vec<f64> = e1.vals.iter().map(|&l| if l < discard_below { 0.0 } else { cutoff.chi(l) }).collect();
    let mut c = Vector::from_iterator(c0.len(), c0.iter().zip(&weights).map(|(a, w)| a * w));
    let kept = c.norm();
    let total = c0.norm();
    if !(kept > 1e-8 * total) || total == 0.0 {
        return Err(Error::Invalid("the initial state has no weight in the cutoff window".into()));
    }
    c /= kept;
    let p_hat = PHatRecord {
        bottom: cutoff.bottom,
        discard_below,
        support: (cutoff.bottom + CUTOFF_GAP, cutoff.lambda_max),
        ramp: cutoff.ramp,
        projected_out,
        kept_fraction: kept / total,
        dim: c.len(),
    };

    let c21 = e1.overlap(e2, &maps.i[slot]);
    let u = Cvec::real(c);
    let h1u = u.scale_by(&e1.vals);
    let h1u_norm = h1u.norm();
    let mask = boundary_mask(c1, slot);
    // H_2 I - I H_1 on coefficients of the slot.
    let i21 = &maps.i[slot];
    let gap = linalg::axpby(1.0, &linalg::scale(None, &c2.laplacian(slot), Some(i21)), -1.0, &linalg::scale(Some(i21), &c1.laplacian(slot), None));
    let gap_norm = |x: &Cvec| {
        let a = linalg::wnorm(&linalg::spmv(&gap, &x.re), &c2.mass[slot]);
        let b = linalg::wnorm(&linalg::spmv(&gap, &x.im), &c2.mass[slot]);
        (a * a + b * b).sqrt()
    };

    let per_time: Vec<(Cvec, f64, f64, f64)> = schedule
        .par_iter()
        .map(|&t| {
            let moved = u.phase(&e1.vals, -t);
            let frac = boundary_fraction(e1, &moved, &mask);
            let w = moved.map(&c21).phase(&e2.vals, t);
            let iso = (w.norm() - 1.0).abs();
            // H_2 W u - W H_1 u = e^{iTH_2} (H_2 I - I H_1) e^{-iTH_1} u.
            let inter = gap_norm(&physical(e1, &moved)) / h1u_norm;
            (w, frac, iso, inter)
        })
        .collect();
    for (t, (_, frac, _, _)) in schedule.iter().zip(&per_time) {
        if *frac > BOUNDARY_TOL {
            return Err(Error::Contaminated { time: *t, fraction: *frac });
        }
    }
    let cauchy: Vec<f64> = per_time.windows(2).map(|w| w[1].0.minus(&w[0].0).norm()).collect();

    let chain = match &third {
        None => None,
        Some(tm) => {
            let e3 = &eig[2];
            let (t, tp) = (schedule[schedule.len() - 1], schedule[schedule.len() - 2]);
            let w21 = &per_time.last().unwrap().0;
            let back = w21.phase(&e2.vals, -tp);
            let frac = boundary_fraction(e2, &back, &boundary_mask(c2, slot));
            if frac > BOUNDARY_TOL {
                return Err(Error::Contaminated { time: tp, fraction: frac });
            }
            let chained = back.map(&e2.overlap(e3, &tm.maps_32.i[slot])).phase(&e3.vals, tp);
            let direct = u.phase(&e1.vals, -t).map(&e1.overlap(e3, &tm.maps_31.i[slot])).phase(&e3.vals, t);
            Some(ChainRecord { t, t_prime: tp, defect: direct.minus(&chained).norm() })
        }
    };
    let isometry: Vec<f64> = per_time.iter().map(|p| p.2).collect();
    let intertwining: Vec<f64> = per_time.iter().map(|p| p.3).collect();
    Ok(WaveOpDiagnostics {
        schedule: schedule.to_vec(),
        cauchy,
        isometry_defect: *isometry.last().unwrap(),
        intertwining_defect: *intertwining.last().unwrap(),
        isometry,
        intertwining,
        chain,
        p_hat,
        boundary_mass: per_time.iter().map(|p| p.1).collect(),
    })
}

/// Setup of the radial (`k = 0`, degree 0) wave experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveExperiment {
    pub r_max: f64,
    pub nr: usize,
    /// Gaussian packet centre and width.
    pub center: f64,
    pub width: f64,
    pub schedule: Vec<f64>,
    pub lambda_max: f64,
    pub ramp: f64,
    pub seed: u64,
}

impl Default for WaveExperiment {
    fn default() -> Self {
        WaveExperiment {
            r_max: 400.0,
            nr: 800,
            center: 5.0,
            width: 1.5,
            schedule: vec![25.0, 50.0, 100.0, 200.0],
            lambda_max: 0.6,
            ramp: 0.15,
            seed: 7,
        }
    }
}

/// Essential bottom of the `k = 0` degree-0 sector from truncations at
/// `R/4, R/2, R` of the experiment grid.
pub fn sector_bottom(model: &WarpedModel, exp: &WaveExperiment) -> Result<f64> {
    let dr = (exp.r_max - 1.0) / exp.nr as f64;
    let truncs = [4.0, 2.0, 1.0]
        .par_iter()
        .map(|q| {
            let r = 1.0 + (exp.r_max - 1.0) / q;
            let nr = ((r - 1.0) / dr).round() as usize;
            let c = build_graded_complex(
                &model.with_r_max(r),
                None,
                ComplexSpec::Mode { nr, p: 0, mu: 0.0 },
                BoundaryCondition::Dirichlet,
            )?;
            truncated_spectrum(&c, 0, 8, exp.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(essential_bottom_estimate(&truncs)?.bottom)
}

/// Gaussian packet on the nodes of slot 0.
pub fn radial_packet(c: &GradedComplex, center: f64, width: f64) -> Vector {
    Vector::from_iterator(c.dim(0), c.dofs[0].iter().map(|d| (-(d.r - center).powi(2) / (2.0 * width * width)).exp()))
}

/// Run the radial experiment for `g`, `e^{2 psi} g` and, optionally, `e^{2 (psi + psi2)} g`.
pub fn wave_experiment(
    model: &WarpedModel,
    psi: &ConformalFactor,
    psi2: Option<&ConformalFactor>,
    exp: &WaveExperiment,
) -> Result<WaveOpDiagnostics> {
    let model = model.with_r_max(exp.r_max);
    let spec = ComplexSpec::Mode { nr: exp.nr, p: 0, mu: 0.0 };
    let c1 = build_graded_complex(&model, None, spec, BoundaryCondition::Dirichlet)?;
    let c2 = c1.conformal(psi)?;
    let maps = crate::exterior::ops::identification_maps(&c1, &c2, psi)?;
    let cutoff = CutoffSpec { bottom: sector_bottom(&model, exp)?, lambda_max: exp.lambda_max, ramp: exp.ramp };
    let u0 = radial_packet(&c1, exp.center, exp.width);
    match psi2 {
        None => wave_operator(&c1, &c2, &maps, &u0, &exp.schedule, 0, &cutoff, None),
        Some(p2) => {
            let total = psi.plus(p2)?;
            let c3 = c1.conformal(&total)?;
            let m32 = crate::exterior::ops::identification_maps(&c2, &c3, p2)?;
            let m31 = crate::exterior::ops::identification_maps(&c1, &c3, &total)?;
            let third = ThirdMetric { complex: &c3, maps_32: &m32, maps_31: &m31 };
            wave_operator(&c1, &c2, &maps, &u0, &exp.schedule, 0, &cutoff, Some(third))
        }
    }
}
