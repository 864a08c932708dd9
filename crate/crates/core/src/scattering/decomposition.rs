//! Resolvent powers, the five-term decomposition `V` of `H_gbar I - I H_g`, its
//! refinement study and trace-class diagnostics on angular mode sectors.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{build_graded_complex, sector_embedding, BoundaryCondition, ComplexSpec, GradedComplex};
use crate::expr::Point;
use crate::exterior::ops::refinement_orders;
use crate::geometry::{ConformalFactor, CrossSection, WarpedModel};
use crate::linalg::{self, Csr, SpdSolver, Vector, DENSE_LIMIT, PROBES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventConfig {
    /// Shift `lambda > 0`.
    pub lambda: f64,
    /// Power `n`.
    pub n: usize,
    /// Ambient dimension.
    pub m: usize,
    /// Curvature constant `K`.
    pub k_curv: f64,
}

impl ResolventConfig {
    /// `K ceil(m/2) floor(m/2) + 1`.
    pub fn lambda_threshold(&self) -> f64 {
        let m = self.m as f64;
        self.k_curv * (m / 2.0).ceil() * (m / 2.0).floor() + 1.0
    }

    /// Well-posedness only: `lambda > 0`, `n >= 1`, `K >= 0`.
    pub fn basic(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Rejected(format!("lambda = {} must be positive", self.lambda)));
        }
        if self.n == 0 {
            return Err(Error::Rejected("resolvent power n must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Rejected("dimension m must be at least 1".into()));
        }
        if !(self.k_curv >= 0.0 && self.k_curv.is_finite()) {
            return Err(Error::Rejected(format!("curvature constant K = {} must be finite and nonnegative", self.k_curv)));
        }
        Ok(())
    }

    /// Admissibility for the kernel-norm estimate: `n >= m/4 + 2` and
    /// `lambda > K ceil(m/2) floor(m/2) + 1`.
    pub fn validate(&self) -> Result<()> {
        self.basic()?;
        let need = self.m as f64 / 4.0 + 2.0;
        if (self.n as f64) < need {
            return Err(Error::Rejected(format!("n >= m/4 + 2 violated: n = {} < {need}", self.n)));
        }
        let t = self.lambda_threshold();
        if !(self.lambda > t) {
            return Err(Error::Rejected(format!(
                "lambda > K ceil(m/2) floor(m/2) + 1 violated: lambda = {} <= {t}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Admissibility for the trace estimate: additionally `n` even and `n >= m/2 + 4`.
    pub fn validate_trace(&self) -> Result<()> {
        self.validate()?;
        if self.n % 2 != 0 {
            return Err(Error::Rejected(format!("the factorized trace bound needs even n, got {}", self.n)));
        }
        let need = self.m as f64 / 2.0 + 4.0;
        if (self.n as f64) < need {
            return Err(Error::Rejected(format!("n >= m/2 + 4 violated: n = {} < {need}", self.n)));
        }
        Ok(())
    }
}

/// `(Delta + lambda)^{-n}` slot by slot, through a Cholesky factor of `K_s + lambda M_s`.
pub struct ResolventPower {
    pub lambda: f64,
    pub n: usize,
    mass: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    solvers: Vec<SpdSolver>,
}

impl ResolventPower {
    pub fn new(c: &GradedComplex, lambda: f64, n: usize) -> Result<ResolventPower> {
        ResolventConfig { lambda, n, m: c.m, k_curv: 0.0 }.basic()?;
        let solvers = (0..c.slots())
            .map(|s| {
                let shifted = linalg::axpby(1.0, &c.stiffness(s), lambda, &linalg::diag(&c.mass[s]));
                SpdSolver::new(&shifted)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolventPower {
            lambda,
            n,
            mass: c.mass.clone(),
            offsets: (0..c.slots()).map(|s| c.slot_offset(s)).collect(),
            solvers,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.iter().map(Vec::len).sum()
    }

    /// `R^k v` on a total vector.
    pub fn apply_pow(&self, v: &Vector, k: usize) -> Vector {
        let mut out = v.clone();
        for (s, solver) in self.solvers.iter().enumerate() {
            let (o, n) = (self.offsets[s], self.mass[s].len());
            let mut x = v.rows(o, n).into_owned();
            for _ in 0..k {
                x.iter_mut().zip(&self.mass[s]).for_each(|(a, m)| *a *= m);
                x = solver.solve(&x);
            }
            out.rows_mut(o, n).copy_from(&x);
        }
        out
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        self.apply_pow(v, self.n)
    }

    /// `R^k B` column by column.
    pub fn apply_dense_pow(&self, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let mut out = b.clone();
        for (s, solver) in self.solvers.iter().enumerate() {
            let (o, n) = (self.offsets[s], self.mass[s].len());
            let mut x = b.rows(o, n).into_owned();
            for _ in 0..k {
                for (i, m) in self.mass[s].iter().enumerate() {
                    x.row_mut(i).scale_mut(*m);
                }
                x = solver.solve_many(&x);
            }
            out.rows_mut(o, n).copy_from(&x);
        }
        out
    }

    /// The full matrix `R^n`, for dimensions up to [`DENSE_LIMIT`].
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::Dimension(format!("dense resolvent of dimension {n} exceeds {DENSE_LIMIT}")));
        }
        Ok(self.apply_dense_pow(&DMatrix::identity(n, n), self.n))
    }
}

/// `R^n` under the full admissibility check.
pub fn resolvent_power(c: &GradedComplex, cfg: &ResolventConfig) -> Result<ResolventPower> {
    cfg.validate()?;
    if cfg.m != c.m {
        return Err(Error::Dimension(format!("config dimension {} vs complex dimension {}", cfg.m, c.m)));
    }
    ResolventPower::new(c, cfg.lambda, cfg.n)
}

/// One summand `sign * left * weight * right` of `V`.
#[derive(Debug, Clone)]
pub struct VTerm {
    pub name: &'static str,
    pub sign: f64,
    pub left: Csr,
    pub weight: Csr,
    pub right: Csr,
    /// Whether `weight` is diagonal.
    pub diagonal: bool,
}

impl VTerm {
    pub fn matrix(&self) -> Csr {
        let lw = linalg::matmul(&self.left, &self.weight);
        let m = linalg::matmul(&lw, &self.right);
        m * self.sign
    }
}

fn check_pair(cg: &GradedComplex, cb: &GradedComplex) -> Result<()> {
    if !cg.same_grid(cb) {
        return Err(Error::Dimension("complexes of g and the rescaled metric do not share a grid".into()));
    }
    if cg.psi.is_some() {
        return Err(Error::Invalid("the first complex must be built for g".into()));
    }
    Ok(())
}

/// The five summands of `V = H_gbar I - I H_g`:
/// `-Dbar 2sinh(2psi) D + Dbar (1 - e^{-2psi}) d - d (1 - e^{2psi}) D
///  - Dbar int_gbar(dpsi) tau - tau int_g(dpsi) D`.
pub fn v_terms(cg: &GradedComplex, cb: &GradedComplex, psi: &ConformalFactor) -> Result<Vec<VTerm>> {
    check_pair(cg, cb)?;
    let f = |p: &Point| psi.value(p);
    let d = cg.d_total();
    let dg = cg.dirac();
    let db = cb.dirac();
    let n = cg.total_dim();
    let w = |h: &dyn Fn(f64) -> f64| linalg::diag(&cg.mult_total(&|p: &Point| h(psi.value(p))));
    let tau = linalg::diag(&cg.tau_total());
    let id = linalg::identity(n);
    Ok(vec![
        VTerm { name: "sinh", sign: -1.0, left: db.clone(), weight: w(&|x| 2.0 * (2.0 * x).sinh()), right: dg.clone(), diagonal: true },
        VTerm { name: "dbar_d", sign: 1.0, left: db.clone(), weight: w(&|x| 1.0 - (-2.0 * x).exp()), right: d.clone(), diagonal: true },
        VTerm { name: "d_dg", sign: -1.0, left: d, weight: w(&|x| 1.0 - (2.0 * x).exp()), right: dg.clone(), diagonal: true },
        VTerm {
            name: "int_gbar",
            sign: -1.0,
            left: db,
            weight: linalg::matmul(&cb.int_total(&f), &tau),
            right: id,
            diagonal: false,
        },
        VTerm { name: "int_g", sign: -1.0, left: tau, weight: cg.int_total(&f), right: dg, diagonal: false },
    ])
}

pub fn v_matrix(terms: &[VTerm]) -> Csr {
    let n = terms[0].left.nrows();
    terms.iter().fold(linalg::zeros(n, n), |acc, t| linalg::axpby(1.0, &acc, 1.0, &t.matrix()))
}

/// `H_gbar - H_g` on coefficients.
pub fn lhs_matrix(cg: &GradedComplex, cb: &GradedComplex) -> Result<Csr> {
    check_pair(cg, cb)?;
    Ok(linalg::axpby(1.0, &cb.laplacian_total(), -1.0, &cg.laplacian_total()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelResidual {
    pub spec: ComplexSpec,
    pub dr: f64,
    pub dim: usize,
    /// `max |Rbar^n (LHS - V) R^n v| / max |Rbar^n LHS R^n v|` over normalized probes.
    pub residual: f64,
    /// The same ratio restricted to each output degree.
    pub per_degree: Vec<f64>,
    pub lhs_norm: f64,
    pub rhs_norm: f64,
}

/// Relative residual of the decomposition on one grid.
pub fn decomposition_residual(
    cg: &GradedComplex,
    cb: &GradedComplex,
    psi: &ConformalFactor,
    cfg: &ResolventConfig,
    seed: u64,
) -> Result<LevelResidual> {
    cfg.basic()?;
    let lhs = lhs_matrix(cg, cb)?;
    let v = v_matrix(&v_terms(cg, cb, psi)?);
    let rg = ResolventPower::new(cg, cfg.lambda, cfg.n)?;
    let rb = ResolventPower::new(cb, cfg.lambda, cfg.n)?;
    let mg = cg.total_mass();
    let mb = cb.total_mass();
    let (mut lhs_norm, mut rhs_norm, mut diff_norm) = (0.0f64, 0.0f64, 0.0f64);
    let mut per = vec![0.0f64; cg.slots()];
    for p in linalg::probes(cg.total_dim(), PROBES, seed, &mg) {
        let x = rg.apply(&p);
        let a = rb.apply(&linalg::spmv(&lhs, &x));
        let b = rb.apply(&linalg::spmv(&v, &x));
        let diff = &a - &b;
        lhs_norm = lhs_norm.max(linalg::wnorm(&a, &mb));
        rhs_norm = rhs_norm.max(linalg::wnorm(&b, &mb));
        diff_norm = diff_norm.max(linalg::wnorm(&diff, &mb));
        for (s, part) in cb.split(&diff).iter().enumerate() {
            per[s] = per[s].max(linalg::wnorm(part, &cb.mass[s]));
        }
    }
    let rel = |x: f64| if x == 0.0 { 0.0 } else { x / lhs_norm };
    Ok(LevelResidual {
        spec: cg.spec,
        dr: cg.dr,
        dim: cg.total_dim(),
        residual: rel(diff_norm),
        per_degree: per.into_iter().map(rel).collect(),
        lhs_norm,
        rhs_norm,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VAssembly {
    pub psi: String,
    pub config: ResolventConfig,
    pub levels: Vec<LevelResidual>,
    /// Observed orders in `dr` between consecutive levels.
    pub orders: Vec<f64>,
}

/// Residuals over a sequence of grids, evaluated in parallel.
pub fn decomposition_study(
    model: &WarpedModel,
    psi: &ConformalFactor,
    levels: &[ComplexSpec],
    bc: BoundaryCondition,
    cfg: &ResolventConfig,
    seed: u64,
) -> Result<VAssembly> {
    let levels = levels
        .par_iter()
        .map(|spec| {
            let cg = build_graded_complex(model, None, *spec, bc)?;
            let cb = cg.conformal(psi)?;
            decomposition_residual(&cg, &cb, psi, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = levels.iter().map(|l| l.dr).collect();
    let e: Vec<f64> = levels.iter().map(|l| l.residual).collect();
    let orders = if e.iter().all(|x| *x > 0.0) { refinement_orders(&h, &e) } else { Vec::new() };
    Ok(VAssembly { psi: psi.describe(), config: *cfg, levels, orders })
}

/// `M_out^{1/2} A M_in^{-1/2}`: the matrix of `A` in orthonormal coordinates.
fn weighted(a: &DMatrix<f64>, out: &[f64], inp: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * out[i].sqrt() / inp[j].sqrt())
}

/// Dense `(Delta + lambda)^{-n}` from a dense inverse, block diagonal over slots.
fn dense_resolvent(c: &GradedComplex, lambda: f64, n: usize) -> Result<DMatrix<f64>> {
    let dim = c.total_dim();
    let mut out = DMatrix::zeros(dim, dim);
    for s in 0..c.slots() {
        let a = linalg::to_dense(&linalg::axpby(1.0, &c.stiffness(s), lambda, &linalg::diag(&c.mass[s])));
        let inv = a.try_inverse().ok_or_else(|| Error::Numerical("singular shifted stiffness".into()))?;
        let r = inv * DMatrix::from_diagonal(&Vector::from_vec(c.mass[s].clone()));
        let mut p = DMatrix::identity(c.dim(s), c.dim(s));
        for _ in 0..n {
            p = &r * p;
        }
        let o = c.slot_offset(s);
        out.view_mut((o, o), (c.dim(s), c.dim(s))).copy_from(&p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorOracle {
    pub mode_dim: usize,
    pub product_dim: usize,
    /// `|Res_prod E - E Res_mode| / |E Res_mode|` in mass-weighted Frobenius norm.
    pub defect: f64,
    /// Residual of the decomposition restricted to the sector.
    pub sector_residual: f64,
}

/// Compare the product-grid residual operator on angularly constant data with a
/// dense computation on the `k = 0` mode complex.
pub fn sector_oracle(
    model: &WarpedModel,
    psi: &ConformalFactor,
    nr: usize,
    ntheta: usize,
    bc: BoundaryCondition,
    cfg: &ResolventConfig,
) -> Result<SectorOracle> {
    cfg.basic()?;
    if !psi.is_radial() {
        return Err(Error::Unsupported("the sector oracle needs a radial conformal factor".into()));
    }
    let pg = build_graded_complex(model, None, ComplexSpec::Product { nr, ntheta }, bc)?;
    let mg = build_graded_complex(model, None, ComplexSpec::Mode { nr, p: 0, mu: 0.0 }, bc)?;
    if mg.total_dim() > 400 {
        return Err(Error::Dimension(format!("mode sector of dimension {} exceeds 400", mg.total_dim())));
    }
    let pb = pg.conformal(psi)?;
    let mb = mg.conformal(psi)?;
    let blocks = sector_embedding(&pg, &mg)?;
    let mut e = DMatrix::zeros(pg.total_dim(), mg.total_dim());
    for (s, b) in blocks.iter().enumerate() {
        e.view_mut((pg.slot_offset(s), mg.slot_offset(s)), (pg.dim(s), mg.dim(s))).copy_from(&linalg::to_dense(b));
    }

    let res_p = {
        let op = linalg::axpby(1.0, &lhs_matrix(&pg, &pb)?, -1.0, &v_matrix(&v_terms(&pg, &pb, psi)?));
        let rg = ResolventPower::new(&pg, cfg.lambda, cfg.n)?;
        let rb = ResolventPower::new(&pb, cfg.lambda, cfg.n)?;
        let x = rg.apply_dense_pow(&e, cfg.n);
        let y = linalg::to_dense(&op) * x;
        rb.apply_dense_pow(&y, cfg.n)
    };
    let rg = dense_resolvent(&mg, cfg.lambda, cfg.n)?;
    let rb = dense_resolvent(&mb, cfg.lambda, cfg.n)?;
    let lhs = linalg::to_dense(&lhs_matrix(&mg, &mb)?);
    let v = linalg::to_dense(&v_matrix(&v_terms(&mg, &mb, psi)?));
    let res_m = &rb * (&lhs - &v) * &rg;
    let full = &rb * &lhs * &rg;
    let (pmass, mmass, mmass_b) = (pb.total_mass(), mg.total_mass(), mb.total_mass());
    let embedded = &e * &res_m;
    let num = weighted(&(&res_p - &embedded), &pmass, &mmass).norm();
    let den = weighted(&embedded, &pmass, &mmass).norm();
    let lhs_w = weighted(&full, &mmass_b, &mmass).norm();
    let res_w = weighted(&res_m, &mmass_b, &mmass).norm();
    Ok(SectorOracle {
        mode_dim: mg.total_dim(),
        product_dim: pg.total_dim(),
        defect: if num == 0.0 { 0.0 } else { num / den },
        sector_residual: if res_w == 0.0 { 0.0 } else { res_w / lhs_w },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchattenMode {
    /// Direct norms only.
    Direct,
    /// Direct norms plus the factorized trace bound; needs even `n`.
    Factorized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorNorms {
    pub k: usize,
    pub multiplicity: usize,
    pub mu: f64,
    pub dim: usize,
    /// `|(e^{psi tau} - 1) R^n|_HS`.
    pub hs_identification: f64,
    /// `|Rbar^n V R^n|_1`.
    pub trace_v: f64,
    /// `sum_i |Rbar^n L_i S_i|_HS |S_i^+ W_i R_i R^n|_HS`.
    pub factorized: Option<f64>,
    /// `|S Rbar^{n/2}|_HS` and `|S R^{n/2}|_HS` with `S = |sinh(2 psi)|^{1/2}`.
    pub sinh_half: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchattenRecord {
    pub r_max: f64,
    pub nr: usize,
    pub config: ResolventConfig,
    pub sectors: Vec<SectorNorms>,
    pub hs_identification: f64,
    pub trace_v: f64,
    pub factorized_bound: Option<f64>,
    /// `|S Rbar^{n/2}|_HS |S R^{n/2}|_HS`, the shape of the bound up to its constant.
    pub sinh_half_product: Option<f64>,
    /// Whether the factorized bound is at least the direct trace norm.
    pub dominates: Option<bool>,
    pub note: String,
}

pub const SECTOR_TOL: f64 = 1e-10;
pub const MAX_SECTORS: usize = 400;

fn diag_dense(w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&Vector::from_column_slice(w))
}

fn sector_norms(
    model: &WarpedModel,
    psi: &ConformalFactor,
    k: usize,
    mu: f64,
    nr: usize,
    bc: BoundaryCondition,
    cfg: &ResolventConfig,
    mode: SchattenMode,
) -> Result<SectorNorms> {
    let cg = build_graded_complex(model, None, ComplexSpec::Mode { nr, p: 0, mu }, bc)?;
    let cb = cg.conformal(psi)?;
    let mg = cg.total_mass();
    let mb = cb.total_mass();
    let rg = dense_resolvent(&cg, cfg.lambda, cfg.n)?;
    let rb = dense_resolvent(&cb, cfg.lambda, cfg.n)?;
    let et: Vec<f64> = cg.mult_total(&|p| psi.value(p)).iter().zip(cg.tau_total()).map(|(x, t)| (t * x).exp() - 1.0).collect();
    let hs_identification = weighted(&(diag_dense(&et) * &rg), &mg, &mg).norm();
    let terms = v_terms(&cg, &cb, psi)?;
    let v = linalg::to_dense(&v_matrix(&terms));
    let trace_v = linalg::trace_norm(&weighted(&(&rb * &v * &rg), &mb, &mg));
    let (factorized, sinh_half) = match mode {
        SchattenMode::Direct => (None, None),
        SchattenMode::Factorized => {
            let mut total = 0.0;
            for t in &terms {
                let w = linalg::to_dense(&t.weight);
                let s: Vec<f64> = if t.diagonal {
                    (0..w.nrows()).map(|i| w[(i, i)].abs().sqrt()).collect()
                } else {
                    (0..w.nrows()).map(|i| w.row(i).iter().map(|x| x.abs()).sum::<f64>().sqrt()).collect()
                };
                let s_pinv: Vec<f64> = s.iter().map(|x| if *x > 0.0 { 1.0 / x } else { 0.0 }).collect();
                let a = &rb * linalg::to_dense(&t.left) * diag_dense(&s);
                let b = diag_dense(&s_pinv) * &w * linalg::to_dense(&t.right) * &rg;
                total += weighted(&a, &mb, &mg).norm() * weighted(&b, &mg, &mg).norm();
            }
            let sh: Vec<f64> = cg.mult_total(&|p| (2.0 * psi.value(p)).sinh().abs().sqrt());
            let half = cfg.n / 2;
            let hg = dense_resolvent(&cg, cfg.lambda, half)?;
            let hb = dense_resolvent(&cb, cfg.lambda, half)?;
            let a = weighted(&(diag_dense(&sh) * hb), &mg, &mb).norm();
            let b = weighted(&(diag_dense(&sh) * hg), &mg, &mg).norm();
            (Some(total), Some((a, b)))
        }
    };
    Ok(SectorNorms {
        k,
        multiplicity: if k == 0 { 1 } else { 2 },
        mu,
        dim: cg.total_dim(),
        hs_identification,
        trace_v,
        factorized,
        sinh_half,
    })
}

/// Hilbert-Schmidt norm of `(I*I - 1) R^n` and trace norm of `Rbar^n V R^n` on a
/// two-dimensional warped end over a circle with radial `psi`, summed over the
/// angular Fourier sectors `mu = k^2 / rho^2` until contributions fall below
/// [`SECTOR_TOL`] relative.
pub fn schatten_diagnostics(
    model: &WarpedModel,
    psi: &ConformalFactor,
    nr: usize,
    bc: BoundaryCondition,
    cfg: &ResolventConfig,
    mode: SchattenMode,
) -> Result<SchattenRecord> {
    match mode {
        SchattenMode::Direct => cfg.validate()?,
        SchattenMode::Factorized => cfg.validate_trace()?,
    }
    let rho = match model.cross_section {
        CrossSection::Circle { radius } => radius,
        _ => return Err(Error::Unsupported("sector summation needs a circle cross-section".into())),
    };
    if !psi.is_radial() {
        return Err(Error::Unsupported("sector summation needs a radial conformal factor".into()));
    }
    const BATCH: usize = 8;
    let mut sectors: Vec<SectorNorms> = Vec::new();
    let mut done = false;
    while !done {
        let start = sectors.len();
        if start >= MAX_SECTORS {
            return Err(Error::NoConvergence {
                residual: sectors.last().map_or(f64::NAN, |s| s.trace_v),
                detail: format!("sector sum not settled after {MAX_SECTORS} angular modes"),
            });
        }
        let batch = (start..start + BATCH)
            .into_par_iter()
            .map(|k| sector_norms(model, psi, k, (k * k) as f64 / (rho * rho), nr, bc, cfg, mode))
            .collect::<Result<Vec<_>>>()?;
        for s in batch {
            let size = |x: &SectorNorms| x.hs_identification.max(x.trace_v).max(x.factorized.unwrap_or(0.0));
            let total: f64 = sectors.iter().map(size).fold(0.0, f64::max);
            if s.k > 0 && size(&s) <= SECTOR_TOL * total {
                done = true;
                break;
            }
            sectors.push(s);
        }
    }
    let mult = |s: &SectorNorms| s.multiplicity as f64;
    let hs_identification = sectors.iter().map(|s| mult(s) * s.hs_identification.powi(2)).sum::<f64>().sqrt();
    let trace_v: f64 = sectors.iter().map(|s| mult(s) * s.trace_v).sum();
    let (factorized_bound, sinh_half_product) = match mode {
        SchattenMode::Direct => (None, None),
        SchattenMode::Factorized => {
            let fb: f64 = sectors.iter().map(|s| mult(s) * s.factorized.unwrap_or(0.0)).sum();
            let a = sectors.iter().map(|s| mult(s) * s.sinh_half.map_or(0.0, |x| x.0).powi(2)).sum::<f64>().sqrt();
            let b = sectors.iter().map(|s| mult(s) * s.sinh_half.map_or(0.0, |x| x.1).powi(2)).sum::<f64>().sqrt();
            (Some(fb), Some(a * b))
        }
    };
    let dominates = factorized_bound.map(|fb| fb >= trace_v * (1.0 - 1e-12));
    Ok(SchattenRecord {
        r_max: model.r_max,
        nr,
        config: *cfg,
        sectors,
        hs_identification,
        trace_v,
        factorized_bound,
        sinh_half_product,
        dominates,
        note: "norms of truncations; stabilization under growing R is a heuristic for Schatten-class membership".into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchattenStudy {
    pub runs: Vec<SchattenRecord>,
    /// Relative changes between consecutive radii.
    pub hs_changes: Vec<f64>,
    pub trace_changes: Vec<f64>,
    pub stable: bool,
    pub dominated: bool,
}

pub const STABILITY_TOL: f64 = 0.1;

/// [`schatten_diagnostics`] at a fixed `dr` over growing truncation radii.
pub fn schatten_study(
    model: &WarpedModel,
    psi: &ConformalFactor,
    radii: &[f64],
    dr: f64,
    bc: BoundaryCondition,
    cfg: &ResolventConfig,
    mode: SchattenMode,
) -> Result<SchattenStudy> {
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("need at least two strictly increasing radii".into()));
    }
    let runs = radii
        .par_iter()
        .map(|&r| {
            let nr = ((r - 1.0) / dr).round() as usize;
            schatten_diagnostics(&model.with_r_max(r), psi, nr, bc, cfg, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    let change = |a: f64, b: f64| if a == b { 0.0 } else { (b - a).abs() / a.abs().max(b.abs()) };
    let hs_changes: Vec<f64> = runs.windows(2).map(|w| change(w[0].hs_identification, w[1].hs_identification)).collect();
    let trace_changes: Vec<f64> = runs.windows(2).map(|w| change(w[0].trace_v, w[1].trace_v)).collect();
    let stable = hs_changes.iter().chain(&trace_changes).all(|c| *c <= STABILITY_TOL);
    let dominated = runs.iter().all(|r| r.dominates.unwrap_or(true));
    Ok(SchattenStudy { runs, hs_changes, trace_changes, stable, dominated })
}
