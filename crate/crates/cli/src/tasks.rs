//! The three batch tasks.

use serde::Serialize;

use hodge_core::exterior::{
    build_graded_complex, conformal_codifferential, dirac_commutator_residual, fiber_apply, identification_adjointness,
    identification_maps, refinement_orders, ComplexSpec, FiberElement, FiberKind, GradedComplex, C64,
};
use hodge_core::expr::Point;
use hodge_core::geometry::curvature::FD_STEP;
use hodge_core::geometry::{conformal_curvature, conformal_curvature_oracle, ConformalFactor, CrossSection, MetricDesc, RadialFn};
use hodge_core::linalg;
use hodge_core::quad::TailVerdict;
use hodge_core::scattering::{
    decomposition_study, ms_conditions, phi_profile, scattering_integral, schatten_study, sector_oracle, v_matrix, v_terms,
    warped_beta_check, wave_experiment, BetaReport, ControlFunction, DeviationReport, MsReport, PhiProfile, SchattenMode,
    SchattenStudy, SectorOracle, VAssembly, WaveOpDiagnostics,
};
use hodge_core::spectral::{ac_prediction, spectral_sweep, AcPrediction, Relation, SpectralReport, ThresholdSet};

use crate::config::{ConfigError, Resolved, RunConfig, Task};
use crate::report::{tagged, Artifact, Check, Provenance, ReasonCode, ReportBundle, Tagged};

/// Residuals at or below this count as exact zeros.
pub const EXACT_TOL: f64 = 1e-12;
/// Minimal observed convergence order.
pub const MIN_ORDER: f64 = 0.9;
/// Finest-level bound on the relative decomposition residual.
pub const DECOMPOSITION_TOL: f64 = 1e-2;
/// Dense-oracle agreement on a mode sector.
pub const ORACLE_TOL: f64 = 1e-8;
/// Largest mode-sector dimension handed to the dense oracle.
pub const ORACLE_MAX_NR: usize = 96;
/// Relative agreement of the curvature formula with the finite-difference oracle.
pub const CURVATURE_TOL: f64 = 1e-4;

fn reason_of(e: &hodge_core::Error) -> ReasonCode {
    match e {
        hodge_core::Error::Contaminated { .. } => ReasonCode::Contaminated,
        hodge_core::Error::NoConvergence { .. } => ReasonCode::EigensolverFailed,
        hodge_core::Error::Rejected(_) => ReasonCode::Rejected,
        hodge_core::Error::Unsupported(_) => ReasonCode::Unsupported,
        _ => ReasonCode::ComputeError,
    }
}

fn error_check(task: Task, name: &str, provenance: Provenance, e: &hodge_core::Error) -> Check {
    Check::failed(task.name(), name, provenance, reason_of(e), e.to_string())
}

fn require(cfg: &RunConfig, task: Task) -> Result<Resolved, ConfigError> {
    if !cfg.tasks.contains(&task) {
        return Err(ConfigError::Field { field: "tasks".into(), message: format!("does not select {}", task.name()) });
    }
    cfg.resolve()
}

fn bundle(task: Task, cfg: &RunConfig, outputs: &impl Serialize, checks: Vec<Check>, artifacts: Vec<Artifact>) -> ReportBundle {
    ReportBundle::new(task.name(), cfg, serde_json::to_value(outputs).expect("outputs serialize"), checks, artifacts)
}

fn csv_artifact<R: Serialize>(name: &str, rows: &[R]) -> Artifact {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("csv row");
    }
    Artifact { name: name.into(), contents: String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8") }
}

/// Largest relative defects of the fiber identities over seeded random samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberDefects {
    pub m: usize,
    pub samples: usize,
    /// `|ext int + int ext - |eta|^2| / (|eta|^2 |omega|)`.
    pub anticommutator: f64,
    /// `| |int omega|^2 - |eta|^2 |omega|^2 + |ext omega|^2 | / (|eta|^2 |omega|^2)`.
    pub norm_identity: f64,
}

pub fn fiber_identities(m: usize, samples: usize, seed: u64) -> hodge_core::Result<FiberDefects> {
    let mut rng = linalg::rng(seed);
    let (mut anti, mut norm): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let eta: Vec<f64> = linalg::random_vector(&mut rng, m).iter().copied().collect();
        let re = linalg::random_vector(&mut rng, 1 << m);
        let im = linalg::random_vector(&mut rng, 1 << m);
        let w = FiberElement::from_coeffs(m, re.iter().zip(im.iter()).map(|(a, b)| C64::new(*a, *b)).collect())?;
        let e2: f64 = eta.iter().map(|x| x * x).sum();
        let ext = fiber_apply(FiberKind::Ext, &eta, &w, None)?;
        let int = fiber_apply(FiberKind::Int, &eta, &w, None)?;
        let lhs = fiber_apply(FiberKind::Ext, &eta, &int, None)?.add(&fiber_apply(FiberKind::Int, &eta, &ext, None)?);
        anti = anti.max(lhs.sub(&w.scale(e2)).norm() / (e2 * w.norm()));
        let w2 = w.norm_sqr();
        norm = norm.max((int.norm_sqr() - (e2 * w2 - ext.norm_sqr())).abs() / (e2 * w2));
    }
    Ok(FiberDefects { m, samples, anticommutator: anti, norm_identity: norm })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexDefects {
    pub spec: ComplexSpec,
    pub dim: usize,
    pub dd: f64,
    pub adjointness: f64,
    pub identification: f64,
    pub identification_adjointness: f64,
}

/// One refinement level of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub dr: f64,
    pub residual: f64,
    pub order: Option<f64>,
}

fn level_rows(specs: &[ComplexSpec], dr: &[f64], res: &[f64]) -> Vec<LevelRow> {
    let orders = refinement_orders(dr, res);
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| LevelRow {
            level: i,
            nr: s.nr(),
            ntheta: match s {
                ComplexSpec::Product { ntheta, .. } => *ntheta,
                ComplexSpec::Mode { .. } => 0,
            },
            dr: dr[i],
            residual: res[i],
            order: if i == 0 { None } else { Some(orders[i - 1]).filter(|o| o.is_finite()) },
        })
        .collect()
}

/// PASS when every residual is an exact zero, or every observed order reaches `MIN_ORDER`.
fn convergence_check(task: Task, name: &str, provenance: Provenance, rows: &[LevelRow]) -> Check {
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    if worst <= EXACT_TOL {
        return Check::verdict(task.name(), name, provenance, true, ReasonCode::OrderTooLow, format!("exact: max residual {worst:.3e}"))
            .with_value(worst);
    }
    if rows.len() < 2 {
        return Check::failed(task.name(), name, provenance, ReasonCode::Rejected, "an order needs at least two grid levels".into());
    }
    let orders: Vec<f64> = rows.windows(2).map(|w| (w[0].residual / w[1].residual).ln() / (w[0].dr / w[1].dr).ln()).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = min >= MIN_ORDER;
    Check::verdict(task.name(), name, provenance, pass, ReasonCode::OrderTooLow, format!("orders {orders:.3?}, need >= {MIN_ORDER}"))
        .with_value(min)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSample {
    pub example: String,
    pub point: Vec<f64>,
    pub max_abs_oracle: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutputs {
    pub fiber: Option<Tagged<FiberDefects>>,
    pub complex: Option<Tagged<ComplexDefects>>,
    pub codifferential: Tagged<Vec<LevelRow>>,
    pub dirac: Tagged<Vec<LevelRow>>,
    pub curvature: Tagged<Vec<CurvatureSample>>,
    pub notes: Vec<String>,
}

fn build(res: &Resolved, spec: ComplexSpec, cfg: &RunConfig) -> hodge_core::Result<GradedComplex> {
    build_graded_complex(&res.model, None, spec, cfg.boundary())
}

/// Curvature formula against the oracle on the configured end (circle
/// cross-sections) and on the round-sphere chart of the plane.
fn curvature_samples(res: &Resolved) -> (Vec<CurvatureSample>, Vec<Check>, Vec<String>) {
    let t = Task::Verify.name();
    let mut samples = Vec::new();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let sphere = ConformalFactor::parse("log(2/(1 + x1^2 + x2^2))").expect("fixed expression");
    let flat = MetricDesc::Euclidean { m: 2 };
    let id = nalgebra::DMatrix::identity(2, 2);
    let mut worst: f64 = 0.0;
    for x in [[0.0, 0.0], [0.3, -0.4], [1.2, 0.7]] {
        let a = conformal_curvature(&flat, &sphere, &x, &id);
        let b = conformal_curvature_oracle(&flat, &sphere, &x, &id, FD_STEP);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let d = a.relative_diff(&b);
                worst = worst.max(d);
                samples.push(CurvatureSample { example: "plane, round-sphere factor".into(), point: x.to_vec(), max_abs_oracle: b.max_abs(), difference: d });
            }
            (Err(e), _) | (_, Err(e)) => checks.push(error_check(Task::Verify, "curvature_reference", Provenance::Analytic, &e)),
        }
    }
    if checks.is_empty() {
        checks.push(Check::at_most(t, "curvature_reference", Provenance::Analytic, worst, CURVATURE_TOL));
    }

    let model = &res.model;
    let CrossSection::Circle { radius } = model.cross_section else {
        notes.push("curvature on the configured end needs a circle cross-section; skipped".into());
        return (samples, checks, notes);
    };
    if res.psi.expr().is_none() {
        notes.push("conformal factor has no closed form; curvature on the configured end skipped".into());
        return (samples, checks, notes);
    }
    let g = MetricDesc::Warped(Box::new(model.clone()));
    let frame_at = |r: f64| nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 / model.h_warp.value(r), 1.0 / (model.f.value(r) * radius)]));
    let mut worst: f64 = 0.0;
    let mut scale_defect: f64 = 0.0;
    let span = model.r_max - 1.0;
    for (r, th) in [(1.0 + 0.25 * span, 0.3), (1.0 + 0.5 * span, 1.7), (1.0 + 0.75 * span, 4.0)] {
        let x = [r, th];
        let frame = frame_at(r);
        let a = conformal_curvature(&g, &res.psi, &x, &frame);
        let b = conformal_curvature_oracle(&g, &res.psi, &x, &frame, FD_STEP);
        let zero = conformal_curvature(&g, &ConformalFactor::zero(), &x, &frame);
        let c = 0.7;
        let scaled = conformal_curvature(&g, &ConformalFactor::constant(c), &x, &frame);
        match (a, b, zero, scaled) {
            (Ok(a), Ok(b), Ok(z), Ok(s)) => {
                let d = a.minus(&b).max_abs() / b.max_abs().max(1.0);
                worst = worst.max(d);
                scale_defect = scale_defect.max(s.minus(&z.scaled((-2.0 * c).exp())).max_abs() / z.max_abs().max(1.0));
                samples.push(CurvatureSample { example: "configured end".into(), point: x.to_vec(), max_abs_oracle: b.max_abs(), difference: d });
            }
            (Err(e), ..) | (_, Err(e), ..) | (_, _, Err(e), _) | (.., Err(e)) => {
                checks.push(error_check(Task::Verify, "curvature_end", Provenance::Analytic, &e));
                return (samples, checks, notes);
            }
        }
    }
    let mut c = Check::at_most(t, "curvature_end", Provenance::Analytic, worst, CURVATURE_TOL);
    c.detail = format!("{worst:.3e} <= {CURVATURE_TOL:.1e} relative to max(|R|, 1)");
    checks.push(c);
    checks.push(Check::at_most(t, "curvature_constant_scaling", Provenance::Analytic, scale_defect, EXACT_TOL));
    (samples, checks, notes)
}

/// Fiber identities, complex exactness and identification, the conformal
/// codifferential and Dirac commutator convergence tables and the curvature oracle.
pub fn run_verify(cfg: &RunConfig) -> Result<ReportBundle, ConfigError> {
    let res = require(cfg, Task::Verify)?;
    let task = Task::Verify;
    let t = task.name();
    let seed = cfg.numerics.seed;
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let fiber = match fiber_identities(cfg.manifold.m, cfg.numerics.fiber_samples, seed) {
        Ok(f) => {
            checks.push(Check::at_most(t, "fiber_anticommutator", Provenance::Analytic, f.anticommutator, EXACT_TOL));
            checks.push(Check::at_most(t, "fiber_norm_identity", Provenance::Analytic, f.norm_identity, EXACT_TOL));
            Some(tagged(Provenance::Analytic, f))
        }
        Err(e) => {
            checks.push(error_check(task, "fiber_identities", Provenance::Analytic, &e));
            None
        }
    };

    let specs = cfg.levels(&res);
    let complexes: Vec<hodge_core::Result<GradedComplex>> = specs.iter().map(|s| build(&res, *s, cfg)).collect();

    let finest = specs.len() - 1;
    let complex = match complexes[finest].as_ref().map_err(Clone::clone).and_then(|c| {
        let cb = c.conformal(&res.psi)?;
        let maps = identification_maps(c, &cb, &res.psi)?;
        Ok(ComplexDefects {
            spec: specs[finest],
            dim: c.total_dim(),
            dd: c.dd_defect().max(cb.dd_defect()),
            adjointness: c.adjointness_defect(seed).max(cb.adjointness_defect(seed + 1)),
            identification: maps.defect,
            identification_adjointness: identification_adjointness(c, &cb, &maps, seed + 2),
        })
    }) {
        Ok(d) => {
            checks.push(Check::at_most(t, "d_squared", Provenance::Analytic, d.dd, EXACT_TOL));
            checks.push(Check::at_most(t, "codifferential_adjointness", Provenance::ProbeEstimate, d.adjointness, EXACT_TOL));
            checks.push(Check::at_most(t, "identification_adjoint", Provenance::Analytic, d.identification, EXACT_TOL));
            checks.push(Check::at_most(t, "identification_adjointness", Provenance::ProbeEstimate, d.identification_adjointness, EXACT_TOL));
            Some(tagged(Provenance::Analytic, d))
        }
        Err(e) => {
            checks.push(error_check(task, "complex_exactness", Provenance::Analytic, &e));
            None
        }
    };

    let mut codiff = Vec::new();
    let mut dirac = Vec::new();
    let mut dr = Vec::new();
    let psi = &res.psi;
    let f = |p: &Point| psi.value(p);
    let mut failed = false;
    for (i, c) in complexes.iter().enumerate() {
        let r = c.as_ref().map_err(Clone::clone).and_then(|c| {
            let a = conformal_codifferential(c, psi, seed + i as u64)?.residual;
            let b = dirac_commutator_residual(c, &f, None, seed + i as u64)?;
            Ok((c.dr, a, b))
        });
        match r {
            Ok((h, a, b)) => {
                dr.push(h);
                codiff.push(a);
                dirac.push(b);
            }
            Err(e) => {
                checks.push(error_check(task, "codifferential_convergence", Provenance::ProbeEstimate, &e));
                failed = true;
                break;
            }
        }
    }
    let (codiff_rows, dirac_rows) = if failed {
        (Vec::new(), Vec::new())
    } else {
        let a = level_rows(&specs, &dr, &codiff);
        let b = level_rows(&specs, &dr, &dirac);
        checks.push(convergence_check(task, "codifferential_convergence", Provenance::ProbeEstimate, &a));
        checks.push(convergence_check(task, "dirac_commutator_convergence", Provenance::ProbeEstimate, &b));
        (a, b)
    };
    if let Ok(c) = &complexes[0] {
        match dirac_commutator_residual(c, &|_: &Point| 2.0, None, seed) {
            Ok(v) => checks.push(Check::at_most(t, "dirac_commutator_constant", Provenance::ProbeEstimate, v, EXACT_TOL)),
            Err(e) => checks.push(error_check(task, "dirac_commutator_constant", Provenance::ProbeEstimate, &e)),
        }
    }

    let (curv, curv_checks, curv_notes) = curvature_samples(&res);
    checks.extend(curv_checks);
    notes.extend(curv_notes);

    let artifacts = vec![csv_artifact("codifferential_convergence.csv", &codiff_rows), csv_artifact("dirac_commutator.csv", &dirac_rows)];
    let outputs = VerifyOutputs {
        fiber,
        complex,
        codifferential: tagged(Provenance::ProbeEstimate, codiff_rows),
        dirac: tagged(Provenance::ProbeEstimate, dirac_rows),
        curvature: tagged(Provenance::Analytic, curv),
        notes,
    };
    Ok(bundle(task, cfg, &outputs, checks, artifacts))
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeSpectrum {
    pub degree: usize,
    pub report: Option<Tagged<SpectralReport>>,
    pub prediction: Option<Tagged<AcPrediction>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutputs {
    pub sector: Option<usize>,
    pub degrees: Vec<DegreeSpectrum>,
}

#[derive(Debug, Clone, Serialize)]
struct EigenRow {
    r_max: f64,
    degree: usize,
    index: usize,
    eigenvalue: f64,
}

/// Threshold of one angular sector: `mu / f(inf)^2` on cylinder-like ends, `0` for `b > 0`.
fn sector_prediction(b: f64, mu: f64, f: &RadialFn, degree: usize) -> AcPrediction {
    let bottom = if b > 0.0 { 0.0 } else { mu / f.value(1e6).powi(2) };
    AcPrediction {
        b,
        degree,
        set: ThresholdSet { thresholds: vec![bottom], relation: Relation::Equal },
        bottom_without_kernel: None,
        readings_agree: true,
    }
}

/// Truncated spectra per degree over the configured radii, compared with the
/// predicted threshold.
pub fn run_spectrum(cfg: &RunConfig) -> Result<ReportBundle, ConfigError> {
    let res = require(cfg, Task::Spectrum)?;
    let task = Task::Spectrum;
    let t = task.name();
    let sc = cfg.numerics.spectrum.as_ref().ok_or_else(|| ConfigError::Field {
        field: "numerics.spectrum".into(),
        message: "required by the spectrum task".into(),
    })?;
    if sc.radii.len() < 3 {
        return Err(ConfigError::Field { field: "numerics.spectrum.radii".into(), message: "at least 3 radii are needed to extrapolate".into() });
    }
    let (template, mu) = match (sc.sector, &res.model.cross_section) {
        (None, CrossSection::Circle { .. }) => (ComplexSpec::Product { nr: 0, ntheta: cfg.numerics.grid.ntheta }, None),
        (None, _) => {
            return Err(ConfigError::Field {
                field: "numerics.spectrum.sector".into(),
                message: "non-circle cross-sections are resolved one sector at a time".into(),
            })
        }
        (Some(k), CrossSection::Circle { radius }) => {
            let mu = (k * k) as f64 / (radius * radius);
            (ComplexSpec::Mode { nr: 0, p: 0, mu }, Some(mu))
        }
        (Some(_), _) => {
            return Err(ConfigError::Field { field: "numerics.spectrum.sector".into(), message: "sectors are Fourier modes of a circle".into() })
        }
    };
    let mut checks = Vec::new();
    let mut degrees = Vec::new();
    let mut rows = Vec::new();
    let tol = cfg.numerics.tolerance;
    for &j in &sc.degrees {
        let pred = match mu {
            Some(mu) => Ok(sector_prediction(cfg.manifold.b, mu, &res.model.f, j)),
            None => ac_prediction(cfg.manifold.b, &res.cross_section, j, cfg.manifold.ball_core),
        };
        let pred = match pred {
            Ok(p) => Some(p),
            Err(e) => {
                checks.push(error_check(task, &format!("prediction_degree_{j}"), Provenance::Analytic, &e));
                None
            }
        };
        let sweep = spectral_sweep(&res.model, template, sc.per_unit, &sc.radii, cfg.boundary(), j, sc.count, cfg.numerics.seed)
            .and_then(|tr| SpectralReport::new(tr, pred.clone()));
        let report = match sweep {
            Ok(r) => r,
            Err(e) => {
                checks.push(error_check(task, &format!("threshold_degree_{j}"), Provenance::Eigensolve, &e));
                degrees.push(DegreeSpectrum { degree: j, report: None, prediction: pred.map(|p| tagged(Provenance::Analytic, p)) });
                continue;
            }
        };
        rows.extend(report.rows().into_iter().map(|(r_max, degree, index, eigenvalue)| EigenRow { r_max, degree, index, eigenvalue }));
        if let (Some(b), Some(p)) = (&report.bottom, &pred) {
            let gap = (b.bottom - p.set.bottom()).abs();
            let mut c = Check::at_most(t, &format!("threshold_degree_{j}"), Provenance::Eigensolve, gap, tol);
            c.detail = format!("extrapolated {:.4} vs predicted {:.4}, |gap| {gap:.3e} <= {tol}", b.bottom, p.set.bottom());
            checks.push(c);
            checks.push(Check::verdict(
                t,
                &format!("count_stable_degree_{j}"),
                Provenance::Eigensolve,
                b.count_stable,
                ReasonCode::CountUnstable,
                format!("eigenvalues below bottom - 0.1 per radius: {:?}", b.counts_below),
            ));
        }
        degrees.push(DegreeSpectrum {
            degree: j,
            report: Some(tagged(Provenance::Eigensolve, report)),
            prediction: pred.map(|p| tagged(Provenance::Analytic, p)),
        });
    }
    let outputs = SpectrumOutputs { sector: sc.sector, degrees };
    Ok(bundle(task, cfg, &outputs, checks, vec![csv_artifact("spectrum_eigenvalues.csv", &rows)]))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatterOutputs {
    pub deviation: Option<Tagged<DeviationReport>>,
    pub moderate_decay: Option<Tagged<MsReport>>,
    pub warped_beta: Option<Tagged<BetaReport>>,
    pub phi_profile: Option<Tagged<PhiProfile>>,
    pub decomposition: Option<Tagged<VAssembly>>,
    pub sector_oracle: Option<Tagged<SectorOracle>>,
    pub schatten: Option<Tagged<SchattenStudy>>,
    pub wave: Option<Tagged<WaveOpDiagnostics>>,
    pub notes: Vec<String>,
}

fn tail_check(name: &str, tail: &TailVerdict, what: &str) -> Check {
    let t = Task::Scatter.name();
    match tail {
        TailVerdict::Finite { value, tail_bound, .. } => {
            Check::verdict(t, name, Provenance::Quadrature, true, ReasonCode::Divergent, format!("{what} finite: {value:.6e} + tail <= {tail_bound:.1e}"))
                .with_value(value + tail_bound)
        }
        TailVerdict::Divergent { witness, reason } => {
            let last = witness.last().map(|(r, v)| format!("partial integral {v:.4e} at R = {r}")).unwrap_or_default();
            Check::failed(t, name, Provenance::Quadrature, ReasonCode::Divergent, format!("{what} diverges: {reason}; {last}"))
        }
        TailVerdict::Inconclusive { reason } => {
            Check::failed(t, name, Provenance::Quadrature, ReasonCode::InconclusiveTail, format!("{what} inconclusive: {reason}"))
        }
    }
}

/// Weighted deviation integral, sufficient conditions, decomposition
/// residuals, Schatten diagnostics and wave-operator diagnostics.
pub fn run_scatter(cfg: &RunConfig) -> Result<ReportBundle, ConfigError> {
    let res = require(cfg, Task::Scatter)?;
    let task = Task::Scatter;
    let t = task.name();
    res.psi.require_bounded().map_err(|e| ConfigError::Field { field: "conformal.sup_psi".into(), message: e.to_string() })?;
    let model = &res.model;
    let psi = &res.psi;
    let seed = cfg.numerics.seed;
    let cr = &cfg.criteria;
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut artifacts = Vec::new();

    let deviation = match scattering_integral(psi, model, &res.h, cr.r_quad) {
        Ok(d) => {
            checks.push(tail_check("scattering_integral", &d.tail, "d_h(g, psi)"));
            Some(tagged(Provenance::Quadrature, d))
        }
        Err(e) => {
            checks.push(error_check(task, "scattering_integral", Provenance::Quadrature, &e));
            None
        }
    };

    let moderate_decay = cr.ms.as_ref().and_then(|ms| {
        let run = RadialFn::parse(&ms.beta)
            .and_then(|b| ControlFunction::new(b, ms.c1, ms.c2, ms.b_exp, ms.c_dev))
            .and_then(|beta| ms_conditions(&beta, model, &RadialFn::parse(&ms.inj)?, psi, cr.r_quad));
        match run {
            Ok(r) => {
                let detail = format!(
                    "condition (i) {} (ratio {:.3e}), condition (ii) {} (inj ratio {:.3e}), decreasing {}, exp lower bound {}",
                    r.condition_i, r.deviation_ratio, r.condition_ii, r.inj_ratio, r.beta_decreasing, r.exp_lower_bound
                );
                let reason = if r.integrability.is_divergent() { ReasonCode::Divergent } else { ReasonCode::ToleranceExceeded };
                checks.push(Check::verdict(t, "moderate_decay_conditions", Provenance::Quadrature, r.pass, reason, detail));
                Some(tagged(Provenance::Quadrature, r))
            }
            Err(e) => {
                checks.push(Check::failed(t, "moderate_decay_conditions", Provenance::Quadrature, ReasonCode::Rejected, e.to_string()));
                None
            }
        }
    });

    let warped_beta = cr.beta.as_ref().and_then(|b| match RadialFn::parse(b).and_then(|b| warped_beta_check(&b, model, cr.r_quad)) {
        Ok(r) => {
            let mut c = tail_check("warped_beta", &r.tail, &r.requirement);
            c.detail = format!("{} end: {}", format!("{:?}", r.kind).to_lowercase(), c.detail);
            checks.push(c);
            Some(tagged(Provenance::Quadrature, r))
        }
        Err(e) => {
            checks.push(error_check(task, "warped_beta", Provenance::Quadrature, &e));
            None
        }
    });

    let phi = if cr.phi_profile {
        match phi_profile(&model.f, model.b, model.n(), cr.r_quad) {
            Ok(p) => {
                let reason = if p.beta_check.finite { ReasonCode::Unstable } else { ReasonCode::Divergent };
                let detail = format!("hessian bounded {:?}, beta {}", p.hessian.bounded, p.beta_check.requirement);
                checks.push(Check::verdict(t, "phi_profile", Provenance::Quadrature, p.pass, reason, detail));
                Some(tagged(Provenance::Quadrature, p))
            }
            Err(e) => {
                checks.push(error_check(task, "phi_profile", Provenance::Quadrature, &e));
                None
            }
        }
    } else {
        None
    };

    let (decomposition, oracle) = match cfg.resolvent() {
        None => {
            notes.push("no numerics.resolvent block; decomposition skipped".into());
            (None, None)
        }
        Some(rc) => {
            let specs = cfg.levels(&res);
            let study = decomposition_study(model, psi, &specs, cfg.boundary(), &rc, seed);
            let decomposition = match study {
                Ok(a) => {
                    let rows = level_rows(&specs, &a.levels.iter().map(|l| l.dr).collect::<Vec<_>>(), &a.levels.iter().map(|l| l.residual).collect::<Vec<_>>());
                    let finest = rows.last().map(|r| r.residual).unwrap_or(f64::NAN);
                    checks.push(Check::at_most(t, "decomposition_residual", Provenance::ProbeEstimate, finest, DECOMPOSITION_TOL));
                    checks.push(convergence_check(task, "decomposition_convergence", Provenance::ProbeEstimate, &rows));
                    artifacts.push(csv_artifact("decomposition_levels.csv", &rows));
                    Some(tagged(Provenance::ProbeEstimate, a))
                }
                Err(e) => {
                    checks.push(error_check(task, "decomposition_residual", Provenance::ProbeEstimate, &e));
                    None
                }
            };
            match v_triplets(cfg, &res, specs[0]) {
                Ok(a) => artifacts.push(a),
                Err(e) => notes.push(format!("coarse V not written: {e}")),
            }
            let oracle = match (specs[0], psi.is_radial()) {
                (ComplexSpec::Product { nr, ntheta }, true) => {
                    match sector_oracle(model, psi, nr.min(ORACLE_MAX_NR), ntheta, cfg.boundary(), &rc) {
                        Ok(o) => {
                            checks.push(Check::at_most(t, "sector_dense_oracle", Provenance::Eigensolve, o.defect, ORACLE_TOL));
                            Some(tagged(Provenance::Eigensolve, o))
                        }
                        Err(e) => {
                            checks.push(error_check(task, "sector_dense_oracle", Provenance::Eigensolve, &e));
                            None
                        }
                    }
                }
                _ => {
                    notes.push("sector oracle needs a circle cross-section and a radial psi; skipped".into());
                    None
                }
            };
            (decomposition, oracle)
        }
    };

    let schatten = cfg.numerics.schatten.as_ref().and_then(|s| {
        let rc = hodge_core::scattering::ResolventConfig { lambda: s.lambda, n: s.n, m: cfg.manifold.m, k_curv: s.k_curv };
        match schatten_study(model, psi, &s.radii, s.dr, cfg.boundary(), &rc, SchattenMode::Factorized) {
            Ok(st) => {
                let hs = st.hs_changes.iter().chain(&st.trace_changes).copied().fold(0.0, f64::max);
                checks.push(Check::verdict(
                    t,
                    "schatten_stable",
                    Provenance::Eigensolve,
                    st.stable,
                    ReasonCode::Unstable,
                    format!("largest relative change {hs:.3e} as R grows (heuristic: truncated norms only)"),
                ).with_value(hs));
                checks.push(Check::verdict(
                    t,
                    "schatten_bound_dominates",
                    Provenance::Eigensolve,
                    st.dominated,
                    ReasonCode::NotDominated,
                    "factorized bound >= direct trace norm on every run".into(),
                ));
                Some(tagged(Provenance::Eigensolve, st))
            }
            Err(e) => {
                checks.push(error_check(task, "schatten_stable", Provenance::Eigensolve, &e));
                None
            }
        }
    });

    let wave = cfg.wave_experiment().and_then(|exp| {
        let w = cfg.numerics.wave.as_ref().expect("wave block present");
        match wave_experiment(model, psi, res.psi2.as_ref(), &exp) {
            Ok(d) => {
                if psi.is_zero() {
                    checks.push(Check::at_most(t, "wave_trivial_defects", Provenance::Eigensolve, d.max_defect(), EXACT_TOL));
                } else {
                    checks.push(Check::verdict(
                        t,
                        "wave_cauchy_decreasing",
                        Provenance::Eigensolve,
                        d.cauchy_decreasing(),
                        ReasonCode::NotDecreasing,
                        format!("cauchy differences {}", d.cauchy.iter().map(|c| format!("{c:.3e}")).collect::<Vec<_>>().join(", ")),
                    ));
                    checks.push(Check::at_most(t, "wave_isometry", Provenance::Eigensolve, d.isometry_defect, w.defect_tol));
                    checks.push(Check::at_most(t, "wave_intertwining", Provenance::Eigensolve, d.intertwining_defect, w.defect_tol));
                }
                if let Some(ch) = &d.chain {
                    checks.push(Check::at_most(t, "wave_chain_rule", Provenance::Eigensolve, ch.defect, w.chain_tol));
                }
                artifacts.push(Artifact { name: "wave_timeseries.csv".into(), contents: d.csv() });
                Some(tagged(Provenance::Eigensolve, d))
            }
            Err(e) => {
                checks.push(error_check(task, "wave_operator", Provenance::Eigensolve, &e));
                None
            }
        }
    });

    let outputs = ScatterOutputs {
        deviation,
        moderate_decay,
        warped_beta,
        phi_profile: phi,
        decomposition,
        sector_oracle: oracle,
        schatten,
        wave,
        notes,
    };
    Ok(bundle(task, cfg, &outputs, checks, artifacts))
}

/// `V` on the coarsest grid as coordinate triplets.
fn v_triplets(cfg: &RunConfig, res: &Resolved, spec: ComplexSpec) -> hodge_core::Result<Artifact> {
    let cg = build_graded_complex(&res.model, None, spec, cfg.boundary())?;
    let cb = cg.conformal(&res.psi)?;
    let v = v_matrix(&v_terms(&cg, &cb, &res.psi)?);
    let mut buf = Vec::new();
    linalg::write_triplets(&v, &mut buf).map_err(|e| hodge_core::Error::Numerical(e.to_string()))?;
    Ok(Artifact { name: "v_coarse.triplets".into(), contents: String::from_utf8_lossy(&buf).into_owned() })
}

/// Dispatch one task.
pub fn run(task: Task, cfg: &RunConfig) -> Result<ReportBundle, ConfigError> {
    match task {
        Task::Verify => run_verify(cfg),
        Task::Spectrum => run_spectrum(cfg),
        Task::Scatter => run_scatter(cfg),
    }
}
