//! Run configuration: TOML in, validated core objects out.

use serde::{Deserialize, Serialize};

use hodge_core::exterior::{BoundaryCondition, ComplexSpec};
use hodge_core::geometry::{ConformalFactor, CrossSection, RadialFn, WarpedModel};
use hodge_core::scattering::{ResolventConfig, WaveExperiment};
use hodge_core::spectral::{cross_section_spectrum, CrossSectionKind, CrossSectionSpectrum, SpectrumEntry};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field(name: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Verify,
    Spectrum,
    Scatter,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Verify => "verify",
            Task::Spectrum => "spectrum",
            Task::Scatter => "scatter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossSectionConfig {
    Circle {
        #[serde(default = "one")]
        radius: f64,
    },
    Sphere {
        n: usize,
    },
    Explicit {
        n: usize,
        entries: Vec<SpectrumEntry>,
    },
}

fn one() -> f64 {
    1.0
}

fn one_str() -> String {
    "1".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub m: usize,
    /// Warp exponent of the end.
    pub b: f64,
    /// Warping function `f(r)`.
    pub f: String,
    #[serde(default = "one_str")]
    pub h_warp: String,
    pub r_max: f64,
    /// The compact part is a ball (only used by the threshold prediction).
    #[serde(default = "yes")]
    pub ball_core: bool,
    pub cross_section: CrossSectionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalConfig {
    pub psi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_dpsi: Option<f64>,
    /// Further rescaling for the three-metric chain rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsConfig {
    pub beta: String,
    pub c1: f64,
    pub c2: f64,
    pub b_exp: f64,
    pub c_dev: f64,
    /// Lower bound of the injectivity radius as a function of `r`.
    pub inj: String,
}

/// Inputs of the sufficient conditions for a finite scattering integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    /// Radius function `h` in the weighted deviation integral.
    #[serde(default = "one_str")]
    pub h: String,
    /// Upper end of the quadrature window before the certified tail.
    #[serde(default = "default_r_quad")]
    pub r_quad: f64,
    /// Control function for the warped-product test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms: Option<MsConfig>,
    /// Run the change-of-variables profile for the configured `f` and `b`.
    #[serde(default)]
    pub phi_profile: bool,
}

fn default_r_quad() -> f64 {
    20.0
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        CriteriaConfig { h: one_str(), r_quad: default_r_quad(), beta: None, ms: None, phi_profile: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

impl From<Boundary> for BoundaryCondition {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Dirichlet => BoundaryCondition::Dirichlet,
            Boundary::Neumann => BoundaryCondition::Neumann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Radial intervals of the coarsest level.
    pub nr: usize,
    /// Angular nodes of the coarsest level (circle cross-sections).
    #[serde(default = "default_ntheta")]
    pub ntheta: usize,
    /// Number of levels; each halves both steps.
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_ntheta() -> usize {
    8
}

fn default_levels() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Truncation radii, increasing.
    pub radii: Vec<f64>,
    /// Radial intervals per unit length.
    pub per_unit: usize,
    pub degrees: Vec<usize>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Restrict to one angular Fourier sector `k` (circle cross-sections).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<usize>,
}

fn default_count() -> usize {
    6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventBlock {
    pub lambda: f64,
    pub n: usize,
    #[serde(default)]
    pub k_curv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchattenConfig {
    pub radii: Vec<f64>,
    pub dr: f64,
    pub lambda: f64,
    pub n: usize,
    #[serde(default)]
    pub k_curv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub r_max: f64,
    pub nr: usize,
    pub center: f64,
    pub width: f64,
    pub schedule: Vec<f64>,
    pub lambda_max: f64,
    pub ramp: f64,
    #[serde(default = "default_defect_tol")]
    pub defect_tol: f64,
    #[serde(default = "default_chain_tol")]
    pub chain_tol: f64,
}

fn default_defect_tol() -> f64 {
    5e-2
}

fn default_chain_tol() -> f64 {
    1e-2
}

impl Default for WaveConfig {
    fn default() -> Self {
        let w = WaveExperiment::default();
        WaveConfig {
            r_max: w.r_max,
            nr: w.nr,
            center: w.center,
            width: w.width,
            schedule: w.schedule,
            lambda_max: w.lambda_max,
            ramp: w.ramp,
            defect_tol: default_defect_tol(),
            chain_tol: default_chain_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default)]
    pub seed: u64,
    /// Tolerance of the threshold comparison.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Random samples for the fiber identities.
    #[serde(default = "default_fiber_samples")]
    pub fiber_samples: usize,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolvent: Option<ResolventBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schatten: Option<SchattenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave: Option<WaveConfig>,
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_boundary() -> Boundary {
    Boundary::Dirichlet
}

fn default_fiber_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<Task>,
    pub manifold: ManifoldConfig,
    pub conformal: ConformalConfig,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    pub numerics: NumericsConfig,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_levels: Option<usize>,
    pub tolerance: Option<f64>,
}

/// Core objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: WarpedModel,
    pub cross_section: CrossSectionSpectrum,
    pub psi: ConformalFactor,
    pub psi2: Option<ConformalFactor>,
    pub h: RadialFn,
}

fn radial(name: &str, src: &str) -> Result<RadialFn, ConfigError> {
    RadialFn::parse(src).map_err(|e| field(name, e))
}

fn increasing(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(field(name, "must be finite and strictly increasing"));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        RunConfig::from_toml(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply command-line overrides; on error `self` is left unchanged.
    pub fn apply(&mut self, o: Overrides) -> Result<(), ConfigError> {
        let mut next = self.clone();
        if let Some(s) = o.seed {
            next.numerics.seed = s;
        }
        if let Some(k) = o.grid_levels {
            next.numerics.grid.levels = k;
        }
        if let Some(t) = o.tolerance {
            next.numerics.tolerance = t;
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tasks.is_empty() {
            return Err(field("tasks", "select at least one of verify, spectrum, scatter"));
        }
        let n = &self.numerics;
        if !(n.tolerance > 0.0) {
            return Err(field("numerics.tolerance", "must be positive"));
        }
        if n.grid.levels == 0 || n.grid.levels > 6 {
            return Err(field("numerics.grid.levels", "must be between 1 and 6"));
        }
        if n.grid.nr < 7 {
            return Err(field("numerics.grid.nr", "at least 7 radial intervals"));
        }
        if n.grid.ntheta < 3 {
            return Err(field("numerics.grid.ntheta", "at least 3 angular nodes"));
        }
        if n.fiber_samples == 0 {
            return Err(field("numerics.fiber_samples", "must be positive"));
        }
        if let Some(s) = &n.spectrum {
            increasing("numerics.spectrum.radii", &s.radii)?;
            if s.per_unit == 0 || s.count == 0 || s.degrees.is_empty() {
                return Err(field("numerics.spectrum", "per_unit, count and degrees must be nonempty"));
            }
            if s.degrees.iter().any(|j| *j > self.manifold.m) {
                return Err(field("numerics.spectrum.degrees", format!("degrees exceed m = {}", self.manifold.m)));
            }
        }
        if let Some(s) = &n.schatten {
            increasing("numerics.schatten.radii", &s.radii)?;
            if !(s.dr > 0.0) {
                return Err(field("numerics.schatten.dr", "must be positive"));
            }
        }
        if let Some(w) = &n.wave {
            increasing("numerics.wave.schedule", &w.schedule)?;
        }
        if !(self.criteria.r_quad > 1.0) {
            return Err(field("criteria.r_quad", "must exceed 1"));
        }
        self.resolve().map(|_| ())
    }

    /// Build the model, cross-section data and conformal factors.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let mf = &self.manifold;
        let kind = match &mf.cross_section {
            CrossSectionConfig::Circle { radius } => CrossSectionKind::Circle { radius: *radius },
            CrossSectionConfig::Sphere { n } => CrossSectionKind::Sphere { n: *n },
            CrossSectionConfig::Explicit { n, entries } => CrossSectionKind::Explicit { n: *n, entries: entries.clone() },
        };
        let spectrum = cross_section_spectrum(&kind).map_err(|e| field("manifold.cross_section", e))?;
        let cs = match &mf.cross_section {
            CrossSectionConfig::Circle { radius } => CrossSection::Circle { radius: *radius },
            CrossSectionConfig::Sphere { n } => CrossSection::Sphere { n: *n },
            CrossSectionConfig::Explicit { .. } => CrossSection::Spectrum(spectrum.clone()),
        };
        if cs.dim() + 1 != mf.m {
            return Err(field("manifold.m", format!("{} but the cross-section has dimension {}", mf.m, cs.dim())));
        }
        let model = WarpedModel::new(mf.b, radial("manifold.f", &mf.f)?, radial("manifold.h_warp", &mf.h_warp)?, cs, mf.r_max)
            .map_err(|e| field("manifold", e))?;
        let psi = conformal("conformal.psi", &self.conformal.psi, &model, self.conformal.sup_psi, self.conformal.sup_dpsi)?;
        let psi2 = match &self.conformal.psi2 {
            Some(s) => Some(conformal("conformal.psi2", s, &model, None, None)?),
            None => None,
        };
        let h = radial("criteria.h", &self.criteria.h)?;
        if let Some(b) = &self.criteria.beta {
            radial("criteria.beta", b)?;
        }
        if let Some(ms) = &self.criteria.ms {
            radial("criteria.ms.beta", &ms.beta)?;
            radial("criteria.ms.inj", &ms.inj)?;
        }
        Ok(Resolved { model, cross_section: spectrum, psi, psi2, h })
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.numerics.boundary.into()
    }

    /// Grid of refinement level `i` (0 is the coarsest).
    pub fn level(&self, i: usize, res: &Resolved) -> ComplexSpec {
        let g = &self.numerics.grid;
        let nr = g.nr << i;
        match res.model.cross_section {
            CrossSection::Circle { .. } => ComplexSpec::Product { nr, ntheta: g.ntheta << i },
            _ => ComplexSpec::Mode { nr, p: 0, mu: lowest_nonzero(&res.cross_section) },
        }
    }

    pub fn levels(&self, res: &Resolved) -> Vec<ComplexSpec> {
        (0..self.numerics.grid.levels).map(|i| self.level(i, res)).collect()
    }

    pub fn resolvent(&self) -> Option<ResolventConfig> {
        self.numerics.resolvent.map(|r| ResolventConfig { lambda: r.lambda, n: r.n, m: self.manifold.m, k_curv: r.k_curv })
    }

    pub fn wave_experiment(&self) -> Option<WaveExperiment> {
        self.numerics.wave.as_ref().map(|w| WaveExperiment {
            r_max: w.r_max,
            nr: w.nr,
            center: w.center,
            width: w.width,
            schedule: w.schedule.clone(),
            lambda_max: w.lambda_max,
            ramp: w.ramp,
            seed: self.numerics.seed,
        })
    }
}

/// Smallest positive degree-0 eigenvalue of the cross-section.
pub fn lowest_nonzero(spec: &CrossSectionSpectrum) -> f64 {
    spec.lowest(0, false).unwrap_or(1.0)
}

fn conformal(
    name: &str,
    src: &str,
    model: &WarpedModel,
    sup_psi: Option<f64>,
    sup_dpsi: Option<f64>,
) -> Result<ConformalFactor, ConfigError> {
    let psi = ConformalFactor::parse(src).map_err(|e| field(name, e))?;
    let allowed = match model.cross_section {
        CrossSection::Circle { .. } => "r and theta",
        _ => "r",
    };
    let ok = psi.vars().iter().all(|v| match v {
        hodge_core::expr::Var::R => true,
        hodge_core::expr::Var::Theta => matches!(model.cross_section, CrossSection::Circle { .. }),
        hodge_core::expr::Var::X(_) => false,
    });
    if !ok {
        return Err(field(name, format!("may only depend on {allowed}")));
    }
    let probe = psi.value(&hodge_core::expr::Point::radial(1.5));
    if !probe.is_finite() {
        return Err(field(name, "not evaluable at r = 1.5"));
    }
    let psi = if psi.is_radial() && sup_psi.is_none() { psi.estimate_radial_bounds(model).map_err(|e| field(name, e))? } else { psi };
    Ok(match (sup_psi, sup_dpsi) {
        (None, None) => psi,
        _ => {
            let (p, d, h) = (sup_psi.or(psi.sup_psi), sup_dpsi.or(psi.sup_dpsi), psi.sup_hess);
            psi.with_bounds(p, d, h)
        }
    })
}
