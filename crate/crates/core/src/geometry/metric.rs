//! Metric descriptors, conformal factors and the rescaled metric `e^{2 psi} g`.

use nalgebra::DMatrix;

use super::profile::{sup_on_tail, Bounded, RadialFn};
use super::warped::{CrossSection, WarpedModel};
use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Var};

/// A Riemannian metric on a coordinate domain.
#[derive(Debug, Clone)]
pub enum MetricDesc {
    /// Flat `R^m` in coordinates `x1..xm`.
    Euclidean { m: usize },
    /// `g_{ij}(x)` in coordinates `x1..xm`, row-major, symmetric.
    Coordinate { m: usize, components: Vec<Expr> },
    /// `h(r)^2 dr^2 + f(r)^2 g_N`.
    Warped(Box<WarpedModel>),
}

impl MetricDesc {
    pub fn coordinate(m: usize, components: Vec<Expr>) -> Result<MetricDesc> {
        if components.len() != m * m {
            return Err(Error::Dimension(format!("{} components for a {m}x{m} metric", components.len())));
        }
        for i in 0..m {
            for j in 0..i {
                if components[i * m + j] != components[j * m + i] {
                    return Err(Error::Invalid(format!("metric component ({i},{j}) differs from ({j},{i})")));
                }
            }
        }
        Ok(MetricDesc::Coordinate { m, components })
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricDesc::Euclidean { m } | MetricDesc::Coordinate { m, .. } => *m,
            MetricDesc::Warped(w) => w.m,
        }
    }

    /// Coordinate variables that functions on this domain may use.
    pub fn coordinates(&self) -> Vec<Var> {
        match self {
            MetricDesc::Euclidean { m } | MetricDesc::Coordinate { m, .. } => (0..*m as u8).map(Var::X).collect(),
            MetricDesc::Warped(w) => match w.cross_section {
                CrossSection::Circle { .. } => vec![Var::R, Var::Theta],
                _ => vec![Var::R],
            },
        }
    }

    /// Whether the metric matrix is available in the coordinates above.
    pub fn has_coordinate_matrix(&self) -> bool {
        match self {
            MetricDesc::Warped(w) => matches!(w.cross_section, CrossSection::Circle { .. }),
            _ => true,
        }
    }

    /// Coordinate matrix `g_{ij}` at a point.
    pub fn matrix(&self, p: &Point) -> Result<DMatrix<f64>> {
        match self {
            MetricDesc::Euclidean { m } => Ok(DMatrix::identity(*m, *m)),
            MetricDesc::Coordinate { m, components } => {
                Ok(DMatrix::from_fn(*m, *m, |i, j| components[i * m + j].eval(p)))
            }
            MetricDesc::Warped(w) => match w.cross_section {
                CrossSection::Circle { radius } => {
                    let h = w.h_warp.value(p.r);
                    let f = w.f.value(p.r);
                    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![h * h, f * f * radius * radius])))
                }
                _ => Err(Error::Unsupported("coordinate matrix of a warped end with an abstract cross-section".into())),
            },
        }
    }

    /// Build a point from coordinate values in the order of [`Self::coordinates`].
    pub fn point(&self, coords: &[f64]) -> Point {
        let mut p = Point::default();
        for (v, x) in self.coordinates().iter().zip(coords) {
            match v {
                Var::R => p.r = *x,
                Var::Theta => p.theta = *x,
                Var::X(i) => p.x[*i as usize] = *x,
            }
        }
        p
    }
}

/// The conformal factor `psi` with optional sup-bounds.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    expr: Option<Expr>,
    radial: Option<RadialFn>,
    partials: Vec<(Var, Expr)>,
    second: Vec<((Var, Var), Expr)>,
    pub sup_psi: Option<f64>,
    pub sup_dpsi: Option<f64>,
    pub sup_hess: Option<f64>,
}

impl ConformalFactor {
    pub fn from_expr(e: Expr) -> ConformalFactor {
        let vars = e.vars();
        let mut partials = Vec::new();
        let mut second = Vec::new();
        for &v in &vars {
            let d = e.diff(v);
            for &w in &vars {
                second.push(((v, w), d.diff(w)));
            }
            partials.push((v, d));
        }
        let radial = if vars.iter().all(|v| *v == Var::R) { RadialFn::closed(e.clone()).ok() } else { None };
        let mut psi = ConformalFactor {
            expr: Some(e),
            radial,
            partials,
            second,
            sup_psi: None,
            sup_dpsi: None,
            sup_hess: None,
        };
        if let Some(c) = psi.expr.as_ref().and_then(|e| e.simplify().as_const()) {
            psi.sup_psi = Some(c.abs());
            psi.sup_dpsi = Some(0.0);
            psi.sup_hess = Some(0.0);
        }
        psi
    }

    pub fn parse(s: &str) -> Result<ConformalFactor> {
        Ok(ConformalFactor::from_expr(Expr::parse(s)?))
    }

    pub fn zero() -> ConformalFactor {
        ConformalFactor::from_expr(Expr::Const(0.0))
    }

    pub fn constant(c: f64) -> ConformalFactor {
        ConformalFactor::from_expr(Expr::Const(c))
    }

    /// A radial factor given by closed form and/or samples.
    pub fn radial(f: RadialFn) -> ConformalFactor {
        match f.expr() {
            Some(e) => {
                let mut psi = ConformalFactor::from_expr(e.clone());
                psi.radial = Some(f);
                psi
            }
            None => ConformalFactor {
                expr: None,
                radial: Some(f),
                partials: Vec::new(),
                second: Vec::new(),
                sup_psi: None,
                sup_dpsi: None,
                sup_hess: None,
            },
        }
    }

    pub fn with_bounds(mut self, sup_psi: Option<f64>, sup_dpsi: Option<f64>, sup_hess: Option<f64>) -> Self {
        self.sup_psi = sup_psi;
        self.sup_dpsi = sup_dpsi;
        self.sup_hess = sup_hess;
        self
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn radial_fn(&self) -> Option<&RadialFn> {
        self.radial.as_ref()
    }

    pub fn is_radial(&self) -> bool {
        self.radial.is_some()
    }

    pub fn is_zero(&self) -> bool {
        match &self.expr {
            Some(e) => e.simplify().as_const() == Some(0.0),
            None => self.radial.as_ref().is_some_and(|f| f.is_identically(0.0)),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        match &self.expr {
            Some(e) => e.vars(),
            None => vec![Var::R],
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        match (&self.expr, &self.radial) {
            (Some(e), _) => e.eval(p),
            (None, Some(f)) => f.value(p.r),
            _ => f64::NAN,
        }
    }

    pub fn value_r(&self, r: f64) -> f64 {
        self.value(&Point::radial(r))
    }

    /// `d psi / dr` for a radial factor.
    pub fn d_r(&self, r: f64) -> f64 {
        match &self.radial {
            Some(f) => f.d1(r),
            None => self.partial(Var::R, &Point::radial(r)),
        }
    }

    pub fn dd_r(&self, r: f64) -> f64 {
        match &self.radial {
            Some(f) => f.d2(r),
            None => self.second_partial(Var::R, Var::R, &Point::radial(r)),
        }
    }

    pub fn partial(&self, v: Var, p: &Point) -> f64 {
        if self.expr.is_none() {
            if let (Var::R, Some(f)) = (v, &self.radial) {
                return f.d1(p.r);
            }
        }
        self.partials.iter().find(|(w, _)| *w == v).map_or(0.0, |(_, e)| e.eval(p))
    }

    pub fn second_partial(&self, v: Var, w: Var, p: &Point) -> f64 {
        if self.expr.is_none() {
            if let (Var::R, Var::R, Some(f)) = (v, w, &self.radial) {
                return f.d2(p.r);
            }
        }
        self.second.iter().find(|(k, _)| *k == (v, w)).map_or(0.0, |(_, e)| e.eval(p))
    }

    /// Whether second derivatives are available (closed form or radial samples).
    pub fn has_second_derivatives(&self) -> bool {
        self.expr.is_some() || self.radial.is_some()
    }

    pub fn negated(&self) -> ConformalFactor {
        match &self.expr {
            Some(e) => {
                let mut out = ConformalFactor::from_expr(Expr::Neg(Box::new(e.clone())));
                out.sup_psi = self.sup_psi;
                out.sup_dpsi = self.sup_dpsi;
                out.sup_hess = self.sup_hess;
                out
            }
            None => {
                let s = self.radial.as_ref().and_then(|f| f.spline()).unwrap();
                let (x, y) = s.knots();
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                ConformalFactor::radial(RadialFn::sampled(x, &neg).unwrap()).with_bounds(
                    self.sup_psi,
                    self.sup_dpsi,
                    self.sup_hess,
                )
            }
        }
    }

    /// `psi + other` (closed forms only).
    pub fn plus(&self, other: &ConformalFactor) -> Result<ConformalFactor> {
        match (&self.expr, &other.expr) {
            (Some(a), Some(b)) => Ok(ConformalFactor::from_expr(a.clone() + b.clone())),
            _ => Err(Error::Unsupported("composition of sampled conformal factors".into())),
        }
    }

    /// Fill in `sup_psi`, `sup_dpsi`, `sup_hess` for a radial factor on a warped
    /// end by sampling `[1, 4 R_max]` plus symbolic tail analysis. A bound whose
    /// tail is not certified stays `None`.
    pub fn estimate_radial_bounds(mut self, model: &WarpedModel) -> Result<ConformalFactor> {
        let f = self.radial.clone().ok_or_else(|| Error::Unsupported("bound estimation needs a radial factor".into()))?;
        let r_max = model.r_max;
        let n = model.n() as f64;
        let psi_rep = sup_on_tail(&|r| f.value(r), f.deriv_expr(0), 1.0, r_max);
        let h = &model.h_warp;
        let fw = &model.f;
        let dpsi = |r: f64| f.d1(r) / h.value(r);
        let dpsi_expr = match (f.deriv_expr(1), h.expr()) {
            (Some(d), Some(he)) => Some(d.clone() / he.clone()),
            _ => None,
        };
        let dpsi_rep = sup_on_tail(&dpsi, dpsi_expr.as_ref(), 1.0, r_max);
        let hess = |r: f64| {
            let (hv, hd) = (h.value(r), h.d1(r));
            let radial = f.d2(r) / (hv * hv) - f.d1(r) * hd / (hv * hv * hv);
            let tang = f.d1(r) * fw.d1(r) / (fw.value(r) * hv * hv);
            (radial * radial + n * tang * tang).sqrt()
        };
        let hess_rep = sup_on_tail(&hess, None, 1.0, r_max);
        let pick = |rep: &super::profile::SupReport| if rep.bounded == Bounded::Yes { Some(rep.sup) } else { None };
        self.sup_psi = pick(&psi_rep);
        self.sup_dpsi = pick(&dpsi_rep);
        self.sup_hess = pick(&hess_rep);
        Ok(self)
    }

    /// `sup |psi|`, required finite before any scattering computation.
    pub fn require_bounded(&self) -> Result<f64> {
        match self.sup_psi {
            Some(s) if s.is_finite() => Ok(s),
            _ => Err(Error::Invalid("sup|psi| is unknown or infinite; g and the rescaled metric are not quasi-isometric".into())),
        }
    }

    pub fn describe(&self) -> String {
        match (&self.expr, &self.radial) {
            (Some(e), _) => e.to_string(),
            (None, Some(f)) => f.describe(),
            _ => "undefined".into(),
        }
    }
}

/// Per-point weights of `e^{2 psi} g` relative to `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalWeights {
    /// `e^{-2 j psi}` for `j = 0..=m`.
    pub fiber: Vec<f64>,
    /// `e^{m psi}`.
    pub volume: f64,
}

/// The metric `e^{2 psi} g`.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    pub base: MetricDesc,
    pub psi: ConformalFactor,
}

pub fn conformal_rescale(g: &MetricDesc, psi: &ConformalFactor) -> Result<ConformalMetric> {
    let allowed = g.coordinates();
    for v in psi.vars() {
        if !allowed.contains(&v) {
            return Err(Error::Domain(format!(
                "conformal factor `{}` uses {:?}, outside the metric's coordinates {:?}",
                psi.describe(),
                v,
                allowed
            )));
        }
    }
    Ok(ConformalMetric { base: g.clone(), psi: psi.clone() })
}

impl ConformalMetric {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn fiber_weight(&self, j: usize, p: &Point) -> f64 {
        (-2.0 * j as f64 * self.psi.value(p)).exp()
    }

    pub fn volume_weight(&self, p: &Point) -> f64 {
        (self.dim() as f64 * self.psi.value(p)).exp()
    }

    /// Factor relating contractions: `int_{gbar} = e^{-2 psi} int_g`.
    pub fn contraction_weight(&self, p: &Point) -> f64 {
        (-2.0 * self.psi.value(p)).exp()
    }

    pub fn weights(&self, p: &Point) -> ConformalWeights {
        let s = self.psi.value(p);
        let m = self.dim();
        ConformalWeights {
            fiber: (0..=m).map(|j| (-2.0 * j as f64 * s).exp()).collect(),
            volume: (m as f64 * s).exp(),
        }
    }

    pub fn matrix(&self, p: &Point) -> Result<DMatrix<f64>> {
        Ok(self.base.matrix(p)? * (2.0 * self.psi.value(p)).exp())
    }

    /// Rescale again by `psi2`: the result is `e^{2(psi + psi2)} g`.
    pub fn rescale(&self, psi2: &ConformalFactor) -> Result<ConformalMetric> {
        conformal_rescale(&self.base, &self.psi.plus(psi2)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant_weights() {
        let g = MetricDesc::Euclidean { m: 2 };
        let id = conformal_rescale(&g, &ConformalFactor::zero()).unwrap();
        let p = Point::cartesian(&[0.3, -0.2]);
        assert_eq!(id.weights(&p), ConformalWeights { fiber: vec![1.0; 3], volume: 1.0 });

        let half = conformal_rescale(&g, &ConformalFactor::constant(0.5)).unwrap();
        assert_eq!(half.volume_weight(&p), 1f64.exp());
        assert_eq!(half.fiber_weight(1, &p), (-1f64).exp());

        let g3 = MetricDesc::Euclidean { m: 3 };
        let c = conformal_rescale(&g3, &ConformalFactor::parse("0.1").unwrap()).unwrap();
        assert!((c.fiber_weight(1, &p) - (-0.2f64).exp()).abs() < 1e-16);
        assert!((c.fiber_weight(3, &p) - (-0.6f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let g = MetricDesc::Euclidean { m: 2 };
        assert!(conformal_rescale(&g, &ConformalFactor::parse("x3").unwrap()).is_err());
        assert!(conformal_rescale(&g, &ConformalFactor::parse("exp(-r)").unwrap()).is_err());
        assert!(conformal_rescale(&g, &ConformalFactor::parse("x1*x2").unwrap()).is_ok());
    }

    #[test]
    fn rescaling_back_is_the_identity() {
        let g = MetricDesc::Euclidean { m: 3 };
        let psi = ConformalFactor::parse("sin(x1) * exp(x2) - x3^2").unwrap();
        let there = conformal_rescale(&g, &psi).unwrap();
        let back = there.rescale(&psi.negated()).unwrap();
        for xs in [[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]] {
            let w = back.weights(&Point::cartesian(&xs));
            for f in w.fiber {
                assert!((f - 1.0).abs() < 1e-12);
            }
            assert!((w.volume - 1.0).abs() < 1e-12);
        }
    }
}
