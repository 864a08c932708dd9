//! Warped-product ends `[1, inf) x N` with metric `h(r)^2 dr^2 + f(r)^2 g_N`.

use serde::{Deserialize, Serialize};

use super::profile::{sup_on_tail, Bounded, RadialFn, SupReport};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::spectral::CrossSectionSpectrum;

#[derive(Debug, Clone)]
pub enum CrossSection {
    /// Round circle of the given radius (`n = 1`).
    Circle { radius: f64 },
    /// Unit round sphere `S^n`.
    Sphere { n: usize },
    /// Abstract cross-section known only through its Hodge spectrum.
    Spectrum(CrossSectionSpectrum),
}

impl CrossSection {
    pub fn dim(&self) -> usize {
        match self {
            CrossSection::Circle { .. } => 1,
            CrossSection::Sphere { n } => *n,
            CrossSection::Spectrum(s) => s.n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WarpedModel {
    pub m: usize,
    pub b: f64,
    pub f: RadialFn,
    pub h_warp: RadialFn,
    pub cross_section: CrossSection,
    pub r_max: f64,
}

impl WarpedModel {
    pub fn new(b: f64, f: RadialFn, h_warp: RadialFn, cross_section: CrossSection, r_max: f64) -> Result<WarpedModel> {
        let m = cross_section.dim() + 1;
        let model = WarpedModel { m, b, f, h_warp, cross_section, r_max };
        model.validate()?;
        Ok(model)
    }

    /// `[1, R] x S^1` with `f = 1`.
    pub fn cylinder(r_max: f64) -> WarpedModel {
        WarpedModel::new(0.0, RadialFn::constant(1.0), RadialFn::constant(1.0), CrossSection::Circle { radius: 1.0 }, r_max)
            .unwrap()
    }

    /// `[1, R] x S^1` with `f = r`.
    pub fn cone(r_max: f64) -> WarpedModel {
        WarpedModel::new(1.0, RadialFn::parse("r").unwrap(), RadialFn::constant(1.0), CrossSection::Circle { radius: 1.0 }, r_max)
            .unwrap()
    }

    pub fn n(&self) -> usize {
        self.m - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Invalid(format!("ambient dimension {} < 2", self.m)));
        }
        if !(self.r_max > 1.0) {
            return Err(Error::Invalid(format!("R_max = {} must exceed 1", self.r_max)));
        }
        if let CrossSection::Circle { radius } = self.cross_section {
            if !(radius > 0.0) {
                return Err(Error::Invalid(format!("circle radius {radius} must be positive")));
            }
        }
        for (name, p) in [("f", &self.f), ("h_warp", &self.h_warp)] {
            if !p.covers(1.0, self.r_max) {
                return Err(Error::Domain(format!("profile {name} is not defined on [1, {}]", self.r_max)));
            }
            for i in 0..=1000 {
                let r = 1.0 + (self.r_max - 1.0) * i as f64 / 1000.0;
                let v = p.value(r);
                if !(v > 0.0) {
                    return Err(Error::Invalid(format!("profile {name} = {v} at r = {r} is not positive")));
                }
            }
        }
        Ok(())
    }

    /// Radial volume density `h f^n` (cross-section volume excluded).
    pub fn density(&self, r: f64) -> f64 {
        self.h_warp.value(r) * self.f.value(r).powi(self.n() as i32)
    }

    /// Closed form of `h f^n` when both profiles have one.
    pub fn density_expr(&self) -> Option<Expr> {
        let (h, f) = (self.h_warp.expr()?, self.f.expr()?);
        Some(h.clone() * f.clone().pow(Expr::Const(self.n() as f64)))
    }

    pub fn with_r_max(&self, r_max: f64) -> WarpedModel {
        WarpedModel { r_max, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedGeometryVerdict {
    /// `inf h_warp > 0` (completeness of the end).
    pub complete: Bounded,
    pub inf_h: f64,
    /// `inf min{h_warp, f} > 0`.
    pub volume_noncollapse: Bounded,
    pub inf_min_hf: f64,
    /// `(log f)''`, `((log f)')^2` and `1/f^2` all bounded; `None` when
    /// `h_warp` is not identically 1.
    pub bounded_geometry: Option<Bounded>,
    pub sup_log_f_dd: Option<SupReport>,
    pub sup_log_f_d_sq: Option<SupReport>,
    pub sup_inv_f_sq: Option<SupReport>,
}

fn all_bounded(xs: &[Bounded]) -> Bounded {
    if xs.iter().all(|b| *b == Bounded::Yes) {
        Bounded::Yes
    } else if xs.iter().any(|b| *b == Bounded::No) {
        Bounded::No
    } else {
        Bounded::Inconclusive
    }
}

/// Completeness, volume non-collapse and bounded-geometry checks on the profiles.
pub fn warped_geometry_check(model: &WarpedModel) -> Result<WarpedGeometryVerdict> {
    let r_max = model.r_max;
    for (name, p) in [("f", &model.f), ("h_warp", &model.h_warp)] {
        if !p.covers(1.0, 4.0 * r_max) {
            return Err(Error::Domain(format!("profile {name} is not evaluable on the tail [{r_max}, {}]", 4.0 * r_max)));
        }
    }
    let (f, h) = (&model.f, &model.h_warp);

    let inv_h_expr = h.expr().map(|e| Expr::Const(1.0) / e.clone());
    let inv_h = sup_on_tail(&|r| 1.0 / h.value(r), inv_h_expr.as_ref(), 1.0, r_max);
    let inv_min_expr = match (h.expr(), f.expr()) {
        (Some(he), Some(fe)) => Some(Expr::Max(
            Box::new(Expr::Const(1.0) / he.clone()),
            Box::new(Expr::Const(1.0) / fe.clone()),
        )),
        _ => None,
    };
    let inv_min = sup_on_tail(&|r| 1.0 / h.value(r).min(f.value(r)), inv_min_expr.as_ref(), 1.0, r_max);

    let (bounded_geometry, a, b, c) = if h.is_identically(1.0) {
        let (dd, d_sq, inv_sq) = match f.expr() {
            Some(fe) => {
                let lf = fe.clone().call(crate::expr::Func::Log);
                let d = lf.diff(crate::expr::Var::R);
                let dd = d.diff(crate::expr::Var::R);
                let d_sq = d.clone().pow(Expr::Const(2.0)).simplify();
                let inv_sq = (Expr::Const(1.0) / fe.clone().pow(Expr::Const(2.0))).simplify();
                (Some(dd), Some(d_sq), Some(inv_sq))
            }
            None => (None, None, None),
        };
        let lfd = |r: f64| f.d1(r) / f.value(r);
        let a = sup_on_tail(&|r| f.d2(r) / f.value(r) - lfd(r).powi(2), dd.as_ref(), 1.0, r_max);
        let b = sup_on_tail(&|r| lfd(r).powi(2), d_sq.as_ref(), 1.0, r_max);
        let c = sup_on_tail(&|r| 1.0 / f.value(r).powi(2), inv_sq.as_ref(), 1.0, r_max);
        (Some(all_bounded(&[a.bounded, b.bounded, c.bounded])), Some(a), Some(b), Some(c))
    } else {
        (None, None, None, None)
    };

    Ok(WarpedGeometryVerdict {
        complete: inv_h.bounded,
        inf_h: 1.0 / inv_h.sup,
        volume_noncollapse: inv_min.bounded,
        inf_min_hf: 1.0 / inv_min.sup,
        bounded_geometry,
        sup_log_f_dd: a,
        sup_log_f_d_sq: b,
        sup_inv_f_sq: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: &str) -> WarpedModel {
        WarpedModel::new(0.0, RadialFn::parse(f).unwrap(), RadialFn::constant(1.0), CrossSection::Circle { radius: 1.0 }, 20.0)
            .unwrap()
    }

    #[test]
    fn power_profiles_pass() {
        for b in ["0", "0.25", "0.5", "1", "2"] {
            let v = warped_geometry_check(&model(&format!("r^{b}"))).unwrap();
            assert_eq!(v.complete, Bounded::Yes);
            assert_eq!(v.volume_noncollapse, Bounded::Yes, "b = {b}");
            assert_eq!(v.bounded_geometry, Some(Bounded::Yes), "b = {b}");
        }
    }

    #[test]
    fn exponential_profile_passes() {
        let v = warped_geometry_check(&model("exp(r)")).unwrap();
        assert_eq!(v.bounded_geometry, Some(Bounded::Yes));
    }

    #[test]
    fn gaussian_profile_fails() {
        let v = warped_geometry_check(&model("exp(r^2)")).unwrap();
        assert_eq!(v.bounded_geometry, Some(Bounded::No));
        assert_eq!(v.sup_log_f_d_sq.unwrap().bounded, Bounded::No);
    }

    #[test]
    fn rejects_nonpositive_profiles() {
        assert!(WarpedModel::new(0.0, RadialFn::parse("r - 2").unwrap(), RadialFn::constant(1.0), CrossSection::Circle { radius: 1.0 }, 5.0)
            .is_err());
    }
}
