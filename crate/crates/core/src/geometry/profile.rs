//! Radial functions given in closed form, by samples, or both, and tail
//! boundedness analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{asymptotic, Asym, Expr, Var};
use crate::quad::TailSource;

/// Natural cubic spline through `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Spline> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::Invalid("spline needs at least 3 matching samples".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("spline abscissae must be strictly increasing".into()));
        }
        // Solve for second derivatives with natural end conditions.
        let mut a = vec![0.0; n];
        let mut bd = vec![1.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i] = h0 / 6.0;
            bd[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        for i in 1..n {
            let w = a[i] / bd[i - 1];
            bd[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / bd[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / bd[i];
        }
        Ok(Spline { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// k-th derivative, k <= 3.
    pub fn eval(&self, t: f64, k: usize) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|v| *v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        match k {
            0 => a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            1 => (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1,
            2 => a * m0 + b * m1,
            3 => (m1 - m0) / h,
            _ => 0.0,
        }
    }
}

/// A function of the radial variable `r`.
#[derive(Debug, Clone)]
pub struct RadialFn {
    expr: Option<Expr>,
    derivs: Vec<Expr>,
    spline: Option<Spline>,
}

impl RadialFn {
    pub fn closed(e: Expr) -> Result<RadialFn> {
        if e.vars().iter().any(|v| *v != Var::R) {
            return Err(Error::Domain(format!("`{e}` is not a function of r alone")));
        }
        let mut derivs = Vec::with_capacity(3);
        let mut cur = e.clone();
        for _ in 0..3 {
            cur = cur.diff(Var::R);
            derivs.push(cur.clone());
        }
        Ok(RadialFn { expr: Some(e), derivs, spline: None })
    }

    pub fn parse(s: &str) -> Result<RadialFn> {
        RadialFn::closed(Expr::parse(s)?)
    }

    pub fn constant(c: f64) -> RadialFn {
        RadialFn::closed(Expr::Const(c)).unwrap()
    }

    pub fn sampled(r: &[f64], v: &[f64]) -> Result<RadialFn> {
        Ok(RadialFn { expr: None, derivs: Vec::new(), spline: Some(Spline::new(r, v)?) })
    }

    /// Attach samples to a closed form; they must agree to 1e-12 at the knots.
    pub fn with_samples(mut self, r: &[f64], v: &[f64]) -> Result<RadialFn> {
        if let Some(e) = &self.expr {
            for (x, y) in r.iter().zip(v) {
                let z = e.at_r(*x);
                if (z - y).abs() > 1e-12 * (1.0 + z.abs()) {
                    return Err(Error::Invalid(format!(
                        "sample {y} at r = {x} disagrees with closed form value {z}"
                    )));
                }
            }
        }
        self.spline = Some(Spline::new(r, v)?);
        Ok(self)
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn spline(&self) -> Option<&Spline> {
        self.spline.as_ref()
    }

    /// Symbolic k-th derivative when a closed form is present.
    pub fn deriv_expr(&self, k: usize) -> Option<&Expr> {
        match k {
            0 => self.expr.as_ref(),
            _ => self.derivs.get(k - 1),
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match (&self.expr, &self.spline) {
            (Some(_), _) => (f64::NEG_INFINITY, f64::INFINITY),
            (None, Some(s)) => s.domain(),
            (None, None) => (0.0, 0.0),
        }
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.domain();
        a <= lo + 1e-12 && hi <= b + 1e-12
    }

    /// k-th derivative at r, k <= 3.
    pub fn deriv(&self, k: usize, r: f64) -> f64 {
        if let Some(e) = self.deriv_expr(k) {
            e.at_r(r)
        } else if let Some(s) = &self.spline {
            s.eval(r, k)
        } else {
            f64::NAN
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.deriv(0, r)
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.deriv(1, r)
    }

    pub fn d2(&self, r: f64) -> f64 {
        self.deriv(2, r)
    }

    pub fn asym(&self) -> Option<Asym> {
        self.expr.as_ref().and_then(asymptotic)
    }

    /// True if the closed form is the constant `c`, or all samples equal `c`.
    pub fn is_identically(&self, c: f64) -> bool {
        match (&self.expr, &self.spline) {
            (Some(e), _) => e.simplify().as_const() == Some(c),
            (None, Some(s)) => s.knots().1.iter().all(|v| *v == c),
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        match (&self.expr, &self.spline) {
            (Some(e), _) => e.to_string(),
            (None, Some(s)) => format!("sampled on [{}, {}]", s.domain().0, s.domain().1),
            _ => "undefined".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bounded {
    Yes,
    No,
    Inconclusive,
}

/// Supremum of `|f|` on `[r0, inf)` with a boundedness verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupReport {
    /// Largest sampled value of `|f|` on `[r0, 4 r_max]`.
    pub sup: f64,
    pub bounded: Bounded,
    pub source: TailSource,
    /// `(r, |f(r)|)` at the tail sample points used for the verdict.
    pub witness: Vec<(f64, f64)>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.max(1e-12).ln(), hi.ln());
    (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

/// Decide whether `f` stays bounded on `[r0, inf)`. Symbolic when `sym` is
/// analysable, otherwise by monotonicity of `|f|` on `[r_max, 4 r_max]`.
pub fn sup_on_tail(f: &dyn Fn(f64) -> f64, sym: Option<&Expr>, r0: f64, r_max: f64) -> SupReport {
    let mut grid: Vec<f64> = (0..=2000).map(|i| r0 + (r_max - r0) * i as f64 / 2000.0).collect();
    grid.extend(log_grid(r_max, 4.0 * r_max, 400).into_iter().skip(1));
    let sup = grid.iter().map(|r| f(*r).abs()).fold(0.0, f64::max);
    let tail: Vec<(f64, f64)> = log_grid(r_max, 4.0 * r_max, 8).into_iter().map(|r| (r, f(r).abs())).collect();

    if let Some(asym) = sym.and_then(asymptotic) {
        let bounded = match asym {
            Asym::EventuallyZero => Bounded::Yes,
            Asym::Like(g) if g.bounded() => Bounded::Yes,
            Asym::Like(g) if g.sign != 0 => Bounded::No,
            Asym::Like(_) => Bounded::Inconclusive,
        };
        if bounded != Bounded::Inconclusive {
            let sup = if sup.is_finite() { sup } else { f64::INFINITY };
            return SupReport { sup, bounded, source: TailSource::Symbolic, witness: tail };
        }
    }

    let vals: Vec<f64> = log_grid(r_max, 4.0 * r_max, 400).into_iter().map(|r| f(r).abs()).collect();
    let bounded = if vals.iter().any(|v| !v.is_finite()) {
        Bounded::No
    } else if vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-300) {
        Bounded::Yes
    } else {
        let inc: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        let increasing = inc.iter().all(|d| *d >= 0.0);
        // Increments that do not shrink relative to the log-spaced steps.
        let steps: Vec<f64> = log_grid(r_max, 4.0 * r_max, 400).windows(2).map(|w| w[1] - w[0]).collect();
        let slopes: Vec<f64> = inc.iter().zip(&steps).map(|(d, h)| d / h).collect();
        let non_decaying = slopes.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6));
        if increasing && non_decaying && slopes[0] > 0.0 {
            Bounded::No
        } else {
            Bounded::Inconclusive
        }
    };
    SupReport { sup, bounded, source: TailSource::Sampled, witness: tail }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubics_in_the_interior() {
        let x: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = Spline::new(&x, &y).unwrap();
        for t in [3.0, 4.321, 7.7] {
            assert!((s.eval(t, 0) - t.sin()).abs() < 1e-6);
            assert!((s.eval(t, 1) - t.cos()).abs() < 1e-4);
            assert!((s.eval(t, 2) + t.sin()).abs() < 1e-2);
        }
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi, 0) - yi).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_and_sampled_agree() {
        let f = RadialFn::parse("exp(-r)").unwrap();
        let r: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.1).collect();
        let v: Vec<f64> = r.iter().map(|t| (-t).exp()).collect();
        assert!(f.clone().with_samples(&r, &v).is_ok());
        let mut bad = v.clone();
        bad[3] += 1e-9;
        assert!(f.with_samples(&r, &bad).is_err());
        assert!(RadialFn::parse("x + r").is_err());
    }

    #[test]
    fn tail_boundedness() {
        let check = |s: &str| {
            let e = Expr::parse(s).unwrap();
            sup_on_tail(&|r| e.at_r(r), Some(&e), 1.0, 50.0).bounded
        };
        assert_eq!(check("1/r^2"), Bounded::Yes);
        assert_eq!(check("4*r^2"), Bounded::No);
        assert_eq!(check("exp(-r)"), Bounded::Yes);
        let sampled = |f: &dyn Fn(f64) -> f64| sup_on_tail(f, None, 1.0, 50.0).bounded;
        assert_eq!(sampled(&|r| 1.0 / r), Bounded::Yes);
        assert_eq!(sampled(&|r| r * r), Bounded::No);
        assert_eq!(sampled(&|r| 1.0 + r.sin()), Bounded::Inconclusive);
    }
}
