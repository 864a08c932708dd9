//! Lower bounds for the homogenized injectivity radius and the capped
//! harmonic-radius bound, plus a brute-force oracle and a Lipschitz probe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs for the radius lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RadiusMode {
    /// `inj >= h_tilde` with `h_tilde` Lipschitz with constant `lipschitz`.
    Lipschitz { lipschitz: f64 },
    /// `inj >= c1 exp(-c2 d(., x0))`.
    Exponential { c1: f64, c2: f64 },
}

/// Pointwise lower bound `r_0` for the homogenized injectivity radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusLowerBound {
    pub mode: RadiusMode,
}

/// `min{1, r_harm} >= C * value`, with the constant `C = C(m, p, q)` left symbolic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedBound {
    pub value: f64,
}

impl std::fmt::Display for CappedBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "C·{}", self.value)
    }
}

pub fn radius_lower_bound(mode: RadiusMode) -> Result<RadiusLowerBound> {
    match mode {
        RadiusMode::Lipschitz { lipschitz } => {
            if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
                return Err(Error::Invalid(format!("Lipschitz constant {lipschitz} must be finite and nonnegative")));
            }
        }
        RadiusMode::Exponential { c1, c2 } => {
            if !(c1 > 0.0) {
                return Err(Error::Invalid(format!("C1 = {c1} must be positive")));
            }
            if !(c2 >= 0.0) {
                return Err(Error::Invalid(format!("C2 = {c2} must be nonnegative")));
            }
        }
    }
    Ok(RadiusLowerBound { mode })
}

impl RadiusLowerBound {
    /// `r_0` at a point, given `h_tilde(x)` (Lipschitz mode) or the distance
    /// `d(x, x0)` (exponential mode).
    pub fn r0(&self, input: f64) -> f64 {
        match self.mode {
            RadiusMode::Lipschitz { lipschitz } => input / (1.0 + lipschitz),
            RadiusMode::Exponential { c1, c2 } => c1 * (-c2).exp() * (-c2 * input).exp(),
        }
    }

    /// The bound `C * min{1, r_0, beta}` on `min{1, r_harm}`, where `beta` is the
    /// Ricci scale (`Ric >= -1/beta^2`).
    pub fn capped(&self, input: f64, beta: f64) -> CappedBound {
        CappedBound { value: 1f64.min(self.r0(input)).min(beta) }
    }

    /// The value that is guaranteed to lie below `iota`: in exponential mode the
    /// estimate only controls `min{iota, 1}`, so it is capped at 1.
    pub fn certified(&self, input: f64) -> f64 {
        match self.mode {
            RadiusMode::Lipschitz { .. } => self.r0(input),
            RadiusMode::Exponential { .. } => self.r0(input).min(1.0),
        }
    }
}

/// Brute-force homogenized injectivity radius on an interval domain:
/// `iota(x) = sup{t > 0 : inf_{|y - x| < t} inj(y) >= t}`, scanning `t` on a grid
/// of step `dt` and refining the last accepted cell by bisection.
pub fn homogenized_radius(inj: &dyn Fn(f64) -> f64, x: f64, domain: (f64, f64), dt: f64, t_max: f64) -> f64 {
    let inf_ball = |t: f64| {
        let lo = (x - t).max(domain.0);
        let hi = (x + t).min(domain.1);
        let n = ((hi - lo) / (dt * 0.05)).ceil().max(8.0) as usize;
        (0..=n).map(|i| inj(lo + (hi - lo) * i as f64 / n as f64)).fold(f64::INFINITY, f64::min)
    };
    let ok = |t: f64| inf_ball(t) >= t;
    let mut t = dt;
    if !ok(t) {
        let (mut a, mut b) = (0.0, dt);
        for _ in 0..50 {
            let c = 0.5 * (a + b);
            if ok(c) {
                a = c;
            } else {
                b = c;
            }
        }
        return a;
    }
    while t + dt <= t_max && ok(t + dt) {
        t += dt;
    }
    let (mut a, mut b) = (t, (t + dt).min(t_max));
    for _ in 0..50 {
        let c = 0.5 * (a + b);
        if ok(c) {
            a = c;
        } else {
            b = c;
        }
    }
    a
}

/// `max_{i,j} |field_i - field_j| - d(i, j)`; nonpositive iff 1-Lipschitz on the samples.
pub fn lipschitz_defect(field: &[f64], dist: &dyn Fn(usize, usize) -> f64) -> Result<f64> {
    if field.is_empty() {
        return Err(Error::Invalid("empty sample set".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 0..field.len() {
        for j in i + 1..field.len() {
            worst = worst.max((field[i] - field[j]).abs() - dist(i, j));
        }
    }
    if field.len() == 1 {
        worst = 0.0;
    }
    Ok(worst)
}

/// Convenience form for samples on a line.
pub fn lipschitz_defect_line(xs: &[f64], field: &[f64]) -> Result<f64> {
    if xs.len() != field.len() {
        return Err(Error::Dimension("positions and field differ in length".into()));
    }
    lipschitz_defect(field, &|i, j| (xs[i] - xs[j]).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let l = radius_lower_bound(RadiusMode::Lipschitz { lipschitz: 0.0 }).unwrap();
        assert_eq!(l.r0(0.7), 0.7);
        let e = radius_lower_bound(RadiusMode::Exponential { c1: 1.0, c2: 1.0 }).unwrap();
        assert!((e.r0(0.0) - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(e.capped(0.0, 0.2).to_string(), "C·0.2");
        assert!(radius_lower_bound(RadiusMode::Exponential { c1: 0.0, c2: 1.0 }).is_err());
        assert!(radius_lower_bound(RadiusMode::Lipschitz { lipschitz: f64::NAN }).is_err());
    }

    #[test]
    fn lipschitz_mode_below_brute_force() {
        let inj = |r: f64| 2.0 + r.sin();
        let bound = radius_lower_bound(RadiusMode::Lipschitz { lipschitz: 1.0 }).unwrap();
        for i in 0..60 {
            let x = 1.0 + i as f64 * 0.5;
            let iota = homogenized_radius(&inj, x, (f64::NEG_INFINITY, f64::INFINITY), 0.01, 10.0);
            assert!(bound.certified(inj(x)) <= iota + 1e-9, "x = {x}");
        }
    }

    #[test]
    fn exponential_mode_below_brute_force() {
        let (c1, c2) = (3.0, 0.4);
        let inj = |d: f64| c1 * (-c2 * d).exp();
        let bound = radius_lower_bound(RadiusMode::Exponential { c1, c2 }).unwrap();
        for i in 0..40 {
            let d = i as f64 * 0.5;
            let iota = homogenized_radius(&inj, d, (0.0, f64::INFINITY), 0.01, 10.0);
            assert!(bound.certified(d) <= iota + 1e-9);
        }
    }

    #[test]
    fn lipschitz_probe() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let capped: Vec<f64> = xs.iter().map(|x| x.min(1.0)).collect();
        assert!(lipschitz_defect_line(&xs, &capped).unwrap() <= 1e-12);
        let steep: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert!(lipschitz_defect_line(&xs, &steep).unwrap() > 0.0);
        let bound = radius_lower_bound(RadiusMode::Exponential { c1: 2.0, c2: 1.0 }).unwrap();
        let r0: Vec<f64> = xs.iter().map(|d| bound.r0(*d).min(1.0)).collect();
        assert!(lipschitz_defect_line(&xs, &r0).unwrap() <= 1e-9);
        assert!(lipschitz_defect(&[], &|_, _| 0.0).is_err());
    }
}
