//! The exterior algebra of a single fiber, `Λ(R^m) ⊗ C`, in an orthonormal frame.
//!
//! Basis elements `e_I` are indexed by bitmasks `I ⊂ {0..m}`; the degree of
//! `e_I` is `|I|`.

use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberElement {
    pub m: usize,
    pub coeffs: Vec<C64>,
}

impl FiberElement {
    pub fn zeros(m: usize) -> Self {
        FiberElement { m, coeffs: vec![C64::new(0.0, 0.0); 1 << m] }
    }

    pub fn from_coeffs(m: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != 1 << m {
            return Err(Error::Dimension(format!("{} coefficients for m = {m}", coeffs.len())));
        }
        Ok(FiberElement { m, coeffs })
    }

    /// Basis element `e_{i_1} ∧ ... ∧ e_{i_k}` for increasing indices.
    pub fn basis(m: usize, indices: &[usize]) -> Self {
        let mut f = FiberElement::zeros(m);
        let mask = indices.iter().fold(0usize, |acc, i| acc | (1 << i));
        f.coeffs[mask] = C64::new(1.0, 0.0);
        f
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Component of degree `j`.
    pub fn degree_part(&self, j: usize) -> Self {
        let mut out = FiberElement::zeros(self.m);
        for (mask, c) in self.coeffs.iter().enumerate() {
            if mask.count_ones() as usize == j {
                out.coeffs[mask] = *c;
            }
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        FiberElement { m: self.m, coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        FiberElement { m: self.m, coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        FiberElement { m: self.m, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    /// `η ∧ ω`.
    Ext,
    /// Contraction, the fiber adjoint of `Ext`; with a `psi` value it is the
    /// contraction for `e^{2 psi} g`, i.e. `e^{-2 psi}` times the `g` one.
    Int,
    /// `ext(η) - int(η)`.
    Clifford,
    /// Degree-`j` part scaled by `m - 2j`.
    Tau,
    /// Degree-`j` part scaled by `e^{(m - 2j) psi}`.
    ExpTau,
}

/// `(-1)^{#{k in I : k < i}}`.
fn sign(i: usize, mask: usize) -> f64 {
    if (mask & ((1 << i) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn ext(eta: &[f64], w: &FiberElement) -> FiberElement {
    let mut out = FiberElement::zeros(w.m);
    for (mask, c) in w.coeffs.iter().enumerate() {
        if *c == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, e) in eta.iter().enumerate() {
            if mask & (1 << i) == 0 && *e != 0.0 {
                out.coeffs[mask | (1 << i)] += c * (e * sign(i, mask));
            }
        }
    }
    out
}

fn int(eta: &[f64], w: &FiberElement) -> FiberElement {
    let mut out = FiberElement::zeros(w.m);
    for (mask, c) in w.coeffs.iter().enumerate() {
        if *c == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, e) in eta.iter().enumerate() {
            if mask & (1 << i) != 0 && *e != 0.0 {
                out.coeffs[mask & !(1 << i)] += c * (e * sign(i, mask));
            }
        }
    }
    out
}

fn per_degree(w: &FiberElement, f: impl Fn(usize) -> f64) -> FiberElement {
    let mut out = w.clone();
    for (mask, c) in out.coeffs.iter_mut().enumerate() {
        *c *= f(mask.count_ones() as usize);
    }
    out
}

/// Apply a fiber operator. `eta` holds the frame components of a real covector.
pub fn fiber_apply(kind: FiberKind, eta: &[f64], omega: &FiberElement, psi_value: Option<f64>) -> Result<FiberElement> {
    let m = omega.m;
    if matches!(kind, FiberKind::Ext | FiberKind::Int | FiberKind::Clifford) && eta.len() != m {
        return Err(Error::Dimension(format!("covector has {} components, fiber dimension {m}", eta.len())));
    }
    Ok(match kind {
        FiberKind::Ext => ext(eta, omega),
        FiberKind::Int => {
            let v = int(eta, omega);
            match psi_value {
                Some(s) => v.scale((-2.0 * s).exp()),
                None => v,
            }
        }
        FiberKind::Clifford => ext(eta, omega).sub(&int(eta, omega)),
        FiberKind::Tau => per_degree(omega, |j| m as f64 - 2.0 * j as f64),
        FiberKind::ExpTau => {
            let s = psi_value.ok_or_else(|| Error::Invalid("exp_tau needs a psi value".into()))?;
            per_degree(omega, |j| ((m as f64 - 2.0 * j as f64) * s).exp())
        }
    })
}

/// `tau` weights `m - 2j` for `j = 0..=m`.
pub fn tau_weights(m: usize) -> Vec<f64> {
    (0..=m).map(|j| m as f64 - 2.0 * j as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_element(m: usize, vals: &[f64]) -> FiberElement {
        let n = 1 << m;
        let coeffs = (0..n).map(|i| C64::new(vals[2 * i], vals[2 * i + 1])).collect();
        FiberElement::from_coeffs(m, coeffs).unwrap()
    }

    #[test]
    fn contraction_of_area_form() {
        let w = FiberElement::basis(2, &[0, 1]);
        let eta = [1.0, 0.0];
        let i = fiber_apply(FiberKind::Int, &eta, &w, None).unwrap();
        assert_eq!(i, FiberElement::basis(2, &[1]));
        assert_eq!(i.norm(), 1.0);
        assert_eq!(fiber_apply(FiberKind::Ext, &eta, &w, None).unwrap().norm(), 0.0);
    }

    #[test]
    fn tau_and_exp_tau() {
        assert_eq!(tau_weights(3), vec![3.0, 1.0, -1.0, -3.0]);
        let w = FiberElement::basis(2, &[]);
        let e = fiber_apply(FiberKind::ExpTau, &[], &w, Some(0.5)).unwrap();
        assert!((e.coeffs[0].re - 1f64.exp()).abs() < 1e-15);
        assert!(fiber_apply(FiberKind::ExpTau, &[], &w, None).is_err());
        assert!(fiber_apply(FiberKind::Ext, &[1.0], &w, None).is_err());
    }

    #[test]
    fn conformal_contraction_scaling() {
        let w = FiberElement::basis(3, &[0, 2]);
        let eta = [0.3, -1.0, 2.0];
        let g = fiber_apply(FiberKind::Int, &eta, &w, None).unwrap();
        let gb = fiber_apply(FiberKind::Int, &eta, &w, Some(0.4)).unwrap();
        assert!(gb.sub(&g.scale((-0.8f64).exp())).max_abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn lemma_identities(m in 1usize..=6, eta in prop::collection::vec(-2.0f64..2.0, 6), w in prop::collection::vec(-1.0f64..1.0, 128)) {
            let eta = &eta[..m];
            let w = random_element(m, &w);
            let e2: f64 = eta.iter().map(|x| x * x).sum();
            let ew = fiber_apply(FiberKind::Ext, eta, &w, None).unwrap();
            let iw = fiber_apply(FiberKind::Int, eta, &w, None).unwrap();
            // {ext, int} = |η|^2
            let anti = fiber_apply(FiberKind::Ext, eta, &iw, None).unwrap()
                .add(&fiber_apply(FiberKind::Int, eta, &ew, None).unwrap());
            prop_assert!(anti.sub(&w.scale(e2)).max_abs() < 1e-12);
            let lhs = iw.norm_sqr();
            let rhs = e2 * w.norm_sqr() - ew.norm_sqr();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + e2 * w.norm_sqr()));
            // c(η)^2 = -|η|^2
            let cw = fiber_apply(FiberKind::Clifford, eta, &w, None).unwrap();
            let ccw = fiber_apply(FiberKind::Clifford, eta, &cw, None).unwrap();
            prop_assert!(ccw.add(&w.scale(e2)).max_abs() < 1e-12);
            // |int(η)ω| <= |η||ω|
            prop_assert!(iw.norm() <= e2.sqrt() * w.norm() + 1e-12);
        }
    }
}
