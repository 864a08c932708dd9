//! Conformal identities checked on discrete complexes.

use serde::{Deserialize, Serialize};

use super::complex::GradedComplex;
use crate::error::{Error, Result};
use crate::expr::Point;
use crate::geometry::ConformalFactor;
use crate::linalg::{self, Csr, Vector, PROBES};

/// `max_v |op v|_out / |v|_in` over seeded random probes.
pub fn probe_norm(op: &dyn Fn(&Vector) -> Vector, n: usize, w_in: &[f64], w_out: &[f64], seed: u64) -> f64 {
    linalg::probes(n, PROBES, seed, w_in).iter().map(|v| linalg::wnorm(&op(v), w_out)).fold(0.0, f64::max)
}

fn psi_fn(psi: &ConformalFactor) -> impl Fn(&Point) -> f64 + '_ {
    move |p: &Point| psi.value(p)
}

fn check_bounded(c: &GradedComplex, psi: &ConformalFactor) -> Result<()> {
    if psi.sup_psi == Some(f64::INFINITY) {
        return Err(Error::Invalid("sup|psi| is infinite".into()));
    }
    for s in 0..c.slots() {
        for d in &c.dofs[s] {
            if !psi.value(&d.point()).is_finite() {
                return Err(Error::Invalid(format!("psi is unbounded near r = {}", d.r)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CodifferentialCheck {
    /// `A[s-1]`: codifferential of `e^{2 psi} g` on slot `s`, as the mass adjoint of `d`.
    pub adjoint: Vec<Csr>,
    /// `B[s-1] = e^{-2 psi}(delta_g - int_g(dpsi) tau)` on slot `s`.
    pub formula: Vec<Csr>,
    /// `max_s |A - B|` estimated on normalized probes in the `g`-norms.
    pub residual: f64,
    pub per_slot: Vec<f64>,
}

/// Compare the mass-adjoint codifferential of `e^{2 psi} g` with the conformal formula.
pub fn conformal_codifferential(c: &GradedComplex, psi: &ConformalFactor, seed: u64) -> Result<CodifferentialCheck> {
    if c.psi.is_some() {
        return Err(Error::Invalid("the complex must be built for g, not a rescaled metric".into()));
    }
    check_bounded(c, psi)?;
    let cb = c.conformal(psi)?;
    let f = psi_fn(psi);
    let mut adjoint = Vec::new();
    let mut formula = Vec::new();
    let mut per_slot = Vec::new();
    for s in 1..c.slots() {
        let a = cb.delta(s);
        let int = c.int_d(s, &f);
        let inner = linalg::axpby(1.0, &c.delta(s), -c.tau(s), &int);
        let w: Vec<f64> = c.sample(s - 1, &|p| (-2.0 * psi.value(p)).exp());
        let b = linalg::scale(Some(&w), &inner, None);
        let diff = linalg::axpby(1.0, &a, -1.0, &b);
        let r = probe_norm(&|v| linalg::spmv(&diff, v), c.dim(s), &c.mass[s], &c.mass[s - 1], seed + s as u64);
        per_slot.push(r);
        adjoint.push(a);
        formula.push(b);
    }
    let residual = per_slot.iter().copied().fold(0.0, f64::max);
    Ok(CodifferentialCheck { adjoint, formula, residual, per_slot })
}

/// Diagonal identification data between the complexes of `g` and `e^{2 psi} g`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationMaps {
    /// `I` on coefficients (identity), per slot.
    pub i: Vec<Vec<f64>>,
    pub i_inv: Vec<Vec<f64>>,
    /// `I*` as the mass adjoint `M_g^{-1} I^T M_gbar`.
    pub i_star: Vec<Vec<f64>>,
    /// `e^{psi tau}` evaluated directly.
    pub exp_tau: Vec<Vec<f64>>,
    /// `max |I* - e^{psi tau} I^{-1}| / |e^{psi tau}|`.
    pub defect: f64,
}

impl IdentificationMaps {
    pub fn i_star_total(&self) -> Vec<f64> {
        self.i_star.concat()
    }
}

pub const IDENTIFICATION_TOL: f64 = 1e-12;

pub fn identification_maps(cg: &GradedComplex, cgbar: &GradedComplex, psi: &ConformalFactor) -> Result<IdentificationMaps> {
    if !cg.same_grid(cgbar) {
        return Err(Error::Dimension("complexes do not share grid and degrees".into()));
    }
    let mut i = Vec::new();
    let mut i_inv = Vec::new();
    let mut i_star = Vec::new();
    let mut exp_tau = Vec::new();
    let mut defect: f64 = 0.0;
    for s in 0..cg.slots() {
        let n = cg.dim(s);
        let ones = vec![1.0; n];
        let star: Vec<f64> = cg.mass[s].iter().zip(&cgbar.mass[s]).map(|(g, gb)| gb / g).collect();
        let tau = cg.tau(s);
        let et: Vec<f64> = cg.sample(s, &|p| (tau * psi.value(p)).exp());
        for (a, b) in star.iter().zip(&et) {
            defect = defect.max((a - b).abs() / b.abs());
        }
        i.push(ones.clone());
        i_inv.push(ones);
        i_star.push(star);
        exp_tau.push(et);
    }
    if !(defect <= IDENTIFICATION_TOL) {
        return Err(Error::Numerical(format!("I* differs from e^(psi tau) I^-1 by {defect:.3e}")));
    }
    Ok(IdentificationMaps { i, i_inv, i_star, exp_tau, defect })
}

/// `max |<I a, b>_gbar - <a, I* b>_g|` relative, over seeded random vectors.
pub fn identification_adjointness(cg: &GradedComplex, cgbar: &GradedComplex, maps: &IdentificationMaps, seed: u64) -> f64 {
    let mut rng = linalg::rng(seed);
    let mut worst: f64 = 0.0;
    for s in 0..cg.slots() {
        for _ in 0..8 {
            let a = linalg::random_vector(&mut rng, cg.dim(s));
            let b = linalg::random_vector(&mut rng, cg.dim(s));
            let lhs = linalg::wdot(&a, &b, &cgbar.mass[s]);
            let sb = Vector::from_iterator(b.len(), b.iter().zip(&maps.i_star[s]).map(|(x, w)| x * w));
            let rhs = linalg::wdot(&a, &sb, &cg.mass[s]);
            let scale = linalg::wnorm(&a, &cgbar.mass[s]) * linalg::wnorm(&b, &cgbar.mass[s]);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

/// `max |(D f - f D) w - c(df) w| / |w|` over probes; `degree` restricts `w` to one slot.
pub fn dirac_commutator_residual(
    c: &GradedComplex,
    f: &dyn Fn(&Point) -> f64,
    degree: Option<usize>,
    seed: u64,
) -> Result<f64> {
    if let Some(s) = degree {
        if s >= c.slots() {
            return Err(Error::Invalid(format!("slot {s} out of range")));
        }
    }
    let dirac = c.dirac();
    let fm = c.mult_total(f);
    let cl = linalg::axpby(1.0, &c.ext_total(f), -1.0, &c.int_total(f));
    let mass = c.total_mass();
    let n = c.total_dim();
    let mask: Vec<f64> = match degree {
        Some(s) => (0..c.slots()).flat_map(|t| vec![if t == s { 1.0 } else { 0.0 }; c.dim(t)]).collect(),
        None => vec![1.0; n],
    };
    let mut g = linalg::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let mut w = linalg::random_vector(&mut g, n);
        w.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
        let nw = linalg::wnorm(&w, &mass);
        let fw = Vector::from_iterator(n, w.iter().zip(&fm).map(|(x, y)| x * y));
        let dw = linalg::spmv(&dirac, &w);
        let fdw = Vector::from_iterator(n, dw.iter().zip(&fm).map(|(x, y)| x * y));
        let r = linalg::spmv(&dirac, &fw) - fdw - linalg::spmv(&cl, &w);
        worst = worst.max(linalg::wnorm(&r, &mass) / nw);
    }
    Ok(worst)
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` between consecutive levels.
pub fn refinement_orders(h: &[f64], err: &[f64]) -> Vec<f64> {
    h.windows(2).zip(err.windows(2)).map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::complex::{build_graded_complex, BoundaryCondition, ComplexSpec};
    use crate::geometry::WarpedModel;

    fn bump() -> ConformalFactor {
        ConformalFactor::parse("0.4*bump((r - 5)/3)").unwrap()
    }

    fn level(nr: usize, nt: usize) -> GradedComplex {
        build_graded_complex(&WarpedModel::cylinder(10.0), None, ComplexSpec::Product { nr, ntheta: nt }, BoundaryCondition::Dirichlet)
            .unwrap()
    }

    #[test]
    fn codifferential_trivial_cases() {
        let c = level(20, 8);
        assert_eq!(conformal_codifferential(&c, &ConformalFactor::zero(), 1).unwrap().residual, 0.0);
        let r = conformal_codifferential(&c, &ConformalFactor::constant(0.7), 1).unwrap().residual;
        assert!(r <= 1e-12, "{r}");
    }

    #[test]
    fn codifferential_converges() {
        let levels = [(36, 8), (72, 16), (144, 32)];
        let res: Vec<f64> = levels.iter().map(|&(nr, nt)| conformal_codifferential(&level(nr, nt), &bump(), 3).unwrap().residual).collect();
        let h: Vec<f64> = levels.iter().map(|&(nr, _)| 9.0 / nr as f64).collect();
        let orders = refinement_orders(&h, &res);
        assert!(orders.iter().all(|o| *o >= 0.9), "{res:?} {orders:?}");
    }

    #[test]
    fn identification_checks() {
        let c = level(20, 8);
        let psi = ConformalFactor::parse("0.3*sin(r)*cos(theta)").unwrap();
        let cb = c.conformal(&psi).unwrap();
        let maps = identification_maps(&c, &cb, &psi).unwrap();
        assert!(maps.defect <= 1e-12);
        assert!(identification_adjointness(&c, &cb, &maps, 5) <= 1e-12);
        let half = ConformalFactor::constant(0.5);
        let maps = identification_maps(&c, &c.conformal(&half).unwrap(), &half).unwrap();
        assert!((maps.i_star[0][0] - 1f64.exp()).abs() < 1e-14);
        assert!(identification_maps(&c, &level(21, 8), &half).is_err());
    }

    #[test]
    fn dirac_commutator() {
        let c = level(180, 8);
        let one = |_: &Point| 2.0;
        assert!(dirac_commutator_residual(&c, &one, None, 2).unwrap() < 1e-12);
        let lin = |p: &Point| p.r;
        assert!(dirac_commutator_residual(&c, &lin, Some(0), 2).unwrap() <= 1e-2);
        let b = |p: &Point| crate::expr::Expr::parse("bump((r-5)/3)").unwrap().eval(p);
        let res: Vec<f64> = [45, 90, 180]
            .iter()
            .map(|&nr| dirac_commutator_residual(&level(nr, 8), &b, Some(1), 4).unwrap())
            .collect();
        assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
    }
}
