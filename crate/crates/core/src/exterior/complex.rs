//! Discrete graded de Rham complexes on truncated warped ends `[1, R] x N`.
//!
//! Two layouts share one container:
//! - `Product`: the full grid on `[1, R] x S^1` (nodes, radial and angular
//!   edges, cells), staggered in the usual cubical way;
//! - `Mode`: the radial complex carried by one coexact cross-section eigenform
//!   `phi` of degree `p` with eigenvalue `mu`, spanned by `u phi`,
//!   `a dr^phi + b psi_phi`, `c dr^psi_phi` where `psi_phi = d_N phi / sqrt(mu)`.
//!
//! Masses are diagonal (primal/dual volume ratios), `d` is metric-free and the
//! codifferential is always the mass adjoint `M^{-1} d^T M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Point;
use crate::geometry::{ConformalFactor, CrossSection, WarpedModel};
use crate::linalg::{self, Csr, Triplets, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Relative conditions at both ends: tangential components vanish.
    Dirichlet,
    /// Absolute (natural) conditions at both ends.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum ComplexSpec {
    /// `nr` radial intervals, `ntheta` angular nodes on a circle cross-section.
    Product { nr: usize, ntheta: usize },
    /// `nr` radial intervals for a coexact degree-`p` eigenform with eigenvalue `mu`
    /// (`mu = 0` gives the direct sum of the two harmonic sectors).
    Mode { nr: usize, p: usize, mu: f64 },
}

impl ComplexSpec {
    pub fn nr(&self) -> usize {
        match self {
            ComplexSpec::Product { nr, .. } | ComplexSpec::Mode { nr, .. } => *nr,
        }
    }

    /// Same layout with the grid refined by `factor` in every direction.
    pub fn refined(&self, factor: usize) -> ComplexSpec {
        match *self {
            ComplexSpec::Product { nr, ntheta } => ComplexSpec::Product { nr: nr * factor, ntheta: ntheta * factor },
            ComplexSpec::Mode { nr, p, mu } => ComplexSpec::Mode { nr: nr * factor, p, mu },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Node,
    RadialEdge,
    AngularEdge,
    Cell,
    U,
    A,
    B,
    C,
}

/// Location of a degree of freedom (cell center) and its family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dof {
    pub r: f64,
    pub theta: f64,
    pub family: Family,
}

impl Dof {
    pub fn point(&self) -> Point {
        Point { r: self.r, theta: self.theta, ..Default::default() }
    }
}

/// Index bookkeeping for the two layouts.
#[derive(Debug, Clone)]
struct Grid {
    nr: usize,
    nt: usize,
    dirichlet: bool,
    /// Start of each radial station in slot 1.
    station1: Vec<usize>,
}

impl Grid {
    fn new(nr: usize, nt: usize, dirichlet: bool) -> Grid {
        let mut station1 = Vec::with_capacity(nr + 2);
        let mut off = 0;
        for i in 0..=nr {
            station1.push(off);
            if Self::interior(nr, dirichlet, i) {
                off += nt;
            }
            if i < nr {
                off += nt;
            }
        }
        station1.push(off);
        Grid { nr, nt, dirichlet, station1 }
    }

    fn interior(nr: usize, dirichlet: bool, i: usize) -> bool {
        !dirichlet || (i > 0 && i < nr)
    }

    fn has_station(&self, i: usize) -> bool {
        Self::interior(self.nr, self.dirichlet, i)
    }

    fn first(&self) -> usize {
        usize::from(self.dirichlet)
    }

    /// Node (or `u`, `b`-type node value) at station `i`, angle `k`.
    fn node(&self, i: usize, k: usize) -> Option<usize> {
        self.has_station(i).then(|| (i - self.first()) * self.nt + k % self.nt)
    }

    fn n_nodes(&self) -> usize {
        (0..=self.nr).filter(|&i| self.has_station(i)).count() * self.nt
    }

    /// Tangential slot-1 entry at station `i` (angular edge, or `b`).
    fn tangential(&self, i: usize, k: usize) -> Option<usize> {
        self.has_station(i).then(|| self.station1[i] + k % self.nt)
    }

    /// Normal slot-1 entry on interval `i` (radial edge, or `a`).
    fn normal(&self, i: usize, k: usize) -> usize {
        let skip = if self.has_station(i) { self.nt } else { 0 };
        self.station1[i] + skip + k % self.nt
    }

    fn n_slot1(&self) -> usize {
        self.station1[self.nr + 1]
    }

    fn top(&self, i: usize, k: usize) -> usize {
        i * self.nt + k % self.nt
    }
}

#[derive(Debug, Clone)]
pub struct GradedComplex {
    /// Ambient dimension, for `tau = m - 2j`.
    pub m: usize,
    /// Form degree of slot 0.
    pub offset: usize,
    pub spec: ComplexSpec,
    pub bc: BoundaryCondition,
    pub r_max: f64,
    pub dr: f64,
    pub dtheta: f64,
    /// `d[s]` maps slot `s` to slot `s + 1`.
    pub d: Vec<Csr>,
    /// Diagonal masses per slot.
    pub mass: Vec<Vec<f64>>,
    pub dofs: Vec<Vec<Dof>>,
    /// The conformal factor baked into the masses, if any.
    pub psi: Option<String>,
    grid: Grid,
}

fn radial_nodes(nr: usize, r_max: f64) -> (f64, Vec<f64>) {
    let dr = (r_max - 1.0) / nr as f64;
    (dr, (0..=nr).map(|i| 1.0 + i as f64 * dr).collect())
}

/// Assemble the complex for `model` (optionally for `e^{2 psi} g`).
pub fn build_graded_complex(
    model: &WarpedModel,
    psi: Option<&ConformalFactor>,
    spec: ComplexSpec,
    bc: BoundaryCondition,
) -> Result<GradedComplex> {
    let nr = spec.nr();
    if nr + 1 < 8 {
        return Err(Error::GridTooCoarse(format!("{} radial points, at least 8 required", nr + 1)));
    }
    let base = match spec {
        ComplexSpec::Product { nr, ntheta } => {
            let rho = match model.cross_section {
                CrossSection::Circle { radius } => radius,
                _ => return Err(Error::Unsupported("product grids need a circle cross-section".into())),
            };
            if ntheta < 4 {
                return Err(Error::GridTooCoarse(format!("{ntheta} angular nodes, at least 4 required")));
            }
            product_complex(model, rho, nr, ntheta, bc)?
        }
        ComplexSpec::Mode { nr, p, mu } => {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(Error::Invalid(format!("cross-section eigenvalue {mu} must be finite and nonnegative")));
            }
            if p + 2 > model.m {
                return Err(Error::Invalid(format!("mode degree {p} needs p + 2 <= m = {}", model.m)));
            }
            mode_complex(model, nr, p, mu, bc)?
        }
    };
    match psi {
        Some(psi) => base.conformal(psi),
        None => Ok(base),
    }
}

fn check_positive(name: &str, r: f64, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Invalid(format!("profile {name} = {v} at r = {r} is not positive")))
    }
}

fn product_complex(model: &WarpedModel, rho: f64, nr: usize, nt: usize, bc: BoundaryCondition) -> Result<GradedComplex> {
    let grid = Grid::new(nr, nt, bc == BoundaryCondition::Dirichlet);
    let (dr, rs) = radial_nodes(nr, model.r_max);
    let dt = 2.0 * std::f64::consts::PI / nt as f64;
    let fh = |r: f64| -> Result<(f64, f64)> {
        Ok((check_positive("f", r, model.f.value(r))?, check_positive("h_warp", r, model.h_warp.value(r))?))
    };
    let dual = |i: usize| if i == 0 || i == nr { 0.5 * dr } else { dr };

    let n0 = grid.n_nodes();
    let n1 = grid.n_slot1();
    let n2 = nr * nt;
    let mut mass = vec![vec![0.0; n0], vec![0.0; n1], vec![0.0; n2]];
    let placeholder = Dof { r: 0.0, theta: 0.0, family: Family::Node };
    let mut dofs = vec![vec![placeholder; n0], vec![placeholder; n1], vec![placeholder; n2]];
    for i in 0..=nr {
        let (f, h) = fh(rs[i])?;
        for k in 0..nt {
            let th = k as f64 * dt;
            if let Some(n) = grid.node(i, k) {
                mass[0][n] = h * f * rho * dual(i) * dt;
                dofs[0][n] = Dof { r: rs[i], theta: th, family: Family::Node };
            }
            if let Some(e) = grid.tangential(i, k) {
                mass[1][e] = h * dual(i) / (rho * f * dt);
                dofs[1][e] = Dof { r: rs[i], theta: th + 0.5 * dt, family: Family::AngularEdge };
            }
        }
        if i < nr {
            let rm = rs[i] + 0.5 * dr;
            let (f, h) = fh(rm)?;
            for k in 0..nt {
                let th = k as f64 * dt;
                let e = grid.normal(i, k);
                mass[1][e] = rho * f * dt / (h * dr);
                dofs[1][e] = Dof { r: rm, theta: th, family: Family::RadialEdge };
                let c = grid.top(i, k);
                mass[2][c] = 1.0 / (h * f * rho * dr * dt);
                dofs[2][c] = Dof { r: rm, theta: th + 0.5 * dt, family: Family::Cell };
            }
        }
    }

    let mut d0 = Triplets::new(n1, n0);
    let mut d1 = Triplets::new(n2, n1);
    for i in 0..=nr {
        for k in 0..nt {
            if let Some(e) = grid.tangential(i, k) {
                if let Some(a) = grid.node(i, k) {
                    d0.push(e, a, -1.0);
                }
                if let Some(b) = grid.node(i, k + 1) {
                    d0.push(e, b, 1.0);
                }
            }
            if i < nr {
                let e = grid.normal(i, k);
                if let Some(a) = grid.node(i, k) {
                    d0.push(e, a, -1.0);
                }
                if let Some(b) = grid.node(i + 1, k) {
                    d0.push(e, b, 1.0);
                }
                // Cell (i+1/2, k+1/2) oriented by dr ^ dtheta.
                let c = grid.top(i, k);
                if let Some(t) = grid.tangential(i + 1, k) {
                    d1.push(c, t, 1.0);
                }
                if let Some(t) = grid.tangential(i, k) {
                    d1.push(c, t, -1.0);
                }
                d1.push(c, grid.normal(i, k + 1), -1.0);
                d1.push(c, grid.normal(i, k), 1.0);
            }
        }
    }
    Ok(GradedComplex {
        m: 2,
        offset: 0,
        spec: ComplexSpec::Product { nr, ntheta: nt },
        bc,
        r_max: model.r_max,
        dr,
        dtheta: dt,
        d: vec![d0.build(), d1.build()],
        mass,
        dofs,
        psi: None,
        grid,
    })
}

fn mode_complex(model: &WarpedModel, nr: usize, p: usize, mu: f64, bc: BoundaryCondition) -> Result<GradedComplex> {
    let grid = Grid::new(nr, 1, bc == BoundaryCondition::Dirichlet);
    let (dr, rs) = radial_nodes(nr, model.r_max);
    let n = model.n() as i32;
    let p = p as i32;
    let dual = |i: usize| if i == 0 || i == nr { 0.5 * dr } else { dr };
    let fh = |r: f64| -> Result<(f64, f64)> {
        Ok((check_positive("f", r, model.f.value(r))?, check_positive("h_warp", r, model.h_warp.value(r))?))
    };
    let n0 = grid.n_nodes();
    let n1 = grid.n_slot1();
    let n2 = nr;
    let mut mass = vec![vec![0.0; n0], vec![0.0; n1], vec![0.0; n2]];
    let placeholder = Dof { r: 0.0, theta: 0.0, family: Family::U };
    let mut dofs = vec![vec![placeholder; n0], vec![placeholder; n1], vec![placeholder; n2]];
    for i in 0..=nr {
        let (f, h) = fh(rs[i])?;
        if let Some(u) = grid.node(i, 0) {
            mass[0][u] = h * f.powi(n - 2 * p) * dual(i);
            dofs[0][u] = Dof { r: rs[i], theta: 0.0, family: Family::U };
        }
        if let Some(b) = grid.tangential(i, 0) {
            mass[1][b] = h * f.powi(n - 2 * p - 2) * dual(i);
            dofs[1][b] = Dof { r: rs[i], theta: 0.0, family: Family::B };
        }
        if i < nr {
            let rm = rs[i] + 0.5 * dr;
            let (f, h) = fh(rm)?;
            let a = grid.normal(i, 0);
            mass[1][a] = f.powi(n - 2 * p) / (h * dr);
            dofs[1][a] = Dof { r: rm, theta: 0.0, family: Family::A };
            mass[2][i] = f.powi(n - 2 * p - 2) / (h * dr);
            dofs[2][i] = Dof { r: rm, theta: 0.0, family: Family::C };
        }
    }
    let s = mu.sqrt();
    let mut d0 = Triplets::new(n1, n0);
    let mut d1 = Triplets::new(n2, n1);
    for i in 0..=nr {
        if let (Some(b), Some(u)) = (grid.tangential(i, 0), grid.node(i, 0)) {
            d0.push(b, u, s);
        }
        if i < nr {
            let a = grid.normal(i, 0);
            if let Some(u) = grid.node(i, 0) {
                d0.push(a, u, -1.0);
            }
            if let Some(u) = grid.node(i + 1, 0) {
                d0.push(a, u, 1.0);
            }
            if let Some(b) = grid.tangential(i + 1, 0) {
                d1.push(i, b, 1.0);
            }
            if let Some(b) = grid.tangential(i, 0) {
                d1.push(i, b, -1.0);
            }
            d1.push(i, a, -s);
        }
    }
    Ok(GradedComplex {
        m: model.m,
        offset: p as usize,
        spec: ComplexSpec::Mode { nr, p: p as usize, mu },
        bc,
        r_max: model.r_max,
        dr,
        dtheta: 0.0,
        d: vec![d0.build(), d1.build()],
        mass,
        dofs,
        psi: None,
        grid,
    })
}

/// Eigenvalue of the discrete periodic Laplacian on `ntheta` equispaced nodes of
/// a circle of radius `rho` for the Fourier mode `k`; the product grid splits
/// exactly into mode complexes with these eigenvalues.
pub fn circle_mode_eigenvalue(k: usize, ntheta: usize, rho: f64) -> f64 {
    let dt = 2.0 * std::f64::consts::PI / ntheta as f64;
    let s = 2.0 * (0.5 * k as f64 * dt).sin() / (rho * dt);
    s * s
}

impl GradedComplex {
    pub fn slots(&self) -> usize {
        self.mass.len()
    }

    pub fn dim(&self, s: usize) -> usize {
        self.mass[s].len()
    }

    pub fn total_dim(&self) -> usize {
        self.mass.iter().map(Vec::len).sum()
    }

    /// Start of slot `s` in the total vector.
    pub fn slot_offset(&self, s: usize) -> usize {
        self.mass[..s].iter().map(Vec::len).sum()
    }

    pub fn degree(&self, s: usize) -> usize {
        self.offset + s
    }

    /// `tau` on slot `s`: `m - 2j`.
    pub fn tau(&self, s: usize) -> f64 {
        self.m as f64 - 2.0 * self.degree(s) as f64
    }

    pub fn total_mass(&self) -> Vec<f64> {
        self.mass.concat()
    }

    pub fn is_product(&self) -> bool {
        matches!(self.spec, ComplexSpec::Product { .. })
    }

    /// The same complex for `e^{2 psi} g`: every mass is multiplied by
    /// `e^{(m - 2j) psi}` at its dof, `d` is unchanged.
    pub fn conformal(&self, psi: &ConformalFactor) -> Result<GradedComplex> {
        if !self.is_product() && !psi.is_radial() {
            return Err(Error::Unsupported("mode complexes need a radial conformal factor".into()));
        }
        let mut out = self.clone();
        for s in 0..self.slots() {
            let tau = self.tau(s);
            for (w, dof) in out.mass[s].iter_mut().zip(&self.dofs[s]) {
                let v = psi.value(&dof.point());
                if !v.is_finite() {
                    return Err(Error::Invalid(format!("psi is not finite at r = {}", dof.r)));
                }
                *w *= (tau * v).exp();
            }
        }
        out.psi = Some(match &self.psi {
            Some(p) => format!("{p} + {}", psi.describe()),
            None => psi.describe(),
        });
        Ok(out)
    }

    /// Function values at the dofs of slot `s`.
    pub fn sample(&self, s: usize, f: &dyn Fn(&Point) -> f64) -> Vec<f64> {
        self.dofs[s].iter().map(|d| f(&d.point())).collect()
    }

    /// Multiplication by `f` on slot `s`.
    pub fn mult(&self, s: usize, f: &dyn Fn(&Point) -> f64) -> Csr {
        linalg::diag(&self.sample(s, f))
    }

    /// Codifferential on slot `s >= 1`: `M_{s-1}^{-1} d_{s-1}^T M_s`.
    pub fn delta(&self, s: usize) -> Csr {
        let inv: Vec<f64> = self.mass[s - 1].iter().map(|m| 1.0 / m).collect();
        linalg::scale(Some(&inv), &self.d[s - 1].transpose(), Some(&self.mass[s]))
    }

    /// Symmetric stiffness `K_s = M_s Delta_s`.
    pub fn stiffness(&self, s: usize) -> Csr {
        let mut k = linalg::zeros(self.dim(s), self.dim(s));
        if s + 1 < self.slots() {
            let d = &self.d[s];
            let md = linalg::scale(Some(&self.mass[s + 1]), d, None);
            k = linalg::axpby(1.0, &k, 1.0, &(d.transpose() * md));
        }
        if s >= 1 {
            let b = linalg::scale(None, &self.d[s - 1].transpose(), Some(&self.mass[s]));
            let inv: Vec<f64> = self.mass[s - 1].iter().map(|m| 1.0 / m).collect();
            let bi = linalg::scale(Some(&inv), &b, None);
            k = linalg::axpby(1.0, &k, 1.0, &(b.transpose() * bi));
        }
        k
    }

    /// Hodge Laplacian on slot `s`: `M_s^{-1} K_s`.
    pub fn laplacian(&self, s: usize) -> Csr {
        let inv: Vec<f64> = self.mass[s].iter().map(|m| 1.0 / m).collect();
        linalg::scale(Some(&inv), &self.stiffness(s), None)
    }

    /// Discrete `dphi` cochain on the full edge set, indexed like slot 1 of the
    /// Neumann layout; `phi` is evaluated at every node including boundary ones.
    fn dphi_edges(&self, phi: &dyn Fn(&Point) -> f64) -> (Vec<f64>, Vec<f64>) {
        let nr = self.grid.nr;
        let nt = self.grid.nt;
        let at = |i: usize, k: usize| {
            let th = if self.is_product() { k as f64 * self.dtheta } else { 0.0 };
            phi(&Point { r: 1.0 + i as f64 * self.dr, theta: th, ..Default::default() })
        };
        // radial[i * nt + k], angular[i * nt + k]
        let mut radial = vec![0.0; nr * nt];
        let mut angular = vec![0.0; (nr + 1) * nt];
        for i in 0..=nr {
            for k in 0..nt {
                let v = at(i, k);
                if i < nr {
                    radial[i * nt + k] = at(i + 1, k) - v;
                }
                if self.is_product() {
                    angular[i * nt + k] = at(i, (k + 1) % nt) - v;
                }
            }
        }
        (radial, angular)
    }

    /// Exterior multiplication by the discrete 1-form `dphi`, slot `s` to `s + 1`,
    /// with neighbor averaging (cubical cup product).
    pub fn ext_d(&self, s: usize, phi: &dyn Fn(&Point) -> f64) -> Csr {
        let g = &self.grid;
        let (nr, nt) = (g.nr, g.nt);
        let (er, ea) = self.dphi_edges(phi);
        let mut t = Triplets::new(self.dim(s + 1), self.dim(s));
        match (self.is_product(), s) {
            (true, 0) => {
                for i in 0..=nr {
                    for k in 0..nt {
                        if let Some(e) = g.tangential(i, k) {
                            for n in [g.node(i, k), g.node(i, k + 1)].into_iter().flatten() {
                                t.push(e, n, 0.5 * ea[i * nt + k]);
                            }
                        }
                        if i < nr {
                            let e = g.normal(i, k);
                            for n in [g.node(i, k), g.node(i + 1, k)].into_iter().flatten() {
                                t.push(e, n, 0.5 * er[i * nt + k]);
                            }
                        }
                    }
                }
            }
            (true, 1) => {
                for i in 0..nr {
                    for k in 0..nt {
                        let c = g.top(i, k);
                        let eta_r = 0.5 * (er[i * nt + k] + er[i * nt + (k + 1) % nt]);
                        let eta_a = 0.5 * (ea[i * nt + k] + ea[(i + 1) * nt + k]);
                        // (eta ^ beta) = avg(eta_r) avg(beta_a) - avg(eta_a) avg(beta_r)
                        for e in [g.tangential(i, k), g.tangential(i + 1, k)].into_iter().flatten() {
                            t.push(c, e, 0.5 * eta_r);
                        }
                        for e in [g.normal(i, k), g.normal(i, k + 1)] {
                            t.push(c, e, -0.5 * eta_a);
                        }
                    }
                }
            }
            (false, 0) => {
                for i in 0..nr {
                    let a = g.normal(i, 0);
                    for n in [g.node(i, 0), g.node(i + 1, 0)].into_iter().flatten() {
                        t.push(a, n, 0.5 * er[i]);
                    }
                }
            }
            (false, 1) => {
                for i in 0..nr {
                    for b in [g.tangential(i, 0), g.tangential(i + 1, 0)].into_iter().flatten() {
                        t.push(i, b, 0.5 * er[i]);
                    }
                }
            }
            _ => {}
        }
        t.build()
    }

    /// Contraction with `dphi` on slot `s >= 1`: the mass adjoint of [`Self::ext_d`].
    pub fn int_d(&self, s: usize, phi: &dyn Fn(&Point) -> f64) -> Csr {
        let inv: Vec<f64> = self.mass[s - 1].iter().map(|m| 1.0 / m).collect();
        linalg::scale(Some(&inv), &self.ext_d(s - 1, phi).transpose(), Some(&self.mass[s]))
    }

    /// Block operator on the total space from `(row slot, col slot, block)` triples.
    pub fn blocks(&self, parts: &[(usize, usize, Csr)]) -> Csr {
        let n = self.total_dim();
        let mut t = Triplets::new(n, n);
        for (rs, cs, b) in parts {
            let (ro, co) = (self.slot_offset(*rs), self.slot_offset(*cs));
            for (i, j, v) in b.triplet_iter() {
                t.push(ro + i, co + j, *v);
            }
        }
        t.build()
    }

    /// Total exterior derivative.
    pub fn d_total(&self) -> Csr {
        let parts: Vec<_> = (0..self.slots() - 1).map(|s| (s + 1, s, self.d[s].clone())).collect();
        self.blocks(&parts)
    }

    /// Total codifferential.
    pub fn delta_total(&self) -> Csr {
        let parts: Vec<_> = (1..self.slots()).map(|s| (s - 1, s, self.delta(s))).collect();
        self.blocks(&parts)
    }

    /// `D = d + delta`.
    pub fn dirac(&self) -> Csr {
        linalg::axpby(1.0, &self.d_total(), 1.0, &self.delta_total())
    }

    /// Block-diagonal total Laplacian.
    pub fn laplacian_total(&self) -> Csr {
        let parts: Vec<_> = (0..self.slots()).map(|s| (s, s, self.laplacian(s))).collect();
        self.blocks(&parts)
    }

    pub fn ext_total(&self, phi: &dyn Fn(&Point) -> f64) -> Csr {
        let parts: Vec<_> = (0..self.slots() - 1).map(|s| (s + 1, s, self.ext_d(s, phi))).collect();
        self.blocks(&parts)
    }

    pub fn int_total(&self, phi: &dyn Fn(&Point) -> f64) -> Csr {
        let parts: Vec<_> = (1..self.slots()).map(|s| (s - 1, s, self.int_d(s, phi))).collect();
        self.blocks(&parts)
    }

    /// Multiplication by `f` on the total space.
    pub fn mult_total(&self, f: &dyn Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.slots()).flat_map(|s| self.sample(s, f)).collect()
    }

    /// `tau` on the total space.
    pub fn tau_total(&self) -> Vec<f64> {
        (0..self.slots()).flat_map(|s| vec![self.tau(s); self.dim(s)]).collect()
    }

    /// Whether two complexes share layout, grid and dof positions.
    pub fn same_grid(&self, o: &GradedComplex) -> bool {
        self.spec == o.spec
            && self.bc == o.bc
            && self.r_max == o.r_max
            && self.m == o.m
            && self.dofs == o.dofs
    }

    /// Write `d` and the masses as coordinate triplets, one section per matrix.
    pub fn write_triplets(&self, w: &mut dyn std::io::Write) -> std::io::Result<()> {
        for (s, d) in self.d.iter().enumerate() {
            writeln!(w, "% d{s}")?;
            linalg::write_triplets(d, w)?;
        }
        for (s, m) in self.mass.iter().enumerate() {
            writeln!(w, "% M{s}")?;
            linalg::write_triplets(&linalg::diag(m), w)?;
        }
        Ok(())
    }

    /// Max entry of `d_{s+1} d_s` over all slots.
    pub fn dd_defect(&self) -> f64 {
        (0..self.slots().saturating_sub(2)).map(|s| linalg::max_abs(&(&self.d[s + 1] * &self.d[s]))).fold(0.0, f64::max)
    }

    /// `max |<d a, b>_M - <a, delta b>_M| / (|a| |b|)` over seeded random pairs.
    pub fn adjointness_defect(&self, seed: u64) -> f64 {
        let mut rng = linalg::rng(seed);
        let mut worst: f64 = 0.0;
        for s in 0..self.slots() - 1 {
            let delta = self.delta(s + 1);
            for _ in 0..8 {
                let a = linalg::random_vector(&mut rng, self.dim(s));
                let b = linalg::random_vector(&mut rng, self.dim(s + 1));
                let lhs = linalg::wdot(&linalg::spmv(&self.d[s], &a), &b, &self.mass[s + 1]);
                let rhs = linalg::wdot(&a, &linalg::spmv(&delta, &b), &self.mass[s]);
                let scale = linalg::wnorm(&linalg::spmv(&self.d[s], &a), &self.mass[s + 1]) * linalg::wnorm(&b, &self.mass[s + 1])
                    + linalg::wnorm(&a, &self.mass[s]) * linalg::wnorm(&linalg::spmv(&delta, &b), &self.mass[s]);
                worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
            }
        }
        worst
    }

    /// Relative asymmetry of each stiffness matrix.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.slots())
            .map(|s| {
                let k = self.stiffness(s);
                linalg::asymmetry(&k) / linalg::max_abs(&k).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// Split a total vector into slots.
    pub fn split(&self, v: &Vector) -> Vec<Vector> {
        (0..self.slots()).map(|s| v.rows(self.slot_offset(s), self.dim(s)).into_owned()).collect()
    }
}

/// Isometric embedding of the `k = 0` mode complex (`p = 0`, `mu = 0`) into the
/// angularly constant cochains of a product complex on the same radial grid.
pub fn sector_embedding(prod: &GradedComplex, mode: &GradedComplex) -> Result<Vec<Csr>> {
    let ok = prod.is_product()
        && matches!(mode.spec, ComplexSpec::Mode { p: 0, mu, .. } if mu == 0.0)
        && prod.spec.nr() == mode.spec.nr()
        && prod.bc == mode.bc
        && prod.r_max == mode.r_max
        && prod.psi == mode.psi;
    if !ok {
        return Err(Error::Dimension("embedding needs a product complex and its k = 0 mode complex on one grid".into()));
    }
    let partner = |f: Family| match f {
        Family::Node => Family::U,
        Family::RadialEdge => Family::A,
        Family::AngularEdge => Family::B,
        _ => Family::C,
    };
    let tol = 1e-9 * prod.r_max;
    let mut out = Vec::new();
    for s in 0..prod.slots() {
        let rows: Vec<Vec<usize>> = mode.dofs[s]
            .iter()
            .map(|md| {
                (0..prod.dim(s))
                    .filter(|&i| partner(prod.dofs[s][i].family) == md.family && (prod.dofs[s][i].r - md.r).abs() < tol)
                    .collect()
            })
            .collect();
        let mut t = Triplets::new(prod.dim(s), mode.dim(s));
        for (j, idx) in rows.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::Dimension(format!("mode dof {j} of slot {s} has no product partner")));
            }
            let total: f64 = idx.iter().map(|&i| prod.mass[s][i]).sum();
            let w = (mode.mass[s][j] / total).sqrt();
            for &i in idx {
                t.push(i, j, w);
            }
        }
        out.push(t.build());
    }
    Ok(out)
}
