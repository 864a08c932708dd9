//! Algebraic curvature tensors, the Kulkarni–Nomizu product, the conformal
//! curvature formula and a finite-difference Christoffel oracle.
//!
//! Conventions: `R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`
//! and `R(X,Y,Z,W) = g(R(X,Y)W, Z)`, so that `R(e1,e2,e1,e2)` is the sectional
//! curvature of an orthonormal pair (positive on round spheres).

use nalgebra::DMatrix;

use super::metric::{ConformalFactor, MetricDesc};
use crate::error::{Error, Result};
use crate::expr::Point;

/// Components of a (0,4)-tensor in a fixed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor4 {
    pub m: usize,
    c: Vec<f64>,
}

impl CurvatureTensor4 {
    pub fn zeros(m: usize) -> Self {
        CurvatureTensor4 { m, c: vec![0.0; m.pow(4)] }
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.m + j) * self.m + k) * self.m + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let t = self.idx(i, j, k, l);
        self.c[t] = v;
    }

    pub fn components(&self) -> &[f64] {
        &self.c
    }

    pub fn scaled(&self, s: f64) -> Self {
        CurvatureTensor4 { m: self.m, c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn minus(&self, o: &Self) -> Self {
        CurvatureTensor4 { m: self.m, c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |self - o| / max(|o|, tiny)`.
    pub fn relative_diff(&self, o: &Self) -> f64 {
        self.minus(o).max_abs() / o.max_abs().max(1e-300)
    }

    /// Sectional curvature of the frame pair `(i, j)` (frame assumed orthonormal).
    pub fn sectional(&self, i: usize, j: usize) -> f64 {
        self.get(i, j, i, j)
    }

    /// Largest violation of the algebraic curvature symmetries:
    /// antisymmetry in each pair, pair interchange and the first Bianchi identity.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v = self.get(i, j, k, l);
                        worst = worst
                            .max((v + self.get(j, i, k, l)).abs())
                            .max((v + self.get(i, j, l, k)).abs())
                            .max((v - self.get(k, l, i, j)).abs())
                            .max((v + self.get(j, k, i, l) + self.get(k, i, j, l)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Components in a new frame: `T(E_a, E_b, E_c, E_d)`, columns of `e` in the old frame.
    pub fn in_frame(&self, e: &DMatrix<f64>) -> Self {
        let m = self.m;
        let mut cur = self.c.clone();
        // Contract one slot at a time.
        for slot in 0..4 {
            let mut next = vec![0.0; m.pow(4)];
            for (t, out) in next.iter_mut().enumerate() {
                let mut ix = [t / (m * m * m), (t / (m * m)) % m, (t / m) % m, t % m];
                let a = ix[slot];
                let mut acc = 0.0;
                for s in 0..m {
                    ix[slot] = s;
                    let src = ((ix[0] * m + ix[1]) * m + ix[2]) * m + ix[3];
                    acc += cur[src] * e[(s, a)];
                }
                *out = acc;
            }
            cur = next;
        }
        CurvatureTensor4 { m, c: cur }
    }
}

fn check_symmetric(a: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Invalid(format!("{name} is not symmetric")));
    }
    Ok(())
}

/// `(A ⊘ B)(X,Y,Z,W) = A(X,Z)B(Y,W) + A(Y,W)B(X,Z) - A(X,W)B(Y,Z) - A(Y,Z)B(X,W)`.
pub fn kulkarni_nomizu(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CurvatureTensor4> {
    let m = a.nrows();
    if a.ncols() != m || b.nrows() != m || b.ncols() != m {
        return Err(Error::Dimension(format!(
            "{}x{} and {}x{} inputs",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_symmetric(a, "A")?;
    check_symmetric(b, "B")?;
    let mut t = CurvatureTensor4::zeros(m);
    for x in 0..m {
        for y in 0..m {
            for z in 0..m {
                for w in 0..m {
                    let v = a[(x, z)] * b[(y, w)] + a[(y, w)] * b[(x, z)] - a[(x, w)] * b[(y, z)] - a[(y, z)] * b[(x, w)];
                    t.set(x, y, z, w, v);
                }
            }
        }
    }
    Ok(t)
}

/// Step for the finite-difference oracle.
pub const FD_STEP: f64 = 1e-4;

/// Central difference with one Richardson extrapolation step.
fn richardson<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], dir: usize, h: f64) -> Vec<f64> {
    let central = |h: f64| {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[dir] += h;
        xm[dir] -= h;
        let (a, b) = (f(&xp), f(&xm));
        a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let (d1, d2) = (central(h), central(h / 2.0));
    d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
}

/// Christoffel symbols `Gamma^k_{ij}` (index `(k*m + i)*m + j`).
pub fn christoffel(metric: &dyn Fn(&[f64]) -> DMatrix<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let m = x.len();
    let g = metric(x);
    let ginv = g.clone().try_inverse().expect("metric must be invertible");
    let flat = |y: &[f64]| metric(y).as_slice().to_vec();
    // dg[l] = d_l g (column-major m x m).
    let dg: Vec<Vec<f64>> = (0..m).map(|l| richardson(&flat, x, l, h)).collect();
    let gij = |l: usize, i: usize, j: usize| dg[l][j * m + i];
    let mut out = vec![0.0; m * m * m];
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for l in 0..m {
                    acc += ginv[(k, l)] * (gij(i, j, l) + gij(j, i, l) - gij(l, i, j));
                }
                out[(k * m + i) * m + j] = 0.5 * acc;
            }
        }
    }
    out
}

/// Coordinate components `R_{ijkl}` of the Riemann tensor by finite differences
/// of the Christoffel symbols.
pub fn riemann_oracle(metric: &dyn Fn(&[f64]) -> DMatrix<f64>, x: &[f64], h: f64) -> CurvatureTensor4 {
    let m = x.len();
    let gam = christoffel(metric, x, h);
    let chr = |y: &[f64]| christoffel(metric, y, h);
    let dgam: Vec<Vec<f64>> = (0..m).map(|mu| richardson(&chr, x, mu, h)).collect();
    let g = |k: usize, i: usize, j: usize| gam[(k * m + i) * m + j];
    let dg = |mu: usize, k: usize, i: usize, j: usize| dgam[mu][(k * m + i) * m + j];
    // R^rho_{sigma mu nu}
    let mut up = vec![0.0; m.pow(4)];
    for rho in 0..m {
        for sigma in 0..m {
            for mu in 0..m {
                for nu in 0..m {
                    let mut v = dg(mu, rho, nu, sigma) - dg(nu, rho, mu, sigma);
                    for lam in 0..m {
                        v += g(rho, mu, lam) * g(lam, nu, sigma) - g(rho, nu, lam) * g(lam, mu, sigma);
                    }
                    up[((rho * m + sigma) * m + mu) * m + nu] = v;
                }
            }
        }
    }
    let gm = metric(x);
    let mut t = CurvatureTensor4::zeros(m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let mut v = 0.0;
                    for rho in 0..m {
                        v += gm[(k, rho)] * up[((rho * m + l) * m + i) * m + j];
                    }
                    t.set(i, j, k, l, v);
                }
            }
        }
    }
    t
}

fn check_frame(g: &DMatrix<f64>, frame: &DMatrix<f64>) -> Result<()> {
    let m = g.nrows();
    if frame.nrows() != m || frame.ncols() != m {
        return Err(Error::Dimension(format!("frame is {}x{}, expected {m}x{m}", frame.nrows(), frame.ncols())));
    }
    let gram = frame.transpose() * g * frame;
    if (gram - DMatrix::identity(m, m)).amax() > 1e-9 {
        return Err(Error::Invalid("frame is not orthonormal for g".into()));
    }
    Ok(())
}

fn metric_fn(g: &MetricDesc) -> Result<impl Fn(&[f64]) -> DMatrix<f64> + '_> {
    if !g.has_coordinate_matrix() {
        return Err(Error::Unsupported("curvature needs a coordinate metric".into()));
    }
    Ok(move |x: &[f64]| g.matrix(&g.point(x)).unwrap())
}

/// Curvature of `e^{2 psi} g` at `point` from the conformal formula
/// `e^{-2 psi}(R_g - g ⊘ (Hess psi - dpsi ⊗ dpsi + |dpsi|^2 g / 2))`, returned in
/// the `gbar`-orthonormal frame `e^{-psi} E` where `E` is the given
/// `g`-orthonormal frame (columns in coordinates).
pub fn conformal_curvature(
    g: &MetricDesc,
    psi: &ConformalFactor,
    point: &[f64],
    frame: &DMatrix<f64>,
) -> Result<CurvatureTensor4> {
    let m = g.dim();
    if point.len() != m {
        return Err(Error::Dimension(format!("point has {} coordinates, metric dimension {m}", point.len())));
    }
    if psi.expr().is_none() {
        return Err(Error::Invalid("conformal factor lacks a closed form; Hess psi unavailable".into()));
    }
    let gfun = metric_fn(g)?;
    let p: Point = g.point(point);
    let gm = gfun(point);
    check_frame(&gm, frame)?;
    let coords = g.coordinates();
    let flat = matches!(g, MetricDesc::Euclidean { .. });

    let r_g = if flat { CurvatureTensor4::zeros(m) } else { riemann_oracle(&gfun, point, FD_STEP) };
    let gam = if flat { vec![0.0; m * m * m] } else { christoffel(&gfun, point, FD_STEP) };

    let dpsi: Vec<f64> = coords.iter().map(|v| psi.partial(*v, &p)).collect();
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut v = psi.second_partial(coords[i], coords[j], &p);
            for k in 0..m {
                v -= gam[(k * m + i) * m + j] * dpsi[k];
            }
            hess[(i, j)] = v;
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let ginv = gm.clone().try_inverse().ok_or_else(|| Error::Numerical("singular metric".into()))?;
    let dv = nalgebra::DVector::from_vec(dpsi.clone());
    let dpsi_sq = (dv.transpose() * &ginv * &dv)[(0, 0)];
    let a = &hess - &dv * dv.transpose() + &gm * (0.5 * dpsi_sq);
    let t = r_g.minus(&kulkarni_nomizu(&gm, &a)?);
    let s = psi.value(&p);
    Ok(t.in_frame(frame).scaled((-2.0 * s).exp()))
}

/// The same quantity computed directly: finite-difference Riemann tensor of
/// `e^{2 psi} g`, expressed in the frame `e^{-psi} E`.
pub fn conformal_curvature_oracle(
    g: &MetricDesc,
    psi: &ConformalFactor,
    point: &[f64],
    frame: &DMatrix<f64>,
    h: f64,
) -> Result<CurvatureTensor4> {
    let gfun = metric_fn(g)?;
    check_frame(&gfun(point), frame)?;
    let gbar = |x: &[f64]| gfun(x) * (2.0 * psi.value(&g.point(x))).exp();
    let r = riemann_oracle(&gbar, point, h);
    let s = psi.value(&g.point(point));
    Ok(r.in_frame(&(frame * (-s).exp())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use proptest::prelude::*;

    fn sym(m: usize, vals: &[f64]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(m, m);
        let mut t = 0;
        for i in 0..m {
            for j in i..m {
                a[(i, j)] = vals[t];
                a[(j, i)] = vals[t];
                t += 1;
            }
        }
        a
    }

    #[test]
    fn kn_of_euclidean_metric() {
        let d = DMatrix::identity(2, 2);
        let t = kulkarni_nomizu(&d, &d).unwrap();
        assert_eq!(t.get(0, 1, 0, 1), 2.0);
        assert_eq!(kulkarni_nomizu(&DMatrix::zeros(3, 3), &DMatrix::zeros(3, 3)).unwrap().max_abs(), 0.0);
        assert!(kulkarni_nomizu(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)).is_err());
        let mut ns = DMatrix::identity(2, 2);
        ns[(0, 1)] = 1.0;
        assert!(kulkarni_nomizu(&ns, &d).is_err());
    }

    proptest! {
        #[test]
        fn kn_is_symmetric_and_algebraic(m in 2usize..6, seed in prop::collection::vec(-2.0f64..2.0, 42)) {
            let k = m * (m + 1) / 2;
            let a = sym(m, &seed[..k]);
            let b = sym(m, &seed[21..21 + k]);
            let ab = kulkarni_nomizu(&a, &b).unwrap();
            let ba = kulkarni_nomizu(&b, &a).unwrap();
            prop_assert!(ab.minus(&ba).max_abs() < 1e-14);
            prop_assert!(ab.symmetry_defect() < 1e-13);
        }
    }

    #[test]
    fn oracle_on_round_sphere_metric() {
        let g = MetricDesc::Euclidean { m: 2 };
        let psi = ConformalFactor::parse("log(2/(1 + x1^2 + x2^2))").unwrap();
        for x in [[0.0, 0.0], [0.3, -0.4], [1.2, 0.7]] {
            let frame = DMatrix::identity(2, 2);
            let formula = conformal_curvature(&g, &psi, &x, &frame).unwrap();
            let oracle = conformal_curvature_oracle(&g, &psi, &x, &frame, FD_STEP).unwrap();
            assert!((formula.sectional(0, 1) - 1.0).abs() < 1e-12);
            assert!((oracle.sectional(0, 1) - 1.0).abs() < 1e-5);
            assert!(formula.relative_diff(&oracle) < 1e-4);
        }
    }

    #[test]
    fn constant_factor_scales_exactly() {
        let comps: Vec<Expr> = ["1 + x1^2", "0.2*x2", "0.2*x2", "2 + sin(x1)"]
            .iter()
            .map(|s| Expr::parse(s).unwrap())
            .collect();
        let g = MetricDesc::coordinate(2, comps).unwrap();
        let x = [0.4, 0.3];
        let gm = g.matrix(&g.point(&x)).unwrap();
        // Gram-Schmidt frame.
        let chol = gm.clone().cholesky().unwrap();
        let frame = chol.l().transpose().try_inverse().unwrap();
        let zero = conformal_curvature(&g, &ConformalFactor::zero(), &x, &frame).unwrap();
        let c = 0.7;
        let scaled = conformal_curvature(&g, &ConformalFactor::constant(c), &x, &frame).unwrap();
        assert_eq!(scaled, zero.scaled((-2.0 * c).exp()));
    }

    #[test]
    fn linear_factor_matches_oracle() {
        let g = MetricDesc::Euclidean { m: 3 };
        let psi = ConformalFactor::parse("0.3*x1 - 0.5*x2 + 0.2*x3").unwrap();
        let frame = DMatrix::identity(3, 3);
        let formula = conformal_curvature(&g, &psi, &[0.0; 3], &frame).unwrap();
        let oracle = conformal_curvature_oracle(&g, &psi, &[0.0; 3], &frame, FD_STEP).unwrap();
        assert!(formula.relative_diff(&oracle) < 1e-6, "{}", formula.relative_diff(&oracle));
    }

    #[test]
    fn non_orthonormal_frame_is_rejected() {
        let g = MetricDesc::Euclidean { m: 2 };
        let frame = DMatrix::identity(2, 2) * 2.0;
        assert!(conformal_curvature(&g, &ConformalFactor::zero(), &[0.0, 0.0], &frame).is_err());
    }
}
