//! Sparse and dense linear-algebra helpers: assembly, diagonal-mass pencils,
//! symmetric eigensolvers, seeded probes and Schatten norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Csr = CsrMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest dimension handled by dense eigensolves.
pub const DENSE_LIMIT: usize = 2000;

/// Number of random probes used for operator-norm estimates.
pub const PROBES: usize = 32;

pub struct Triplets {
    coo: CooMatrix<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { coo: CooMatrix::new(nrows, ncols) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.coo.push(i, j, v);
        }
    }

    /// Duplicate entries are summed.
    pub fn build(self) -> Csr {
        CsrMatrix::from(&self.coo)
    }
}

pub fn zeros(nrows: usize, ncols: usize) -> Csr {
    CsrMatrix::zeros(nrows, ncols)
}

pub fn diag(d: &[f64]) -> Csr {
    let mut t = Triplets::new(d.len(), d.len());
    for (i, v) in d.iter().enumerate() {
        t.push(i, i, *v);
    }
    t.build()
}

pub fn identity(n: usize) -> Csr {
    diag(&vec![1.0; n])
}

pub fn spmv(a: &Csr, x: &Vector) -> Vector {
    assert_eq!(a.ncols(), x.len(), "spmv dimension mismatch");
    let mut y = Vector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut acc = 0.0;
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[*j];
        }
        y[i] = acc;
    }
    y
}

/// `a^T x` without forming the transpose.
pub fn spmv_t(a: &Csr, x: &Vector) -> Vector {
    assert_eq!(a.nrows(), x.len(), "spmv_t dimension mismatch");
    let mut y = Vector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            y[*j] += v * xi;
        }
    }
    y
}

pub fn matmul(a: &Csr, b: &Csr) -> Csr {
    a * b
}

/// `alpha a + beta b`.
pub fn axpby(alpha: f64, a: &Csr, beta: f64, b: &Csr) -> Csr {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut t = Triplets::new(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        t.push(i, j, alpha * v);
    }
    for (i, j, v) in b.triplet_iter() {
        t.push(i, j, beta * v);
    }
    t.build()
}

/// `diag(l) a diag(r)`.
pub fn scale(l: Option<&[f64]>, a: &Csr, r: Option<&[f64]>) -> Csr {
    let mut out = a.clone();
    let offsets = out.row_offsets().to_vec();
    let cols = out.col_indices().to_vec();
    let vals = out.values_mut();
    for i in 0..offsets.len() - 1 {
        for k in offsets[i]..offsets[i + 1] {
            let mut v = vals[k];
            if let Some(l) = l {
                v *= l[i];
            }
            if let Some(r) = r {
                v *= r[cols[k]];
            }
            vals[k] = v;
        }
    }
    out
}

pub fn to_dense(a: &Csr) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        m[(i, j)] += *v;
    }
    m
}

pub fn max_abs(a: &Csr) -> f64 {
    a.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Max absolute entry of `a - a^T`.
pub fn asymmetry(a: &Csr) -> f64 {
    max_abs(&axpby(1.0, a, -1.0, &a.transpose()))
}

/// Write `i j value` lines (0-based, header `% rows cols nnz`).
pub fn write_triplets(a: &Csr, w: &mut dyn std::io::Write) -> std::io::Result<()> {
    writeln!(w, "% {} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplet_iter() {
        writeln!(w, "{i} {j} {v:.17e}")?;
    }
    Ok(())
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    chol: CscCholesky<f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension("Cholesky of a non-square matrix".into()));
        }
        let csc = CscMatrix::from(a);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::Numerical(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(SpdSolver { chol, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        let m = DMatrix::from_column_slice(self.n, 1, b.as_slice());
        let x = self.chol.solve(&m);
        Vector::from_column_slice(x.as_slice())
    }

    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Deterministic generator used for every probe and random start.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Squared weighted norm `sum w_i x_i^2`.
pub fn wnorm2(x: &Vector, w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * a * b).sum()
}

pub fn wnorm(x: &Vector, w: &[f64]) -> f64 {
    wnorm2(x, w).sqrt()
}

pub fn wdot(x: &Vector, y: &Vector, w: &[f64]) -> f64 {
    x.iter().zip(y.iter()).zip(w).map(|((a, b), c)| a * b * c).sum()
}

/// `count` random vectors of unit weighted norm.
pub fn probes(n: usize, count: usize, seed: u64, weights: &[f64]) -> Vec<Vector> {
    let mut g = rng(seed);
    (0..count)
        .map(|_| {
            let v = random_vector(&mut g, n);
            let nv = wnorm(&v, weights);
            v / nv
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    ShiftInvertLanczos,
}

/// Eigenpairs of the pencil `(K, diag(mass))`, ascending; vectors are
/// mass-orthonormal columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// `||A y - theta y|| / max(1, |theta|)` in mass-orthonormal coordinates.
    pub residuals: Vec<f64>,
    pub method: EigenMethod,
}

fn sym_dense(k: &Csr, inv_sqrt: &[f64]) -> DMatrix<f64> {
    let mut a = to_dense(k);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let at = a.transpose();
    (a + at) * 0.5
}

fn pencil_residuals(k: &Csr, inv_sqrt: &[f64], vals: &[f64], ys: &DMatrix<f64>) -> Vec<f64> {
    (0..vals.len())
        .map(|c| {
            let y = ys.column(c).into_owned();
            let x = Vector::from_fn(y.len(), |i, _| y[i] * inv_sqrt[i]);
            let kx = spmv(k, &x);
            let ay = Vector::from_fn(y.len(), |i, _| kx[i] * inv_sqrt[i]);
            (ay - &y * vals[c]).norm() / vals[c].abs().max(1.0)
        })
        .collect()
}

/// Full spectrum of the pencil by dense symmetric eigendecomposition.
pub fn dense_eigen(k: &Csr, mass: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = sym_dense(k, &inv_sqrt);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = mass.len();
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (c, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        for r in 0..n {
            vecs[(r, c)] = eig.eigenvectors[(r, i)] * inv_sqrt[r];
        }
    }
    (vals, vecs)
}

/// The `count` smallest eigenpairs of `(K, diag(mass))`. Dense below
/// [`DENSE_LIMIT`], otherwise shift-invert block Lanczos.
pub fn lowest_eigenpairs(k: &Csr, mass: &[f64], count: usize, seed: u64) -> Result<EigenPairs> {
    let n = mass.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::Dimension(format!("pencil {}x{} vs mass {n}", k.nrows(), k.ncols())));
    }
    if count > n {
        return Err(Error::Invalid(format!("requested {count} eigenvalues of a {n}-dimensional pencil")));
    }
    if mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Invalid("mass matrix is not positive definite".into()));
    }
    if n <= DENSE_LIMIT {
        lowest_dense(k, mass, count)
    } else {
        lowest_lanczos(k, mass, count, seed, 1e-3)
    }
}

pub fn lowest_dense(k: &Csr, mass: &[f64], count: usize) -> Result<EigenPairs> {
    let (vals, vecs) = dense_eigen(k, mass);
    let values = vals[..count].to_vec();
    let vectors = vecs.columns(0, count).into_owned();
    let sq: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let ys = DMatrix::from_fn(mass.len(), count, |i, j| vectors[(i, j)] * sq[i]);
    let residuals = pencil_residuals(k, &inv_sqrt, &values, &ys);
    Ok(EigenPairs { values, vectors, residuals, method: EigenMethod::Dense })
}

fn orthonormalize_against(q: &DMatrix<f64>, used: usize, w: &mut DMatrix<f64>) {
    for _ in 0..2 {
        if used > 0 {
            let qb = q.columns(0, used);
            let coeff = qb.transpose() * &*w;
            *w -= qb * coeff;
        }
    }
}

/// Shift-invert block Lanczos with full reorthogonalization on
/// `B = (A + s)^{-1}`, `A = M^{-1/2} K M^{-1/2}`.
pub fn lowest_lanczos(k: &Csr, mass: &[f64], count: usize, seed: u64, shift: f64) -> Result<EigenPairs> {
    let n = mass.len();
    let block = 4usize;
    let sq: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let shifted = axpby(1.0, k, shift, &diag(mass));
    let solver = SpdSolver::new(&shifted)?;
    let apply_b = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut rhs = x.clone();
        for j in 0..rhs.ncols() {
            for i in 0..n {
                rhs[(i, j)] *= sq[i];
            }
        }
        let mut y = solver.solve_many(&rhs);
        for j in 0..y.ncols() {
            for i in 0..n {
                y[(i, j)] *= sq[i];
            }
        }
        y
    };

    let max_dim = n.min((12 * count + 80).max(160));
    let mut q = DMatrix::<f64>::zeros(n, max_dim);
    let mut bq = DMatrix::<f64>::zeros(n, max_dim);
    let mut used = 0usize;
    let mut g = rng(seed);
    let mut next = DMatrix::from_fn(n, block, |_, _| g.gen_range(-1.0..1.0));
    let tol = 1e-10;
    let mut best: Option<(Vec<f64>, DMatrix<f64>, f64)> = None;

    while used < max_dim {
        orthonormalize_against(&q, used, &mut next);
        // Gram-Schmidt within the block; replace deflated columns by fresh randoms.
        let mut accepted = 0;
        for c in 0..next.ncols() {
            if used + accepted >= max_dim {
                break;
            }
            let mut v = next.column(c).into_owned();
            for _ in 0..2 {
                let qb = q.columns(0, used + accepted);
                let coeff = qb.transpose() * &v;
                v -= qb * coeff;
            }
            let mut nv = v.norm();
            if nv < 1e-10 {
                v = random_vector(&mut g, n);
                for _ in 0..2 {
                    let qb = q.columns(0, used + accepted);
                    let coeff = qb.transpose() * &v;
                    v -= qb * coeff;
                }
                nv = v.norm();
                if nv < 1e-10 {
                    continue;
                }
            }
            q.set_column(used + accepted, &(v / nv));
            accepted += 1;
        }
        if accepted == 0 {
            break;
        }
        let fresh = q.columns(used, accepted).into_owned();
        let w = apply_b(&fresh);
        for c in 0..accepted {
            bq.set_column(used + c, &w.column(c));
        }
        used += accepted;
        next = w;

        if used >= count + block && (used % (4 * block) < block || used >= max_dim) {
            let qu = q.columns(0, used);
            let bu = bq.columns(0, used);
            let t = qu.transpose() * bu;
            let t = (&t + t.transpose()) * 0.5;
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..used).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let mut worst: f64 = 0.0;
            let mut mus = Vec::with_capacity(count);
            let mut ys = DMatrix::zeros(n, count);
            for (c, &i) in order.iter().take(count).enumerate() {
                let s = eig.eigenvectors.column(i);
                let y = qu * s;
                let r = bu * s - &y * eig.eigenvalues[i];
                worst = worst.max(r.norm() / eig.eigenvalues[i].abs().max(1e-300));
                mus.push(eig.eigenvalues[i]);
                ys.set_column(c, &y);
            }
            best = Some((mus, ys, worst));
            if worst < tol {
                break;
            }
        }
    }

    let (mus, ys, worst) = best.ok_or_else(|| Error::NoConvergence {
        residual: f64::INFINITY,
        detail: "Krylov space exhausted before the first Rayleigh-Ritz step".into(),
    })?;
    if worst > 1e-6 {
        return Err(Error::NoConvergence {
            residual: worst,
            detail: format!("shift-invert Lanczos, {count} pairs, dimension {n}"),
        });
    }
    let mut pairs: Vec<(f64, usize)> = mus.iter().enumerate().map(|(i, mu)| (1.0 / mu - shift, i)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys_sorted = DMatrix::from_fn(n, count, |i, c| ys[(i, pairs[c].1)]);
    let residuals = pencil_residuals(k, &inv_sqrt, &values, &ys_sorted);
    let vectors = DMatrix::from_fn(n, count, |i, c| ys_sorted[(i, c)] * inv_sqrt[i]);
    Ok(EigenPairs { values, vectors, residuals, method: EigenMethod::ShiftInvertLanczos })
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn hilbert_schmidt(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

pub fn trace_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().sum()
}

pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
                t.push(i + 1, i, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn schatten_of_diagonal() {
        let d = DMatrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        assert!((hilbert_schmidt(&d) - 5f64.sqrt()).abs() < 1e-15);
        assert!((trace_norm(&d) - 3.0).abs() < 1e-14);
        assert!((operator_norm(&d) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spmv_and_transpose_agree_with_dense() {
        let mut t = Triplets::new(3, 4);
        t.push(0, 1, 2.0);
        t.push(2, 3, -1.0);
        t.push(1, 0, 0.5);
        t.push(1, 0, 0.5);
        let a = t.build();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = Vector::from_vec(vec![1.0, -1.0, 2.0]);
        let d = to_dense(&a);
        assert_eq!(spmv(&a, &x), &d * &x);
        assert_eq!(spmv_t(&a, &y), d.transpose() * &y);
    }

    #[test]
    fn cholesky_solves() {
        let a = laplacian_1d(50);
        let s = SpdSolver::new(&a).unwrap();
        let b = Vector::from_fn(50, |i, _| (i as f64).sin());
        let x = s.solve(&b);
        assert!((spmv(&a, &x) - b).norm() < 1e-10);
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 300;
        let k = laplacian_1d(n);
        let mass: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.1).sin()).collect();
        let dense = lowest_dense(&k, &mass, 6).unwrap();
        let lan = lowest_lanczos(&k, &mass, 6, 7, 1e-3).unwrap();
        for (a, b) in dense.values.iter().zip(&lan.values) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
        for r in lan.residuals {
            assert!(r < 1e-6, "residual {r}");
        }
        // Mass orthonormality of the returned vectors.
        let v = &lan.vectors;
        for i in 0..6 {
            let vi = v.column(i).into_owned();
            assert!((wnorm2(&vi, &mass) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn probes_are_normalized_and_seeded() {
        let w = vec![2.0; 10];
        let a = probes(10, 3, 5, &w);
        let b = probes(10, 3, 5, &w);
        assert_eq!(a, b);
        for p in &a {
            assert!((wnorm(p, &w) - 1.0).abs() < 1e-14);
        }
    }
}
