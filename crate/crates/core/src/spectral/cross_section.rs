//! Hodge spectra of cross-sections: analytic for circles, a refined discrete
//! eigensolve with Richardson extrapolation for round spheres, passthrough for
//! explicit lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Csr, Triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Analytic,
    Oracle,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub degree: usize,
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

/// Eigenvalues of the Hodge Laplacian of a closed `n`-manifold, sorted by
/// degree then eigenvalue. The list is complete below `complete_below`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionSpectrum {
    pub n: usize,
    pub entries: Vec<SpectrumEntry>,
    pub source: SpectrumSource,
    pub complete_below: f64,
    /// Unit round sphere (the unit circle included).
    #[serde(default)]
    pub round_sphere: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSectionKind {
    Circle { radius: f64 },
    Sphere { n: usize },
    Explicit { n: usize, entries: Vec<SpectrumEntry> },
}

/// Number of nonzero Fourier levels kept for circles.
pub const CIRCLE_MODES: usize = 16;
/// Sphere spectra are computed below this eigenvalue.
pub const SPHERE_CUTOFF: f64 = 25.0;
/// Coarse resolution of the sphere oracle (the fine one doubles it).
pub const SPHERE_GRID: usize = 128;

impl CrossSectionSpectrum {
    /// `(eigenvalue, multiplicity)` pairs of degree `j`, ascending.
    pub fn degree(&self, j: usize) -> Vec<(f64, usize)> {
        self.entries.iter().filter(|e| e.degree == j).map(|e| (e.eigenvalue, e.multiplicity)).collect()
    }

    pub fn has_degree(&self, j: usize) -> bool {
        self.entries.iter().any(|e| e.degree == j)
    }

    /// Eigenvalues of degree `j` repeated by multiplicity.
    pub fn expanded(&self, j: usize) -> Vec<f64> {
        self.degree(j).into_iter().flat_map(|(v, m)| std::iter::repeat(v).take(m)).collect()
    }

    /// Lowest eigenvalue of degree `j`, optionally skipping harmonic (zero) entries.
    pub fn lowest(&self, j: usize, include_zero: bool) -> Option<f64> {
        self.degree(j).into_iter().map(|(v, _)| v).find(|v| include_zero || *v > ZERO_TOL)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Invalid("empty spectrum list".into()));
        }
        for e in &self.entries {
            if e.degree > self.n {
                return Err(Error::Invalid(format!("degree {} exceeds cross-section dimension {}", e.degree, self.n)));
            }
            if !(e.eigenvalue >= 0.0) || !e.eigenvalue.is_finite() {
                return Err(Error::Invalid(format!("eigenvalue {} must be finite and nonnegative", e.eigenvalue)));
            }
            if e.multiplicity == 0 {
                return Err(Error::Invalid("zero multiplicity".into()));
            }
        }
        for w in self.entries.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.degree > b.degree || (a.degree == b.degree && a.eigenvalue > b.eigenvalue) {
                return Err(Error::Invalid("entries are not sorted by degree and eigenvalue".into()));
            }
        }
        if let Some(&(v, _)) = self.degree(0).first() {
            if v > ZERO_TOL {
                return Err(Error::Invalid(format!("lowest degree-0 eigenvalue {v} is not 0 (constants)")));
            }
        }
        Ok(())
    }
}

/// Eigenvalues below this are treated as harmonic.
pub const ZERO_TOL: f64 = 1e-9;

pub fn cross_section_spectrum(kind: &CrossSectionKind) -> Result<CrossSectionSpectrum> {
    match kind {
        CrossSectionKind::Circle { radius } => {
            if !(*radius > 0.0) || !radius.is_finite() {
                return Err(Error::Invalid(format!("circle radius {radius} must be positive")));
            }
            let mut entries = Vec::new();
            for degree in 0..=1 {
                entries.push(SpectrumEntry { degree, eigenvalue: 0.0, multiplicity: 1 });
                for k in 1..=CIRCLE_MODES {
                    let v = (k * k) as f64 / (radius * radius);
                    entries.push(SpectrumEntry { degree, eigenvalue: v, multiplicity: 2 });
                }
            }
            let complete_below = ((CIRCLE_MODES + 1).pow(2)) as f64 / (radius * radius);
            Ok(CrossSectionSpectrum { n: 1, entries, source: SpectrumSource::Analytic, complete_below, round_sphere: *radius == 1.0 })
        }
        CrossSectionKind::Sphere { n } => match n {
            0 => Err(Error::Invalid("sphere dimension must be at least 1".into())),
            1 => circle_oracle(SPHERE_GRID, SPHERE_CUTOFF),
            2 => sphere2_oracle(SPHERE_GRID, SPHERE_CUTOFF),
            _ => Err(Error::Unsupported(format!("sphere oracle for n = {n}; supply an explicit list"))),
        },
        CrossSectionKind::Explicit { n, entries } => {
            if entries.is_empty() {
                return Err(Error::Invalid("empty explicit spectrum".into()));
            }
            let mut entries = entries.clone();
            entries.sort_by(|a, b| a.degree.cmp(&b.degree).then(a.eigenvalue.total_cmp(&b.eigenvalue)));
            let s = CrossSectionSpectrum { n: *n, entries, source: SpectrumSource::Explicit, complete_below: f64::INFINITY, round_sphere: false };
            s.validate()?;
            Ok(s)
        }
    }
}

/// A three-slot radial complex with diagonal masses, assembled independently
/// of the warped-end builder.
struct SmallComplex {
    d: [Csr; 2],
    mass: [Vec<f64>; 3],
}

impl SmallComplex {
    fn eigenvalues(&self, s: usize) -> Vec<f64> {
        let n = self.mass[s].len();
        let mut k = linalg::zeros(n, n);
        if s < 2 {
            let d = &self.d[s];
            k = linalg::axpby(1.0, &k, 1.0, &(d.transpose() * linalg::scale(Some(&self.mass[s + 1]), d, None)));
        }
        if s > 0 {
            let b = linalg::scale(None, &self.d[s - 1].transpose(), Some(&self.mass[s]));
            let inv: Vec<f64> = self.mass[s - 1].iter().map(|m| 1.0 / m).collect();
            k = linalg::axpby(1.0, &k, 1.0, &(b.transpose() * linalg::scale(Some(&inv), &b, None)));
        }
        linalg::dense_eigen(&k, &self.mass[s]).0
    }
}

/// The `k`-th Fourier sector of the unit `S^2` written as the suspension
/// `[0, pi] x S^1` with metric `dt^2 + sin(t)^2 dphi^2`, on `n` intervals.
/// Node masses are exact dual areas; tangential components vanish at the poles.
fn sphere_sector(n: usize, k: usize) -> SmallComplex {
    let pi = std::f64::consts::PI;
    let dt = pi / n as f64;
    let t = |i: f64| i * dt;
    // k = 0 keeps u at the poles; every other tangential value vanishes there.
    let u_nodes: Vec<usize> = if k == 0 { (0..=n).collect() } else { (1..n).collect() };
    let b_nodes: Vec<usize> = (1..n).collect();
    let dual_area = |i: usize| {
        let lo = (t(i as f64) - 0.5 * dt).max(0.0);
        let hi = (t(i as f64) + 0.5 * dt).min(pi);
        lo.cos() - hi.cos()
    };
    let dual_inv = |i: usize| {
        // integral of 1 / sin over the dual cell (interior nodes only)
        let lo = t(i as f64) - 0.5 * dt;
        let hi = t(i as f64) + 0.5 * dt;
        ((0.5 * hi).tan() / (0.5 * lo).tan()).ln()
    };
    let mu = k as f64;
    let m_u: Vec<f64> = u_nodes.iter().map(|&i| dual_area(i)).collect();
    let m_a: Vec<f64> = (0..n).map(|i| t(i as f64 + 0.5).sin() / dt).collect();
    let m_b: Vec<f64> = b_nodes.iter().map(|&i| dual_inv(i)).collect();
    let m_c: Vec<f64> = (0..n).map(|i| 1.0 / (t(i as f64 + 0.5).sin() * dt)).collect();
    let nb = b_nodes.len();
    // slot 1 = [b ; a]
    let u_index = |i: usize| u_nodes.iter().position(|&x| x == i);
    let b_index = |i: usize| b_nodes.iter().position(|&x| x == i);
    let mut d0 = Triplets::new(nb + n, u_nodes.len());
    for (bi, &i) in b_nodes.iter().enumerate() {
        if let Some(ui) = u_index(i) {
            d0.push(bi, ui, mu);
        }
    }
    for e in 0..n {
        if let Some(ui) = u_index(e) {
            d0.push(nb + e, ui, -1.0);
        }
        if let Some(ui) = u_index(e + 1) {
            d0.push(nb + e, ui, 1.0);
        }
    }
    let mut d1 = Triplets::new(n, nb + n);
    for e in 0..n {
        if let Some(bi) = b_index(e + 1) {
            d1.push(e, bi, 1.0);
        }
        if let Some(bi) = b_index(e) {
            d1.push(e, bi, -1.0);
        }
        d1.push(e, nb + e, -mu);
    }
    SmallComplex { d: [d0.build(), d1.build()], mass: [m_u, [m_b, m_a].concat(), m_c] }
}

/// Periodic complex on the unit circle with `n` nodes.
fn circle_complex(n: usize) -> (Csr, Vec<f64>, Vec<f64>) {
    let dt = 2.0 * std::f64::consts::PI / n as f64;
    let mut d = Triplets::new(n, n);
    for i in 0..n {
        d.push(i, i, -1.0);
        d.push(i, (i + 1) % n, 1.0);
    }
    (d.build(), vec![dt; n], vec![1.0 / dt; n])
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Merge `(value, multiplicity)` pairs whose values agree to `tol` (relative).
fn cluster(mut vals: Vec<(f64, usize)>, tol: f64) -> Vec<(f64, usize)> {
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for (v, m) in vals {
        let v = if v.abs() < ZERO_TOL { 0.0 } else { v };
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= tol * last.0.abs().max(1.0) => {
                last.2 += v * m as f64;
                last.1 += m;
            }
            _ => out.push((v, m, v * m as f64)),
        }
    }
    out.into_iter().map(|(_, m, s)| (s / m as f64, m)).collect()
}

/// Extrapolated eigenvalues below `cutoff` from a coarse and a fine list.
fn extrapolate(coarse: &[f64], fine: &[f64], cutoff: f64) -> Vec<f64> {
    coarse.iter().zip(fine).filter(|(c, _)| **c < cutoff).map(|(c, f)| richardson(*c, *f)).filter(|v| *v < cutoff).collect()
}

fn circle_oracle(n: usize, cutoff: f64) -> Result<CrossSectionSpectrum> {
    let lists = |n: usize| {
        let (d, m0, m1) = circle_complex(n);
        let k0 = d.transpose() * linalg::scale(Some(&m1), &d, None);
        let b = linalg::scale(None, &d.transpose(), Some(&m1));
        let inv: Vec<f64> = m0.iter().map(|m| 1.0 / m).collect();
        let k1 = b.transpose() * linalg::scale(Some(&inv), &b, None);
        (linalg::dense_eigen(&k0, &m0).0, linalg::dense_eigen(&k1, &m1).0)
    };
    let (c0, c1) = lists(n);
    let (f0, f1) = lists(2 * n);
    let mut entries = Vec::new();
    for (degree, c, f) in [(0, &c0, &f0), (1, &c1, &f1)] {
        for (v, m) in cluster(extrapolate(c, f, cutoff).into_iter().map(|v| (v, 1)).collect(), 1e-4) {
            entries.push(SpectrumEntry { degree, eigenvalue: v, multiplicity: m });
        }
    }
    Ok(CrossSectionSpectrum { n: 1, entries, source: SpectrumSource::Oracle, complete_below: cutoff, round_sphere: true })
}

fn sphere2_oracle(n: usize, cutoff: f64) -> Result<CrossSectionSpectrum> {
    let mut per_degree: [Vec<(f64, usize)>; 3] = Default::default();
    let mut k = 0;
    // sector k only carries eigenvalues >= k(k+1)
    while ((k * (k + 1)) as f64) < cutoff {
        let mult = if k == 0 { 1 } else { 2 };
        let coarse = sphere_sector(n, k);
        let fine = sphere_sector(2 * n, k);
        for (s, list) in per_degree.iter_mut().enumerate() {
            for v in extrapolate(&coarse.eigenvalues(s), &fine.eigenvalues(s), cutoff) {
                list.push((v, mult));
            }
        }
        k += 1;
    }
    let mut entries = Vec::new();
    for (degree, list) in per_degree.into_iter().enumerate() {
        for (v, m) in cluster(list, 1e-4) {
            entries.push(SpectrumEntry { degree, eigenvalue: v, multiplicity: m });
        }
    }
    let s = CrossSectionSpectrum { n: 2, entries, source: SpectrumSource::Oracle, complete_below: cutoff, round_sphere: true };
    if s.degree(0).first().map_or(true, |e| e.0 > 1e-8) {
        return Err(Error::Numerical("sphere oracle lost the constant functions".into()));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lowest positive degree-1 eigenvalue of the unit 2-sphere produced by the
    /// oracle (frozen); the exact value is 2.
    const SPHERE2_LAMBDA1: f64 = 2.0;

    #[test]
    fn circle_lists() {
        let s = cross_section_spectrum(&CrossSectionKind::Circle { radius: 1.0 }).unwrap();
        assert_eq!(&s.expanded(0)[..5], &[0.0, 1.0, 1.0, 4.0, 4.0]);
        assert_eq!(s.expanded(0), s.expanded(1));
        assert_eq!(s.source, SpectrumSource::Analytic);
        let s2 = cross_section_spectrum(&CrossSectionKind::Circle { radius: 2.0 }).unwrap();
        assert_eq!(s2.lowest(0, false), Some(0.25));
        assert!(cross_section_spectrum(&CrossSectionKind::Circle { radius: 0.0 }).is_err());
    }

    #[test]
    fn sphere1_oracle_matches_circle() {
        let s = cross_section_spectrum(&CrossSectionKind::Sphere { n: 1 }).unwrap();
        assert_eq!(s.source, SpectrumSource::Oracle);
        let want = [(0.0, 1), (1.0, 2), (4.0, 2), (9.0, 2), (16.0, 2)];
        for j in 0..=1 {
            let got = s.degree(j);
            for (g, w) in got.iter().zip(want) {
                assert!((g.0 - w.0).abs() < 1e-5 * w.0.max(1.0), "{got:?}");
                assert_eq!(g.1, w.1);
            }
        }
    }

    #[test]
    fn sphere2_oracle() {
        let s = cross_section_spectrum(&CrossSectionKind::Sphere { n: 2 }).unwrap();
        let l1 = s.lowest(1, true).unwrap();
        assert!((l1 - SPHERE2_LAMBDA1).abs() < 1e-5, "{l1}");
        assert_eq!(s.degree(1)[0].1, 6);
        for j in [0, 2] {
            let d = s.degree(j);
            let want = [(0.0, 1), (2.0, 3), (6.0, 5), (12.0, 7), (20.0, 9)];
            for (g, w) in d.iter().zip(want) {
                assert!((g.0 - w.0).abs() < 1e-4 * w.0.max(1.0), "degree {j}: {d:?}");
                assert_eq!(g.1, w.1, "degree {j}: {d:?}");
            }
        }
        assert!(cross_section_spectrum(&CrossSectionKind::Sphere { n: 3 }).is_err());
    }

    #[test]
    fn explicit_validation() {
        let e = |degree, eigenvalue, multiplicity| SpectrumEntry { degree, eigenvalue, multiplicity };
        let ok = CrossSectionKind::Explicit { n: 1, entries: vec![e(0, 1.0, 2), e(0, 0.0, 1), e(1, 0.0, 1)] };
        let s = cross_section_spectrum(&ok).unwrap();
        assert_eq!(s.degree(0), vec![(0.0, 1), (1.0, 2)]);
        assert!(cross_section_spectrum(&CrossSectionKind::Explicit { n: 1, entries: vec![] }).is_err());
        let bad = CrossSectionKind::Explicit { n: 1, entries: vec![e(0, 1.0, 1)] };
        assert!(cross_section_spectrum(&bad).is_err());
        let neg = CrossSectionKind::Explicit { n: 1, entries: vec![e(0, 0.0, 1), e(1, -1.0, 1)] };
        assert!(cross_section_spectrum(&neg).is_err());
    }
}
