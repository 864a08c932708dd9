//! Predicted absolutely continuous spectrum of a warped end from cross-section data.

use serde::{Deserialize, Serialize};

use super::cross_section::{CrossSectionSpectrum, ZERO_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `σ_ac` is contained in the set.
    Contained,
    /// `σ_ac` equals the set.
    Equal,
}

/// A union of half-lines `[t, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// Ascending, without repetition.
    pub thresholds: Vec<f64>,
    pub relation: Relation,
}

impl ThresholdSet {
    pub fn bottom(&self) -> f64 {
        self.thresholds[0]
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.bottom()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcPrediction {
    pub b: f64,
    pub degree: usize,
    pub set: ThresholdSet,
    /// Bottom when harmonic (zero) cross-section eigenvalues are excluded from
    /// the lowest-eigenvalue minimum; only for the round-sphere case.
    pub bottom_without_kernel: Option<f64>,
    pub readings_agree: bool,
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= ZERO_TOL * b.abs().max(1.0));
    v
}

/// Thresholds of `H^{(j)}` on an end with warp exponent `b` over the cross-section.
pub fn ac_prediction(b: f64, spec: &CrossSectionSpectrum, j: usize, ball_core: bool) -> Result<AcPrediction> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::Invalid(format!("warp exponent {b} outside [0, 1]")));
    }
    let n = spec.n;
    if j > n + 1 {
        return Err(Error::Invalid(format!("degree {j} exceeds the dimension {}", n + 1)));
    }
    // Degrees j and j-1 of the cross-section that exist.
    let degrees: Vec<usize> = [Some(j), j.checked_sub(1)].into_iter().flatten().filter(|d| *d <= n).collect();
    for d in &degrees {
        if !spec.has_degree(*d) {
            return Err(Error::Invalid(format!("cross-section spectrum has no degree {d} data")));
        }
    }
    let lowest = |include_zero: bool| {
        degrees.iter().filter_map(|d| spec.lowest(*d, include_zero)).fold(f64::INFINITY, f64::min)
    };
    let (set, without) = if b > 0.0 {
        if ball_core {
            (ThresholdSet { thresholds: vec![0.0], relation: Relation::Equal }, None)
        } else {
            (ThresholdSet { thresholds: vec![0.0], relation: Relation::Contained }, None)
        }
    } else if ball_core && spec.round_sphere {
        let with = lowest(true);
        (ThresholdSet { thresholds: vec![with], relation: Relation::Equal }, Some(lowest(false)))
    } else {
        let all: Vec<f64> = degrees.iter().flat_map(|d| spec.degree(*d).into_iter().map(|(v, _)| v)).collect();
        (ThresholdSet { thresholds: dedup_sorted(all), relation: Relation::Contained }, None)
    };
    if set.thresholds.is_empty() || !set.bottom().is_finite() {
        return Err(Error::Invalid(format!("no cross-section eigenvalues for degree {j}")));
    }
    let readings_agree = without.is_none_or(|w| (w - set.bottom()).abs() <= ZERO_TOL);
    Ok(AcPrediction { b, degree: j, set, bottom_without_kernel: without, readings_agree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::cross_section::{cross_section_spectrum, CrossSectionKind, SpectrumEntry};

    fn circle() -> CrossSectionSpectrum {
        cross_section_spectrum(&CrossSectionKind::Circle { radius: 1.0 }).unwrap()
    }

    #[test]
    fn cylinder_over_circle() {
        let p = ac_prediction(0.0, &circle(), 0, true).unwrap();
        assert_eq!(p.set.thresholds, vec![0.0]);
        assert_eq!(p.set.relation, Relation::Equal);
        assert!(p.readings_agree == (p.bottom_without_kernel == Some(0.0)));
        let u = ac_prediction(0.0, &circle(), 1, false).unwrap();
        assert_eq!(&u.set.thresholds[..3], &[0.0, 1.0, 4.0]);
        assert_eq!(u.set.relation, Relation::Contained);
    }

    #[test]
    fn positive_warp_gives_half_line() {
        for j in 0..=2 {
            let p = ac_prediction(0.5, &circle(), j, true).unwrap();
            assert_eq!(p.set.thresholds, vec![0.0]);
            assert_eq!(p.set.relation, Relation::Equal);
        }
    }

    #[test]
    fn both_readings_reported() {
        let p = ac_prediction(0.0, &circle(), 1, true).unwrap();
        assert_eq!(p.set.bottom(), 0.0);
        assert_eq!(p.bottom_without_kernel, Some(1.0));
        assert!(!p.readings_agree);
    }

    #[test]
    fn hodge_symmetry_on_circle() {
        for j in 0..=2 {
            let a = ac_prediction(0.0, &circle(), j, true).unwrap();
            let b = ac_prediction(0.0, &circle(), 2 - j, true).unwrap();
            assert_eq!(a.set.bottom(), b.set.bottom());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ac_prediction(1.5, &circle(), 0, true).is_err());
        assert!(ac_prediction(0.0, &circle(), 3, true).is_err());
        let only0 = cross_section_spectrum(&CrossSectionKind::Explicit {
            n: 1,
            entries: vec![SpectrumEntry { degree: 0, eigenvalue: 0.0, multiplicity: 1 }],
        })
        .unwrap();
        assert!(ac_prediction(0.0, &only0, 1, false).is_err());
        assert!(ac_prediction(0.0, &only0, 0, false).is_ok());
    }

    #[test]
    fn enlarging_list_never_raises_bottom() {
        let base = vec![
            SpectrumEntry { degree: 0, eigenvalue: 0.0, multiplicity: 1 },
            SpectrumEntry { degree: 0, eigenvalue: 3.0, multiplicity: 1 },
            SpectrumEntry { degree: 1, eigenvalue: 2.0, multiplicity: 1 },
        ];
        let mut more = base.clone();
        more.push(SpectrumEntry { degree: 1, eigenvalue: 0.2, multiplicity: 1 });
        let a = cross_section_spectrum(&CrossSectionKind::Explicit { n: 1, entries: base }).unwrap();
        let b = cross_section_spectrum(&CrossSectionKind::Explicit { n: 1, entries: more }).unwrap();
        assert!(ac_prediction(0.0, &b, 2, false).unwrap().set.bottom() < ac_prediction(0.0, &a, 2, false).unwrap().set.bottom());
        for j in 0..=2 {
            assert!(ac_prediction(0.0, &b, j, false).unwrap().set.bottom() <= ac_prediction(0.0, &a, j, false).unwrap().set.bottom());
        }
    }

    proptest::proptest! {
        #[test]
        fn adding_eigenvalues_never_raises_bottom(
            base in proptest::collection::vec((0usize..=1, 0.01f64..10.0), 1..8),
            extra in proptest::collection::vec((0usize..=1, 0.01f64..10.0), 1..4),
            j in 0usize..=2,
        ) {
            let entries = |v: &[(usize, f64)]| {
                let mut e = vec![
                    SpectrumEntry { degree: 0, eigenvalue: 0.0, multiplicity: 1 },
                    SpectrumEntry { degree: 1, eigenvalue: 0.0, multiplicity: 1 },
                ];
                e.extend(v.iter().map(|&(d, l)| SpectrumEntry { degree: d, eigenvalue: l + 0.5 * d as f64, multiplicity: 1 }));
                cross_section_spectrum(&CrossSectionKind::Explicit { n: 1, entries: e }).unwrap()
            };
            let all: Vec<(usize, f64)> = base.iter().chain(&extra).copied().collect();
            let a = ac_prediction(0.0, &entries(&base), j, false).unwrap();
            let b = ac_prediction(0.0, &entries(&all), j, false).unwrap();
            proptest::prop_assert!(b.set.bottom() <= a.set.bottom());
            proptest::prop_assert!(a.set.thresholds.iter().all(|t| b.set.thresholds.iter().any(|u| (t - u).abs() <= 1e-9 * t.max(1.0))));
        }
    }
}
