//! Difference of the Levi-Civita connections of `g` and `e^{2 psi} g`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionDeviation {
    /// Column `i` holds `(nabla_gbar - nabla_g)(e_i, Y)` in frame components.
    pub components: DMatrix<f64>,
    /// `|nabla_gbar - nabla_g|_g = (sum_{j,k} |(nabla_gbar - nabla_g)(e_j, e_k)|^2)^{1/2}`.
    pub norm: f64,
    pub dpsi_norm: f64,
}

/// `(nabla_gbar - nabla_g)(X, Y) = dpsi(X) Y + dpsi(Y) X - g(X, Y) grad psi`,
/// with `dpsi` and `Y` given in a `g`-orthonormal frame.
pub fn deviation_in_frame(dpsi: &[f64], y: &[f64]) -> Result<ConnectionDeviation> {
    let m = dpsi.len();
    if y.len() != m {
        return Err(Error::Dimension(format!("dpsi has {m} components, Y has {}", y.len())));
    }
    let d = DVector::from_column_slice(dpsi);
    let yv = DVector::from_column_slice(y);
    let dy = d.dot(&yv);
    let mut comps = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut col = &yv * d[i] - &d * yv[i];
        col[i] += dy;
        comps.set_column(i, &col);
    }
    let mut norm2 = 0.0;
    for j in 0..m {
        for k in 0..m {
            let mut v = DVector::zeros(m);
            v[k] += d[j];
            v[j] += d[k];
            if j == k {
                v -= &d;
            }
            norm2 += v.norm_squared();
        }
    }
    Ok(ConnectionDeviation { components: comps, norm: norm2.sqrt(), dpsi_norm: d.norm() })
}

/// Same, with `dpsi` as a coordinate covector, `Y` as a coordinate vector and
/// the frame given by its columns in coordinates; `g` is the coordinate metric.
pub fn connection_deviation(
    g: &DMatrix<f64>,
    frame: &DMatrix<f64>,
    dpsi: &[f64],
    y: &[f64],
) -> Result<ConnectionDeviation> {
    let m = g.nrows();
    if frame.shape() != (m, m) || dpsi.len() != m || y.len() != m {
        return Err(Error::Dimension("metric, frame, dpsi and Y must share the dimension".into()));
    }
    let gram = frame.transpose() * g * frame;
    if (gram - DMatrix::identity(m, m)).amax() > 1e-9 {
        return Err(Error::Invalid("frame is not orthonormal for g".into()));
    }
    let dv = DVector::from_column_slice(dpsi);
    let yv = DVector::from_column_slice(y);
    let dpsi_frame = frame.transpose() * dv;
    let y_frame = frame.transpose() * g * yv;
    deviation_in_frame(dpsi_frame.as_slice(), y_frame.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_factor_has_no_deviation() {
        let dev = deviation_in_frame(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(dev.norm, 0.0);
        assert_eq!(dev.components.amax(), 0.0);
    }

    #[test]
    fn unit_covector_in_two_dimensions() {
        let dev = deviation_in_frame(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        // X = e1: e1 + e1 - e1 = e1; X = e2: 0*e1 + 1*e2 - 0 = e2.
        assert_eq!(dev.components.column(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(dev.components.column(1).as_slice(), &[0.0, 1.0]);
        assert!(dev.norm >= dev.dpsi_norm);
        // Exact frame sum: (3m - 2)|dpsi|^2.
        assert!((dev.norm * dev.norm - 4.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn norm_dominates_differential(
            m in 2usize..=5,
            d in prop::collection::vec(-3.0f64..3.0, 5),
            y in prop::collection::vec(-3.0f64..3.0, 5),
            angle in 0.0f64..6.3,
        ) {
            // Rotated frame in the (1,2)-plane of a diagonal metric.
            let scales: Vec<f64> = (0..m).map(|i| 1.0 + 0.3 * i as f64).collect();
            let g = DMatrix::from_fn(m, m, |i, j| if i == j { scales[i] * scales[i] } else { 0.0 });
            let mut rot = DMatrix::identity(m, m);
            rot[(0, 0)] = angle.cos(); rot[(0, 1)] = -angle.sin();
            rot[(1, 0)] = angle.sin(); rot[(1, 1)] = angle.cos();
            let inv = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / scales[i] } else { 0.0 });
            let frame = inv * rot;
            let dev = connection_deviation(&g, &frame, &d[..m], &y[..m]).unwrap();
            prop_assert!(dev.dpsi_norm <= dev.norm + 1e-12);
            let expected = ((3 * m - 2) as f64).sqrt() * dev.dpsi_norm;
            prop_assert!((dev.norm - expected).abs() < 1e-10 * (1.0 + expected));
        }
    }
}
