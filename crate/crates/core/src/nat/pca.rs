//! PCA via a cyclic Jacobi eigen-decomposition of the sample covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d × features`, orthonormal rows, by decreasing eigenvalue.
    pub components: DenseMatrix,
    pub eigenvalues: Vec<f64>,
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix.
pub fn jacobi_eigen(sym: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = sym.rows();
    if sym.cols() != n {
        return Err(Error::dim("jacobi_eigen (square)", n, sym.cols()));
    }
    let mut a = sym.clone();
    let mut v = DenseMatrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale = a.frobenius_sq().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Ok(((0..n).map(|i| a.get(i, i)).collect(), v))
}

/// Flips `v` so its first coordinate that is not numerically zero is positive.
fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * max.max(f64::MIN_POSITIVE)) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn pca_fit(x: &DenseMatrix, d: usize) -> Result<PcaModel> {
    let (n, m) = x.shape();
    if d == 0 || d > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "PCA dimension {d} must lie in [1, min(n={n}, features={m})]"
        )));
    }
    let mean = x.col_means();
    let mut centered = x.clone();
    for r in 0..n {
        for (v, mu) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.t_matmul(&centered)?.scale(1.0 / denom);
    let (values, vectors) = jacobi_eigen(&cov)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut components = DenseMatrix::zeros(d, m);
    let mut eigenvalues = Vec::with_capacity(d);
    for (row, &k) in order.iter().take(d).enumerate() {
        let mut v: Vec<f64> = (0..m).map(|i| vectors.get(i, k)).collect();
        normalize_sign(&mut v);
        components.row_mut(row).copy_from_slice(&v);
        eigenvalues.push(values[k]);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Centered projection onto the components.
pub fn pca_transform(model: &PcaModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != model.mean.len() {
        return Err(Error::dim("pca_transform", model.mean.len(), x.cols()));
    }
    let mut centered = x.clone();
    for r in 0..x.rows() {
        for (v, mu) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= mu;
        }
    }
    centered.matmul_t(&model.components)
}

pub fn pca_inverse_transform(model: &PcaModel, z: &DenseMatrix) -> Result<DenseMatrix> {
    let mut x = z.matmul(&model.components)?;
    x.add_row_vector(&model.mean)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_y_equals_x() {
        let x = DenseMatrix::from_rows(&[[-2.0, -2.0], [-1.0, -1.0], [0.5, 0.5], [3.0, 3.0]]).unwrap();
        let m = pca_fit(&x, 1).unwrap();
        let c = m.components.row(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - h).abs() < 1e-12 && (c[1] - h).abs() < 1e-12);
    }

    #[test]
    fn rank_d_data_reconstructs() {
        // rank 2 in 4-D
        let basis = [[1.0, 0.5, -0.3, 2.0], [0.0, 1.0, 1.0, -1.0]];
        let coeffs = [
            [1.0, 2.0],
            [-0.5, 0.3],
            [2.5, -1.0],
            [0.0, 0.7],
            [-1.5, -2.0],
            [0.4, 0.4],
        ];
        let rows: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|c| (0..4).map(|j| 3.0 + c[0] * basis[0][j] + c[1] * basis[1][j]).collect())
            .collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        let back = pca_inverse_transform(&m, &pca_transform(&m, &x).unwrap()).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_row_maps_to_zero_and_rows_orthonormal() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [2.0, 1.0, 1.0], [0.0, 0.0, 3.0], [5.0, 1.0, 1.0]]).unwrap();
        let m = pca_fit(&x, 3).unwrap();
        let z = pca_transform(&m, &DenseMatrix::from_rows(std::slice::from_ref(&m.mean)).unwrap()).unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-12));
        let gram = m.components.matmul_t(&m.components).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let x = DenseMatrix::zeros(3, 5);
        assert!(pca_fit(&x, 4).is_err());
        assert!(pca_fit(&x, 0).is_err());
        // constant data: any orthonormal basis, zero eigenvalues
        let m = pca_fit(&x, 2).unwrap();
        assert!(m.eigenvalues.iter().all(|&e| e.abs() < 1e-15));
    }
}
