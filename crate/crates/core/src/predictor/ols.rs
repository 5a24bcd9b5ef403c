//! Ordinary least squares with an intercept and per-coefficient t-tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::student_t::two_sided_p;
use super::PredictError;

/// Singular values below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// `None` when the design is rank deficient.
    pub std_err: Option<Vec<f64>>,
    pub t_stat: Option<Vec<f64>>,
    pub p_value: Option<Vec<f64>>,
    pub r_squared: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub dof: usize,
    pub rank: usize,
}

impl OlsFit {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.coef.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Fits `y ~ intercept + X * coef`.
///
/// Columns are centered (the intercept then follows from the centroid) and
/// scaled to unit norm before a thin SVD. When the centered design is rank
/// deficient the minimum-norm coefficient vector is returned and inference
/// fields are left empty.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, PredictError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(PredictError::Shape(format!("{} rows in X but {} observations", n, y.len())));
    }
    if n <= p + 1 {
        return Err(PredictError::InsufficientData { rows: n, needed: p + 2 });
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let mut xc = x.clone();
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-x_mean[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let s = xc.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = xc.clone();
    for j in 0..p {
        xs.column_mut(j).scale_mut(1.0 / scale[j]);
    }

    let (coef, rank, cov_unscaled) = if p == 0 {
        (Vec::new(), 0, Some(DMatrix::zeros(0, 0)))
    } else {
        let svd = xs.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * smax && s > 0.0)
            .count();
        if rank == p {
            let u = svd.u.as_ref().expect("u computed");
            let v_t = svd.v_t.as_ref().expect("v_t computed");
            let uty = u.transpose() * &yc;
            let inv = svd.singular_values.map(|s| 1.0 / s);
            let bs = v_t.transpose() * uty.component_mul(&inv);
            let coef: Vec<f64> = (0..p).map(|j| bs[j] / scale[j]).collect();
            // (Xs^T Xs)^-1 = V S^-2 V^T
            let inv2 = inv.component_mul(&inv);
            let v = v_t.transpose();
            let mut cov = &v * DMatrix::from_diagonal(&inv2) * v.transpose();
            for i in 0..p {
                for j in 0..p {
                    cov[(i, j)] /= scale[i] * scale[j];
                }
            }
            (coef, rank, Some(cov))
        } else {
            // Minimum-norm solution in the original (unscaled) units.
            let svd = xc.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let sol = svd
                .solve(&yc, RANK_TOL * smax)
                .map_err(|e| PredictError::Shape(e.to_string()))?;
            (sol.iter().copied().collect(), rank, None)
        }
    };

    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    let mut rss = 0.0;
    for i in 0..n {
        let fitted = intercept + (0..p).map(|j| coef[j] * x[(i, j)]).sum::<f64>();
        rss += (y[i] - fitted).powi(2);
    }
    let tss: f64 = yc.iter().map(|v| v * v).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = n - p - 1;

    let (std_err, t_stat, p_value) = match cov_unscaled {
        Some(cov) if rank == p => {
            let s2 = rss / dof as f64;
            let se: Vec<f64> = (0..p).map(|j| (s2 * cov[(j, j)]).sqrt()).collect();
            let t: Vec<f64> = coef
                .iter()
                .zip(&se)
                .map(|(b, s)| if *s > 0.0 { b / s } else { f64::INFINITY * b.signum() })
                .collect();
            let pv = t
                .iter()
                .map(|&t| if t.is_nan() { 1.0 } else { two_sided_p(t, dof as f64) })
                .collect();
            (Some(se), Some(t), Some(pv))
        }
        _ => (None, None, None),
    };

    Ok(OlsFit {
        coef,
        intercept,
        std_err,
        t_stat,
        p_value,
        r_squared,
        rss,
        n_obs: n,
        dof,
        rank,
    })
}

/// Numerical rank of the centered columns of `x`.
pub fn centered_rank(x: &DMatrix<f64>) -> usize {
    let (n, p) = x.shape();
    if p == 0 || n == 0 {
        return 0;
    }
    let mut xs = x.clone();
    for j in 0..p {
        let mean = xs.column(j).sum() / n as f64;
        xs.column_mut(j).add_scalar_mut(-mean);
        let norm = xs.column(j).norm();
        if norm > 0.0 {
            xs.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    let sv = xs.singular_values();
    let smax = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        let x = DMatrix::from_column_slice(5, 1, &xs);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.rss < 1e-18);
        for (i, x) in xs.iter().enumerate() {
            assert!((fit.predict_row(&[*x]) - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 7.]);
        assert!(matches!(
            ols_fit(&x, &[1., 2., 3.]),
            Err(PredictError::InsufficientData { rows: 3, needed: 4 })
        ));
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let a = [1.0, 2.0, 4.0, 3.0, 7.0, 5.0];
        let mut data = Vec::new();
        data.extend_from_slice(&a);
        data.extend_from_slice(&a);
        let x = DMatrix::from_column_slice(6, 2, &data);
        let y: Vec<f64> = a.iter().map(|v| 4.0 * v + 1.0).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert!(fit.rank_deficient());
        assert!(fit.p_value.is_none());
        // Minimum norm splits the weight evenly.
        assert!((fit.coef[0] - 2.0).abs() < 1e-9);
        assert!((fit.coef[1] - 2.0).abs() < 1e-9);
        assert!(fit.rss < 1e-18);
        assert_eq!(centered_rank(&x), 1);
    }

    #[test]
    fn centroid_prediction() {
        let x = DMatrix::from_row_slice(6, 2, &[1., 0.5, 2., 0.1, 3., 0.9, 4., 0.3, 5., 0.7, 6., 0.2]);
        let y = [1.1, 1.9, 3.4, 3.9, 5.3, 5.8];
        let fit = ols_fit(&x, &y).unwrap();
        let mean_row = [3.5, 2.7 / 6.0];
        let mean_y = y.iter().sum::<f64>() / 6.0;
        assert!((fit.predict_row(&mean_row) - mean_y).abs() < 1e-12);
        let p = fit.p_value.unwrap();
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
