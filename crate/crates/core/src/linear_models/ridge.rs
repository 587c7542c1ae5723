use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, cholesky_solve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.ncols(),
            });
        }
        let w = ArrayView1::from(&self.weights);
        Ok(x.dot(&w).iter().map(|z| z + self.intercept).collect())
    }
}

/// `Σ (y - Xw - b)² + λ‖w‖²`
pub fn ridge_objective(x: ArrayView2<f64>, y: &[f64], model: &RidgeModel) -> f64 {
    let pred = model.predict(x).expect("matching dims");
    let rss: f64 = pred.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum();
    rss + model.lambda * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Closed form `w = (XcᵀXc + λI)⁻¹ Xcᵀ yc` on centered data (when `fit_intercept`),
/// `b = ȳ − x̄ᵀw`. With fewer rows than columns and `λ > 0` the equivalent dual
/// `w = Xcᵀ (Xc Xcᵀ + λI)⁻¹ yc` is solved instead.
pub fn fit_ridge(x: ArrayView2<f64>, y: &[f64], lambda: f64, fit_intercept: bool) -> Result<RidgeModel> {
    fit_ridge_path(x, y, &[lambda], fit_intercept)?.pop().expect("one model")
}

/// [`fit_ridge`] for several penalties, reusing the Gram matrix. The outer
/// error covers invalid inputs; the inner ones are per-penalty solve failures.
pub fn fit_ridge_path(
    x: ArrayView2<f64>,
    y: &[f64],
    lambdas: &[f64],
    fit_intercept: bool,
) -> Result<Vec<Result<RidgeModel>>> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("ridge penalty {l} must be >= 0")));
    }
    let yv = Array1::from(y.to_vec());
    let (x_mean, y_mean) = if fit_intercept {
        (x.mean_axis(Axis(0)).expect("n > 0"), yv.mean().expect("n > 0"))
    } else {
        (Array1::zeros(p), 0.0)
    };
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = &yv - y_mean;
    let dual = n < p;
    let gram = if dual { xc.dot(&xc.t()) } else { xc.t().dot(&xc) };
    let xty = if dual { yc.clone() } else { xc.t().dot(&yc) };
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            if dual && lambda == 0.0 {
                return Err(Error::SingularSystem);
            }
            let mut a = gram.clone();
            a.diag_mut().mapv_inplace(|d| d + lambda);
            let l = cholesky(a)?;
            let sol = cholesky_solve(&l, xty.view());
            let w = if dual { xc.t().dot(&sol) } else { sol };
            let intercept = y_mean - x_mean.dot(&w);
            Ok(RidgeModel {
                weights: w.to_vec(),
                intercept,
                lambda,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_feature_no_intercept() {
        let x = array![[1.0], [2.0]];
        let m = fit_ridge(x.view(), &[1.0, 2.0], 1.0, false).unwrap();
        assert!((m.weights[0] - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.intercept, 0.0);
    }

    #[test]
    fn unregularized_square_system_interpolates() {
        let x = array![[1.0, 0.5], [-0.3, 2.0], [0.7, 0.1]];
        let y = [3.0, -1.0, 0.25];
        let m = fit_ridge(x.view(), &y, 0.0, true).unwrap();
        let p = m.predict(x.view()).unwrap();
        assert!(p.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn huge_penalty_predicts_mean() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [0.5, -1.0]];
        let y = [1.0, 2.0, 4.0, 1.0];
        let m = fit_ridge(x.view(), &y, 1e7, true).unwrap();
        for p in m.predict(x.view()).unwrap() {
            assert!((p - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert!(matches!(fit_ridge(x.view(), &[1.0, 2.0, 3.0], 0.0, true), Err(Error::SingularSystem)));
        let wide = array![[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]];
        assert!(matches!(fit_ridge(wide.view(), &[1.0, 2.0], 0.0, true), Err(Error::SingularSystem)));
    }

    #[test]
    fn dual_matches_primal() {
        let x = array![[1.0, 0.2, -0.4, 2.0], [0.3, -1.0, 0.8, 0.1], [-0.5, 0.4, 1.5, -0.2]];
        let y = [1.0, -0.5, 2.0];
        let dual = fit_ridge(x.view(), &y, 0.7, true).unwrap();
        // primal on the same problem via the p x p system
        let xm = x.mean_axis(Axis(0)).unwrap();
        let xc = &x - &xm.view().insert_axis(Axis(0));
        let ym = y.iter().sum::<f64>() / 3.0;
        let yc: Array1<f64> = y.iter().map(|v| v - ym).collect();
        let mut a = xc.t().dot(&xc);
        a.diag_mut().mapv_inplace(|d| d + 0.7);
        let w = cholesky_solve(&cholesky(a).unwrap(), xc.t().dot(&yc).view());
        for (a, b) in dual.weights.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
