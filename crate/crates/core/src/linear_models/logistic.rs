use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg::{matvec, tmatvec};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 5000;
pub const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    Balanced,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub class_weight: ClassWeight,
    pub penalty: Penalty,
    /// Inverse penalty strength.
    pub c: f64,
}

/// One binary logistic model; `constant` replaces the linear score when the
/// training labels held a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogistic {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub constant: Option<f64>,
}

impl BinaryLogistic {
    pub fn probability(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match self.constant {
            Some(p) => vec![p; x.nrows()],
            None => {
                let w = ArrayView1::from(&self.weights);
                x.dot(&w).iter().map(|z| sigmoid(z + self.intercept)).collect()
            }
        }
    }
}

/// One-vs-rest over `classes` labels; binary tasks hold a single model for class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub classes: usize,
    pub hyper: LogisticHyper,
    pub models: Vec<BinaryLogistic>,
}

impl LogisticModel {
    /// Per-class probabilities; one-vs-rest scores are normalized to sum to 1.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        let p = self.models.first().map_or(0, |m| m.weights.len());
        if x.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: x.ncols(),
            });
        }
        let n = x.nrows();
        if self.classes == 2 {
            let p1 = self.models[0].probability(x);
            return Ok(p1.into_iter().map(|p| vec![1.0 - p, p]).collect());
        }
        let per_class: Vec<Vec<f64>> = self.models.iter().map(|m| m.probability(x)).collect();
        Ok((0..n)
            .map(|i| {
                let row: Vec<f64> = per_class.iter().map(|c| c[i]).collect();
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter().map(|v| v / s).collect()
                } else {
                    vec![1.0 / self.classes as f64; self.classes]
                }
            })
            .collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Balanced weights `n / (k n_c)` for 0/1 labels (k = 2).
pub fn balanced_weights(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&v| if v == 1.0 { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect()
}

/// Weighted summed negative log-likelihood plus penalty:
/// `Σ sᵢ [log(1 + e^{zᵢ}) − yᵢ zᵢ] + pen(w)` with `pen = ‖w‖²/(2C)` or `‖w‖₁/C`.
pub fn logistic_objective(
    x: ArrayView2<f64>,
    y: &[f64],
    s: &[f64],
    w: ArrayView1<f64>,
    b: f64,
    penalty: Penalty,
    c: f64,
) -> f64 {
    smooth_loss(x, y, s, w, b) + penalty_value(w, penalty, c)
}

fn smooth_loss(x: ArrayView2<f64>, y: &[f64], s: &[f64], w: ArrayView1<f64>, b: f64) -> f64 {
    x.dot(&w)
        .iter()
        .zip(y)
        .zip(s)
        .map(|((z, &t), &si)| si * (softplus(z + b) - t * (z + b)))
        .sum()
}

fn penalty_value(w: ArrayView1<f64>, penalty: Penalty, c: f64) -> f64 {
    match penalty {
        Penalty::L2 => w.dot(&w) / (2.0 * c),
        Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>() / c,
    }
}

/// Gradient of the differentiable part (likelihood, plus the l2 penalty when
/// `penalty` is l2) with respect to `(w, b)`.
pub fn logistic_smooth_gradient(
    x: ArrayView2<f64>,
    y: &[f64],
    s: &[f64],
    w: ArrayView1<f64>,
    b: f64,
    penalty: Penalty,
    c: f64,
) -> (Array1<f64>, f64) {
    let r: Array1<f64> = x
        .dot(&w)
        .iter()
        .zip(y)
        .zip(s)
        .map(|((z, &t), &si)| si * (sigmoid(z + b) - t))
        .collect();
    let mut gw = x.t().dot(&r);
    if penalty == Penalty::L2 {
        gw.scaled_add(1.0 / c, &w);
    }
    (gw, r.sum())
}

/// Solver diagnostics: objective after every accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    pub converged: bool,
}

/// Largest eigenvalue of `AᵀA` for `A = [X 1]` by power iteration (an upper estimate
/// is fine; backtracking corrects it).
fn spectral_bound(x: ArrayView2<f64>) -> f64 {
    let p = x.ncols();
    let mut v = Array1::from_elem(p + 1, 1.0 / ((p + 1) as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..30 {
        let av = matvec(x, &v.as_slice().expect("contiguous")[..p]) + v[p];
        let mut atav = tmatvec(x, av.as_slice().expect("contiguous")).to_vec();
        atav.push(av.sum());
        let atav = Array1::from(atav);
        let norm = atav.dot(&atav).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = atav / norm;
    }
    lam
}

/// Binary fit by accelerated proximal gradient with backtracking and adaptive
/// restart; the objective never increases between accepted iterates. Stops when the
/// decrease drops below `1e-8 · max(1, |F|)` or after 5000 iterations.
pub fn fit_binary(x: ArrayView2<f64>, y: &[f64], s: &[f64], penalty: Penalty, c: f64) -> (BinaryLogistic, FitTrace) {
    let p = x.ncols();
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    if n_pos == 0 || n_pos == y.len() {
        let p1 = if n_pos == 0 { 0.0 } else { 1.0 };
        return (
            BinaryLogistic {
                weights: vec![0.0; p],
                intercept: 0.0,
                constant: Some(p1),
            },
            FitTrace {
                objective: Vec::new(),
                converged: true,
            },
        );
    }
    let smax = s.iter().copied().fold(0.0, f64::max);
    let lip = 0.25 * smax * spectral_bound(x) + if penalty == Penalty::L2 { 1.0 / c } else { 0.0 };
    let mut step = if lip > 0.0 { 1.0 / lip } else { 1.0 };

    let prox = |v: &mut Array1<f64>, t: f64| {
        if penalty == Penalty::L1 {
            let thr = t / c;
            v.mapv_inplace(|a| a.signum() * (a.abs() - thr).max(0.0));
        }
    };
    // Linear scores are carried along with every iterate so each step costs one
    // product with X and one with Xᵀ.
    let nll = |z: &Array1<f64>, b: f64| -> f64 {
        z.iter()
            .zip(y)
            .zip(s)
            .map(|((z, &t), &si)| si * (softplus(z + b) - t * (z + b)))
            .sum()
    };
    let l2 = |w: &Array1<f64>| if penalty == Penalty::L2 { w.dot(w) / (2.0 * c) } else { 0.0 };
    let smooth = |w: &Array1<f64>, z: &Array1<f64>, b: f64| nll(z, b) + l2(w);
    let full = |w: &Array1<f64>, z: &Array1<f64>, b: f64| nll(z, b) + penalty_value(w.view(), penalty, c);

    let (mut w, mut b) = (Array1::<f64>::zeros(p), 0.0);
    let mut zw = Array1::<f64>::zeros(x.nrows());
    let (mut yw, mut yb, mut zy) = (w.clone(), b, zw.clone());
    let mut theta = 1.0f64;
    let mut f = full(&w, &zw, b);
    let mut trace = vec![f];
    let mut converged = false;
    let mut restarted = true;

    for _ in 0..MAX_ITERATIONS {
        let r: Array1<f64> = zy
            .iter()
            .zip(y)
            .zip(s)
            .map(|((z, &t), &si)| si * (sigmoid(z + yb) - t))
            .collect();
        let mut gw = tmatvec(x, r.as_slice().expect("contiguous"));
        if penalty == Penalty::L2 {
            gw.scaled_add(1.0 / c, &yw);
        }
        let gb = r.sum();
        let fy = smooth(&yw, &zy, yb);
        let (mut nw, mut nb, mut zn);
        loop {
            nw = &yw - &(&gw * step);
            nb = yb - step * gb;
            prox(&mut nw, step);
            zn = matvec(x, nw.as_slice().expect("contiguous"));
            let dw = &nw - &yw;
            let db = nb - yb;
            let model = fy + gw.dot(&dw) + gb * db + (dw.dot(&dw) + db * db) / (2.0 * step);
            if smooth(&nw, &zn, nb) <= model + 1e-12 * fy.abs().max(1.0) || step < 1e-300 {
                break;
            }
            step *= 0.5;
        }
        let fn_ = full(&nw, &zn, nb);
        if fn_ > f {
            if restarted {
                // a plain proximal step failed to decrease: numerically converged
                converged = true;
                break;
            }
            yw = w.clone();
            yb = b;
            zy = zw.clone();
            theta = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        let decrease = f - fn_;
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let mom = (theta - 1.0) / theta_next;
        yw = &nw + &((&nw - &w) * mom);
        yb = nb + mom * (nb - b);
        zy = &zn + &((&zn - &zw) * mom);
        w = nw;
        b = nb;
        zw = zn;
        theta = theta_next;
        f = fn_;
        trace.push(f);
        if decrease < TOLERANCE * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    (
        BinaryLogistic {
            weights: w.to_vec(),
            intercept: b,
            constant: None,
        },
        FitTrace {
            objective: trace,
            converged,
        },
    )
}

/// Binary (`classes == 2`, labels 0/1) or one-vs-rest multiclass fit; labels are
/// class indices stored as floats.
pub fn fit_logistic(x: ArrayView2<f64>, y: &[f64], classes: usize, hyper: LogisticHyper) -> Result<LogisticModel> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if classes < 2 {
        return Err(Error::InvalidConfig("classification needs at least two classes".into()));
    }
    if !(hyper.c > 0.0) {
        return Err(Error::InvalidConfig(format!("C = {} must be positive", hyper.c)));
    }
    if let Some(bad) = y.iter().find(|&&v| v.fract() != 0.0 || v < 0.0 || v >= classes as f64) {
        return Err(Error::InvalidConfig(format!("label {bad} outside 0..{classes}")));
    }
    let distinct = {
        let mut seen = vec![false; classes];
        y.iter().for_each(|&v| seen[v as usize] = true);
        seen.iter().filter(|&&b| b).count()
    };
    if distinct < 2 {
        log::warn!("training labels hold a single class; fitting a constant model");
    }
    let targets: Vec<usize> = if classes == 2 { vec![1] } else { (0..classes).collect() };
    let models = targets
        .into_iter()
        .map(|k| {
            let yk: Vec<f64> = y.iter().map(|&v| if v as usize == k { 1.0 } else { 0.0 }).collect();
            let s = match hyper.class_weight {
                ClassWeight::Balanced if yk.contains(&1.0) && yk.contains(&0.0) => {
                    balanced_weights(&yk)
                }
                _ => vec![1.0; yk.len()],
            };
            fit_binary(x, &yk, &s, hyper.penalty, hyper.c).0
        })
        .collect();
    Ok(LogisticModel {
        classes,
        hyper,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn balanced_weight_example() {
        let w = balanced_weights(&[1.0, 1.0, 1.0, 0.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[3], 2.0);
    }

    #[test]
    fn zero_weights_give_one_half() {
        let m = BinaryLogistic {
            weights: vec![0.0, 0.0],
            intercept: 0.0,
            constant: None,
        };
        assert_eq!(m.probability(array![[3.0, -7.0]].view()), vec![0.5]);
    }

    #[test]
    fn separable_data_ranked_perfectly() {
        let x = array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let hyper = LogisticHyper {
            class_weight: ClassWeight::None,
            penalty: Penalty::L2,
            c: 1.0,
        };
        let m = fit_logistic(x.view(), &y, 2, hyper).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        let s: Vec<f64> = p.iter().map(|r| r[1]).collect();
        let labels: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
        assert_eq!(crate::metrics::auroc(&s, &labels).unwrap(), 1.0);
        assert!(p.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn strong_l1_zeroes_noise_features() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 4), |(i, j)| {
            if j == 0 {
                if i % 2 == 0 { 1.0 } else { -1.0 }
            } else {
                ((i * 7 + j * 13) as f64 * 0.61).sin()
            }
        });
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let s = vec![1.0; n];
        let (m, trace) = fit_binary(x.view(), &y, &s, Penalty::L1, 0.2);
        assert!(m.weights[1..].iter().all(|&w| w == 0.0), "{:?}", m.weights);
        assert!(m.weights[0] > 0.0);
        assert!(trace.objective.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_class_gives_constant_model() {
        let x = array![[1.0], [2.0]];
        let hyper = LogisticHyper {
            class_weight: ClassWeight::Balanced,
            penalty: Penalty::L2,
            c: 1.0,
        };
        let m = fit_logistic(x.view(), &[1.0, 1.0], 2, hyper).unwrap();
        assert_eq!(m.models[0].constant, Some(1.0));
    }

    #[test]
    fn multiclass_probabilities_normalized() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.5, 0.2], [0.9, 0.8]];
        let y = [0.0, 1.0, 2.0, 0.0, 1.0, 2.0];
        let hyper = LogisticHyper {
            class_weight: ClassWeight::None,
            penalty: Penalty::L2,
            c: 0.1,
        };
        let m = fit_logistic(x.view(), &y, 3, hyper).unwrap();
        assert_eq!(m.models.len(), 3);
        for r in m.predict_proba(x.view()).unwrap() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(fit_logistic(x.view(), &[0.0, 1.0, 2.0, 3.0, 0.0, 1.0], 3, hyper).is_err());
    }
}
