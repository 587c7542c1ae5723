//! Downstream predictors and cross-validated hyperparameter selection.

mod linalg;
mod logistic;
mod ridge;

use std::fmt;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auroc, mae, mc_auroc};
use crate::util;

pub use linalg::{cholesky, cholesky_solve};
pub use logistic::{
    balanced_weights, fit_binary, fit_logistic, logistic_objective, logistic_smooth_gradient, sigmoid,
    BinaryLogistic, ClassWeight, FitTrace, LogisticHyper, LogisticModel, Penalty, MAX_ITERATIONS, TOLERANCE,
};
pub use ridge::{fit_ridge, fit_ridge_path, ridge_objective, RidgeModel};

pub const DEFAULT_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "classes")]
pub enum TaskKind {
    Binary,
    Multiclass(usize),
    Regression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
}

impl TaskSpec {
    pub fn mort() -> Self {
        Self {
            name: "mort".into(),
            kind: TaskKind::Binary,
        }
    }

    pub fn los() -> Self {
        Self {
            name: "los".into(),
            kind: TaskKind::Regression,
        }
    }

    pub fn dd(classes: usize) -> Self {
        Self {
            name: "dd".into(),
            kind: TaskKind::Multiclass(classes),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(k) => Some(k),
            TaskKind::Regression => None,
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self.kind {
            TaskKind::Binary => "auroc",
            TaskKind::Multiclass(_) => "mc_auroc",
            TaskKind::Regression => "mae",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum Hyper {
    Logistic(LogisticHyper),
    Ridge { lambda: f64 },
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::Logistic(h) => write!(f, "logistic(class_weight={:?}, penalty={:?}, C={})", h.class_weight, h.penalty, h.c),
            Hyper::Ridge { lambda } => write!(f, "ridge(lambda={lambda:e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub entries: Vec<Hyper>,
}

impl HyperGrid {
    /// {balanced, none} x {l1, l2} x C in {1, 0.1, 0.01, 0.001, 0.0001}.
    pub fn logistic_default() -> Self {
        let mut entries = Vec::new();
        for class_weight in [ClassWeight::Balanced, ClassWeight::None] {
            for penalty in [Penalty::L1, Penalty::L2] {
                for c in [1.0, 0.1, 0.01, 0.001, 0.0001] {
                    entries.push(Hyper::Logistic(LogisticHyper {
                        class_weight,
                        penalty,
                        c,
                    }));
                }
            }
        }
        Self { entries }
    }

    /// lambda in {1e-6, 1e-5, .., 1e7}.
    pub fn ridge_default() -> Self {
        Self {
            entries: (-6..=7).map(|e| Hyper::Ridge { lambda: 10f64.powi(e) }).collect(),
        }
    }

    pub fn for_task(task: &TaskSpec) -> Self {
        match task.kind {
            TaskKind::Regression => Self::ridge_default(),
            _ => Self::logistic_default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum Model {
    Logistic(LogisticModel),
    Ridge(RidgeModel),
}

/// Class probabilities (one row per sample) or real-valued predictions.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Probabilities(Vec<Vec<f64>>),
    Values(Vec<f64>),
}

impl Model {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        match self {
            Model::Logistic(m) => m.predict_proba(x).map(Predictions::Probabilities),
            Model::Ridge(m) => m.predict(x).map(Predictions::Values),
        }
    }

    /// Weight vector for the positive class (binary), the given class (one-vs-rest),
    /// or the regression weights.
    pub fn weights(&self, class: usize) -> (&[f64], f64) {
        match self {
            Model::Ridge(m) => (&m.weights, m.intercept),
            Model::Logistic(m) => {
                let k = if m.classes == 2 { 0 } else { class };
                (&m.models[k].weights, m.models[k].intercept)
            }
        }
    }
}

fn check_task_hyper(task: &TaskSpec, hyper: &Hyper) -> Result<()> {
    match (task.kind, hyper) {
        (TaskKind::Regression, Hyper::Ridge { .. }) => Ok(()),
        (TaskKind::Binary | TaskKind::Multiclass(_), Hyper::Logistic(_)) => Ok(()),
        _ => Err(Error::InvalidConfig(format!(
            "hyperparameters {hyper} do not fit task {}",
            task.name
        ))),
    }
}

pub fn fit_model(task: &TaskSpec, hyper: &Hyper, x: ArrayView2<f64>, y: &[f64]) -> Result<Model> {
    check_task_hyper(task, hyper)?;
    match *hyper {
        Hyper::Logistic(h) => fit_logistic(x, y, task.classes().expect("classification"), h).map(Model::Logistic),
        Hyper::Ridge { lambda } => fit_ridge(x, y, lambda, true).map(Model::Ridge),
    }
}

/// Task metric where larger is better: AuROC, mc-AuROC, or −MAE.
pub fn score(task: &TaskSpec, predictions: &Predictions, y: &[f64]) -> Result<f64> {
    match (task.kind, predictions) {
        (TaskKind::Binary, Predictions::Probabilities(p)) => {
            let s: Vec<f64> = p.iter().map(|r| r[1]).collect();
            let l: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
            auroc(&s, &l)
        }
        (TaskKind::Multiclass(_), Predictions::Probabilities(p)) => {
            let l: Vec<usize> = y.iter().map(|&v| v as usize).collect();
            mc_auroc(p, &l)
        }
        (TaskKind::Regression, Predictions::Values(v)) => mae(v, y).map(|m| -m),
        _ => Err(Error::InvalidConfig(format!("prediction kind does not fit task {}", task.name))),
    }
}

/// Deterministic folds; classification folds are stratified by dealing each
/// shuffled class round-robin.
pub fn make_folds(task: &TaskSpec, y: &[f64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    if y.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            found: y.len(),
        });
    }
    let mut rng = util::rng(seed);
    let mut folds = vec![Vec::new(); k];
    match task.classes() {
        Some(classes) => {
            let mut next = 0usize;
            for c in 0..classes {
                let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] as usize == c).collect();
                idx.shuffle(&mut rng);
                for i in idx {
                    folds[next % k].push(i);
                    next += 1;
                }
            }
        }
        None => {
            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.shuffle(&mut rng);
            for (pos, i) in idx.into_iter().enumerate() {
                folds[pos * k / y.len()].push(i);
            }
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyper,
    pub best_index: usize,
    /// Mean fold score for every grid entry, in grid order.
    pub scores: Vec<f64>,
    pub degenerate_folds: usize,
}

/// k-fold grid search on the task metric; ties go to the earlier grid entry.
/// A validation fold holding one class scores 0.5.
pub fn cv_select(
    x: ArrayView2<f64>,
    y: &[f64],
    task: &TaskSpec,
    grid: &HyperGrid,
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    for h in &grid.entries {
        check_task_hyper(task, h)?;
    }
    let folds = make_folds(task, y, k, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
            let mut train = train;
            train.sort_unstable();
            (train, folds[f].clone())
        })
        .collect();

    // (fold, grid entry) -> (score, degenerate)
    let per_fold: Vec<Vec<(f64, bool)>> = splits
        .par_iter()
        .map(|(tr, va)| -> Result<Vec<(f64, bool)>> {
            let xtr = x.select(Axis(0), tr);
            let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
            let xva = x.select(Axis(0), va);
            let yva: Vec<f64> = va.iter().map(|&i| y[i]).collect();
            let models: Vec<Result<Model>> = if task.kind == TaskKind::Regression {
                let lambdas: Vec<f64> = grid
                    .entries
                    .iter()
                    .map(|h| match h {
                        Hyper::Ridge { lambda } => *lambda,
                        Hyper::Logistic(_) => unreachable!("checked above"),
                    })
                    .collect();
                fit_ridge_path(xtr.view(), &ytr, &lambdas, true)?
                    .into_iter()
                    .map(|r| r.map(Model::Ridge))
                    .collect()
            } else {
                grid.entries
                    .par_iter()
                    .map(|h| fit_model(task, h, xtr.view(), &ytr))
                    .collect()
            };
            models
                .into_iter()
                .map(|m| {
                    let m = match m {
                        Ok(m) => m,
                        Err(Error::SingularSystem) => return Ok((f64::NEG_INFINITY, false)),
                        Err(e) => return Err(e),
                    };
                    let pred = m.predict(xva.view())?;
                    match score(task, &pred, &yva) {
                        Ok(s) => Ok((s, false)),
                        Err(Error::OneClassOnly) => Ok((0.5, true)),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let degenerate_folds = per_fold.iter().filter(|f| f.first().is_some_and(|s| s.1)).count();
    if degenerate_folds > 0 {
        log::warn!("{degenerate_folds} of {k} validation folds hold a single class; scored as 0.5");
    }
    let scores: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g].0).sum::<f64>() / k as f64)
        .collect();
    let mut best_index = 0;
    for (g, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = g;
        }
    }
    Ok(CvResult {
        best: grid.entries[best_index],
        best_index,
        scores,
        degenerate_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn default_grid_sizes() {
        let g = HyperGrid::logistic_default();
        assert_eq!(g.len(), 20);
        let r = HyperGrid::ridge_default();
        assert_eq!(r.len(), 14);
        assert_eq!(r.entries[0], Hyper::Ridge { lambda: 1e-6 });
        assert_eq!(r.entries[13], Hyper::Ridge { lambda: 1e7 });
    }

    #[test]
    fn stratified_folds_partition() {
        let y: Vec<f64> = (0..30).map(|i| if i < 9 { 1.0 } else { 0.0 }).collect();
        let folds = make_folds(&TaskSpec::mort(), &y, 3, 4).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.iter().filter(|&&i| y[i] == 1.0).count(), 3);
        }
        assert_eq!(folds, make_folds(&TaskSpec::mort(), &y, 3, 4).unwrap());
    }

    #[test]
    fn too_few_samples() {
        let x = Array2::zeros((2, 1));
        let grid = HyperGrid::ridge_default();
        assert!(matches!(
            cv_select(x.view(), &[1.0, 2.0], &TaskSpec::los(), &grid, 3, 0),
            Err(Error::TooFewSamples { needed: 3, found: 2 })
        ));
        let x3 = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
        assert!(cv_select(x3.view(), &[1.0, 2.0, 3.0], &TaskSpec::los(), &grid, 3, 0).is_ok());
    }

    #[test]
    fn single_entry_grid() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| (i as f64 + j as f64).sin());
        let y: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        let grid = HyperGrid {
            entries: vec![HyperGrid::logistic_default().entries[7]],
        };
        let r = cv_select(x.view(), &y, &TaskSpec::mort(), &grid, 3, 1).unwrap();
        assert_eq!(r.best, grid.entries[0]);
    }

    #[test]
    fn mismatched_grid_rejected() {
        let x = Array2::zeros((6, 1));
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert!(cv_select(x.view(), &y, &TaskSpec::mort(), &HyperGrid::ridge_default(), 3, 0).is_err());
    }
}
