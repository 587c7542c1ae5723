//! AuROC, Hand–Till multiclass AuROC and MAE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub n: usize,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney U / (n₊ n₋); ties count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::OneClassOnly);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Hand–Till M over classes present in `labels`; `scores[s][c]` is the class-`c`
/// score of sample `s`, and `A(i|j)` uses class-`i` scores only.
pub fn mc_auroc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = scores[0].len();
    if let Some(r) = scores.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: r.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad + 1,
        });
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::OneClassOnly);
    }
    let a = |i: usize, j: usize| -> Result<f64> {
        let (s, l): (Vec<f64>, Vec<bool>) = scores
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == i || y == j)
            .map(|(r, &y)| (r[i], y == i))
            .unzip();
        auroc(&s, &l)
    };
    let c = present.len();
    let mut total = 0.0;
    for (x, &i) in present.iter().enumerate() {
        for &j in &present[x + 1..] {
            total += 0.5 * (a(i, j)? + a(j, i)?);
        }
    }
    Ok(2.0 * total / (c * (c - 1)) as f64)
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / predictions.len() as f64)
}
