//! Post-hoc analyses: prediction error against missingness, per-attribute error
//! deltas, and per-type contributions of a linear model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epmd::IDENTITY_TYPE;
use crate::error::{Error, Result};
use crate::featurize::{FeaturizedDataset, FittedFeaturizer};
use crate::representations::{Flavor, RepresentationMatrix};
use crate::util;

/// Per-episode prediction errors of one representation on the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeErrors {
    pub flavor: Flavor,
    pub ids: Vec<String>,
    pub errors: Vec<f64>,
}

impl EpisodeErrors {
    fn check(&self) -> Result<()> {
        if self.ids.len() != self.errors.len() {
            return Err(Error::IdMisalignment(format!(
                "{} ids for {} errors",
                self.ids.len(),
                self.errors.len()
            )));
        }
        Ok(())
    }

    fn by_id(&self) -> Result<BTreeMap<&str, f64>> {
        self.check()?;
        let map: BTreeMap<&str, f64> = self.ids.iter().map(|s| s.as_str()).zip(self.errors.iter().copied()).collect();
        if map.len() != self.ids.len() {
            return Err(Error::IdMisalignment(format!("{} errors list an episode twice", self.flavor)));
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessBin {
    /// Number of attribute types missing for the episodes in this bin.
    pub missing_types: usize,
    pub count: usize,
    pub mean_error_raw: Option<f64>,
    pub mean_error_embedded: Option<f64>,
    /// Mean of `error_embedded - error_raw`; negative favors the embedding.
    pub mean_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessProfile {
    pub bins: Vec<MissingnessBin>,
}

impl MissingnessProfile {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

fn opt_mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Bins test episodes by how many attribute types they miss (0..=`type_count`).
/// Episodes are visited in id order so the result does not depend on input order.
pub fn missingness_error_profile(
    raw: &EpisodeErrors,
    embedded: &EpisodeErrors,
    missing_counts: &BTreeMap<String, usize>,
    type_count: usize,
) -> Result<MissingnessProfile> {
    let r = raw.by_id()?;
    let e = embedded.by_id()?;
    if r.len() != e.len() || r.keys().zip(e.keys()).any(|(a, b)| a != b) {
        return Err(Error::IdMisalignment("raw and embedded errors cover different episodes".into()));
    }
    let mut sums = vec![(0usize, 0.0, 0.0, 0.0); type_count + 1];
    for (id, &er) in &r {
        let k = *missing_counts
            .get(*id)
            .ok_or_else(|| Error::IdMisalignment(format!("no missingness count for episode {id:?}")))?;
        if k > type_count {
            return Err(Error::InvalidConfig(format!(
                "episode {id:?} misses {k} of {type_count} types"
            )));
        }
        let ee = e[id];
        let s = &mut sums[k];
        s.0 += 1;
        s.1 += er;
        s.2 += ee;
        s.3 += ee - er;
    }
    Ok(MissingnessProfile {
        bins: sums
            .into_iter()
            .enumerate()
            .map(|(k, (n, sr, se, sd))| MissingnessBin {
                missing_types: k,
                count: n,
                mean_error_raw: opt_mean(sr, n),
                mean_error_embedded: opt_mean(se, n),
                mean_delta: opt_mean(sd, n),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub attribute: String,
    /// Percentage of episodes with the attribute observed.
    pub observed_percent: f64,
    pub mae_observed: Option<f64>,
    pub mae_missing: Option<f64>,
    /// `(MAE observed − MAE missing) / overall MAE`; undefined when a stratum is empty
    /// or the overall MAE is 0.
    pub delta: Option<f64>,
}

/// Error deltas per attribute; `observed` holds one flag per entry of `errors`.
pub fn feature_mae_delta(errors: &EpisodeErrors, observed: &[(String, Vec<bool>)]) -> Result<Vec<FeatureDelta>> {
    errors.check()?;
    let n = errors.errors.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors.ids[a].cmp(&errors.ids[b]));
    let overall = opt_mean(order.iter().map(|&i| errors.errors[i]).sum(), n);
    observed
        .iter()
        .map(|(name, flags)| {
            if flags.len() != n {
                return Err(Error::IdMisalignment(format!(
                    "{} observed flags for {n} errors on {name:?}",
                    flags.len()
                )));
            }
            let (mut so, mut no, mut sm, mut nm) = (0.0, 0usize, 0.0, 0usize);
            for &i in &order {
                if flags[i] {
                    so += errors.errors[i];
                    no += 1;
                } else {
                    sm += errors.errors[i];
                    nm += 1;
                }
            }
            let (mo, mm) = (opt_mean(so, no), opt_mean(sm, nm));
            let delta = match (mo, mm, overall) {
                (Some(a), Some(b), Some(m)) if m > 0.0 => Some((a - b) / m),
                _ => None,
            };
            Ok(FeatureDelta {
                attribute: name.clone(),
                observed_percent: if n > 0 { 100.0 * no as f64 / n as f64 } else { 0.0 },
                mae_observed: mo,
                mae_missing: mm,
                delta,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub type_id: String,
    pub mean_abs: f64,
    pub mean_observed: Option<f64>,
    pub mean_missing: Option<f64>,
    /// observed / missing; undefined unless the missing mean is positive.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub features: Vec<FeatureContribution>,
}

/// Signed per-type contributions `Σ_{j ∈ cols(t)} x_j w_j`, one row per matrix row,
/// columns in first-appearance order of the type ids.
pub fn signed_contributions(weights: &[f64], matrix: &RepresentationMatrix) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if matrix.columns.len() != matrix.data.ncols() {
        return Err(Error::MissingProvenance(format!(
            "{} provenance entries for {} columns",
            matrix.columns.len(),
            matrix.data.ncols()
        )));
    }
    if weights.len() != matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.ncols(),
            found: weights.len(),
        });
    }
    let mut types: Vec<String> = Vec::new();
    let mut slot = Vec::with_capacity(matrix.ncols());
    for p in &matrix.columns {
        let k = match types.iter().position(|t| *t == p.type_id) {
            Some(k) => k,
            None => {
                types.push(p.type_id.clone());
                types.len() - 1
            }
        };
        slot.push(k);
    }
    let rows = matrix
        .data
        .rows()
        .into_iter()
        .map(|row| {
            let mut c = vec![0.0; types.len()];
            for ((x, w), &k) in row.iter().zip(weights).zip(&slot) {
                c[k] += x * w;
            }
            c
        })
        .collect();
    Ok((types, rows))
}

/// Mean |contribution| per attribute type, split by the type's observed flag
/// (`observed[type_id]`, one flag per matrix row). Types without flags, such as the
/// identity type, report no split.
pub fn feature_contribution(
    weights: &[f64],
    matrix: &RepresentationMatrix,
    observed: &BTreeMap<String, Vec<bool>>,
) -> Result<ContributionReport> {
    let (types, rows) = signed_contributions(weights, matrix)?;
    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| matrix.ids[a].cmp(&matrix.ids[b]));
    let features = types
        .into_iter()
        .enumerate()
        .map(|(k, type_id)| {
            let flags = observed.get(&type_id);
            if let Some(f) = flags {
                if f.len() != n {
                    return Err(Error::IdMisalignment(format!(
                        "{} observed flags for {n} rows on {type_id:?}",
                        f.len()
                    )));
                }
            }
            let (mut all, mut so, mut no, mut sm, mut nm) = (0.0, 0.0, 0usize, 0.0, 0usize);
            for &i in &order {
                let c = rows[i][k].abs();
                all += c;
                match flags.map(|f| f[i]) {
                    Some(true) => {
                        so += c;
                        no += 1;
                    }
                    Some(false) => {
                        sm += c;
                        nm += 1;
                    }
                    None => {}
                }
            }
            let (mo, mm) = (opt_mean(so, no), opt_mean(sm, nm));
            let ratio = match (mo, mm) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            };
            Ok(FeatureContribution {
                type_id,
                mean_abs: opt_mean(all, n).unwrap_or(0.0),
                mean_observed: mo,
                mean_missing: mm,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ContributionReport { features })
}

/// Attribute types missing per episode (identity excluded), keyed by episode id.
pub fn missing_type_counts(features: &FeaturizedDataset) -> BTreeMap<String, usize> {
    features
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let k = features.types.iter().filter(|t| t.rows[i].any_missing()).count();
            (id.clone(), k)
        })
        .collect()
}

/// Type-level observed flags (all attributes of the type present), in dataset order.
pub fn type_observed_flags(features: &FeaturizedDataset) -> BTreeMap<String, Vec<bool>> {
    features
        .types
        .iter()
        .filter(|t| t.schema.type_id != IDENTITY_TYPE)
        .map(|t| (t.schema.type_id.clone(), t.rows.iter().map(|r| !r.any_missing()).collect()))
        .collect()
}

/// Attribute-level observed flags (any column of the attribute observed), in
/// dataset order; attributes are listed type by type in schema order.
pub fn attribute_observed_flags(features: &FeaturizedDataset, fitted: &FittedFeaturizer) -> Vec<(String, Vec<bool>)> {
    let mut out = Vec::new();
    for tf in &features.types {
        let Some(ft) = fitted.get(&tf.schema.type_id) else {
            continue;
        };
        let cols = ft.column_attributes();
        for attr in &tf.schema.attribute_names {
            let idx: Vec<usize> = cols.iter().enumerate().filter(|(_, a)| *a == attr).map(|(j, _)| j).collect();
            let flags = tf.rows.iter().map(|r| idx.iter().any(|&j| r.mask[j])).collect();
            out.push((attr.clone(), flags));
        }
    }
    out
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v}"))
}

fn write_long(path: &Path, header: &str, rows: &[(String, &str, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "stratum", "value"])?;
    for (f, s, v) in rows {
        w.write_record([f.as_str(), s, v.as_str()])?;
    }
    let body = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    let mut text = String::new();
    for line in header.lines() {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    util::write_string(path, &text)
}

impl MissingnessProfile {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for b in &self.bins {
            let f = format!("missing_types={}", b.missing_types);
            rows.push((f.clone(), "count", b.count.to_string()));
            rows.push((f.clone(), "mean_error_raw", fmt_opt(b.mean_error_raw)));
            rows.push((f.clone(), "mean_error_embedded", fmt_opt(b.mean_error_embedded)));
            rows.push((f, "mean_delta", fmt_opt(b.mean_delta)));
        }
        write_long(
            path,
            "test episodes binned by number of missing attribute types\nmean_delta = mean(error_embedded - error_raw); negative favors embedded",
            &rows,
        )
    }
}

pub fn save_feature_deltas(deltas: &[FeatureDelta], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for d in deltas {
        rows.push((d.attribute.clone(), "observed_percent", format!("{}", d.observed_percent)));
        rows.push((d.attribute.clone(), "mae_observed", fmt_opt(d.mae_observed)));
        rows.push((d.attribute.clone(), "mae_missing", fmt_opt(d.mae_missing)));
        rows.push((d.attribute.clone(), "delta", fmt_opt(d.delta)));
    }
    write_long(
        path,
        "delta = (MAE where observed - MAE where missing) / MAE over all test episodes\nundefined when either stratum is empty",
        &rows,
    )
}

impl ContributionReport {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for c in &self.features {
            rows.push((c.type_id.clone(), "mean_abs", format!("{}", c.mean_abs)));
            rows.push((c.type_id.clone(), "mean_observed", fmt_opt(c.mean_observed)));
            rows.push((c.type_id.clone(), "mean_missing", fmt_opt(c.mean_missing)));
            rows.push((c.type_id.clone(), "ratio", fmt_opt(c.ratio)));
        }
        write_long(
            path,
            "contribution = |sum over the type's columns of value * weight|, averaged over test episodes\nratio = mean_observed / mean_missing",
            &rows,
        )
    }
}
