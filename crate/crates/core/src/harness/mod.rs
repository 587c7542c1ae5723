//! End-to-end experiments: featurize, build the graph, train embeddings once per
//! modality set, fit downstream models on labeled subsets, then evaluate on the
//! test split and write the report.

mod labels;
mod report;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::affinity::{build_affinity_graph, GraphArtifacts, SkipgramConfig, DEFAULT_THRESHOLD};
use crate::analysis::{
    attribute_observed_flags, feature_contribution, feature_mae_delta, missingness_error_profile, save_feature_deltas,
    type_observed_flags, EpisodeErrors,
};
use crate::dataset::{load_dataset_dir, Dataset, ModalityKind, Split};
use crate::epmd::{self, load_params, save_params, EncoderParams, TrainConfig, TypeInputs, IDENTITY_TYPE};
use crate::error::{Error, Result};
use crate::featurize::{FeaturizeConfig, FeaturizedDataset, FittedFeaturizer};
use crate::linear_models::{cv_select, fit_model, HyperGrid, Hyper, Model, Predictions, TaskKind};
use crate::metrics::{auroc, mae, mc_auroc};
use crate::representations::{combined_repr, embedded_repr, raw_repr, Flavor, RepresentationMatrix};
use crate::util;

pub use labels::{dd_classes, LabelStore, Task};
pub use report::{CellKey, CellSummary, Comparison, ExperimentReport, LSTM_MORT_AUROC};
pub use stats::{
    benjamini_hochberg, ln_gamma, paired_significance, paired_t_test, regularized_incomplete_beta, t_two_sided_p,
    PairedTest,
};

/// Attribute types fed to the embedding and raw representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalitySet {
    TimeseriesOnly,
    All,
}

impl ModalitySet {
    pub fn as_str(self) -> &'static str {
        match self {
            ModalitySet::TimeseriesOnly => "timeseries_only",
            ModalitySet::All => "all",
        }
    }

    /// `(embedding types, raw types)`. The identity type is always embedded; the
    /// admission type, which defines the graph, only enters the raw features.
    pub fn types(self, dataset: &Dataset) -> (Vec<String>, Vec<String>) {
        let mut emb = Vec::new();
        let mut raw = Vec::new();
        for m in &dataset.schema {
            let keep = match self {
                ModalitySet::TimeseriesOnly => m.kind == ModalityKind::NumericGroup,
                ModalitySet::All => true,
            };
            if !keep {
                continue;
            }
            raw.push(m.type_id.clone());
            if m.type_id != ADMISSION_TYPE {
                emb.push(m.type_id.clone());
            }
        }
        emb.push(IDENTITY_TYPE.to_string());
        (emb, raw)
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModalitySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timeseries_only" => Ok(ModalitySet::TimeseriesOnly),
            "all" => Ok(ModalitySet::All),
            other => Err(Error::InvalidConfig(format!("unknown modality set {other:?}"))),
        }
    }
}

/// Type id of the admission categoricals that define the affinity graph.
pub const ADMISSION_TYPE: &str = "admission";

/// A labeled-subset size: a count, or every labeled training episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubsetSize {
    Count(usize),
    All,
}

impl fmt::Display for SubsetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSize::Count(n) => write!(f, "{n}"),
            SubsetSize::All => f.write_str("all"),
        }
    }
}

impl FromStr for SubsetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(SubsetSize::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(SubsetSize::Count(n)),
            _ => Err(Error::InvalidConfig(format!("subset size {s:?} is neither a positive count nor \"all\""))),
        }
    }
}

impl Serialize for SubsetSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SubsetSize::Count(n) => s.serialize_u64(*n as u64),
            SubsetSize::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for SubsetSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) if n > 0 => Ok(SubsetSize::Count(n)),
            Repr::Count(_) => Err(serde::de::Error::custom("subset size must be positive")),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub tasks: Vec<Task>,
    pub representations: Vec<Flavor>,
    pub sizes: Vec<SubsetSize>,
    /// Random draws per count size; `all` is drawn once.
    pub repeats: usize,
    pub seed: u64,
    pub modality_sets: Vec<ModalitySet>,
    pub folds: usize,
    pub featurize: FeaturizeConfig,
    pub skipgram: SkipgramConfig,
    pub threshold: f64,
    pub embedding: TrainConfig,
    pub alpha: f64,
    /// Write the analysis tables for the largest subset size.
    pub analysis: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            representations: Flavor::ALL.to_vec(),
            sizes: [10, 20, 50, 100, 500, 1000, 5000]
                .into_iter()
                .map(SubsetSize::Count)
                .chain([SubsetSize::All])
                .collect(),
            repeats: 20,
            seed: 0,
            modality_sets: vec![ModalitySet::TimeseriesOnly, ModalitySet::All],
            folds: crate::linear_models::DEFAULT_FOLDS,
            featurize: FeaturizeConfig::default(),
            skipgram: SkipgramConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            embedding: TrainConfig::default(),
            alpha: 0.05,
            analysis: true,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        for (what, empty) in [
            ("tasks", self.tasks.is_empty()),
            ("representations", self.representations.is_empty()),
            ("sizes", self.sizes.is_empty()),
            ("modality_sets", self.modality_sets.is_empty()),
        ] {
            if empty {
                return bad(format!("plan lists no {what}"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} is outside (0, 1)", self.alpha));
        }
        if self.folds < 2 {
            return bad("need at least 2 folds".into());
        }
        self.embedding.validate()?;
        self.skipgram.validate()
    }

    /// Validation that needs the data: every count size must fit the labeled
    /// training episodes of every task.
    pub fn validate_against(&self, dataset: &Dataset, store: &LabelStore) -> Result<()> {
        self.validate()?;
        for &task in &self.tasks {
            let available = labeled_train_ids(dataset, store, task)?.len();
            if available == 0 {
                return Err(Error::InvalidConfig(format!("no labeled training episodes for {task}")));
            }
            for s in &self.sizes {
                if let SubsetSize::Count(n) = *s {
                    if n > available {
                        return Err(Error::SubsetTooLarge {
                            requested: n,
                            available,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn ordered_sizes(&self) -> Vec<SubsetSize> {
        let mut s = self.sizes.clone();
        s.sort();
        s.dedup();
        s
    }

    /// Draw indices for a size; `all` has a single draw.
    pub fn draws(&self, size: SubsetSize) -> usize {
        match size {
            SubsetSize::All => 1,
            SubsetSize::Count(_) => self.repeats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Training episodes labeled for `task`, in dataset order.
pub fn labeled_train_ids(dataset: &Dataset, store: &LabelStore, task: Task) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in dataset.indices(Split::Train) {
        if store.train_label(&dataset.episodes[i].episode_id, task)?.is_some() {
            out.push(i);
        }
    }
    Ok(out)
}

/// Rows of a labeled subset, in dataset order. Draw `d` of every count size uses
/// the same seed stream so subsets are shared across tasks and representations.
pub fn draw_subset(candidates: &[usize], size: SubsetSize, seed: u64, draw: usize) -> Result<Vec<usize>> {
    match size {
        SubsetSize::All => Ok(candidates.to_vec()),
        SubsetSize::Count(n) => {
            if n > candidates.len() {
                return Err(Error::SubsetTooLarge {
                    requested: n,
                    available: candidates.len(),
                });
            }
            let mut rng = util::rng(util::mix_seed(seed, 1_000 + draw as u64));
            let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), n)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

/// Featurization and the affinity graph, shared by all modality sets.
pub struct Prepared {
    pub fitted: FittedFeaturizer,
    pub features: FeaturizedDataset,
    pub graph: GraphArtifacts,
}

pub fn prepare(dataset: &Dataset, plan: &ExperimentPlan) -> Result<Prepared> {
    let fitted = FittedFeaturizer::fit(dataset, plan.featurize)?;
    let features = fitted.transform(dataset);
    let graph = build_affinity_graph(dataset, &plan.skipgram, plan.threshold, None)?;
    if graph.graph.ids != features.ids {
        return Err(Error::IdMisalignment("graph and feature rows list different episodes".into()));
    }
    Ok(Prepared {
        fitted,
        features,
        graph,
    })
}

/// Encoder inputs for `types`; the identity type is synthesized.
pub fn embedding_inputs(features: &FeaturizedDataset, types: &[String]) -> Result<Vec<TypeInputs>> {
    types
        .iter()
        .map(|t| {
            if t == IDENTITY_TYPE {
                return Ok(TypeInputs::identity(features.ids.len()));
            }
            features
                .get(t)
                .map(TypeInputs::from_features)
                .ok_or_else(|| Error::InvalidConfig(format!("no features for type {t:?}")))
        })
        .collect()
}

/// Representations of one modality set over all episodes.
pub struct ModalityRepresentations {
    pub set: ModalitySet,
    pub params: EncoderParams,
    pub loss_trace: Vec<f64>,
    pub skipped_fraction: f64,
    pub raw_types: Vec<String>,
    pub raw: RepresentationMatrix,
    pub embedded: RepresentationMatrix,
    pub combined: RepresentationMatrix,
}

impl ModalityRepresentations {
    pub fn get(&self, flavor: Flavor) -> &RepresentationMatrix {
        match flavor {
            Flavor::Raw => &self.raw,
            Flavor::Embedded => &self.embedded,
            Flavor::Combined => &self.combined,
        }
    }
}

/// Trains EP-md for `set` (or reuses `cached` parameters) and assembles the
/// three representations.
pub fn build_representations(
    dataset: &Dataset,
    prepared: &Prepared,
    set: ModalitySet,
    config: &TrainConfig,
    cached: Option<EncoderParams>,
) -> Result<ModalityRepresentations> {
    let (emb_types, raw_types) = set.types(dataset);
    let inputs = embedding_inputs(&prepared.features, &emb_types)?;
    let (params, loss_trace, skipped_fraction) = match cached {
        Some(p) => (p, Vec::new(), f64::NAN),
        None => {
            let out = epmd::train(&inputs, &prepared.graph.graph, config)?;
            (out.params, out.loss_trace, out.skipped_fraction)
        }
    };
    let embedded = embedded_repr(&prepared.features.ids, &inputs, &params)?;
    let raw = raw_repr(&prepared.features, &prepared.fitted, &raw_types)?;
    let combined = combined_repr(&embedded, &raw)?;
    Ok(ModalityRepresentations {
        set,
        params,
        loss_trace,
        skipped_fraction,
        raw_types,
        raw,
        embedded,
        combined,
    })
}

/// One fitted downstream model and the grid entry CV selected for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlavorFit {
    pub flavor: Flavor,
    pub hyper: Hyper,
    pub cv_score: f64,
    pub model: Model,
}

/// Checkpoint of all fits of one `(task, modality set, size, draw)` unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCheckpoint {
    pub fingerprint: String,
    pub task: Task,
    pub modality: ModalitySet,
    pub size: SubsetSize,
    pub draw: usize,
    pub train_rows: usize,
    pub fits: Vec<FlavorFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Unit {
    task: Task,
    set: ModalitySet,
    size: SubsetSize,
    draw: usize,
}

impl Unit {
    fn file_name(&self) -> String {
        format!("{}_{}_{}_{}.json", self.task, self.set, self.size, self.draw)
    }
}

/// Fits every requested representation on one labeled subset.
fn fit_unit(
    unit: Unit,
    rows: &[usize],
    y: &[f64],
    reps: &ModalityRepresentations,
    plan: &ExperimentPlan,
) -> Result<Vec<FlavorFit>> {
    let spec = unit.task.spec();
    let grid = HyperGrid::for_task(&spec);
    let cv_seed = util::mix_seed(plan.seed, 2_000 + unit.draw as u64);
    plan.representations
        .iter()
        .map(|&flavor| {
            let x = reps.get(flavor).select_rows(rows);
            let cv = cv_select(x.view(), y, &spec, &grid, plan.folds, cv_seed)?;
            let model = fit_model(&spec, &cv.best, x.view(), y)?;
            Ok(FlavorFit {
                flavor,
                hyper: cv.best,
                cv_score: cv.scores[cv.best_index],
                model,
            })
        })
        .collect()
}

/// Task metric in reporting units: AuROC, mc-AuROC, or MAE in days.
pub fn evaluate(task: Task, predictions: &Predictions, y: &[f64]) -> Result<f64> {
    match (task.spec().kind, predictions) {
        (TaskKind::Binary, Predictions::Probabilities(p)) => {
            let s: Vec<f64> = p.iter().map(|r| r[1]).collect();
            let l: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
            auroc(&s, &l)
        }
        (TaskKind::Multiclass(_), Predictions::Probabilities(p)) => {
            let l: Vec<usize> = y.iter().map(|&v| v as usize).collect();
            mc_auroc(p, &l)
        }
        (TaskKind::Regression, Predictions::Values(v)) => mae(v, y),
        _ => Err(Error::InvalidConfig(format!("prediction kind does not fit task {task}"))),
    }
}

/// Per-episode error: `|y − p(y=1)|`, `1 − p(true class)`, or `|prediction − y|`.
pub fn episode_errors(predictions: &Predictions, y: &[f64], task: Task) -> Vec<f64> {
    match predictions {
        Predictions::Probabilities(p) => p
            .iter()
            .zip(y)
            .map(|(r, &t)| match task {
                Task::Mort => (t - r[1]).abs(),
                _ => 1.0 - r[t as usize],
            })
            .collect(),
        Predictions::Values(v) => v.iter().zip(y).map(|(p, t)| (p - t).abs()).collect(),
    }
}

fn fnv_hex(text: &str) -> String {
    format!("{:016x}", util::fnv1a(text.as_bytes()))
}

/// Identifies a plan/data pair so stale checkpoints are ignored.
pub fn fingerprint(plan: &ExperimentPlan, dataset: &Dataset) -> String {
    let mut text = plan.to_json();
    for e in &dataset.episodes {
        text.push_str(&serde_json::to_string(e).expect("episode serializes"));
        text.push_str(&dataset.split_of(&e.episode_id).map_or(String::new(), |s| s.to_string()));
    }
    fnv_hex(&text)
}

fn read_checkpoint(path: &Path, fingerprint: &str) -> Option<UnitCheckpoint> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str::<UnitCheckpoint>(&text) {
        Ok(c) if c.fingerprint == fingerprint => Some(c),
        Ok(_) => {
            log::info!("ignoring stale checkpoint {}", path.display());
            None
        }
        Err(e) => {
            log::warn!("ignoring unreadable checkpoint {}: {e}", path.display());
            None
        }
    }
}

/// Test-label access counts of one run, written to `label_audit.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAudit {
    pub test_reads: usize,
    /// Reads attempted before the final evaluation unlocked the test split.
    pub denied_reads: usize,
}

/// Output locations below the experiment directory.
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn embeddings(&self, set: ModalitySet) -> PathBuf {
        self.root.join("embeddings").join(set.as_str())
    }
    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

/// Loads the dataset directory and runs [`run_experiment_on`].
pub fn run_experiment(plan: &ExperimentPlan, dataset_dir: &Path, out_dir: &Path) -> Result<ExperimentReport> {
    let dataset = load_dataset_dir(dataset_dir)?;
    run_experiment_on(plan, &dataset, out_dir)
}

/// Full pipeline with per-unit checkpoints under `out_dir/checkpoints`; rerunning
/// on the same directory resumes from them and yields the same report.
pub fn run_experiment_on(plan: &ExperimentPlan, dataset: &Dataset, out_dir: &Path) -> Result<ExperimentReport> {
    let store = LabelStore::new(dataset);
    plan.validate_against(dataset, &store)?;
    let layout = OutputLayout::new(out_dir);
    util::create_dir_all(&layout.checkpoints())?;
    util::write_string(&out_dir.join("plan.json"), &plan.to_json())?;
    let fp = fingerprint(plan, dataset);

    let prepared = prepare(dataset, plan)?;
    let mut reps: BTreeMap<ModalitySet, ModalityRepresentations> = BTreeMap::new();
    let mut sets = plan.modality_sets.clone();
    sets.sort();
    sets.dedup();
    for &set in &sets {
        let dir = layout.embeddings(set);
        let params_path = dir.join("params.bin");
        let fp_path = dir.join("fingerprint.txt");
        let cached = match std::fs::read_to_string(&fp_path) {
            Ok(f) if f.trim() == fp => load_params(&params_path).ok(),
            _ => None,
        };
        let resumed = cached.is_some();
        let r = build_representations(dataset, &prepared, set, &plan.embedding, cached)?;
        if !resumed {
            save_params(&r.params, &params_path)?;
            util::write_string(&fp_path, &fp)?;
            log::info!(
                "{set}: embeddings trained, final loss {:?}, skipped {:.3}",
                r.loss_trace.last(),
                r.skipped_fraction
            );
        }
        reps.insert(set, r);
    }

    // labeled subsets and training labels
    let mut units = Vec::new();
    let mut candidates: BTreeMap<Task, Vec<usize>> = BTreeMap::new();
    let mut train_y: BTreeMap<Task, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut tasks = plan.tasks.clone();
    tasks.sort();
    tasks.dedup();
    for &task in &tasks {
        let c = labeled_train_ids(dataset, &store, task)?;
        let mut ys = BTreeMap::new();
        for &i in &c {
            let y = store
                .train_label(&dataset.episodes[i].episode_id, task)?
                .expect("candidate is labeled");
            ys.insert(i, y);
        }
        train_y.insert(task, ys);
        candidates.insert(task, c);
        for &set in &sets {
            for size in plan.ordered_sizes() {
                for draw in 0..plan.draws(size) {
                    units.push(Unit { task, set, size, draw });
                }
            }
        }
    }

    let fitted: Vec<(Unit, UnitCheckpoint)> = units
        .par_iter()
        .map(|&unit| -> Result<(Unit, UnitCheckpoint)> {
            let path = layout.checkpoints().join(unit.file_name());
            if let Some(c) = read_checkpoint(&path, &fp) {
                return Ok((unit, c));
            }
            let rows = draw_subset(&candidates[&unit.task], unit.size, plan.seed, unit.draw)?;
            let y: Vec<f64> = rows.iter().map(|i| train_y[&unit.task][i]).collect();
            let fits = fit_unit(unit, &rows, &y, &reps[&unit.set], plan)?;
            let c = UnitCheckpoint {
                fingerprint: fp.clone(),
                task: unit.task,
                modality: unit.set,
                size: unit.size,
                draw: unit.draw,
                train_rows: rows.len(),
                fits,
            };
            util::write_string(&path, &serde_json::to_string_pretty(&c).expect("checkpoint serializes"))?;
            log::debug!("fitted {}", unit.file_name());
            Ok((unit, c))
        })
        .collect::<Result<_>>()?;

    // final evaluation: the only place test labels are read
    store.unlock_test();
    let mut test_rows: BTreeMap<Task, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for &task in &tasks {
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for i in dataset.indices(Split::Test) {
            if let Some(y) = store.test_label(&dataset.episodes[i].episode_id, task)? {
                rows.push(i);
                ys.push(y);
            }
        }
        test_rows.insert(task, (rows, ys));
    }
    let mut values: BTreeMap<CellKey, Vec<(usize, f64)>> = BTreeMap::new();
    let mut train_sizes: BTreeMap<(Task, SubsetSize), usize> = BTreeMap::new();
    for (unit, c) in &fitted {
        train_sizes.insert((unit.task, unit.size), c.train_rows);
        let (rows, y) = &test_rows[&unit.task];
        for fit in &c.fits {
            let x = reps[&unit.set].get(fit.flavor).select_rows(rows);
            let pred = fit.model.predict(x.view())?;
            let v = evaluate(unit.task, &pred, y)?;
            values
                .entry((unit.task, unit.set, fit.flavor, unit.size))
                .or_default()
                .push((unit.draw, v));
        }
    }
    let report = ExperimentReport::assemble(plan, values, train_sizes, test_rows.iter().map(|(t, r)| (*t, r.0.len())).collect());
    report.save(out_dir)?;
    let audit = LabelAudit {
        test_reads: store.test_reads(),
        denied_reads: store.denied_reads(),
    };
    util::write_string(
        &out_dir.join("label_audit.json"),
        &serde_json::to_string_pretty(&audit).expect("audit serializes"),
    )?;

    if plan.analysis {
        write_analysis(plan, dataset, &prepared, &reps, &fitted, &test_rows, &layout)?;
    }
    Ok(report)
}

/// Analysis tables for draw 0 of the largest size of every (task, modality set).
fn write_analysis(
    plan: &ExperimentPlan,
    dataset: &Dataset,
    prepared: &Prepared,
    reps: &BTreeMap<ModalitySet, ModalityRepresentations>,
    fitted: &[(Unit, UnitCheckpoint)],
    test_rows: &BTreeMap<Task, (Vec<usize>, Vec<f64>)>,
    layout: &OutputLayout,
) -> Result<()> {
    let Some(&largest) = plan.ordered_sizes().last() else {
        return Ok(());
    };
    let dir = layout.analysis();
    util::create_dir_all(&dir)?;
    let type_flags = type_observed_flags(&prepared.features);
    let attr_flags = attribute_observed_flags(&prepared.features, &prepared.fitted);
    for (unit, c) in fitted.iter().filter(|(u, _)| u.size == largest && u.draw == 0) {
        let set_reps = &reps[&unit.set];
        let (rows, y) = &test_rows[&unit.task];
        let ids: Vec<String> = rows.iter().map(|&i| dataset.episodes[i].episode_id.clone()).collect();
        let types: Vec<&String> = set_reps.raw_types.iter().collect();
        let mut errors: BTreeMap<Flavor, EpisodeErrors> = BTreeMap::new();
        for fit in &c.fits {
            let x = set_reps.get(fit.flavor).select_rows(rows);
            let pred = fit.model.predict(x.view())?;
            errors.insert(
                fit.flavor,
                EpisodeErrors {
                    flavor: fit.flavor,
                    ids: ids.clone(),
                    errors: episode_errors(&pred, y, unit.task),
                },
            );
        }
        let stem = format!("{}_{}", unit.task, unit.set);
        if let (Some(r), Some(e)) = (errors.get(&Flavor::Raw), errors.get(&Flavor::Embedded)) {
            let counts: BTreeMap<String, usize> = rows
                .iter()
                .map(|&i| {
                    let k = types.iter().filter(|t| !type_flags[t.as_str()][i]).count();
                    (dataset.episodes[i].episode_id.clone(), k)
                })
                .collect();
            missingness_error_profile(r, e, &counts, types.len())?
                .save_csv(&dir.join(format!("{stem}_missingness_profile.csv")))?;
        }
        let attrs: Vec<(String, Vec<bool>)> = attr_flags
            .iter()
            .filter(|(name, _)| {
                types
                    .iter()
                    .any(|t| dataset.schema_type(t).is_some_and(|m| m.attribute_names.contains(name)))
            })
            .map(|(name, f)| (name.clone(), rows.iter().map(|&i| f[i]).collect()))
            .collect();
        for (flavor, e) in &errors {
            save_feature_deltas(
                &feature_mae_delta(e, &attrs)?,
                &dir.join(format!("{stem}_feature_delta_{flavor}.csv")),
            )?;
        }
        if unit.task != Task::Dd {
            if let Some(fit) = c.fits.iter().find(|f| f.flavor == Flavor::Embedded) {
                let (w, _) = fit.model.weights(1);
                let m = &set_reps.embedded;
                let test_m = RepresentationMatrix {
                    flavor: m.flavor,
                    ids: ids.clone(),
                    columns: m.columns.clone(),
                    data: m.select_rows(rows),
                };
                let flags: BTreeMap<String, Vec<bool>> = type_flags
                    .iter()
                    .map(|(t, f)| (t.clone(), rows.iter().map(|&i| f[i]).collect()))
                    .collect();
                feature_contribution(w, &test_m, &flags)?
                    .save_csv(&dir.join(format!("{stem}_contribution.csv")))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_size_serde() {
        let s: Vec<SubsetSize> = serde_json::from_str("[10, \"all\", 50]").unwrap();
        assert_eq!(s, [SubsetSize::Count(10), SubsetSize::All, SubsetSize::Count(50)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[10,\"all\",50]");
        assert!(serde_json::from_str::<SubsetSize>("0").is_err());
        assert!(serde_json::from_str::<SubsetSize>("\"many\"").is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(ExperimentPlan::default().validate().is_ok());
        let p = ExperimentPlan {
            repeats: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p: ExperimentPlan = serde_json::from_str("{\"sizes\": [20, \"all\"], \"repeats\": 2}").unwrap();
        assert_eq!(p.draws(SubsetSize::All), 1);
        assert_eq!(p.draws(SubsetSize::Count(20)), 2);
        assert!(serde_json::from_str::<ExperimentPlan>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn subsets_are_deterministic_and_sorted() {
        let cands: Vec<usize> = (0..100).map(|i| i * 2).collect();
        let a = draw_subset(&cands, SubsetSize::Count(10), 3, 4).unwrap();
        assert_eq!(a, draw_subset(&cands, SubsetSize::Count(10), 3, 4).unwrap());
        assert_ne!(a, draw_subset(&cands, SubsetSize::Count(10), 3, 5).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(draw_subset(&cands, SubsetSize::All, 3, 0).unwrap(), cands);
        assert!(matches!(
            draw_subset(&cands, SubsetSize::Count(101), 0, 0),
            Err(Error::SubsetTooLarge { .. })
        ));
    }
}
