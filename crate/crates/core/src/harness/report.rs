//! Aggregated results, significance, and table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{benjamini_hochberg, paired_t_test, PairedTest};
use super::{ExperimentPlan, ModalitySet, SubsetSize, Task};
use crate::error::{Error, Result};
use crate::representations::Flavor;
use crate::util;

/// Published mort AuROC of the best single-task LSTM baseline; a reference line only.
pub const LSTM_MORT_AUROC: f64 = 0.855;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: Task,
    pub modality: ModalitySet,
    pub flavor: Flavor,
    pub size: SubsetSize,
    pub train_rows: usize,
    /// One value per draw, in draw order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over draws; 0 for a single draw.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: Task,
    pub modality: ModalitySet,
    pub size: SubsetSize,
    pub a: Flavor,
    pub b: Flavor,
    pub test: PairedTest,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tasks: Vec<Task>,
    pub modality_sets: Vec<ModalitySet>,
    pub representations: Vec<Flavor>,
    pub sizes: Vec<SubsetSize>,
    pub alpha: f64,
    pub test_episodes: BTreeMap<Task, usize>,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
}

const COMPARED: [(Flavor, Flavor); 3] = [
    (Flavor::Embedded, Flavor::Raw),
    (Flavor::Combined, Flavor::Raw),
    (Flavor::Combined, Flavor::Embedded),
];

/// Column order of the result tables.
const TABLE_ORDER: [Flavor; 3] = [Flavor::Combined, Flavor::Embedded, Flavor::Raw];

/// `(task, modality set, representation, subset size)`
pub type CellKey = (Task, ModalitySet, Flavor, SubsetSize);

impl ExperimentReport {
    /// Builds summaries from per-draw values and runs the paired comparisons, with
    /// Benjamini–Hochberg correction over every comparison in the report.
    pub fn assemble(
        plan: &ExperimentPlan,
        values: BTreeMap<CellKey, Vec<(usize, f64)>>,
        train_rows: BTreeMap<(Task, SubsetSize), usize>,
        test_episodes: BTreeMap<Task, usize>,
    ) -> Self {
        let mut cells = Vec::new();
        for ((task, modality, flavor, size), mut v) in values {
            v.sort_by_key(|(d, _)| *d);
            let values: Vec<f64> = v.into_iter().map(|(_, x)| x).collect();
            cells.push(CellSummary {
                task,
                modality,
                flavor,
                size,
                train_rows: train_rows.get(&(task, size)).copied().unwrap_or(0),
                mean: util::mean(&values),
                std: util::std_pop(&values),
                values,
            });
        }
        let lookup: BTreeMap<CellKey, &CellSummary> =
            cells.iter().map(|c| ((c.task, c.modality, c.flavor, c.size), c)).collect();
        let mut comparisons = Vec::new();
        for c in cells.iter().filter(|c| c.flavor == Flavor::Raw) {
            for (a, b) in COMPARED {
                let (Some(ca), Some(cb)) = (
                    lookup.get(&(c.task, c.modality, a, c.size)),
                    lookup.get(&(c.task, c.modality, b, c.size)),
                ) else {
                    continue;
                };
                match paired_t_test(&ca.values, &cb.values) {
                    Ok(test) => comparisons.push(Comparison {
                        task: c.task,
                        modality: c.modality,
                        size: c.size,
                        a,
                        b,
                        test,
                        p_adjusted: f64::NAN,
                        significant: false,
                    }),
                    Err(Error::TooFewPairs(_)) => {}
                    Err(e) => log::warn!("comparison {a} vs {b} skipped: {e}"),
                }
            }
        }
        let p: Vec<f64> = comparisons.iter().map(|c| c.test.p).collect();
        for (c, adj) in comparisons.iter_mut().zip(benjamini_hochberg(&p)) {
            c.p_adjusted = adj;
            c.significant = adj < plan.alpha;
        }
        let mut tasks = plan.tasks.clone();
        tasks.sort();
        tasks.dedup();
        let mut modality_sets = plan.modality_sets.clone();
        modality_sets.sort();
        modality_sets.dedup();
        Self {
            tasks,
            modality_sets,
            representations: TABLE_ORDER.into_iter().filter(|f| plan.representations.contains(f)).collect(),
            sizes: plan.ordered_sizes(),
            alpha: plan.alpha,
            test_episodes,
            cells,
            comparisons,
        }
    }

    pub fn cell(&self, task: Task, modality: ModalitySet, flavor: Flavor, size: SubsetSize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.modality == modality && c.flavor == flavor && c.size == size)
    }

    pub fn comparison(
        &self,
        task: Task,
        modality: ModalitySet,
        size: SubsetSize,
        a: Flavor,
        b: Flavor,
    ) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.task == task && c.modality == modality && c.size == size && c.a == a && c.b == b)
    }

    fn size_label(&self, task: Task, size: SubsetSize) -> String {
        match size {
            SubsetSize::Count(n) => n.to_string(),
            SubsetSize::All => {
                let rows = self.cells.iter().find(|c| c.task == task && c.size == size).map_or(0, |c| c.train_rows);
                format!("all ({rows})")
            }
        }
    }

    /// Markdown tables, one per (task, modality set): rows are subset sizes,
    /// columns representations, cells `mean ± std`.
    pub fn render_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("# Experiment report\n\n");
        s.push_str(
            "Transductive setting: the affinity graph and the embeddings are learned from all \
             episodes (train and test) without labels; downstream models see training labels only.\n\n",
        );
        s.push_str(&format!(
            "Cells are mean ± std over random labeled subsets (std is the population value; \
             the full training set is a single draw). `*` marks a difference from raw with \
             Benjamini–Hochberg adjusted paired t-test p < {}.\n",
            self.alpha
        ));
        for &task in &self.tasks {
            for &modality in &self.modality_sets {
                let _ = write!(
                    s,
                    "\n## {task}, {modality} ({}, {} test episodes)\n\n",
                    task.metric_label(),
                    self.test_episodes.get(&task).copied().unwrap_or(0)
                );
                s.push_str("| Number of labeled episodes |");
                for f in &self.representations {
                    let _ = write!(s, " {f} |");
                }
                s.push_str("\n|---|");
                for _ in &self.representations {
                    s.push_str("---|");
                }
                s.push('\n');
                for &size in &self.sizes {
                    let _ = write!(s, "| {} |", self.size_label(task, size));
                    for &f in &self.representations {
                        match self.cell(task, modality, f, size) {
                            Some(c) => {
                                let mark = self
                                    .comparison(task, modality, size, f, Flavor::Raw)
                                    .is_some_and(|c| c.significant);
                                let _ = write!(
                                    s,
                                    " {} ± {}{} |",
                                    util::fixed(c.mean, 3),
                                    util::fixed(c.std, 3),
                                    if mark { "*" } else { "" }
                                );
                            }
                            None => s.push_str(" n/a |"),
                        }
                    }
                    s.push('\n');
                }
                if task == Task::Mort {
                    let _ = write!(
                        s,
                        "\nReference: best single-task LSTM (published, full training set), AuROC = {}\n",
                        util::fixed(LSTM_MORT_AUROC, 3)
                    );
                }
            }
        }
        s
    }

    fn results_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "modality", "representation", "size", "train_rows", "draws", "mean", "std"])?;
        for c in &self.cells {
            w.write_record([
                c.task.to_string(),
                c.modality.to_string(),
                c.flavor.to_string(),
                c.size.to_string(),
                c.train_rows.to_string(),
                c.values.len().to_string(),
                c.mean.to_string(),
                c.std.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::format(Path::new("results.csv"), e.to_string()))
    }

    fn per_seed_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "modality", "representation", "size", "draw", "value"])?;
        for c in &self.cells {
            for (d, v) in c.values.iter().enumerate() {
                w.write_record([
                    c.task.to_string(),
                    c.modality.to_string(),
                    c.flavor.to_string(),
                    c.size.to_string(),
                    d.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.into_inner().map_err(|e| Error::format(Path::new("per_seed.csv"), e.to_string()))
    }

    fn significance_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "task",
            "modality",
            "size",
            "a",
            "b",
            "n",
            "mean_difference",
            "t",
            "p",
            "p_adjusted",
            "significant",
        ])?;
        for c in &self.comparisons {
            w.write_record([
                c.task.to_string(),
                c.modality.to_string(),
                c.size.to_string(),
                c.a.to_string(),
                c.b.to_string(),
                c.test.n.to_string(),
                c.test.mean_difference.to_string(),
                c.test.t.to_string(),
                c.test.p.to_string(),
                c.p_adjusted.to_string(),
                c.significant.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::format(Path::new("significance.csv"), e.to_string()))
    }

    /// Writes `report.md`, `report.json`, `results.csv`, `per_seed.csv` and `significance.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        util::create_dir_all(dir)?;
        util::write_string(&dir.join("report.md"), &self.render_markdown())?;
        util::write_string(
            &dir.join("report.json"),
            &serde_json::to_string_pretty(self).expect("report serializes"),
        )?;
        for (name, bytes) in [
            ("results.csv", self.results_csv()?),
            ("per_seed.csv", self.per_seed_csv()?),
            ("significance.csv", self.significance_csv()?),
        ] {
            util::write_string(&dir.join(name), &String::from_utf8(bytes).expect("csv output is UTF-8"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let text = util::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}
