//! Label access with test-split auditing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryMapping, Dataset, Labels, Split};
use crate::error::{Error, Result};
use crate::linear_models::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mort,
    Los,
    Dd,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Mort, Task::Los, Task::Dd];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mort => "mort",
            Task::Los => "los",
            Task::Dd => "dd",
        }
    }

    pub fn spec(self) -> TaskSpec {
        match self {
            Task::Mort => TaskSpec::mort(),
            Task::Los => TaskSpec::los(),
            Task::Dd => TaskSpec::dd(dd_classes().len()),
        }
    }

    /// Display name of the reported metric.
    pub fn metric_label(self) -> &'static str {
        match self {
            Task::Mort => "AuROC",
            Task::Los => "MAE (days)",
            Task::Dd => "mc-AuROC",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mort" => Ok(Task::Mort),
            "los" => Ok(Task::Los),
            "dd" => Ok(Task::Dd),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

/// Discharge destination classes, in class-index order.
pub fn dd_classes() -> Vec<String> {
    CategoryMapping::discharge_locations()
        .labels()
        .into_iter()
        .map(str::to_string)
        .collect()
}

fn encode(labels: &Labels, task: Task, classes: &[String]) -> Result<Option<f64>> {
    Ok(match task {
        Task::Mort => labels.mort.map(f64::from),
        Task::Los => labels.los,
        Task::Dd => match &labels.dd {
            None => None,
            Some(d) => Some(
                classes
                    .iter()
                    .position(|c| c == d)
                    .ok_or_else(|| Error::UnmappedCategory(d.clone()))? as f64,
            ),
        },
    })
}

/// Labels keyed by episode id. Test labels stay locked until [`LabelStore::unlock_test`];
/// reads while locked fail with `TestLabelAccess` and are counted.
#[derive(Debug)]
pub struct LabelStore {
    entries: BTreeMap<String, (Split, Labels)>,
    classes: Vec<String>,
    unlocked: AtomicBool,
    test_reads: AtomicUsize,
    denied_reads: AtomicUsize,
}

impl LabelStore {
    pub fn new(dataset: &Dataset) -> Self {
        let entries = dataset
            .episodes
            .iter()
            .map(|e| {
                let split = dataset.split_of(&e.episode_id).unwrap_or(Split::Train);
                (e.episode_id.clone(), (split, e.labels.clone().unwrap_or_default()))
            })
            .collect();
        Self {
            entries,
            classes: dd_classes(),
            unlocked: AtomicBool::new(false),
            test_reads: AtomicUsize::new(0),
            denied_reads: AtomicUsize::new(0),
        }
    }

    fn entry(&self, id: &str) -> Result<&(Split, Labels)> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::IdMisalignment(format!("no labels for episode {id:?}")))
    }

    /// Encoded label of a training episode (`None` when unlabeled for `task`).
    pub fn train_label(&self, id: &str, task: Task) -> Result<Option<f64>> {
        let (split, labels) = self.entry(id)?;
        if *split == Split::Test {
            return self.test_label(id, task);
        }
        encode(labels, task, &self.classes)
    }

    pub fn test_label(&self, id: &str, task: Task) -> Result<Option<f64>> {
        let (_, labels) = self.entry(id)?;
        if !self.unlocked.load(Ordering::SeqCst) {
            self.denied_reads.fetch_add(1, Ordering::SeqCst);
            return Err(Error::TestLabelAccess);
        }
        self.test_reads.fetch_add(1, Ordering::SeqCst);
        encode(labels, task, &self.classes)
    }

    pub fn unlock_test(&self) {
        self.unlocked.store(true, Ordering::SeqCst);
    }

    pub fn is_unlocked(&self) -> bool {
        self.unlocked.load(Ordering::SeqCst)
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::SeqCst)
    }

    /// Attempts to read test labels while they were locked.
    pub fn denied_reads(&self) -> usize {
        self.denied_reads.load(Ordering::SeqCst)
    }
}
