//! Synthetic episode generator with planted cluster structure.
//!
//! Each episode belongs to a latent cluster. The cluster shifts the time-series
//! means, biases the vocabulary of the notes, picks the admission text, and
//! moves the outcome probabilities. A per-episode severity score adds signal
//! that is visible in the series but not in the admission text.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mapping::{map_category, CategoryMapping};
use super::{Dataset, Episode, Labels, ModalityKind, ModalitySchema, Split, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::util::{self, Rng};

/// The 17 benchmark time-series variables.
pub const CLINICAL_VARIABLES: [&str; 17] = [
    "Capillary refill rate",
    "Diastolic blood pressure",
    "Fraction inspired oxygen",
    "Glascow coma scale eye opening",
    "Glascow coma scale motor response",
    "Glascow coma scale total",
    "Glascow coma scale verbal response",
    "Glucose",
    "Heart Rate",
    "Height",
    "Mean blood pressure",
    "Oxygen saturation",
    "Respiratory rate",
    "Systolic blood pressure",
    "Temperature",
    "Weight",
    "pH",
];

pub const DEMOGRAPHIC_ATTRIBUTES: [&str; 5] =
    ["ETHNICITY", "GENDER", "AGE", "INSURANCE", "MARITAL_STATUS"];
pub const ADMISSION_ATTRIBUTES: [&str; 3] = ["ADMISSION_TYPE", "ADMISSION_LOCATION", "DIAGNOSIS"];

const NOTE_TYPES: [&str; 6] = [
    "NOTE NURSING BOW",
    "NOTE RADIOLOGY BOW",
    "NOTE RESPITORY BOW",
    "NOTE ECG BOW",
    "NOTE ECHO BOW",
    "NOTE OTHER BOW",
];

const DIAGNOSES: [&str; 24] = [
    "SEPSIS",
    "PNEUMONIA",
    "CONGESTIVE HEART FAILURE",
    "CORONARY ARTERY DISEASE",
    "INTRACRANIAL HEMORRHAGE",
    "GASTROINTESTINAL BLEED",
    "ACUTE RENAL FAILURE",
    "CHEST PAIN",
    "ALTERED MENTAL STATUS",
    "STROKE TRANSIENT ISCHEMIC ATTACK",
    "DIABETIC KETOACIDOSIS",
    "AORTIC STENOSIS",
    "RESPIRATORY FAILURE",
    "HYPOTENSION",
    "OVERDOSE",
    "SUBARACHNOID HEMORRHAGE",
    "LIVER FAILURE",
    "PANCREATITIS",
    "FEVER",
    "ABDOMINAL PAIN",
    "SEIZURE",
    "TRAUMA FALL",
    "BOWEL OBSTRUCTION",
    "PULMONARY EMBOLISM",
];

const ADMISSION_TYPES: [&str; 3] = ["EMERGENCY", "ELECTIVE", "URGENT"];
const ADMISSION_LOCATIONS: [&str; 4] = [
    "EMERGENCY ROOM ADMIT",
    "PHYS REFERRAL/NORMAL DELI",
    "CLINIC REFERRAL/PREMATURE",
    "TRANSFER FROM HOSP/EXTRAM",
];
const ETHNICITIES: [&str; 5] = ["WHITE", "BLACK/AFRICAN AMERICAN", "HISPANIC OR LATINO", "ASIAN", "OTHER"];
const INSURANCES: [&str; 5] = ["Medicare", "Private", "Medicaid", "Government", "Self Pay"];
const MARITAL: [&str; 4] = ["MARRIED", "SINGLE", "WIDOWED", "DIVORCED"];
const DISCHARGE_CLASSES: [&str; 5] = ["HOME", "REHAB", "SNF", "LEFT", "TRANSFER"];

/// How time-series variables are grouped into attribute types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeriesGrouping {
    /// All variables form one `timeseries` attribute type.
    #[default]
    Grouped,
    /// Each variable is its own attribute type.
    PerVariable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub episodes: usize,
    pub clusters: usize,
    pub test_fraction: f64,
    pub series_missing_rate: f64,
    pub notes_missing_rate: f64,
    pub categorical_missing_rate: f64,
    pub variables: Vec<String>,
    pub series_grouping: SeriesGrouping,
    pub note_types: Vec<String>,
    pub window: f64,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Cluster mean shift of each variable, in units of its scale.
    pub series_signal: f64,
    /// Per-sample noise, in units of each variable's scale.
    pub series_noise: f64,
    /// Probability that an episode's admission text is drawn from another cluster.
    pub admission_noise: f64,
    /// Weight of the per-episode severity score on outcomes.
    pub severity_weight: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            clusters: 4,
            test_fraction: 0.2,
            series_missing_rate: 0.4,
            notes_missing_rate: 0.4,
            categorical_missing_rate: 0.4,
            variables: CLINICAL_VARIABLES.iter().map(|s| s.to_string()).collect(),
            series_grouping: SeriesGrouping::Grouped,
            note_types: NOTE_TYPES.iter().map(|s| s.to_string()).collect(),
            window: DEFAULT_WINDOW,
            min_samples: 3,
            max_samples: 24,
            series_signal: 0.25,
            series_noise: 1.0,
            admission_noise: 0.1,
            severity_weight: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.episodes == 0 {
            return bad("episode count must be positive".into());
        }
        if self.clusters == 0 {
            return bad("cluster count must be positive".into());
        }
        for (name, r) in [
            ("series_missing_rate", self.series_missing_rate),
            ("notes_missing_rate", self.notes_missing_rate),
            ("categorical_missing_rate", self.categorical_missing_rate),
            ("test_fraction", self.test_fraction),
            ("admission_noise", self.admission_noise),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} is outside [0, 1]"));
            }
        }
        if self.variables.is_empty() {
            return bad("variable list is empty".into());
        }
        if self.min_samples == 0 || self.min_samples > self.max_samples {
            return bad("need 1 <= min_samples <= max_samples".into());
        }
        if !(self.window > 0.0) {
            return bad("window must be positive".into());
        }
        Ok(())
    }

    /// The schema of datasets produced with this configuration.
    pub fn schema(&self) -> Vec<ModalitySchema> {
        let mut schema = Vec::new();
        match self.series_grouping {
            SeriesGrouping::Grouped => schema.push(ModalitySchema {
                type_id: "timeseries".into(),
                kind: ModalityKind::NumericGroup,
                attribute_names: self.variables.clone(),
                domain_dim: Some(63 * self.variables.len()),
            }),
            SeriesGrouping::PerVariable => {
                for v in &self.variables {
                    schema.push(ModalitySchema {
                        type_id: format!("ts_{}", slug(v)),
                        kind: ModalityKind::NumericGroup,
                        attribute_names: vec![v.clone()],
                        domain_dim: Some(63),
                    });
                }
            }
        }
        for nt in &self.note_types {
            schema.push(ModalitySchema::new(
                format!("note_{}", slug(nt.trim_start_matches("NOTE ").trim_end_matches(" BOW"))),
                ModalityKind::BagOfWords,
                &[nt.as_str()],
            ));
        }
        schema.push(ModalitySchema::new(
            "demographics",
            ModalityKind::CategoricalGroup,
            &DEMOGRAPHIC_ATTRIBUTES,
        ));
        schema.push(ModalitySchema::new(
            "admission",
            ModalityKind::CategoricalGroup,
            &ADMISSION_ATTRIBUTES,
        ));
        schema
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn variable_profile(name: &str) -> (f64, f64) {
    match name {
        "Capillary refill rate" => (0.2, 0.4),
        "Diastolic blood pressure" => (60.0, 12.0),
        "Fraction inspired oxygen" => (0.5, 0.2),
        "Glascow coma scale eye opening" => (3.0, 1.0),
        "Glascow coma scale motor response" => (5.0, 1.5),
        "Glascow coma scale total" => (12.0, 3.0),
        "Glascow coma scale verbal response" => (3.0, 1.5),
        "Glucose" => (140.0, 40.0),
        "Heart Rate" => (85.0, 15.0),
        "Height" => (170.0, 10.0),
        "Mean blood pressure" => (78.0, 12.0),
        "Oxygen saturation" => (97.0, 2.5),
        "Respiratory rate" => (19.0, 5.0),
        "Systolic blood pressure" => (120.0, 18.0),
        "Temperature" => (37.0, 0.7),
        "Weight" => (80.0, 18.0),
        "pH" => (7.4, 0.07),
        _ => (0.0, 1.0),
    }
}

struct ClusterProfile {
    series_shift: Vec<f64>,
    mort_logit: f64,
    los_log_mean: f64,
    dd_preferred: usize,
    admission_type: usize,
    admission_location: usize,
    diagnoses: Vec<String>,
    age_mean: f64,
}

fn cluster_profiles(cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<ClusterProfile> {
    let k = cfg.clusters;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    (0..k)
        .map(|c| {
            let frac = if k > 1 { c as f64 / (k - 1) as f64 } else { 0.5 };
            let diagnoses = if k <= DIAGNOSES.len() {
                DIAGNOSES
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % k == c)
                    .take(3)
                    .map(|(_, d)| d.to_string())
                    .collect()
            } else {
                (0..3).map(|j| format!("CONDITION {c} VARIANT {j}")).collect()
            };
            ClusterProfile {
                series_shift: (0..cfg.variables.len())
                    .map(|_| std_normal.sample(rng))
                    .collect(),
                mort_logit: -2.2 + 3.4 * frac,
                los_log_mean: 2.5f64.ln() + 3.0f64.ln() * frac,
                dd_preferred: c % DISCHARGE_CLASSES.len(),
                admission_type: c % ADMISSION_TYPES.len(),
                admission_location: c % ADMISSION_LOCATIONS.len(),
                diagnoses,
                age_mean: 45.0 + 25.0 * frac,
            }
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pick_biased(rng: &mut Rng, n: usize, preferred: usize, p_preferred: f64) -> usize {
    if rng.random_bool(p_preferred) {
        preferred
    } else {
        rng.random_range(0..n)
    }
}

/// Generates a dataset that is a deterministic function of `(config, seed)`.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    generate_synthetic_with_clusters(config, seed).map(|(ds, _)| ds)
}

/// Like [`generate_synthetic`], also returning each episode's planted cluster.
pub fn generate_synthetic_with_clusters(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    config.validate()?;
    let note_map = CategoryMapping::note_types();
    let discharge_map = CategoryMapping::discharge_locations();

    let mut rng = util::rng(util::mix_seed(seed, 1));
    let profiles = cluster_profiles(config, &mut rng);
    let loadings: Vec<f64> = (0..config.variables.len())
        .map(|j| if j % 2 == 0 { 0.7 } else { 0.0 })
        .collect();

    let mut rng = util::rng(util::mix_seed(seed, 2));
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let width = config.episodes.to_string().len().max(4);
    let mut episodes = Vec::with_capacity(config.episodes);
    let mut clusters = Vec::with_capacity(config.episodes);
    let mut split = BTreeMap::new();

    for idx in 0..config.episodes {
        let id = format!("ep{idx:0width$}");
        let c = rng.random_range(0..config.clusters);
        clusters.push(c);
        let prof = &profiles[c];
        let severity: f64 = std_normal.sample(&mut rng);
        let mut ep = Episode::new(id.clone());

        for (j, var) in config.variables.iter().enumerate() {
            let (base, scale) = variable_profile(var);
            let missing = rng.random_bool(config.series_missing_rate);
            let count = rng.random_range(config.min_samples..=config.max_samples);
            let level = config.series_signal * prof.series_shift[j] + loadings[j] * severity;
            let mut points: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    let t = rng.random_range(0.0..=config.window);
                    let noise: f64 = std_normal.sample(&mut rng);
                    (t, base + scale * (level + config.series_noise * noise))
                })
                .collect();
            if !missing {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                ep.series.insert(var.clone(), points);
            }
        }

        for (ti, nt) in config.note_types.iter().enumerate() {
            let missing = rng.random_bool(config.notes_missing_rate);
            let sources = note_map.sources_of(nt);
            let raw = if sources.is_empty() {
                nt.as_str()
            } else {
                sources[rng.random_range(0..sources.len())]
            };
            let label = map_category(raw, &note_map).unwrap_or_else(|_| nt.clone());
            let len = rng.random_range(15..=45);
            let mut tokens = Vec::with_capacity(len + 1);
            tokens.push("patient".to_string());
            for _ in 0..len {
                let tok = if rng.random_bool(0.3) {
                    format!("t{ti}c{c}w{}", rng.random_range(0..20))
                } else {
                    format!("w{}", rng.random_range(0..150))
                };
                tokens.push(tok);
            }
            if !missing {
                ep.notes.insert(label, tokens);
            }
        }

        let age = (prof.age_mean + 15.0 * std_normal.sample(&mut rng)).clamp(18.0, 99.0).round();
        let demo = [
            ETHNICITIES[pick_biased(&mut rng, ETHNICITIES.len(), 0, 0.5)].to_string(),
            ["F", "M"][rng.random_range(0..2)].to_string(),
            format!("{age}"),
            INSURANCES[if age >= 65.0 { 0 } else { rng.random_range(1..INSURANCES.len()) }]
                .to_string(),
            MARITAL.choose(&mut rng).expect("nonempty").to_string(),
        ];
        for (name, value) in DEMOGRAPHIC_ATTRIBUTES.iter().zip(demo) {
            let missing = rng.random_bool(config.categorical_missing_rate);
            ep.categoricals
                .insert(name.to_string(), if missing { None } else { Some(value) });
        }

        let text_cluster = if rng.random_bool(config.admission_noise) {
            rng.random_range(0..config.clusters)
        } else {
            c
        };
        let tp = &profiles[text_cluster];
        let adm_type = ADMISSION_TYPES[pick_biased(&mut rng, ADMISSION_TYPES.len(), tp.admission_type, 0.85)];
        let adm_loc = ADMISSION_LOCATIONS
            [pick_biased(&mut rng, ADMISSION_LOCATIONS.len(), tp.admission_location, 0.85)];
        let dx = tp.diagnoses.choose(&mut rng).expect("nonempty pool").clone();
        ep.categoricals.insert("ADMISSION_TYPE".into(), Some(adm_type.into()));
        ep.categoricals.insert("ADMISSION_LOCATION".into(), Some(adm_loc.into()));
        ep.categoricals.insert("DIAGNOSIS".into(), Some(dx));

        let died = rng.random_bool(sigmoid(prof.mort_logit + config.severity_weight * severity));
        let los_noise: f64 = std_normal.sample(&mut rng);
        let los = (prof.los_log_mean + 0.35 * config.severity_weight * severity + 0.3 * los_noise).exp();
        let dd_class = if died {
            "MORTALITY_INHOSPITAL"
        } else {
            DISCHARGE_CLASSES[pick_biased(&mut rng, DISCHARGE_CLASSES.len(), prof.dd_preferred, 0.55)]
        };
        let sources = discharge_map.sources_of(dd_class);
        let raw_location = sources[rng.random_range(0..sources.len())];
        ep.labels = Some(Labels {
            mort: Some(u8::from(died)),
            los: Some((los * 1000.0).round() / 1000.0),
            dd: Some(map_category(raw_location, &discharge_map)?),
        });

        let s = if rng.random_bool(config.test_fraction) {
            Split::Test
        } else {
            Split::Train
        };
        split.insert(id, s);
        episodes.push(ep);
    }

    let ds = Dataset {
        schema: config.schema(),
        episodes,
        split,
    };
    ds.validate()?;
    Ok((ds, clusters))
}
