use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FeatureVectorWithMask;
use crate::dataset::Episode;

pub const OTHER_LEVEL: &str = "other";

const AGE_BUCKETS: [&str; 10] = [
    "0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90+",
];

fn is_age(name: &str) -> bool {
    name.eq_ignore_ascii_case("age")
}

/// Decade bucket index for an age; ages of 90 and above share the last bucket.
pub fn age_bucket(age: f64) -> usize {
    if age.is_nan() || age < 0.0 {
        return 0;
    }
    ((age / 10.0).floor() as usize).min(AGE_BUCKETS.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalLevels {
    pub attribute: String,
    /// Ordered levels; the last one is always [`OTHER_LEVEL`].
    pub levels: Vec<String>,
}

impl CategoricalLevels {
    fn index_of(&self, value: &str) -> usize {
        let key = if is_age(&self.attribute) {
            match value.trim().parse::<f64>() {
                Ok(a) => return age_bucket(a),
                Err(_) => value,
            }
        } else {
            value
        };
        self.levels
            .iter()
            .position(|l| l == key)
            .unwrap_or(self.levels.len() - 1)
    }
}

/// Concatenated one-hot blocks, one per attribute, with levels fixed at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub attributes: Vec<CategoricalLevels>,
}

impl CategoricalEncoder {
    /// Levels are the sorted observed values in `train` plus `other`; age uses fixed decade buckets.
    pub fn fit<'a, I>(attributes: &[String], train: I) -> Self
    where
        I: IntoIterator<Item = &'a Episode> + Clone,
    {
        let attributes = attributes
            .iter()
            .map(|a| {
                let mut levels: Vec<String> = if is_age(a) {
                    AGE_BUCKETS.iter().map(|s| s.to_string()).collect()
                } else {
                    let seen: BTreeSet<&str> = train
                        .clone()
                        .into_iter()
                        .filter_map(|e| e.categorical(a))
                        .filter(|v| *v != OTHER_LEVEL)
                        .collect();
                    seen.into_iter().map(str::to_string).collect()
                };
                levels.push(OTHER_LEVEL.to_string());
                CategoricalLevels {
                    attribute: a.clone(),
                    levels,
                }
            })
            .collect();
        Self { attributes }
    }

    pub fn dim(&self) -> usize {
        self.attributes.iter().map(|a| a.levels.len()).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.attributes
            .iter()
            .flat_map(|a| a.levels.iter().map(move |l| format!("{}={}", a.attribute, l)))
            .collect()
    }

    /// Attribute name owning each output column.
    pub fn column_attributes(&self) -> Vec<String> {
        self.attributes
            .iter()
            .flat_map(|a| std::iter::repeat_n(a.attribute.clone(), a.levels.len()))
            .collect()
    }

    pub fn encode(&self, episode: &Episode) -> FeatureVectorWithMask {
        let mut values = Vec::with_capacity(self.dim());
        let mut mask = Vec::with_capacity(self.dim());
        for a in &self.attributes {
            let n = a.levels.len();
            match episode.categorical(&a.attribute) {
                Some(v) => {
                    let hot = a.index_of(v);
                    values.extend((0..n).map(|i| if i == hot { 1.0 } else { 0.0 }));
                    mask.extend(std::iter::repeat_n(true, n));
                }
                None => {
                    values.extend(std::iter::repeat_n(0.0, n));
                    mask.extend(std::iter::repeat_n(false, n));
                }
            }
        }
        FeatureVectorWithMask { values, mask }
    }
}
