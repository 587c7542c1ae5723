use serde::{Deserialize, Serialize};

use super::FeatureVectorWithMask;

/// Per-feature affine scaling fitted on observed training entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Features with no observed entries or zero spread get `std = 1`.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVectorWithMask>,
    {
        let rows: Vec<&FeatureVectorWithMask> = rows.into_iter().collect();
        let mut mean = vec![0.0; dim];
        let mut count = vec![0usize; dim];
        for r in &rows {
            for j in 0..dim {
                if r.mask[j] {
                    mean[j] += r.values[j];
                    count[j] += 1;
                }
            }
        }
        for j in 0..dim {
            if count[j] > 0 {
                mean[j] /= count[j] as f64;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for j in 0..dim {
                if r.mask[j] {
                    let d = r.values[j] - mean[j];
                    var[j] += d * d;
                }
            }
        }
        let std = var
            .iter()
            .zip(&count)
            .map(|(&v, &c)| {
                let s = if c > 0 { (v / c as f64).sqrt() } else { 0.0 };
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    /// Scales observed entries; masked entries stay 0.
    pub fn transform(&self, row: &FeatureVectorWithMask) -> FeatureVectorWithMask {
        let values = row
            .values
            .iter()
            .zip(&row.mask)
            .enumerate()
            .map(|(j, (&x, &m))| if m { (x - self.mean[j]) / self.std[j] } else { 0.0 })
            .collect();
        FeatureVectorWithMask {
            values,
            mask: row.mask.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64], mask: &[bool]) -> FeatureVectorWithMask {
        FeatureVectorWithMask {
            values: values.to_vec(),
            mask: mask.to_vec(),
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let rows = [row(&[5.0], &[true]), row(&[5.0], &[true])];
        let s = Standardizer::fit(&rows, 1);
        assert_eq!(s.std[0], 1.0);
        assert!(rows.iter().all(|r| s.transform(r).values[0] == 0.0));
    }

    #[test]
    fn masked_entry_stays_zero() {
        let rows = [row(&[1.0, 9.0], &[true, false]), row(&[3.0, 0.0], &[true, false])];
        let s = Standardizer::fit(&rows, 2);
        assert_eq!(s.transform(&rows[0]).values[1], 0.0);
        assert_eq!(s.std[1], 1.0);
    }

    #[test]
    fn one_and_three_become_minus_one_and_one() {
        let rows = [row(&[1.0], &[true]), row(&[3.0], &[true]), row(&[100.0], &[false])];
        let s = Standardizer::fit(&rows, 1);
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.transform(&rows[0]).values[0], -1.0);
        assert_eq!(s.transform(&rows[1]).values[0], 1.0);
    }
}
