//! Per-episode design matrices for the three compared representations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::epmd::{encode_all, EncoderParams, TypeInputs};
use crate::error::{Error, Result};
use crate::featurize::{FeaturizedDataset, FittedFeaturizer, TypeTransform};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Raw,
    Embedded,
    Combined,
}

impl Flavor {
    pub const ALL: [Flavor; 3] = [Flavor::Raw, Flavor::Embedded, Flavor::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Raw => "raw",
            Flavor::Embedded => "embedded",
            Flavor::Combined => "combined",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Flavor::Raw),
            "embedded" => Ok(Flavor::Embedded),
            "combined" => Ok(Flavor::Combined),
            other => Err(Error::InvalidConfig(format!("unknown representation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Raw,
    Embedding,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Raw => "raw",
            Source::Embedding => "embedding",
        }
    }
}

/// Where a column came from: attribute type, source, and index within that block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub type_id: String,
    pub source: Source,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix {
    pub flavor: Flavor,
    pub ids: Vec<String>,
    pub columns: Vec<Provenance>,
    /// episodes x columns
    pub data: Array2<f64>,
}

impl RepresentationMatrix {
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Array2<f64> {
        self.data.select(Axis(0), indices)
    }

    /// Columns whose provenance matches `pred`.
    pub fn columns_where(&self, pred: impl Fn(&Provenance) -> bool) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, p)| pred(p))
            .map(|(j, _)| j)
            .collect()
    }

    /// `# col,type_id,source,index` provenance block, then `episode_id,c0..` rows.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("# col,type_id,source,index\n");
        for (j, p) in self.columns.iter().enumerate() {
            text.push_str(&format!("# {j},{},{},{}\n", p.type_id, p.source.as_str(), p.index));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["episode_id".to_string()];
        header.extend((0..self.ncols()).map(|j| format!("c{j}")));
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(self.data.rows()) {
            w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|x| x.to_string())))?;
        }
        let body = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
        text.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        util::write_string(path, &text)
    }

    pub fn load_csv(path: &Path, flavor: Flavor) -> Result<Self> {
        let text = util::read_to_string(path)?;
        let mut columns = Vec::new();
        let mut body = String::new();
        let mut saw_header = false;
        for (ln, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else {
                body.push_str(line);
                body.push('\n');
                continue;
            };
            let rest = rest.trim();
            if !saw_header {
                saw_header = rest == "col,type_id,source,index";
                continue;
            }
            let bad = |reason: &str| Error::MalformedRecord {
                file: path.display().to_string(),
                line: ln + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = rest.split(',').collect();
            let [col, type_id, source, index] = f.as_slice() else {
                return Err(bad("provenance line needs 4 fields"));
            };
            if col.parse::<usize>().ok() != Some(columns.len()) {
                return Err(bad("provenance columns out of order"));
            }
            let source = match *source {
                "raw" => Source::Raw,
                "embedding" => Source::Embedding,
                _ => return Err(bad("source must be raw or embedding")),
            };
            columns.push(Provenance {
                type_id: type_id.to_string(),
                source,
                index: index.parse().map_err(|_| bad("bad index"))?,
            });
        }
        if !saw_header {
            return Err(Error::MissingProvenance(format!("{} has no provenance header", path.display())));
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let width = r.headers()?.len();
        if width != columns.len() + 1 {
            return Err(Error::MissingProvenance(format!(
                "{} columns but {} provenance entries",
                width.saturating_sub(1),
                columns.len()
            )));
        }
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            for s in rec.iter().skip(1) {
                data.push(s.parse::<f64>().map_err(|e| Error::MalformedRecord {
                    file: path.display().to_string(),
                    line: i + 2,
                    reason: e.to_string(),
                })?);
            }
        }
        let data = Array2::from_shape_vec((ids.len(), columns.len()), data)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self {
            flavor,
            ids,
            columns,
            data,
        })
    }
}

/// `[h_1(v) | .. | h_k(v)]` in input order; k*d columns.
pub fn embedded_repr(ids: &[String], inputs: &[TypeInputs], params: &EncoderParams) -> Result<RepresentationMatrix> {
    let h = encode_all(inputs, params)?;
    if let Some(m) = h.iter().find(|m| m.nrows() != ids.len()) {
        return Err(Error::IdMisalignment(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            m.nrows()
        )));
    }
    let columns = params
        .types
        .iter()
        .flat_map(|t| {
            (0..params.dim).map(move |index| Provenance {
                type_id: t.type_id.clone(),
                source: Source::Embedding,
                index,
            })
        })
        .collect();
    let views: Vec<_> = h.iter().map(|m| m.view()).collect();
    let data = if views.is_empty() {
        Array2::zeros((ids.len(), 0))
    } else {
        concatenate(Axis(1), &views).expect("equal row counts")
    };
    Ok(RepresentationMatrix {
        flavor: Flavor::Embedded,
        ids: ids.to_vec(),
        columns,
        data,
    })
}

/// Standardized numerics (missing = 0), TF-IDF text rows and one-hot categoricals
/// for the listed types, in that order.
pub fn raw_repr(
    features: &FeaturizedDataset,
    fitted: &FittedFeaturizer,
    type_ids: &[String],
) -> Result<RepresentationMatrix> {
    let n = features.ids.len();
    let mut blocks = Vec::new();
    let mut columns = Vec::new();
    for tid in type_ids {
        let tf = features
            .get(tid)
            .ok_or_else(|| Error::InvalidConfig(format!("no features for type {tid:?}")))?;
        let ft = fitted
            .get(tid)
            .ok_or_else(|| Error::InvalidConfig(format!("no fitted transform for type {tid:?}")))?;
        let dim = tf.dim();
        let mut block = Array2::zeros((n, dim));
        for (i, row) in tf.rows.iter().enumerate() {
            let values = match &ft.transform {
                TypeTransform::BagOfWords { tfidf, .. } => tfidf.transform(row),
                _ => row
                    .values
                    .iter()
                    .zip(&row.mask)
                    .map(|(&x, &m)| if m { x } else { 0.0 })
                    .collect(),
            };
            block.row_mut(i).assign(&ndarray::ArrayView1::from(&values));
        }
        blocks.push(block);
        columns.extend((0..dim).map(|index| Provenance {
            type_id: tid.clone(),
            source: Source::Raw,
            index,
        }));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let data = if views.is_empty() {
        Array2::zeros((n, 0))
    } else {
        concatenate(Axis(1), &views).expect("equal row counts")
    };
    Ok(RepresentationMatrix {
        flavor: Flavor::Raw,
        ids: features.ids.clone(),
        columns,
        data,
    })
}

/// `[embedded | raw]`; ids must match row for row.
pub fn combined_repr(embedded: &RepresentationMatrix, raw: &RepresentationMatrix) -> Result<RepresentationMatrix> {
    if embedded.ids != raw.ids {
        return Err(Error::IdMisalignment(
            "embedded and raw representations list different episodes".into(),
        ));
    }
    let data = concatenate(Axis(1), &[embedded.data.view(), raw.data.view()]).expect("equal row counts");
    let mut columns = embedded.columns.clone();
    columns.extend(raw.columns.iter().cloned());
    Ok(RepresentationMatrix {
        flavor: Flavor::Combined,
        ids: embedded.ids.clone(),
        columns,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Split, SyntheticConfig};
    use crate::featurize::FeaturizeConfig;

    fn setup() -> (FeaturizedDataset, FittedFeaturizer, crate::dataset::Dataset) {
        let cfg = SyntheticConfig {
            episodes: 60,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg, 5).unwrap();
        let fitted = FittedFeaturizer::fit(&ds, FeaturizeConfig::default()).unwrap();
        (fitted.transform(&ds), fitted, ds)
    }

    #[test]
    fn raw_numeric_train_means_vanish() {
        let (feats, fitted, ds) = setup();
        let raw = raw_repr(&feats, &fitted, &["timeseries".to_string()]).unwrap();
        let ts = feats.get("timeseries").unwrap();
        let train = ds.indices(Split::Train);
        for j in 0..raw.ncols() {
            let obs: Vec<f64> = train
                .iter()
                .filter(|&&i| ts.rows[i].mask[j])
                .map(|&i| raw.data[[i, j]])
                .collect();
            if !obs.is_empty() {
                assert!(util::mean(&obs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn text_rows_unit_or_zero() {
        let (feats, fitted, _) = setup();
        let raw = raw_repr(&feats, &fitted, &["note_ecg".to_string()]).unwrap();
        for row in raw.data.rows() {
            let norm = row.dot(&row).sqrt();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_shapes_and_provenance() {
        let (feats, fitted, _) = setup();
        let types: Vec<String> = feats.types.iter().map(|t| t.schema.type_id.clone()).collect();
        let raw = raw_repr(&feats, &fitted, &types).unwrap();
        let mut inputs: Vec<TypeInputs> = feats.types.iter().take(3).map(TypeInputs::from_features).collect();
        inputs.push(TypeInputs::identity(feats.ids.len()));
        let params = EncoderParams::init(&inputs, 32, None, 1);
        let emb = embedded_repr(&feats.ids, &inputs, &params).unwrap();
        assert_eq!(emb.ncols(), 128);
        let comb = combined_repr(&emb, &raw).unwrap();
        assert_eq!(comb.ncols(), 128 + raw.ncols());
        assert_eq!(comb.columns[0].source, Source::Embedding);
        assert_eq!(comb.columns[128], raw.columns[0]);

        let mut shuffled = raw.clone();
        shuffled.ids.swap(0, 1);
        assert!(matches!(combined_repr(&emb, &shuffled), Err(Error::IdMisalignment(_))));
    }

    #[test]
    fn csv_round_trip() {
        let (feats, fitted, _) = setup();
        let raw = raw_repr(&feats, &fitted, &["demographics".to_string(), "note_ecg".to_string()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("repr_raw.csv");
        raw.save_csv(&p).unwrap();
        assert_eq!(RepresentationMatrix::load_csv(&p, Flavor::Raw).unwrap(), raw);
        std::fs::write(&p, "episode_id,c0\ne,1\n").unwrap();
        assert!(matches!(
            RepresentationMatrix::load_csv(&p, Flavor::Raw),
            Err(Error::MissingProvenance(_))
        ));
    }
}
