//! Per-type dual encoders trained by neighbor-mean reconstruction with a
//! margin ranking loss.
//!
//! Every attribute type `i` has an observed-data encoder `W1` (domain x d)
//! and a missing-data lookup table `W2` (nodes x d). A node's type-`i`
//! embedding is `x1 W1 + x2 W2`, where `x2` is the one-hot of the node when
//! any entry of the type is missing and zero otherwise.

mod adam;
mod io;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::dataset::ModalityKind;
use crate::error::{Error, Result};
use crate::featurize::TypeFeatures;
use crate::util;

pub use adam::Adam;
pub use io::{load_params, save_params, write_embeddings, PARAMS_MAGIC, PARAMS_VERSION};

/// Type id of the pure per-node lookup type (empty `x1`, `x2` always on).
pub const IDENTITY_TYPE: &str = "identity";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Full passes over the node set.
    pub iterations: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Overrides both default init scales (`1/sqrt(domain_dim)` for W1, `1/sqrt(d)` for W2).
    pub init_scale: Option<f64>,
    pub seed: u64,
    pub distance_epsilon: f64,
    pub self_loops: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            batch_size: 256,
            dim: 32,
            margin: 5.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: None,
            seed: 0,
            distance_epsilon: 1e-8,
            self_loops: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.dim == 0 {
            return bad("embedding dimension must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if matches!(self.init_scale, Some(s) if !(s > 0.0)) {
            return bad("init scale must be positive");
        }
        Ok(())
    }
}

/// Encoder inputs of one attribute type for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeInputs {
    pub type_id: String,
    /// nodes x domain_dim; masked entries are 0.
    pub x1: Array2<f64>,
    /// Type-level missing flag per node.
    pub missing: Vec<bool>,
}

impl TypeInputs {
    /// Bag-of-words rows are divided by their token total; other kinds pass through.
    pub fn from_features(features: &TypeFeatures) -> Self {
        let n = features.rows.len();
        let dim = features.dim();
        let bow = features.schema.kind == ModalityKind::BagOfWords;
        let mut x1 = Array2::zeros((n, dim));
        let mut missing = Vec::with_capacity(n);
        for (i, row) in features.rows.iter().enumerate() {
            missing.push(row.any_missing());
            let scale = if bow {
                let total: f64 = row.values.iter().sum();
                if total > 0.0 {
                    1.0 / total
                } else {
                    0.0
                }
            } else {
                1.0
            };
            for (j, (&x, &m)) in row.values.iter().zip(&row.mask).enumerate() {
                if m {
                    x1[[i, j]] = x * scale;
                }
            }
        }
        Self {
            type_id: features.schema.type_id.clone(),
            x1,
            missing,
        }
    }

    pub fn identity(nodes: usize) -> Self {
        Self {
            type_id: IDENTITY_TYPE.to_string(),
            x1: Array2::zeros((nodes, 0)),
            missing: vec![true; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.x1.nrows()
    }

    pub fn domain_dim(&self) -> usize {
        self.x1.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeParams {
    pub type_id: String,
    /// domain_dim x d
    pub w1: Array2<f64>,
    /// nodes x d
    pub w2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub types: Vec<TypeParams>,
}

impl EncoderParams {
    /// Uniform initialisation on `[-s, s]`; each type draws from its own stream.
    pub fn init(inputs: &[TypeInputs], dim: usize, init_scale: Option<f64>, seed: u64) -> Self {
        let types = inputs
            .iter()
            .enumerate()
            .map(|(i, inp)| {
                let mut rng = util::rng(util::mix_seed(seed, i as u64 + 1));
                let s1 = init_scale.unwrap_or(1.0 / (inp.domain_dim().max(1) as f64).sqrt());
                let s2 = init_scale.unwrap_or(1.0 / (dim as f64).sqrt());
                let w1 = Array2::from_shape_simple_fn((inp.domain_dim(), dim), || rng.random_range(-s1..=s1));
                let w2 = Array2::from_shape_simple_fn((inp.nodes(), dim), || rng.random_range(-s2..=s2));
                TypeParams {
                    type_id: inp.type_id.clone(),
                    w1,
                    w2,
                }
            })
            .collect();
        Self { dim, types }
    }

    pub fn get(&self, type_id: &str) -> Option<&TypeParams> {
        self.types.iter().find(|t| t.type_id == type_id)
    }

    fn check(&self, inputs: &[TypeInputs]) -> Result<()> {
        if inputs.len() != self.types.len() {
            return Err(Error::DimensionMismatch {
                expected: self.types.len(),
                found: inputs.len(),
            });
        }
        for (inp, tp) in inputs.iter().zip(&self.types) {
            if inp.type_id != tp.type_id {
                return Err(Error::InvalidConfig(format!(
                    "input type {:?} does not match parameter type {:?}",
                    inp.type_id, tp.type_id
                )));
            }
            if inp.domain_dim() != tp.w1.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: tp.w1.nrows(),
                    found: inp.domain_dim(),
                });
            }
            if inp.nodes() != tp.w2.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: tp.w2.nrows(),
                    found: inp.nodes(),
                });
            }
        }
        Ok(())
    }
}

/// `x1 W1 + [missing] W2[v]` for a single node.
pub fn encode_type(v: usize, x1: ArrayView1<f64>, missing: bool, params: &TypeParams) -> Result<Array1<f64>> {
    if x1.len() != params.w1.nrows() {
        return Err(Error::DimensionMismatch {
            expected: params.w1.nrows(),
            found: x1.len(),
        });
    }
    let mut h = x1.dot(&params.w1);
    if missing {
        h += &params.w2.row(v);
    }
    Ok(h)
}

/// nodes x d embedding matrix for each type.
pub fn encode_all(inputs: &[TypeInputs], params: &EncoderParams) -> Result<Vec<Array2<f64>>> {
    params.check(inputs)?;
    Ok(inputs
        .iter()
        .zip(&params.types)
        .map(|(inp, tp)| encode_matrix(inp, tp))
        .collect())
}

fn encode_matrix(inp: &TypeInputs, tp: &TypeParams) -> Array2<f64> {
    let mut h = inp.x1.dot(&tp.w1);
    for (v, _) in inp.missing.iter().enumerate().filter(|(_, &m)| m) {
        let mut row = h.row_mut(v);
        row += &tp.w2.row(v);
    }
    h
}

/// Elementwise mean of the neighbors' rows of `h`.
pub fn reconstruct(v: usize, h: &Array2<f64>, graph: &AffinityGraph) -> Result<Array1<f64>> {
    let ns = &graph.neighbors[v];
    if ns.is_empty() {
        return Err(Error::NoNeighbors(v));
    }
    let mut acc = Array1::zeros(h.ncols());
    for &u in ns {
        acc += &h.row(u);
    }
    acc /= ns.len() as f64;
    Ok(acc)
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `[γ + ‖h̃ − h_v‖ − ‖h̃ − h_u‖]₊`
pub fn margin_loss(recon: ArrayView1<f64>, hv: ArrayView1<f64>, hu: ArrayView1<f64>, margin: f64) -> f64 {
    (margin + distance(recon, hv) - distance(recon, hu)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub recon: Array1<f64>,
    pub v: Array1<f64>,
    pub u: Array1<f64>,
}

/// Gradients of [`margin_loss`]; all zero when the hinge is inactive.
pub fn loss_gradients(
    recon: ArrayView1<f64>,
    hv: ArrayView1<f64>,
    hu: ArrayView1<f64>,
    margin: f64,
    distance_epsilon: f64,
) -> LossGradients {
    let d = recon.len();
    if margin_loss(recon, hv, hu, margin) <= 0.0 {
        return LossGradients {
            recon: Array1::zeros(d),
            v: Array1::zeros(d),
            u: Array1::zeros(d),
        };
    }
    let a = &recon - &hv;
    let b = &recon - &hu;
    let ga = &a / distance(recon, hv).max(distance_epsilon);
    let gb = &b / distance(recon, hu).max(distance_epsilon);
    LossGradients {
        recon: &ga - &gb,
        v: -ga,
        u: gb,
    }
}

/// Gradients with the same layout as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<Array2<f64>>,
    pub w2: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Sum of per-node losses (over types) for evaluated nodes.
    pub loss_sum: f64,
    /// Gradients of `loss_sum / pairs.len()`.
    pub grads: Gradients,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Loss and gradients for `(v, u)` pairs (node, negative); isolated `v` are skipped.
pub fn batch_objective(
    inputs: &[TypeInputs],
    params: &EncoderParams,
    graph: &AffinityGraph,
    pairs: &[(usize, usize)],
    margin: f64,
    distance_epsilon: f64,
) -> Result<BatchResult> {
    let h = encode_all(inputs, params)?;
    if graph.len() != inputs.first().map_or(graph.len(), TypeInputs::nodes) {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: inputs[0].nodes(),
        });
    }
    let scale = 1.0 / pairs.len().max(1) as f64;
    let mut dh: Vec<Array2<f64>> = h.iter().map(|m| Array2::zeros(m.raw_dim())).collect();
    let (mut loss_sum, mut evaluated, mut skipped) = (0.0, 0usize, 0usize);
    for &(v, u) in pairs {
        let ns = &graph.neighbors[v];
        if ns.is_empty() {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        for (hi, dhi) in h.iter().zip(dh.iter_mut()) {
            let recon = reconstruct(v, hi, graph)?;
            loss_sum += margin_loss(recon.view(), hi.row(v), hi.row(u), margin);
            let g = loss_gradients(recon.view(), hi.row(v), hi.row(u), margin, distance_epsilon);
            let share = &g.recon * (scale / ns.len() as f64);
            for &w in ns {
                let mut row = dhi.row_mut(w);
                row += &share;
            }
            dhi.row_mut(v).scaled_add(scale, &g.v);
            dhi.row_mut(u).scaled_add(scale, &g.u);
        }
    }
    let mut w1 = Vec::with_capacity(inputs.len());
    let mut w2 = Vec::with_capacity(inputs.len());
    for (inp, mut dhi) in inputs.iter().zip(dh) {
        w1.push(inp.x1.t().dot(&dhi));
        for (mut row, &m) in dhi.axis_iter_mut(Axis(0)).zip(&inp.missing) {
            if !m {
                row.fill(0.0);
            }
        }
        w2.push(dhi);
    }
    Ok(BatchResult {
        loss_sum,
        grads: Gradients { w1, w2 },
        evaluated,
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean per-node loss of each epoch over evaluated nodes.
    pub loss_trace: Vec<f64>,
    /// Fraction of contrastive terms skipped because the node had no neighbors.
    pub skipped_fraction: f64,
}

/// Mini-batch training; one Adam step per batch, one uniform negative `u != v` per node.
pub fn train(inputs: &[TypeInputs], graph: &AffinityGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = graph.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("no attribute types to train".into()));
    }
    for inp in inputs {
        if inp.nodes() != n || inp.missing.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: inp.nodes(),
            });
        }
    }
    let graph = if config.self_loops {
        graph.clone().with_self_loops()
    } else {
        graph.clone()
    };
    let mut params = EncoderParams::init(inputs, config.dim, config.init_scale, config.seed);
    let mut adam = Adam::new(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let mut rng = util::rng(util::mix_seed(config.seed, 0));
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(config.iterations);
    let (mut total_skipped, mut total_seen) = (0usize, 0usize);

    for epoch in 0..config.iterations {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_eval) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            if n == 1 {
                // no negative can be drawn
                total_skipped += batch.len();
                total_seen += batch.len();
                continue;
            }
            let pairs: Vec<(usize, usize)> = batch
                .iter()
                .map(|&v| {
                    let u = rng.random_range(0..n - 1);
                    (v, if u >= v { u + 1 } else { u })
                })
                .collect();
            let r = batch_objective(inputs, &params, &graph, &pairs, config.margin, config.distance_epsilon)?;
            epoch_loss += r.loss_sum;
            epoch_eval += r.evaluated;
            total_skipped += r.skipped;
            total_seen += pairs.len();
            let mut ps: Vec<&mut Array2<f64>> = Vec::with_capacity(2 * params.types.len());
            let mut gs: Vec<&Array2<f64>> = Vec::with_capacity(2 * params.types.len());
            for (tp, (g1, g2)) in params.types.iter_mut().zip(r.grads.w1.iter().zip(&r.grads.w2)) {
                ps.push(&mut tp.w1);
                gs.push(g1);
                ps.push(&mut tp.w2);
                gs.push(g2);
            }
            adam.step(&mut ps, &gs);
        }
        let mean = if epoch_eval > 0 {
            epoch_loss / epoch_eval as f64
        } else {
            0.0
        };
        log::debug!("epoch {}: mean loss {mean:.4}", epoch + 1);
        loss_trace.push(mean);
    }
    let skipped_fraction = if total_seen > 0 {
        total_skipped as f64 / total_seen as f64
    } else {
        0.0
    };
    if skipped_fraction > 0.0 {
        log::warn!(
            "{:.1}% of contrastive terms skipped (nodes without neighbors)",
            100.0 * skipped_fraction
        );
    }
    Ok(TrainOutcome {
        params,
        loss_trace,
        skipped_fraction,
    })
}
