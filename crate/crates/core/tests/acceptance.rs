//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epmd::affinity::{build_graph, AffinityGraph};
use epmd::dataset::{generate_synthetic, SyntheticConfig};
use epmd::epmd::{batch_objective, encode_all, train, EncoderParams, TrainConfig, TypeInputs};
use epmd::featurize::{build_timeseries_features, segment_stats, FeaturizeConfig, FittedFeaturizer};
use epmd::harness::{
    embedding_inputs, paired_significance, prepare, run_experiment_on, ExperimentPlan, ModalitySet, SubsetSize, Task,
};
use epmd::linear_models::{
    fit_binary, fit_ridge, logistic_objective, logistic_smooth_gradient, ridge_objective, Penalty,
};
use epmd::metrics::{auroc, mc_auroc};
use epmd::representations::Flavor;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_graph(n: usize, p: f64, r: &mut ChaCha8Rng) -> AffinityGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    // keep every node connected to something
    for i in 0..n {
        if !edges.iter().any(|&(a, b)| a == i || b == i) {
            edges.push((i, (i + 1) % n));
        }
    }
    AffinityGraph::from_edges((0..n).map(|i| format!("n{i}")).collect(), &edges).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

// 1. gradients of the full per-node objective against central differences
fn gradient_oracle() -> Outcome {
    const N: usize = 10;
    const D: usize = 4;
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for inst in 0..120u64 {
        let mut r = rng(100 + inst);
        let mut inputs = Vec::new();
        for (t, dim) in [("a", 3usize), ("b", 5)] {
            let missing: Vec<bool> = (0..N).map(|_| r.random_bool(0.4)).collect();
            let x1 = Array2::from_shape_fn((N, dim), |(i, _)| {
                if missing[i] && r.random_bool(0.5) {
                    0.0
                } else {
                    r.random_range(-1.0..1.0)
                }
            });
            inputs.push(TypeInputs {
                type_id: t.into(),
                x1,
                missing,
            });
        }
        inputs.push(TypeInputs::identity(N));
        let graph = random_graph(N, 0.3, &mut r);
        let params = EncoderParams::init(&inputs, D, Some(0.5), inst);
        let pairs: Vec<(usize, usize)> = (0..N)
            .map(|v| {
                let u = r.random_range(0..N - 1);
                (v, if u >= v { u + 1 } else { u })
            })
            .collect();
        let margin = 5.0;
        let f = |p: &EncoderParams| {
            batch_objective(&inputs, p, &graph, &pairs, margin, 1e-12).unwrap().loss_sum / pairs.len() as f64
        };
        let analytic = batch_objective(&inputs, &params, &graph, &pairs, margin, 1e-12).unwrap().grads;
        let (mut a, mut num) = (Vec::new(), Vec::new());
        for t in 0..params.types.len() {
            for which in 0..2 {
                let shape = if which == 0 {
                    params.types[t].w1.dim()
                } else {
                    params.types[t].w2.dim()
                };
                for i in 0..shape.0 {
                    for j in 0..shape.1 {
                        let mut plus = params.clone();
                        let mut minus = params.clone();
                        let (pp, pm) = if which == 0 {
                            (&mut plus.types[t].w1, &mut minus.types[t].w1)
                        } else {
                            (&mut plus.types[t].w2, &mut minus.types[t].w2)
                        };
                        pp[[i, j]] += H;
                        pm[[i, j]] -= H;
                        num.push((f(&plus) - f(&minus)) / (2.0 * H));
                        a.push(if which == 0 {
                            analytic.w1[t][[i, j]]
                        } else {
                            analytic.w2[t][[i, j]]
                        });
                    }
                }
            }
        }
        let e = rel_err(&a, &num);
        worst = worst.max(e);
        check(e < 1e-4, || format!("instance {inst}: relative error {e:.3e}"))?;
    }
    Ok(format!("120 instances, worst relative error {worst:.2e}"))
}

fn brute_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut halves = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            pos += 1;
        } else {
            neg += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                halves += 2;
            } else if scores[i] == scores[j] {
                halves += 1;
            }
        }
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some((halves as f64 / 2.0) / (pos as f64 * neg as f64))
}

fn brute_mc_auroc(scores: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return None;
    }
    let a = |i: usize, j: usize| {
        let (s, l): (Vec<f64>, Vec<bool>) = scores
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == i || y == j)
            .map(|(r, &y)| (r[i], y == i))
            .unzip();
        brute_auroc(&s, &l).unwrap()
    };
    let c = present.len();
    let mut total = 0.0;
    for (x, &i) in present.iter().enumerate() {
        for &j in &present[x + 1..] {
            total += 0.5 * (a(i, j) + a(j, i));
        }
    }
    Some(2.0 * total / (c * (c - 1)) as f64)
}

// 2. rank-based metrics against pairwise enumeration
fn metric_oracle() -> Outcome {
    let mut r = rng(2);
    let mut compared = 0;
    for inst in 0..1000 {
        let n = r.random_range(2..=50);
        let k = r.random_range(2..=6);
        // coarse scores so ties are frequent
        let levels = r.random_range(2..=20) as f64;
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| (r.random_range(0.0..levels)).floor() / levels).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let bin: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
        let s0: Vec<f64> = scores.iter().map(|s| s[0]).collect();
        match (auroc(&s0, &bin), brute_auroc(&s0, &bin)) {
            (Ok(x), Some(y)) => check(x == y, || format!("instance {inst}: auroc {x} vs {y}"))?,
            (Err(_), None) => {}
            (x, y) => return Err(format!("instance {inst}: auroc {x:?} vs brute {y:?}")),
        }
        match (mc_auroc(&scores, &labels), brute_mc_auroc(&scores, &labels)) {
            (Ok(x), Some(y)) => check(x == y, || format!("instance {inst}: mc_auroc {x} vs {y}"))?,
            (Err(_), None) => {}
            (x, y) => return Err(format!("instance {inst}: mc_auroc {x:?} vs brute {y:?}")),
        }
        // two classes: mc_auroc is the binary auroc
        let two: Vec<Vec<f64>> = s0.iter().map(|&s| vec![-s, s]).collect();
        let y2: Vec<usize> = bin.iter().map(|&b| usize::from(b)).collect();
        if let (Ok(m), Ok(b)) = (mc_auroc(&two, &y2), auroc(&s0, &bin)) {
            check(m == b, || format!("instance {inst}: c=2 mc_auroc {m} vs auroc {b}"))?;
            compared += 1;
        }
    }
    Ok(format!("1000 instances exact, {compared} two-class reductions exact"))
}

/// Minimizes `Σ (y − Xw − b)² + λ‖w‖²` by conjugate gradients on the full (w, b) system.
fn ridge_cg(x: &Array2<f64>, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = x.dim();
    let mut a = Array2::<f64>::ones((n, p + 1));
    a.slice_mut(ndarray::s![.., ..p]).assign(x);
    let yv = Array1::from(y.to_vec());
    let mut reg = Array1::from_elem(p + 1, lambda);
    reg[p] = 0.0;
    let apply = |v: &Array1<f64>| a.t().dot(&a.dot(v)) + &reg * v;
    let rhs = a.t().dot(&yv);
    let mut sol = Array1::zeros(p + 1);
    let mut res = rhs.clone();
    let mut dir = res.clone();
    let mut rr = res.dot(&res);
    for _ in 0..10 * (p + 1) {
        if rr.sqrt() < 1e-14 * rhs.dot(&rhs).sqrt().max(1.0) {
            break;
        }
        let ad = apply(&dir);
        let alpha = rr / dir.dot(&ad);
        sol.scaled_add(alpha, &dir);
        res.scaled_add(-alpha, &ad);
        let next = res.dot(&res);
        dir = &res + &(&dir * (next / rr));
        rr = next;
    }
    (sol.slice(ndarray::s![..p]).to_vec(), sol[p])
}

// 3. solver oracles
fn solver_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst_ridge = 0.0f64;
    for inst in 0..40 {
        let (n, p) = if inst % 2 == 0 { (30, 6) } else { (8, 15) };
        let x = Array2::from_shape_simple_fn((n, p), || r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let lambda = [0.1, 1.0, 10.0][inst % 3];
        let m = fit_ridge(x.view(), &y, lambda, true).map_err(|e| e.to_string())?;
        let (w, b) = ridge_cg(&x, &y, lambda);
        let diff = m
            .weights
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold((m.intercept - b).abs(), f64::max);
        worst_ridge = worst_ridge.max(diff);
        check(diff < 1e-6, || format!("ridge instance {inst} ({n}x{p}): max |Δ| {diff:.3e}"))?;
        let cg = epmd::linear_models::RidgeModel {
            weights: w,
            intercept: b,
            lambda,
        };
        let (f_closed, f_cg) = (ridge_objective(x.view(), &y, &m), ridge_objective(x.view(), &y, &cg));
        check(f_closed <= f_cg + 1e-9 * f_cg.abs().max(1.0), || {
            format!("ridge instance {inst}: closed-form objective {f_closed} above iterative {f_cg}")
        })?;
    }

    let mut worst_grad = 0.0f64;
    let mut traces = 0;
    for inst in 0..40 {
        let (n, p) = (60, 8);
        let x = Array2::from_shape_simple_fn((n, p), || r.random_range(-1.5..1.5));
        let truth: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let z: f64 = (0..p).map(|j| x[[i, j]] * truth[j]).sum();
                f64::from(r.random_bool(1.0 / (1.0 + (-z).exp())))
            })
            .collect();
        let s: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
        let penalty = if inst % 2 == 0 { Penalty::L2 } else { Penalty::L1 };
        let c = [1.0, 0.1, 0.01][inst % 3];
        let (_, trace) = fit_binary(x.view(), &y, &s, penalty, c);
        for (k, pair) in trace.objective.windows(2).enumerate() {
            check(pair[1] <= pair[0], || {
                format!("logistic instance {inst}: objective rose at iterate {k}: {} -> {}", pair[0], pair[1])
            })?;
        }
        traces += 1;

        // smooth part only: l2 includes its penalty, l1 is the likelihood alone
        let w = Array1::from_shape_simple_fn(p, || r.random_range(-1.0..1.0));
        let b = r.random_range(-0.5..0.5);
        let smooth = |w: &Array1<f64>, b: f64| {
            let full = logistic_objective(x.view(), &y, &s, w.view(), b, penalty, c);
            match penalty {
                Penalty::L2 => full,
                Penalty::L1 => full - w.iter().map(|v| v.abs()).sum::<f64>() / c,
            }
        };
        let (gw, gb) = logistic_smooth_gradient(x.view(), &y, &s, w.view(), b, penalty, c);
        let h = 1e-5;
        let mut num = Vec::with_capacity(p + 1);
        for j in 0..p {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            num.push((smooth(&wp, b) - smooth(&wm, b)) / (2.0 * h));
        }
        num.push((smooth(&w, b + h) - smooth(&w, b - h)) / (2.0 * h));
        let mut ana = gw.to_vec();
        ana.push(gb);
        let e = rel_err(&ana, &num);
        worst_grad = worst_grad.max(e);
        check(e < 1e-4, || format!("logistic instance {inst}: gradient relative error {e:.3e}"))?;
    }
    Ok(format!(
        "ridge max |Δ| {worst_ridge:.2e}; {traces} monotone logistic traces; gradient error {worst_grad:.2e}"
    ))
}

fn random_vectors(r: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    // clustered with mixed spreads so every threshold has edges and non-edges
    let centers: Vec<Vec<f64>> = (0..8).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|_| {
            let c = &centers[r.random_range(0..centers.len())];
            let spread = [0.002, 0.02, 0.2][r.random_range(0..3)];
            c.iter().map(|x| x + r.random_range(-spread..spread)).collect()
        })
        .collect()
}

// 4. thresholded graph against all-pairs enumeration
fn graph_oracle() -> Outcome {
    let mut r = rng(4);
    let n = 200;
    let vectors = random_vectors(&mut r, n, 5);
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let mut counts = Vec::new();
    for t in [0.5, 0.9, 0.99] {
        let g = build_graph(ids.clone(), &vectors, t).map_err(|e| e.to_string())?;
        let mut edges = 0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let expect = (-d).exp() > t;
                check(g.has_edge(i, j) == expect, || format!("t={t}: pair ({i},{j}) d={d}"))?;
                edges += usize::from(expect && i < j);
            }
        }
        check(edges == g.edge_count(), || format!("t={t}: edge count"))?;
        counts.push(edges);
    }
    for set in 0..100 {
        let m = r.random_range(5..60);
        let vs = random_vectors(&mut r, m, 3);
        let ids: Vec<String> = (0..m).map(|i| i.to_string()).collect();
        let mut ts: Vec<f64> = (0..3).map(|_| r.random_range(0.3..0.999)).collect();
        ts.sort_by(f64::total_cmp);
        let gs: Vec<AffinityGraph> = ts.iter().map(|&t| build_graph(ids.clone(), &vs, t).unwrap()).collect();
        for k in 1..gs.len() {
            for i in 0..m {
                for &j in &gs[k].neighbors[i] {
                    check(gs[k - 1].has_edge(i, j), || {
                        format!("set {set}: edge ({i},{j}) at t={} missing at lower t={}", ts[k], ts[k - 1])
                    })?;
                }
            }
        }
    }
    Ok(format!("edges at t=0.5/0.9/0.99: {counts:?}; monotone on 100 sets"))
}

/// count, min, max, mean, population std, skew, excess kurtosis, median, max |x − median|
fn reference_stats(xs: &[f64]) -> [f64; 9] {
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let (skew, kurt) = if var > 0.0 {
        let z = |k: i32| xs.iter().map(|x| ((x - mean) / sd).powi(k)).sum::<f64>() / n;
        (z(3), z(4) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    };
    let mad = xs.iter().map(|x| (x - median).abs()).fold(0.0, f64::max);
    [n, sorted[0], sorted[m - 1], mean, sd, skew, kurt, median, mad]
}

// 5. featurization oracle
fn featurization_oracle() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for list in 0..1000 {
        let len = r.random_range(1..=40);
        let constant = list % 50 == 0;
        let base = r.random_range(-10.0..10.0);
        let xs: Vec<f64> = (0..len)
            .map(|_| if constant { base } else { r.random_range(-10.0..10.0) })
            .collect();
        let got = segment_stats(&xs);
        let want = reference_stats(&xs);
        check(got.observed, || format!("list {list}: not observed"))?;
        for (k, (a, b)) in got.values.iter().zip(&want).enumerate() {
            let d = (a - b).abs();
            worst = worst.max(d);
            check(d < 1e-9, || format!("list {list}, statistic {k}: {a} vs {b}"))?;
        }
    }
    check(!segment_stats(&[]).observed, || "empty list reported observed".into())?;

    let ds = generate_synthetic(
        &SyntheticConfig {
            episodes: 150,
            ..Default::default()
        },
        5,
    )
    .map_err(|e| e.to_string())?;
    let cfg = SyntheticConfig::default();
    check(cfg.variables.len() == 17, || "expected 17 variables".into())?;
    for e in &ds.episodes {
        let row = build_timeseries_features(e, &cfg.variables, cfg.window);
        check(row.len() == 1071, || format!("{}: {} columns", e.episode_id, row.len()))?;
        check(row.is_masked_zero(), || format!("{}: raw row not masked-zero", e.episode_id))?;
    }
    let fitted = FittedFeaturizer::fit(&ds, FeaturizeConfig::default()).map_err(|e| e.to_string())?;
    let feats = fitted.transform(&ds);
    let ts = feats.get("timeseries").ok_or("no timeseries type")?;
    check(ts.dim() == 1071, || format!("timeseries type has {} columns", ts.dim()))?;
    let mut rows = 0;
    for t in &feats.types {
        for (row, id) in t.rows.iter().zip(&feats.ids) {
            check(row.len() == t.dim(), || format!("{}/{id}: row length", t.schema.type_id))?;
            check(row.is_masked_zero(), || format!("{}/{id}: not masked-zero", t.schema.type_id))?;
            rows += 1;
        }
    }
    Ok(format!("1000 lists, worst |Δ| {worst:.1e}; 1071 columns; {rows} rows masked-zero"))
}

// 6. small-sample advantage on synthetic data
fn trend() -> Outcome {
    let ds = generate_synthetic(&SyntheticConfig::default(), 7).map_err(|e| e.to_string())?;
    let plan = ExperimentPlan {
        tasks: vec![Task::Mort],
        sizes: vec![SubsetSize::Count(50), SubsetSize::All],
        repeats: 20,
        modality_sets: vec![ModalitySet::All],
        ..Default::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_experiment_on(&plan, &ds, dir.path()).map_err(|e| e.to_string())?;
    let cell = |f: Flavor, s: SubsetSize| {
        report
            .cell(Task::Mort, ModalitySet::All, f, s)
            .ok_or_else(|| format!("missing cell {f:?} {s}"))
    };
    let small = SubsetSize::Count(50);
    let (emb, raw) = (cell(Flavor::Embedded, small)?, cell(Flavor::Raw, small)?);
    check(emb.values.len() == 20, || format!("{} draws at size 50", emb.values.len()))?;
    check(emb.mean > raw.mean, || format!("size 50: embedded {:.3} <= raw {:.3}", emb.mean, raw.mean))?;
    let sig = paired_significance(&emb.values, &raw.values, 0.05).map_err(|e| e.to_string())?;
    check(sig, || "size 50: embedded vs raw not significant at 0.05".into())?;
    let full = |f| cell(f, SubsetSize::All).map(|c| c.mean);
    let (c, e, r) = (full(Flavor::Combined)?, full(Flavor::Embedded)?, full(Flavor::Raw)?);
    let gap = (c - e.max(r)).abs();
    check(gap <= 0.03, || format!("full train: |combined {c:.3} - max({e:.3}, {r:.3})| = {gap:.3}"))?;
    Ok(format!(
        "size 50 embedded {:.3} vs raw {:.3}; full train combined {c:.3} vs best {:.3} (gap {gap:.3})",
        emb.mean,
        raw.mean,
        e.max(r)
    ))
}

// 7. every (node, type) pair gets a finite embedding
fn missing_embeddings() -> Outcome {
    let ds = generate_synthetic(
        &SyntheticConfig {
            episodes: 120,
            series_missing_rate: 0.6,
            notes_missing_rate: 0.6,
            categorical_missing_rate: 0.6,
            ..Default::default()
        },
        11,
    )
    .map_err(|e| e.to_string())?;
    let plan = ExperimentPlan::default();
    let prepared = prepare(&ds, &plan).map_err(|e| e.to_string())?;
    let (types, _) = ModalitySet::All.types(&ds);
    let mut inputs = embedding_inputs(&prepared.features, &types).map_err(|e| e.to_string())?;
    // node 0 loses every attribute type
    for inp in &mut inputs {
        inp.missing[0] = true;
        inp.x1.row_mut(0).fill(0.0);
    }
    let config = TrainConfig {
        iterations: 10,
        ..Default::default()
    };
    let out = train(&inputs, &prepared.graph.graph, &config).map_err(|e| e.to_string())?;
    let h = encode_all(&inputs, &out.params).map_err(|e| e.to_string())?;
    let pairs: usize = h.iter().map(|m| m.nrows()).sum();
    check(h.iter().all(|m| m.iter().all(|v| v.is_finite())), || "non-finite embedding".into())?;
    let fully_missing = (0..ds.episodes.len()).filter(|&v| inputs.iter().all(|i| i.missing[v])).count();

    let isolated = AffinityGraph::from_edges(prepared.graph.graph.ids.clone(), &[]).map_err(|e| e.to_string())?;
    let out = train(&inputs, &isolated, &config).map_err(|e| e.to_string())?;
    check(out.skipped_fraction == 1.0, || format!("isolated graph skipped {}", out.skipped_fraction))?;
    let h = encode_all(&inputs, &out.params).map_err(|e| e.to_string())?;
    check(h.iter().all(|m| m.iter().all(|v| v.is_finite())), || "non-finite embedding (isolated)".into())?;
    Ok(format!(
        "{pairs} (node, type) pairs finite, {fully_missing} fully-missing nodes; isolated graph 100% skipped"
    ))
}

const REPORT_FILES: [&str; 5] = ["report.md", "report.json", "results.csv", "per_seed.csv", "significance.csv"];

fn small_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        tasks: vec![Task::Mort, Task::Los, Task::Dd],
        sizes: vec![SubsetSize::Count(20), SubsetSize::Count(40), SubsetSize::All],
        repeats: 2,
        modality_sets: vec![ModalitySet::TimeseriesOnly, ModalitySet::All],
        seed: 3,
        ..Default::default()
    };
    plan.embedding.iterations = 5;
    plan
}

fn small_dataset() -> epmd::dataset::Dataset {
    let variables = SyntheticConfig::default().variables.into_iter().take(5).collect();
    generate_synthetic(
        &SyntheticConfig {
            episodes: 120,
            variables,
            note_types: vec!["NOTE NURSING BOW".into()],
            ..Default::default()
        },
        8,
    )
    .unwrap()
}

struct SmallRuns {
    first: tempfile::TempDir,
    second: tempfile::TempDir,
    report: epmd::harness::ExperimentReport,
}

/// Two independent runs of the small plan, shared by the determinism and format checks.
fn small_runs() -> Result<&'static SmallRuns, String> {
    static RUNS: OnceLock<Result<SmallRuns, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let ds = small_dataset();
        let plan = small_plan();
        let first = tempfile::tempdir().map_err(|e| e.to_string())?;
        let second = tempfile::tempdir().map_err(|e| e.to_string())?;
        let report = run_experiment_on(&plan, &ds, first.path()).map_err(|e| e.to_string())?;
        run_experiment_on(&plan, &ds, second.path()).map_err(|e| e.to_string())?;
        Ok(SmallRuns { first, second, report })
    })
    .as_ref()
    .map_err(Clone::clone)
}

// 8. identical plans and seeds give byte-identical reports
fn determinism() -> Outcome {
    let runs = small_runs()?;
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
    let mut bytes = 0;
    for f in REPORT_FILES {
        let (x, y) = (read(runs.first.path(), f)?, read(runs.second.path(), f)?);
        check(x == y, || format!("{f} differs between runs"))?;
        bytes += x.len();
    }
    Ok(format!("{} report files identical ({bytes} bytes)", REPORT_FILES.len()))
}

fn is_cell(s: &str) -> bool {
    let parts: Vec<&str> = s.trim().trim_end_matches('*').split(" ± ").collect();
    parts.len() == 2
        && parts.iter().all(|p| {
            let p = p.trim_start_matches('-');
            p.split_once('.').is_some_and(|(i, f)| {
                !i.is_empty() && i.bytes().all(|c| c.is_ascii_digit()) && f.len() == 3 && f.bytes().all(|c| c.is_ascii_digit())
            })
        })
}

// 9. table layout
fn report_format() -> Outcome {
    let plan = small_plan();
    let runs = small_runs()?;
    let report = &runs.report;
    let md = std::fs::read_to_string(runs.first.path().join("report.md")).map_err(|e| e.to_string())?;
    let header = "| Number of labeled episodes | combined | embedded | raw |";
    let tables = md.matches(header).count();
    let expected_tables = plan.tasks.len() * plan.modality_sets.len();
    check(tables == expected_tables, || format!("{tables} tables, expected {expected_tables}"))?;
    let mut rows = 0;
    for table in md.split(header).skip(1) {
        let body: Vec<&str> = table
            .lines()
            .skip(2)
            .take_while(|l| l.starts_with('|'))
            .collect();
        check(body.len() == plan.sizes.len(), || format!("table has {} rows, expected {}", body.len(), plan.sizes.len()))?;
        for (line, size) in body.iter().zip(&plan.sizes) {
            let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
            let label_ok = match size {
                SubsetSize::Count(n) => cells[0] == n.to_string(),
                SubsetSize::All => cells[0].starts_with("all ("),
            };
            check(label_ok, || format!("row label {:?} for size {size}", cells[0]))?;
            check(cells.len() == 4 && cells[1..].iter().all(|c| is_cell(c)), || format!("malformed row {line}"))?;
            if *size == SubsetSize::All {
                check(cells[1..].iter().all(|c| c.trim_end_matches('*').ends_with("± 0.000")), || {
                    format!("full-train row without zero std: {line}")
                })?;
            }
            rows += 1;
        }
    }
    for c in report.cells.iter().filter(|c| c.size == SubsetSize::All) {
        check(c.values.len() == 1 && c.std == 0.0, || format!("full-train cell std {}", c.std))?;
    }
    Ok(format!("{tables} tables, {rows} rows, full-train std 0.000"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient oracle", gradient_oracle),
        ("metric oracles", metric_oracle),
        ("solver oracles", solver_oracle),
        ("graph oracle", graph_oracle),
        ("featurization oracle", featurization_oracle),
        ("small-sample trend", trend),
        ("missing-data embeddings", missing_embeddings),
        ("determinism", determinism),
        ("report format", report_format),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
