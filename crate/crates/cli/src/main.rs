use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epmd::affinity::{build_affinity_graph, AffinityGraph, WordVectors};
use epmd::dataset::{generate_synthetic, load_dataset_dir, Dataset, SeriesGrouping, Split, SyntheticConfig};
use epmd::epmd::{load_params, save_params, train, write_embeddings, TrainConfig};
use epmd::featurize::{FeaturizedDataset, FittedFeaturizer};
use epmd::harness::{
    draw_subset, embedding_inputs, episode_errors, evaluate, labeled_train_ids, run_experiment_on, ExperimentPlan,
    ExperimentReport, LabelStore, ModalitySet, SubsetSize, Task,
};
use epmd::linear_models::{cv_select, fit_model, HyperGrid, Model};
use epmd::representations::{combined_repr, embedded_repr, raw_repr, Flavor, RepresentationMatrix};
use epmd::{Error, Result};

#[derive(Parser)]
#[command(name = "epmd", version, about = "Graph-based episode embeddings with missing-data representations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed; overrides the seed in the plan file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Experiment plan (JSON); its featurize, skipgram, threshold and embedding
    /// sections configure the individual steps too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Fit featurizers on the training split and write per-type features.
    Featurize {
        #[arg(long)]
        data: PathBuf,
    },
    /// Build the admission-text affinity graph.
    Graph {
        #[arg(long)]
        data: PathBuf,
        /// Pretrained word vectors (word2vec text format) instead of training.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Train EP-md embeddings for one modality set.
    TrainEmb {
        #[arg(long)]
        data: PathBuf,
        /// Output directory of `featurize`.
        #[arg(long)]
        features: PathBuf,
        /// Output directory of `graph`.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "all")]
        modality: String,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Write raw, embedded and combined representation matrices.
    Represent {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// `params.bin` written by `train-emb`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "all")]
        modality: String,
    },
    /// Cross-validate and fit a downstream model on a labeled subset.
    Fit(FitArgs),
    /// Evaluate a fitted model on the test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Representation CSV written by `represent`.
        #[arg(long)]
        repr: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        task: String,
    },
    /// Missingness profile, feature deltas and contributions for a raw/embedded model pair.
    Analyze(AnalyzeArgs),
    /// Run the full experiment plan.
    Bench {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset sizes, e.g. `50,100,all`.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated tasks (`mort,los,dd`).
        #[arg(long)]
        tasks: Option<String>,
        /// Comma-separated modality sets (`timeseries_only,all`).
        #[arg(long)]
        modalities: Option<String>,
    },
    /// Re-render the report of a finished `bench` run.
    Report {
        #[arg(long)]
        experiment: PathBuf,
    },
}

/// Overrides of the plan's embedding section.
#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    self_loops: bool,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.iters {
            cfg.iterations = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.margin {
            cfg.margin = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if self.self_loops {
            cfg.self_loops = true;
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Type-level missing rate applied to series, notes and categoricals.
    #[arg(long)]
    missing: Option<f64>,
    /// Give every time-series variable its own attribute type.
    #[arg(long)]
    per_variable: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    repr: PathBuf,
    #[arg(long)]
    task: String,
    /// Labeled subset size or `all`.
    #[arg(long, default_value = "all")]
    size: String,
    #[arg(long, default_value_t = 0)]
    draw: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Directory with `raw.csv` and `embedded.csv` from `represent`.
    #[arg(long)]
    repr_dir: PathBuf,
    #[arg(long)]
    raw_model: PathBuf,
    #[arg(long)]
    embedded_model: PathBuf,
    #[arg(long)]
    task: String,
}

fn load_plan(global: &Global) -> Result<ExperimentPlan> {
    let mut plan = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => ExperimentPlan::default(),
    };
    if let Some(s) = global.seed {
        plan.seed = s;
        plan.embedding.seed = s;
        plan.skipgram.seed = s;
    }
    Ok(plan)
}

fn list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|x| x.trim().parse()).collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable")).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn flavor_of(path: &Path) -> Result<Flavor> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("cannot infer representation from {}", path.display())))?
        .parse()
}

/// Rows of `repr` matching `indices` of the dataset.
fn rows_for(repr: &RepresentationMatrix, dataset: &Dataset, indices: &[usize]) -> Result<Vec<usize>> {
    let pos: std::collections::HashMap<&str, usize> =
        repr.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    indices
        .iter()
        .map(|&i| {
            let id = &dataset.episodes[i].episode_id;
            pos.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::IdMisalignment(format!("episode {id:?} missing from representation")))
        })
        .collect()
}

/// Test rows labeled for `task` and their labels; unlocks the store.
fn test_set(dataset: &Dataset, store: &LabelStore, task: Task) -> Result<(Vec<usize>, Vec<f64>)> {
    store.unlock_test();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in dataset.indices(Split::Test) {
        if let Some(v) = store.test_label(&dataset.episodes[i].episode_id, task)? {
            rows.push(i);
            y.push(v);
        }
    }
    Ok((rows, y))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let plan = load_plan(g)?;
    let out = &g.out;
    match cli.command {
        Command::Synth(a) => {
            let mut cfg = SyntheticConfig {
                episodes: a.episodes,
                clusters: a.clusters,
                ..Default::default()
            };
            if let Some(m) = a.missing {
                cfg.series_missing_rate = m;
                cfg.notes_missing_rate = m;
                cfg.categorical_missing_rate = m;
            }
            if a.per_variable {
                cfg.series_grouping = SeriesGrouping::PerVariable;
            }
            let ds = generate_synthetic(&cfg, plan.seed)?;
            ds.save(out)?;
            println!("wrote {} episodes to {}", ds.episodes.len(), out.display());
        }
        Command::Featurize { data } => {
            let ds = load_dataset_dir(&data)?;
            let fitted = FittedFeaturizer::fit(&ds, plan.featurize)?;
            let features = fitted.transform(&ds);
            features.save(&fitted, out)?;
            for t in &features.types {
                println!("{}: {} columns", t.schema.type_id, t.dim());
            }
        }
        Command::Graph { data, vectors } => {
            let ds = load_dataset_dir(&data)?;
            let external = vectors.as_deref().map(WordVectors::load).transpose()?;
            let art = build_affinity_graph(&ds, &plan.skipgram, plan.threshold, external)?;
            art.graph.save_edges(&out.join("edges.txt"))?;
            art.word_vectors.save(&out.join("word_vectors.txt"))?;
            println!(
                "{} nodes, {} edges, {} isolated",
                art.graph.len(),
                art.graph.edge_count(),
                art.graph.isolated_count()
            );
        }
        Command::TrainEmb {
            data,
            features,
            graph,
            modality,
            train: flags,
        } => {
            let mut cfg = plan.embedding;
            flags.apply(&mut cfg);
            cfg.validate()?;
            let ds = load_dataset_dir(&data)?;
            let set: ModalitySet = modality.parse()?;
            let (_, feats) = FeaturizedDataset::load(&features)?;
            let g = AffinityGraph::load_edges(&graph.join("edges.txt"), feats.ids.clone())?;
            let (types, _) = set.types(&ds);
            let inputs = embedding_inputs(&feats, &types)?;
            let outcome = train(&inputs, &g, &cfg)?;
            save_params(&outcome.params, &out.join("params.bin"))?;
            write_embeddings(out, &feats.ids, &inputs, &outcome.params)?;
            let mut loss = String::from("epoch,loss\n");
            for (e, l) in outcome.loss_trace.iter().enumerate() {
                loss.push_str(&format!("{e},{l}\n"));
            }
            std::fs::write(out.join("loss.csv"), loss).map_err(|e| Error::io(out.join("loss.csv"), e))?;
            println!(
                "final loss {:?}, skipped fraction {:.4}",
                outcome.loss_trace.last(),
                outcome.skipped_fraction
            );
        }
        Command::Represent {
            data,
            features,
            params,
            modality,
        } => {
            let ds = load_dataset_dir(&data)?;
            let set: ModalitySet = modality.parse()?;
            let (fitted, feats) = FeaturizedDataset::load(&features)?;
            let params = load_params(&params)?;
            let (emb_types, raw_types) = set.types(&ds);
            let inputs = embedding_inputs(&feats, &emb_types)?;
            let emb = embedded_repr(&feats.ids, &inputs, &params)?;
            let raw = raw_repr(&feats, &fitted, &raw_types)?;
            let comb = combined_repr(&emb, &raw)?;
            for m in [&raw, &emb, &comb] {
                m.save_csv(&out.join(format!("{}.csv", m.flavor)))?;
                println!("{}: {} columns", m.flavor, m.ncols());
            }
        }
        Command::Fit(a) => {
            let ds = load_dataset_dir(&a.data)?;
            let task: Task = a.task.parse()?;
            let size: SubsetSize = a.size.parse()?;
            let repr = RepresentationMatrix::load_csv(&a.repr, flavor_of(&a.repr)?)?;
            let store = LabelStore::new(&ds);
            let cands = labeled_train_ids(&ds, &store, task)?;
            let subset = draw_subset(&cands, size, plan.seed, a.draw)?;
            let y: Vec<f64> = subset
                .iter()
                .map(|&i| store.train_label(&ds.episodes[i].episode_id, task).map(|v| v.expect("labeled")))
                .collect::<Result<_>>()?;
            let rows = rows_for(&repr, &ds, &subset)?;
            let x = repr.select_rows(&rows);
            let spec = task.spec();
            let grid = HyperGrid::for_task(&spec);
            let cv = cv_select(x.view(), &y, &spec, &grid, plan.folds, plan.seed)?;
            let model = fit_model(&spec, &cv.best, x.view(), &y)?;
            write_json(&out.join("model.json"), &model)?;
            write_json(&out.join("grid.json"), &cv)?;
            println!("selected {} (cv {} = {:.4})", cv.best, spec.metric_name(), cv.scores[cv.best_index]);
        }
        Command::Eval {
            data,
            repr,
            model,
            task,
        } => {
            let ds = load_dataset_dir(&data)?;
            let task: Task = task.parse()?;
            let m = RepresentationMatrix::load_csv(&repr, flavor_of(&repr)?)?;
            let model: Model = read_json(&model)?;
            let store = LabelStore::new(&ds);
            let (test, y) = test_set(&ds, &store, task)?;
            let rows = rows_for(&m, &ds, &test)?;
            let pred = model.predict(m.select_rows(&rows).view())?;
            let value = evaluate(task, &pred, &y)?;
            let mut csv = String::from("episode_id,label,prediction\n");
            let scores: Vec<String> = match &pred {
                epmd::linear_models::Predictions::Probabilities(p) => p
                    .iter()
                    .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
                    .collect(),
                epmd::linear_models::Predictions::Values(v) => v.iter().map(|x| x.to_string()).collect(),
            };
            for ((&i, l), s) in test.iter().zip(&y).zip(&scores) {
                csv.push_str(&format!("{},{l},{s}\n", ds.episodes[i].episode_id));
            }
            std::fs::create_dir_all(out).map_err(|e| Error::io(out.clone(), e))?;
            std::fs::write(out.join("predictions.csv"), csv).map_err(|e| Error::io(out.join("predictions.csv"), e))?;
            write_json(
                &out.join("metric.json"),
                &serde_json::json!({ "task": task, "metric": task.metric_label(), "value": value, "n": y.len() }),
            )?;
            println!("{} = {value:.4} on {} test episodes", task.metric_label(), y.len());
        }
        Command::Analyze(a) => analyze(a, out)?,
        Command::Bench {
            data,
            sizes,
            repeats,
            tasks,
            modalities,
        } => {
            let mut plan = plan;
            if let Some(s) = sizes {
                plan.sizes = list(&s)?;
            }
            if let Some(r) = repeats {
                plan.repeats = r;
            }
            if let Some(t) = tasks {
                plan.tasks = list(&t)?;
            }
            if let Some(m) = modalities {
                plan.modality_sets = list(&m)?;
            }
            let ds = load_dataset_dir(&data)?;
            let report = run_experiment_on(&plan, &ds, out)?;
            print!("{}", report.render_markdown());
        }
        Command::Report { experiment } => {
            let report = ExperimentReport::load(&experiment)?;
            report.save(&experiment)?;
            print!("{}", report.render_markdown());
        }
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, out: &Path) -> Result<()> {
    use epmd::analysis::*;
    use std::collections::BTreeMap;

    let ds = load_dataset_dir(&a.data)?;
    let task: Task = a.task.parse()?;
    let (fitted, feats) = FeaturizedDataset::load(&a.features)?;
    let store = LabelStore::new(&ds);
    let (test, y) = test_set(&ds, &store, task)?;
    let ids: Vec<String> = test.iter().map(|&i| ds.episodes[i].episode_id.clone()).collect();
    let mut errors = BTreeMap::new();
    let mut emb_test = None;
    let mut emb_model = None;
    for (flavor, model_path) in [(Flavor::Raw, &a.raw_model), (Flavor::Embedded, &a.embedded_model)] {
        let m = RepresentationMatrix::load_csv(&a.repr_dir.join(format!("{flavor}.csv")), flavor)?;
        let model: Model = read_json(model_path)?;
        let rows = rows_for(&m, &ds, &test)?;
        let x = m.select_rows(&rows);
        let pred = model.predict(x.view())?;
        errors.insert(
            flavor,
            EpisodeErrors {
                flavor,
                ids: ids.clone(),
                errors: episode_errors(&pred, &y, task),
            },
        );
        if flavor == Flavor::Embedded {
            emb_test = Some(RepresentationMatrix {
                flavor,
                ids: ids.clone(),
                columns: m.columns.clone(),
                data: x,
            });
            emb_model = Some(model);
        }
    }
    let type_flags = type_observed_flags(&feats);
    let feat_pos: BTreeMap<&str, usize> = feats.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let fi: Vec<usize> = ids.iter().map(|id| feat_pos[id.as_str()]).collect();
    let counts: BTreeMap<String, usize> = ids
        .iter()
        .zip(&fi)
        .map(|(id, &i)| (id.clone(), type_flags.values().filter(|f| !f[i]).count()))
        .collect();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    missingness_error_profile(&errors[&Flavor::Raw], &errors[&Flavor::Embedded], &counts, type_flags.len())?
        .save_csv(&out.join("missingness_profile.csv"))?;
    let attrs: Vec<(String, Vec<bool>)> = attribute_observed_flags(&feats, &fitted)
        .into_iter()
        .map(|(n, f)| (n, fi.iter().map(|&i| f[i]).collect()))
        .collect();
    for (flavor, e) in &errors {
        save_feature_deltas(&feature_mae_delta(e, &attrs)?, &out.join(format!("feature_delta_{flavor}.csv")))?;
    }
    if let (Some(m), Some(model)) = (emb_test, emb_model) {
        let flags: BTreeMap<String, Vec<bool>> = type_flags
            .iter()
            .map(|(t, f)| (t.clone(), fi.iter().map(|&i| f[i]).collect()))
            .collect();
        let (w, _) = model.weights(1);
        feature_contribution(w, &m, &flags)?.save_csv(&out.join("contribution.csv"))?;
    }
    println!("analysis written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
