use std::path::{Path, PathBuf};

use hgconv_core::benchmark::{run_filter_benchmark, write_bench_csv, BenchConfig};
use hgconv_core::io;
use hgconv_core::manifest::{RunManifest, MANIFEST_FILE};
use hgconv_core::training::{accuracy, derive_seed};
use hgconv_core::*;
use serde_json::{json, Value};

use crate::config::Resolver;
use crate::{CliError, Common, ModelArgs, OUT_ROOT_ENV};

type Res<T = ()> = std::result::Result<T, CliError>;

const MODEL_FILE: &str = "model.json";

/// `--out-dir` (or the command name), placed under `$HGCONV_OUT_ROOT` when relative.
fn resolve_out(path: Option<&Path>, command: &str) -> PathBuf {
    let p = path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(command));
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p,
    }
}

fn prepare_dir(common: &Common, command: &str) -> Res<PathBuf> {
    let dir = resolve_out(common.out_dir.as_deref(), command);
    if dir.exists() {
        let non_empty = std::fs::read_dir(&dir)
            .map_err(|e| CliError::Usage(format!("output {}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !common.force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(&dir).map_err(hgconv_core::Error::from)?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Res {
    let text = serde_json::to_string_pretty(value).map_err(hgconv_core::Error::from)?;
    std::fs::write(path, text).map_err(hgconv_core::Error::from)?;
    Ok(())
}

struct Run {
    manifest: RunManifest,
    dir: PathBuf,
}

impl Run {
    fn new(command: &str, dir: PathBuf, config: Value, seed: u64, inputs: &[(&str, &Path)]) -> Res<Self> {
        let mut manifest = RunManifest::new(command, config, seed);
        manifest.tool = "hgconv".to_string();
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        for (role, path) in inputs {
            manifest.add_input(role, path)?;
        }
        Ok(Run { manifest, dir })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self) -> Res {
        self.manifest.finish();
        self.manifest.write(&self.dir.join(MANIFEST_FILE))?;
        Ok(())
    }
}

fn parse<T: std::str::FromStr<Err = hgconv_core::Error>>(s: &str) -> Res<T> {
    Ok(s.parse::<T>()?)
}

fn model_configs(r: &mut Resolver, m: &ModelArgs, n_classes: usize, seed: u64) -> Res<(NetworkConfig, TrainConfig)> {
    let nd = NetworkConfig::default();
    let td = TrainConfig::default();
    let channels = r.get("channels", m.channels.clone(), nd.conv_channels.to_vec())?;
    let conv_channels: [usize; 3] = channels
        .try_into()
        .map_err(|c: Vec<usize>| CliError::Usage(format!("--channels needs 3 values, got {}", c.len())))?;
    let ncfg = NetworkConfig {
        k: r.get("k", m.k, nd.k)?,
        conv_channels,
        fc_width: r.get("fc_width", m.fc_width, nd.fc_width)?,
        n_classes,
        dropout_keep: r.get("dropout_keep", m.dropout_keep, nd.dropout_keep)?,
        laplacian_kind: parse(&r.get("laplacian", m.laplacian.clone(), "normalized".to_string())?)?,
        seed: derive_seed(seed, &[3]),
    };
    let tcfg = TrainConfig {
        epochs: r.get("epochs", m.epochs, td.epochs)?,
        batch_size: r.get("batch_size", m.batch_size, td.batch_size)?,
        learning_rate: r.get("lr", m.lr, td.learning_rate)?,
        weight_decay: r.get("weight_decay", m.weight_decay, td.weight_decay)?,
        optimizer: parse(&r.get("optimizer", m.optimizer.clone(), "adam".to_string())?)?,
        seed: derive_seed(seed, &[4]),
    };
    ncfg.validate()?;
    tcfg.validate()?;
    Ok((ncfg, tcfg))
}

fn write_curve(curve: &[CurvePoint], path: &Path) -> Res {
    let mut out = String::from("epoch,train_loss,train_acc,val_acc\n");
    for p in curve {
        let val = p.val_acc.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.epoch, p.train_loss, p.train_acc, val));
    }
    std::fs::write(path, out).map_err(hgconv_core::Error::from)?;
    Ok(())
}

pub fn infer_graph(common: &Common, signals: Option<PathBuf>, threshold: Option<f64>, out: Option<PathBuf>, dense: bool) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let signals = r.input("signals", signals)?;
    let threshold = r.get("threshold", threshold, 0.7)?;
    let dense = r.get("dense", dense.then_some(true), false)?;
    let config = r.finish()?;

    let x = io::read_signals(&signals)?;
    let corr = pearson_correlation(&x)?;
    let g = hgconv_core::infer_graph(&corr, threshold)?;

    let (dir, edges_name) = match out {
        Some(file) => {
            let file = resolve_out(Some(&file), "infer-graph");
            if file.exists() && !common.force {
                return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", file.display())));
            }
            let dir = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            std::fs::create_dir_all(&dir).map_err(hgconv_core::Error::from)?;
            let name = file.file_name().unwrap().to_string_lossy().into_owned();
            (dir, name)
        }
        None => (prepare_dir(common, "infer-graph")?, "edges.csv".to_string()),
    };
    let mut run = Run::new("infer-graph", dir, config, 0, &[("signals", &signals)])?;
    io::write_edge_list(&g, &run.path(&edges_name))?;
    if dense {
        io::write_dense_csv(corr.values(), &run.path("correlation.csv"))?;
        io::write_dense_csv(&g.to_dense(), &run.path("adjacency.csv"))?;
    }
    println!("{} nodes, {} edges above {threshold}", g.n(), g.n_edges());
    run.finish()
}

pub fn coarsen(common: &Common, edges: Option<PathBuf>, nodes: Option<usize>, levels: Option<usize>, seed: Option<u64>) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let edges = r.input("edges", edges)?;
    let nodes = r.opt("nodes", nodes)?;
    let levels = r.get("levels", levels, 3)?;
    let seed = r.get("seed", seed, 0)?;
    let config = r.finish()?;

    let g = io::read_edge_list(&edges, nodes)?;
    let h = build_hierarchy(&g, levels, seed)?;
    let dir = prepare_dir(common, "coarsen")?;
    let mut run = Run::new("coarsen", dir, config, seed, &[("edges", &edges)])?;
    write_json(&h.metadata(), &run.path("hierarchy.json"))?;
    for l in 0..=levels {
        io::write_dense_csv(&h.level_adjacency(l), &run.path(&format!("level{l}.csv")))?;
    }
    let sizes: Vec<String> = h.level_sizes().iter().map(usize::to_string).collect();
    println!("level sizes {}", sizes.join("/"));
    run.finish()
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    common: &Common,
    signals: Option<PathBuf>,
    labels: Option<PathBuf>,
    graph: Option<PathBuf>,
    threshold: Option<f64>,
    seed: Option<u64>,
    model: &ModelArgs,
) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let signals = r.input("signals", signals)?;
    let labels = r.input("labels", labels)?;
    let graph_path = r.opt_input("graph", graph)?;
    let threshold = r.get("threshold", threshold, 0.7)?;
    let seed = r.get("seed", seed, 0)?;
    let ds = io::load_dataset(&signals, &labels, None)?;
    let (ncfg, tcfg) = model_configs(&mut r, model, ds.n_classes(), seed)?;
    let config = r.finish()?;

    let g = match &graph_path {
        Some(p) => io::read_edge_list(p, Some(ds.n_nodes()))?,
        None => hgconv_core::infer_graph(&pearson_correlation(ds.signals())?, threshold)?,
    };
    let dir = prepare_dir(common, "train")?;
    let mut inputs = vec![("signals", signals.as_path()), ("labels", labels.as_path())];
    if let Some(p) = &graph_path {
        inputs.push(("graph", p.as_path()));
    }
    let mut run = Run::new("train", dir, config, seed, &inputs)?;
    let (m, curve) = hgconv_core::train(&ds, &g, &ncfg, &tcfg)?;
    write_model(&m, ds.class_names(), &run.path(MODEL_FILE))?;
    write_curve(&curve, &run.path("curve.csv"))?;
    io::write_edge_list(&g, &run.path("graph.csv"))?;
    if let Some(last) = curve.last() {
        println!("epoch {}: loss {:.4}, train accuracy {:.3}", last.epoch, last.train_loss, last.train_acc);
    }
    run.finish()
}

fn write_model(m: &ChebNetModel, class_names: &[String], path: &Path) -> Res {
    let model: Value = serde_json::from_str(&m.to_json()?).map_err(hgconv_core::Error::from)?;
    write_json(&json!({ "class_names": class_names, "model": model }), path)
}

fn read_model(path: &Path) -> Res<(ChebNetModel, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(hgconv_core::Error::from)?;
    let mut doc: Value = serde_json::from_str(&text).map_err(hgconv_core::Error::from)?;
    let classes: Vec<String> = serde_json::from_value(doc["class_names"].take())
        .map_err(|e| CliError::Usage(format!("{}: bad class_names: {e}", path.display())))?;
    let model = ChebNetModel::from_json(&doc["model"].to_string())?;
    if classes.len() != model.config().n_classes {
        return Err(CliError::Usage(format!("{}: class list does not match the model", path.display())));
    }
    Ok((model, classes))
}

pub struct CvArgs {
    pub signals: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub graph_mode: Option<String>,
    pub graph: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

pub fn cross_validate(common: &Common, a: CvArgs, model: &ModelArgs) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let signals = r.input("signals", a.signals)?;
    let labels = r.input("labels", a.labels)?;
    let folds = r.get("folds", a.folds, 5)?;
    let repeats = r.get("repeats", a.repeats, 10)?;
    let mode = r.get("graph_mode", a.graph_mode, "inferred".to_string())?;
    let graph_path = r.opt_input("graph", a.graph)?;
    let threshold = r.get("threshold", a.threshold, 0.7)?;
    let jobs = r.get("jobs", a.jobs, 1)?;
    let seed = r.get("seed", a.seed, 0)?;
    let ds = io::load_dataset(&signals, &labels, None)?;
    let (ncfg, tcfg) = model_configs(&mut r, model, ds.n_classes(), seed)?;
    let config = r.finish()?;

    let graph = match mode.as_str() {
        "inferred" => GraphSource::Inferred { threshold },
        "random" => GraphSource::Random { threshold },
        "empty" => GraphSource::Empty,
        "fixed" => {
            let p = graph_path
                .as_ref()
                .ok_or_else(|| CliError::Usage("--graph-mode fixed needs --graph".into()))?;
            GraphSource::Fixed {
                graph: io::read_edge_list(p, Some(ds.n_nodes()))?,
            }
        }
        other => return Err(CliError::Usage(format!("unknown graph mode '{other}'"))),
    };
    let cv = CvConfig {
        folds,
        repeats,
        seed,
        graph,
        jobs,
    };
    let dir = prepare_dir(common, "cross-validate")?;
    let mut inputs = vec![("signals", signals.as_path()), ("labels", labels.as_path())];
    if let Some(p) = &graph_path {
        inputs.push(("graph", p.as_path()));
    }
    let mut run = Run::new("cross-validate", dir, config, seed, &inputs)?;
    let report = hgconv_core::cross_validate(&ds, &ncfg, &tcfg, &cv)?;
    write_json(&report, &run.path("report.json"))?;
    std::fs::create_dir_all(run.dir.join("curves")).map_err(hgconv_core::Error::from)?;
    for rec in &report.runs {
        let name = format!("curves/repeat{}_fold{}.csv", rec.repeat, rec.fold);
        write_curve(&rec.curve, &run.path(&name))?;
    }
    println!(
        "{} runs, mean accuracy {:.4} (std {:.4})",
        report.runs.len(),
        report.mean_accuracy,
        report.std_accuracy
    );
    run.finish()
}

pub fn predict(common: &Common, model: Option<PathBuf>, signals: Option<PathBuf>, labels: Option<PathBuf>) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let model_path = r.input("model", model)?;
    let signals = r.input("signals", signals)?;
    let labels = r.opt_input("labels", labels)?;
    let config = r.finish()?;

    let (m, classes) = read_model(&model_path)?;
    let x = io::read_signals(&signals)?;
    let probs = m.forward(x.values())?;
    let predicted = argmax_rows(&probs);

    let dir = prepare_dir(common, "predict")?;
    let mut inputs = vec![("model", model_path.as_path()), ("signals", signals.as_path())];
    if let Some(p) = &labels {
        inputs.push(("labels", p.as_path()));
    }
    let mut run = Run::new("predict", dir, config, 0, &inputs)?;
    let mut out = String::from("subject_id,predicted");
    for c in &classes {
        out.push_str(&format!(",p_{c}"));
    }
    out.push('\n');
    for (s, id) in x.subject_ids().iter().enumerate() {
        out.push_str(&format!("{id},{}", classes[predicted[s]]));
        for c in 0..classes.len() {
            out.push_str(&format!(",{}", probs[(s, c)]));
        }
        out.push('\n');
    }
    std::fs::write(run.path("predictions.csv"), out).map_err(hgconv_core::Error::from)?;

    if let Some(p) = &labels {
        let ds = io::load_dataset(&signals, p, Some(&classes))?;
        let acc = accuracy(&predicted, ds.labels());
        write_json(&json!({ "accuracy": acc, "n_subjects": ds.n_subjects() }), &run.path("summary.json"))?;
        println!("accuracy {acc:.4} on {} subjects", ds.n_subjects());
    } else {
        println!("predicted {} subjects", predicted.len());
    }
    run.finish()
}

pub struct SynthArgs {
    pub nodes: Option<usize>,
    pub per_class: Option<usize>,
    pub classes: Option<usize>,
    pub blocks: Option<Vec<usize>>,
    pub strength: Option<f64>,
    pub noise: Option<f64>,
    pub offset: Option<f64>,
    pub seed: Option<u64>,
}

pub fn synth(common: &Common, a: SynthArgs) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let d = SyntheticSpec::default();
    let n_nodes = r.get("nodes", a.nodes, d.n_nodes)?;
    let default_blocks = if n_nodes == d.n_nodes {
        d.block_sizes.clone()
    } else {
        SyntheticSpec { n_nodes, ..d.clone() }.with_communities(d.block_sizes.len()).block_sizes
    };
    let spec = SyntheticSpec {
        n_nodes,
        n_subjects_per_class: r.get("per_class", a.per_class, d.n_subjects_per_class)?,
        n_classes: r.get("classes", a.classes, d.n_classes)?,
        block_sizes: r.get("blocks", a.blocks, default_blocks)?,
        strength: r.get("strength", a.strength, d.strength)?,
        noise_std: r.get("noise", a.noise, d.noise_std)?,
        class_offset: r.get("offset", a.offset, d.class_offset)?,
        seed: r.get("seed", a.seed, d.seed)?,
        ..d
    };
    let config = r.finish()?;
    let (ds, truth) = generate_synthetic(&spec)?;

    let dir = prepare_dir(common, "synth")?;
    let mut run = Run::new("synth", dir, config, spec.seed, &[])?;
    io::write_dataset(&ds, &run.path("signals.csv"), &run.path("labels.csv"))?;
    io::write_edge_list(&truth, &run.path("truth_edges.csv"))?;
    write_json(&spec, &run.path("spec.json"))?;
    println!("{} nodes x {} subjects, {} planted edges", ds.n_nodes(), ds.n_subjects(), truth.n_edges());
    run.finish()
}

pub fn benchmark(
    common: &Common,
    n: Option<usize>,
    k: Option<usize>,
    densities: Option<Vec<f64>>,
    repeats: Option<usize>,
    exact_limit: Option<usize>,
    seed: Option<u64>,
) -> Res {
    let mut r = Resolver::load(common.config.as_deref())?;
    let d = BenchConfig::default();
    let cfg = BenchConfig {
        n: r.get("n", n, d.n)?,
        k: r.get("k", k, d.k)?,
        densities: r.get("densities", densities, d.densities.clone())?,
        repeats: r.get("repeats", repeats, d.repeats)?,
        exact_limit: r.get("exact_limit", exact_limit, d.exact_limit)?,
        seed: r.get("seed", seed, d.seed)?,
    };
    let config = r.finish()?;
    if cfg.k == 0 || cfg.n < 2 || cfg.densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(CliError::Usage("benchmark needs k >= 1, n >= 2 and densities in [0, 1]".into()));
    }
    let rows = run_filter_benchmark(&cfg)?;
    let dir = prepare_dir(common, "benchmark")?;
    let mut run = Run::new("benchmark", dir, config, cfg.seed, &[])?;
    write_bench_csv(&rows, &run.path("benchmark.csv"))?;
    for row in &rows {
        println!("{:>9} n={} edges={} K={} {:.6}s", row.method, row.n, row.edges, row.k, row.seconds);
    }
    run.finish()
}
