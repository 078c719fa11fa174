//! Command-line front end for the quantile-marker fault-injection study.
//!
//! Subcommands cover the whole experiment flow: synthetic data generation,
//! classifier training, reference-bounds extraction, the injection
//! campaign, detector training across retraining seeds, feature reduction,
//! the search for disjoint minimal marker sets, stored-tree evaluation,
//! inference overhead measurement, and tree export.
//!
//! Every command that writes artifacts honors the `VIGILAR_OUT_DIR`
//! environment variable, which overrides the output directory given on the
//! command line.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use vigilar_core::corruption::FaultClass;
use vigilar_core::detector::eval::evaluate_tree;
use vigilar_core::detector::export::{rules_text, tree_from_json, tree_to_json};
use vigilar_core::detector::{TreeParams, DEFAULT_CCP_ALPHA};
use vigilar_core::harness::bench::{ci_separated, run_bench, Variant};
use vigilar_core::harness::dataset::{self, CLASSIFIER_TOPOLOGY};
use vigilar_core::harness::report::{
    overhead_csv, overhead_summary_csv, pool_json, read_records_csv, write_bounds_csv,
    write_pipeline_reports, write_records_csv,
};
use vigilar_core::harness::{
    build_seed_data, run_campaign, run_minimal_search, run_pipeline, split_seeds, CampaignConfig,
};
use vigilar_core::monitor::{monitored_forward, FeatureLayout, QuantileBounds};
use vigilar_core::net::io::{load_network, network_from_topology, save_network};
use vigilar_core::net::train::{accuracy, fit, TrainConfig};
use vigilar_core::net::Network;
use vigilar_core::reduction::reduce_features;
use vigilar_core::tensor::Tensor4;

/// Environment variable that overrides every output directory.
const OUT_DIR_ENV: &str = "VIGILAR_OUT_DIR";

#[derive(Parser)]
#[command(name = "vigilar", version, about = "Fault-injection experiments on quantile activation markers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset as IDX image/label pairs.
    GenData {
        /// Training images to generate.
        #[arg(long, default_value_t = 3000)]
        train: usize,
        /// Test images to generate.
        #[arg(long, default_value_t = 1000)]
        test: usize,
        /// Generator seed; the test split uses seed + 1.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for the four IDX files.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train the convolutional classifier and save it.
    TrainNet {
        /// Training images (IDX).
        #[arg(long)]
        images: PathBuf,
        /// Training labels (IDX).
        #[arg(long)]
        labels: PathBuf,
        /// Topology file; the built-in four-conv classifier when omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f32,
        #[arg(long, default_value_t = 0.9)]
        momentum: f32,
        /// Learning-rate multiplier applied after each epoch.
        #[arg(long, default_value_t = 0.85)]
        decay: f32,
        /// Seed for weight initialization and batch shuffling.
        #[arg(long, default_value_t = 2)]
        seed: u64,
        /// Held-out images for a final accuracy report.
        #[arg(long)]
        eval_images: Option<PathBuf>,
        /// Held-out labels for a final accuracy report.
        #[arg(long)]
        eval_labels: Option<PathBuf>,
        /// Model output path.
        #[arg(long, default_value = "model.qsnt")]
        out: PathBuf,
    },
    /// Run fault-free inferences and record per-layer quantile bounds.
    ExtractBounds {
        /// Trained model.
        #[arg(long)]
        net: PathBuf,
        /// Calibration images (IDX).
        #[arg(long)]
        images: PathBuf,
        /// Cap on calibration images; all of them when omitted.
        #[arg(long)]
        count: Option<usize>,
        /// Free-text tag stored in the bounds file header.
        #[arg(long, default_value = "calibration")]
        tag: String,
        /// Bounds output path.
        #[arg(long, default_value = "bounds.csv")]
        out: PathBuf,
    },
    /// Run the fault-injection campaign and write the outcome records.
    Campaign {
        /// Campaign configuration (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained model.
        #[arg(long)]
        net: PathBuf,
        /// Campaign images (IDX).
        #[arg(long)]
        images: PathBuf,
        /// Campaign labels (IDX).
        #[arg(long)]
        labels: PathBuf,
        /// Output directory for records.csv.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Train and evaluate detectors over all retraining seeds; write reports.
    TrainDetector {
        /// Campaign configuration (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Campaign records (records.csv).
        #[arg(long)]
        records: PathBuf,
        /// Output directory for the report set.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Reduce the detector to a small feature subset on the primary split.
    Reduce {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        /// Pruning strength; config value or the built-in default when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        /// Output directory for reduced_tree.json and reduced_rules.txt.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Search for disjoint minimal feature sets on the primary split.
    SearchMinimal {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        /// Pruning strength; config value or the built-in default when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        /// Output directory for pool.json.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a stored tree on the held-out side of a campaign split.
    Evaluate {
        /// Tree file (tree.json or reduced_tree.json).
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        /// Which retraining seed's split to evaluate on.
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
    },
    /// Compare inference wall-clock time across monitoring variants.
    Bench {
        /// Trained model.
        #[arg(long)]
        net: PathBuf,
        /// Benchmark images (IDX).
        #[arg(long)]
        images: PathBuf,
        /// Images per rep (prefix of the image file).
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Measured reps per variant.
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Warmup rounds excluded from the measurement.
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Reduced tree whose used features define the reduced monitor.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Comma-separated feature indices for the reduced monitor.
        #[arg(long, conflicts_with = "tree")]
        features: Option<String>,
        /// Output directory for overhead.csv and overhead_summary.csv.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print or save the decision rules of a stored tree.
    ExportTree {
        /// Tree file (tree.json or reduced_tree.json).
        #[arg(long)]
        tree: PathBuf,
        /// Write rules.txt and a re-serialized tree.json here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            train,
            test,
            seed,
            out,
        } => gen_data(train, test, seed, &out),
        Command::TrainNet {
            images,
            labels,
            topology,
            epochs,
            batch,
            lr,
            momentum,
            decay,
            seed,
            eval_images,
            eval_labels,
            out,
        } => train_net(
            &images,
            &labels,
            topology.as_deref(),
            TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                momentum,
                lr_decay: decay,
                seed,
            },
            eval_images.as_deref(),
            eval_labels.as_deref(),
            &out,
        ),
        Command::ExtractBounds {
            net,
            images,
            count,
            tag,
            out,
        } => extract_bounds(&net, &images, count, &tag, &out),
        Command::Campaign {
            config,
            net,
            images,
            labels,
            out,
        } => campaign(config.as_deref(), &net, &images, &labels, &out),
        Command::TrainDetector {
            config,
            records,
            out,
        } => train_detector(config.as_deref(), &records, &out),
        Command::Reduce {
            config,
            records,
            alpha,
            out,
        } => reduce(config.as_deref(), &records, alpha, &out),
        Command::SearchMinimal {
            config,
            records,
            alpha,
            out,
        } => search_minimal(config.as_deref(), &records, alpha, &out),
        Command::Evaluate {
            tree,
            config,
            records,
            seed_index,
        } => evaluate(&tree, config.as_deref(), &records, seed_index),
        Command::Bench {
            net,
            images,
            count,
            reps,
            warmup,
            tree,
            features,
            out,
        } => bench(
            &net,
            &images,
            count,
            reps,
            warmup,
            tree.as_deref(),
            features.as_deref(),
            &out,
        ),
        Command::ExportTree { tree, out } => export_tree(&tree, out.as_deref()),
    }
}

/// The effective output directory: the environment override when set,
/// otherwise the command-line value.
fn out_dir(cli_dir: &Path) -> PathBuf {
    match env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cli_dir.to_path_buf(),
    }
}

/// The effective path for a single output file: re-rooted into the
/// environment override when set, otherwise the command-line value.
fn out_file(cli_path: &Path) -> PathBuf {
    match env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => {
            let name = cli_path.file_name().expect("output path names a file");
            Path::new(&v).join(name)
        }
        _ => cli_path.to_path_buf(),
    }
}

fn load_config(path: Option<&Path>) -> Result<CampaignConfig> {
    match path {
        Some(p) => {
            CampaignConfig::load(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(CampaignConfig::default()),
    }
}

fn load_net(path: &Path) -> Result<Network> {
    load_network(path).with_context(|| format!("loading network {}", path.display()))
}

fn load_images(path: &Path) -> Result<Tensor4> {
    dataset::read_idx_images(path).with_context(|| format!("loading images {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn tree_names(layout: FeatureLayout) -> (Vec<String>, Vec<String>) {
    let features = (0..layout.len()).map(|i| layout.name(i)).collect();
    let classes = FaultClass::ALL
        .iter()
        .map(|c| c.as_str().to_string())
        .collect();
    (features, classes)
}

fn gen_data(train: usize, test: usize, seed: u64, out: &Path) -> Result<()> {
    let dir = out_dir(out);
    ensure_dir(&dir)?;
    let train_set = dataset::generate(train, seed);
    let test_set = dataset::generate(test, seed + 1);
    dataset::write_idx_images(&dir.join("train-images.idx"), &train_set.images)?;
    dataset::write_idx_labels(&dir.join("train-labels.idx"), &train_set.labels)?;
    dataset::write_idx_images(&dir.join("test-images.idx"), &test_set.images)?;
    dataset::write_idx_labels(&dir.join("test-labels.idx"), &test_set.labels)?;
    println!(
        "wrote {} train and {} test images to {}",
        train,
        test,
        dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_net(
    images: &Path,
    labels: &Path,
    topology: Option<&Path>,
    cfg: TrainConfig,
    eval_images: Option<&Path>,
    eval_labels: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let data = dataset::read_pair(images, labels)?;
    let text = match topology {
        Some(p) => {
            fs::read_to_string(p).with_context(|| format!("reading topology {}", p.display()))?
        }
        None => CLASSIFIER_TOPOLOGY.to_string(),
    };
    let mut net = network_from_topology(&text, cfg.seed)?;
    println!(
        "training {} parameters on {} images",
        net.param_count(),
        data.len()
    );
    let stats = fit(&mut net, &data.images, &data.labels, &cfg)?;
    for s in &stats {
        println!("epoch {}: mean loss {:.4}", s.epoch, s.mean_loss);
    }
    let train_acc = accuracy(&net, &data.images, &data.labels)?;
    println!("train accuracy {:.2}%", 100.0 * train_acc);
    if let (Some(ei), Some(el)) = (eval_images, eval_labels) {
        let eval = dataset::read_pair(ei, el)?;
        let acc = accuracy(&net, &eval.images, &eval.labels)?;
        println!("eval accuracy {:.2}%", 100.0 * acc);
    }
    let path = out_file(out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_network(&net, &path)?;
    println!("saved model to {}", path.display());
    Ok(())
}

fn extract_bounds(
    net_path: &Path,
    images_path: &Path,
    count: Option<usize>,
    tag: &str,
    out: &Path,
) -> Result<()> {
    let net = load_net(net_path)?;
    let images = load_images(images_path)?;
    let n = count.unwrap_or(images.n()).min(images.n());
    if n == 0 {
        bail!("no calibration images");
    }
    let layout = FeatureLayout::new(net.conv_layers());
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let run = monitored_forward(&net, &images.slice_sample(i), None)?;
        if run.due {
            bail!("calibration image {i} produced non-finite activations");
        }
        rows.push(run.raw_quantiles);
    }
    let bounds = QuantileBounds::from_rows(layout, rows.iter().map(|r| r.as_slice()))?;
    let path = out_file(out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_bounds_csv(&path, tag, &bounds)?;
    println!(
        "bounds over {} images ({} layers x 11 percentiles) written to {}",
        n,
        layout.layers,
        path.display()
    );
    Ok(())
}

fn campaign(
    config: Option<&Path>,
    net_path: &Path,
    images_path: &Path,
    labels_path: &Path,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let net = load_net(net_path)?;
    let data = dataset::read_pair(images_path, labels_path)?;
    println!(
        "campaign: {} images x {} injections + {} accelerated epochs",
        cfg.images, cfg.fis_per_image, cfg.accelerated_epochs
    );
    let campaign = run_campaign(&net, &data.images, &data.labels, &cfg)?;
    let summary = campaign.summary();
    let dir = out_dir(out);
    ensure_dir(&dir)?;
    let path = dir.join("records.csv");
    write_records_csv(&path, &campaign)?;
    println!(
        "{} records ({} faulty, {} fault-free, {} DUE), balance {:.2}:1",
        summary.records, summary.faulty, summary.fault_free, summary.due, summary.balance_ratio
    );
    for (label, count) in &summary.label_counts {
        println!("  label {label}: {count}");
    }
    println!("records written to {}", path.display());
    Ok(())
}

fn train_detector(config: Option<&Path>, records: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let campaign = read_records_csv(records)?;
    let pipeline = run_pipeline(&campaign, &cfg)?;
    if let Some(sweep) = &pipeline.sweep {
        for (alpha, objective) in sweep {
            println!("alpha {alpha}: validation objective {objective:.4}");
        }
    }
    println!("pruning alpha {}", pipeline.alpha);
    let dir = out_dir(out);
    let paths = write_pipeline_reports(&dir, &cfg, &campaign, &pipeline, None)?;
    println!(
        "full detector:    P_sdc {:.4} R_sdc {:.4} (mean over {} seeds)",
        pipeline.full_mean.p_sdc,
        pipeline.full_mean.r_sdc,
        pipeline.seeds.len()
    );
    println!(
        "reduced detector: P_sdc {:.4} R_sdc {:.4}, {:.1}/{:.1} features/layers",
        pipeline.reduced_mean.p_sdc,
        pipeline.reduced_mean.r_sdc,
        pipeline.reduced_mean.n_ft,
        pipeline.reduced_mean.n_l
    );
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn reduce(
    config: Option<&Path>,
    records: &Path,
    alpha: Option<f64>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let campaign = read_records_csv(records)?;
    let alpha = alpha.or(cfg.ccp_alpha).unwrap_or(DEFAULT_CCP_ALPHA);
    let data = build_seed_data(&campaign, &cfg, split_seeds(&cfg)[0])?;
    let params = TreeParams {
        ccp_alpha: alpha,
        allowed_features: None,
        seed: cfg.seed,
    };
    let reduction = reduce_features(
        &data.train,
        &data.test,
        campaign.layout,
        &params,
        None,
        cfg.retention,
        None,
    )?;
    println!(
        "full model: P_cls {:.4} R_cls {:.4}",
        reduction.full_precision, reduction.full_recall
    );
    for step in &reduction.steps {
        println!(
            "k={}: P_cls {:.4} R_cls {:.4} {}",
            step.k,
            step.precision,
            step.recall,
            if step.accepted { "accepted" } else { "rejected" }
        );
    }
    let model = &reduction.model;
    let names: Vec<String> = model
        .used
        .iter()
        .map(|&f| campaign.layout.name(f))
        .collect();
    println!(
        "reduced model uses {} features from {} layers: {}",
        model.n_ft,
        model.n_l,
        names.join(" ")
    );
    let dir = out_dir(out);
    ensure_dir(&dir)?;
    let (feature_names, class_names) = tree_names(campaign.layout);
    let tree_path = dir.join("reduced_tree.json");
    fs::write(
        &tree_path,
        tree_to_json(&model.tree, &feature_names, &class_names)?,
    )?;
    let rules_path = dir.join("reduced_rules.txt");
    fs::write(
        &rules_path,
        rules_text(&model.tree, &feature_names, &class_names)?,
    )?;
    println!("wrote {}", tree_path.display());
    println!("wrote {}", rules_path.display());
    Ok(())
}

fn search_minimal(
    config: Option<&Path>,
    records: &Path,
    alpha: Option<f64>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let campaign = read_records_csv(records)?;
    let alpha = alpha.or(cfg.ccp_alpha).unwrap_or(DEFAULT_CCP_ALPHA);
    let pool = run_minimal_search(&campaign, &cfg, alpha)?;
    println!(
        "baseline P_cls {:.4} R_cls {:.4}",
        pool.baseline.0, pool.baseline.1
    );
    for round in &pool.rounds {
        let names: Vec<String> = round
            .model
            .used
            .iter()
            .map(|&f| campaign.layout.name(f))
            .collect();
        println!(
            "round {}: {} features [{}] P_cls {:.4} R_cls {:.4}",
            round.round,
            round.model.n_ft,
            names.join(" "),
            round.model.precision,
            round.model.recall
        );
    }
    println!(
        "pool holds {} disjoint sets; search stopped: {}",
        pool.pool.len(),
        pool.stopped.as_str()
    );
    let dir = out_dir(out);
    ensure_dir(&dir)?;
    let path = dir.join("pool.json");
    fs::write(&path, pool_json(&pool, campaign.layout)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate(
    tree_path: &Path,
    config: Option<&Path>,
    records: &Path,
    seed_index: usize,
) -> Result<()> {
    let cfg = load_config(config)?;
    let campaign = read_records_csv(records)?;
    let seeds = split_seeds(&cfg);
    if seed_index >= seeds.len() {
        bail!(
            "seed index {} out of range; config trains {} seeds",
            seed_index,
            seeds.len()
        );
    }
    let data = build_seed_data(&campaign, &cfg, seeds[seed_index])?;
    let text = fs::read_to_string(tree_path)
        .with_context(|| format!("reading tree {}", tree_path.display()))?;
    let (tree, _, _) = tree_from_json(&text)?;
    let report = evaluate_tree(&tree, &data.test)?;
    println!(
        "{} held-out records, split seed {}",
        report.n, seeds[seed_index]
    );
    println!("mode precision recall");
    println!("cls  {:.4}    {:.4}", report.cls.precision, report.cls.recall);
    println!("cat  {:.4}    {:.4}", report.cat.precision, report.cat.recall);
    println!("sdc  {:.4}    {:.4}", report.sdc.precision, report.sdc.recall);
    for c in &report.per_class {
        println!(
            "  {}: precision {:.4} recall {:.4} ({} true)",
            c.class, c.precision, c.recall, c.support
        );
    }
    Ok(())
}

fn parse_feature_list(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<usize>()
                .with_context(|| format!("bad feature index {part:?}"))?,
        );
    }
    if out.is_empty() {
        bail!("feature list is empty");
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn bench(
    net_path: &Path,
    images_path: &Path,
    count: usize,
    reps: usize,
    warmup: usize,
    tree: Option<&Path>,
    features: Option<&str>,
    out: &Path,
) -> Result<()> {
    let net = load_net(net_path)?;
    let images = load_images(images_path)?;
    if count == 0 || count > images.n() {
        bail!("image count must lie in 1..={}", images.n());
    }
    let layout = FeatureLayout::new(net.conv_layers());
    let reduced: Vec<usize> = match (tree, features) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading tree {}", path.display()))?;
            let (tree, _, _) = tree_from_json(&text)?;
            tree.used_features().into_iter().collect()
        }
        (None, Some(list)) => parse_feature_list(list)?,
        (None, None) => bail!("pass --tree or --features to define the reduced monitor"),
    };
    let (_, c, h, w) = images.shape();
    let subset = Tensor4::new(count, c, h, w, images.data()[..count * c * h * w].to_vec())?;
    println!(
        "timing {} variants x {} reps over {} images ({} warmup rounds)",
        Variant::ALL.len(),
        reps,
        count,
        warmup
    );
    let result = run_bench(&net, &subset, layout, &reduced, reps, warmup)?;
    let summaries = result.summaries();
    println!("variant reps mean_s_per_image ci95 vs_plain");
    for s in &summaries {
        println!(
            "{} {} {:.6} [{:.6}, {:.6}] {:+.1}%",
            s.variant.as_str(),
            s.reps,
            s.mean,
            s.ci_lo,
            s.ci_hi,
            100.0 * s.vs_plain
        );
    }
    let by = |v: Variant| summaries.iter().find(|s| s.variant == v).unwrap();
    let checks = [
        ("plain < reduced_monitor", ci_separated(by(Variant::Plain), by(Variant::Reduced))),
        ("reduced_monitor < full_monitor", ci_separated(by(Variant::Reduced), by(Variant::Full))),
        ("reduced_monitor < feature_trace", ci_separated(by(Variant::Reduced), by(Variant::Trace))),
    ];
    for (name, ok) in checks {
        println!("{name}: {}", if ok { "CI-separated" } else { "overlapping CIs" });
    }
    let dir = out_dir(out);
    ensure_dir(&dir)?;
    let raw_path = dir.join("overhead.csv");
    fs::write(&raw_path, overhead_csv(&result))?;
    let summary_path = dir.join("overhead_summary.csv");
    fs::write(&summary_path, overhead_summary_csv(&result))?;
    println!("wrote {}", raw_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn export_tree(tree_path: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(tree_path)
        .with_context(|| format!("reading tree {}", tree_path.display()))?;
    let (tree, feature_names, class_names) = tree_from_json(&text)?;
    let rules = rules_text(&tree, &feature_names, &class_names)?;
    println!(
        "{} leaves, depth {}, {} features used",
        tree.n_leaves(),
        tree.max_depth(),
        tree.used_features().len()
    );
    match out {
        Some(dir) => {
            let dir = out_dir(dir);
            ensure_dir(&dir)?;
            let rules_path = dir.join("rules.txt");
            fs::write(&rules_path, &rules)?;
            let json_path = dir.join("tree.json");
            fs::write(
                &json_path,
                tree_to_json(&tree, &feature_names, &class_names)?,
            )?;
            println!("wrote {}", rules_path.display());
            println!("wrote {}", json_path.display());
        }
        None => print!("{rules}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::parse_feature_list;

    #[test]
    fn feature_lists_parse_with_spaces_and_trailing_commas() {
        assert_eq!(parse_feature_list("3").unwrap(), vec![3]);
        assert_eq!(parse_feature_list("0, 17,5,").unwrap(), vec![0, 17, 5]);
        assert!(parse_feature_list("").is_err());
        assert!(parse_feature_list("2,x").is_err());
    }
}
