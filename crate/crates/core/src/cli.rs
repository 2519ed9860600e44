//! The `lidar-edge` command line.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error, 3 I/O or
//! format error, 4 missing prerequisite, 5 numeric divergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classical::{canny, roberts, sobel, CannyParams};
use crate::config::{Config, Variant};
use crate::data::load_split;
use crate::error::{Error, Result};
use crate::eval::{compare_detectors, gradient_edges, Detector};
use crate::imaging::{pgm, GrayImage, ProbMap};
use crate::lidar::{self, generate_dataset, load_manifest, write_manifest, Split, GENERATOR_VERSION};
use crate::nn::{BackwardFault, NestedNet, PatchNet, Tensor};
use crate::train::{
    grad_check, load_model, save_model, split_dataset, train_nested, train_patch, EpochRecord, GradCheckConfig, Model,
    OptimizerKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISSING: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

/// Maps a library error onto the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } | Error::ModelLoad { .. } => EXIT_IO,
        Error::Missing(_) => EXIT_MISSING,
        Error::Divergence(_) => EXIT_DIVERGENCE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "lidar-edge", version, about = "Edge detection on LiDAR range images")]
struct Cli {
    /// JSON config file; omitted keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for every artifact [default: config paths.out_dir = "out"]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic labelled dataset and split it.
    GenData(GenDataArgs),
    /// Train the nested or patch network on the training split.
    Train(TrainArgs),
    /// Run one detector on a single PGM or LRI1 image.
    Detect(DetectArgs),
    /// Score every detector on the test split.
    Compare(CompareArgs),
    /// Compare analytic and finite-difference gradients of both networks.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of samples [default: config dataset.n = 280]
    #[arg(long)]
    n: Option<usize>,
    /// Generator and split seed [default: config dataset.seed = 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Model to train: nested or patch [default: config model.variant = nested]
    #[arg(long)]
    variant: Option<Variant>,
    /// sgd, adam or rmsprop [default: config train.optimizer.kind = adam]
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// [default: config train.optimizer.learning_rate = 0.01]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// [default: config train.epochs = 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: config train.batch_size = 8]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initialisation, shuffling and augmentation seed [default: config train.seed = 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Train on at most this many training images [default: all]
    #[arg(long)]
    limit: Option<usize>,
    /// Enable data augmentation [default: config augment.enabled = false]
    #[arg(long, conflicts_with = "no_augment")]
    augment: bool,
    /// Disable data augmentation even if the config enables it.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input image: 8/16-bit PGM or LRI1 range raster.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// canny, sobel, roberts, cnn or patchcnn.
    #[arg(long, default_value = "canny")]
    algorithm: String,
    /// Edge map output [default: <out>/detect/<input stem>_<algorithm>.pgm]
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Model file for cnn/patchcnn [default: config paths.model / paths.patch_model]
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Binarisation threshold [default: config eval.cnn_threshold = 0.5 for networks,
    /// eval.gradient_threshold = 0.25 for sobel/roberts, eval.canny.high = 0.2 for canny]
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated detectors [default: config eval.detectors = cnn,canny,sobel,roberts]
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    /// Matching radius in pixels [default: config eval.tolerance = 0]
    #[arg(long)]
    tolerance: Option<usize>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Maximum relative error per tensor.
    #[arg(long, default_value_t = crate::train::gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = crate::train::gradcheck::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Seed for the random check instances.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Corrupt one backward path so the check must fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(out) = cli.out {
        cfg.paths.out_dir = out;
    }
    match cli.command {
        Command::GenData(a) => cmd_gen_data(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Detect(a) => cmd_detect(cfg, a),
        Command::Compare(a) => cmd_compare(cfg, a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct SplitCounts {
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    n: usize,
    seed: u64,
    generator_version: u32,
    delta: f64,
    height: usize,
    width: usize,
    counts: SplitCounts,
    /// Fraction of labelled edge pixels per split (train, val, test).
    edge_fraction: [f64; 3],
}

fn cmd_gen_data(mut cfg: Config, a: GenDataArgs) -> Result<i32> {
    if let Some(n) = a.n {
        cfg.dataset.n = n;
    }
    if let Some(seed) = a.seed {
        cfg.dataset.seed = seed;
    }
    cfg.validate()?;
    let dir = cfg.paths.dataset_dir();
    let d = &cfg.dataset;
    let manifest = generate_dataset(d.n, &cfg.lidar, &d.policy, d.delta, d.seed, &dir)?;
    let manifest = split_dataset(&manifest, d.ratios, d.seed)?;
    write_manifest(&dir, &manifest)?;

    let mut edge_fraction = [0.0; 3];
    for (slot, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
        let (mut edges, mut pixels) = (0usize, 0usize);
        for e in manifest.split(split) {
            let label = pgm::read_edges(&dir.join(&e.label))?;
            edges += label.count();
            pixels += label.len();
        }
        edge_fraction[slot] = if pixels > 0 { edges as f64 / pixels as f64 } else { 0.0 };
    }
    let summary = DatasetSummary {
        n: d.n,
        seed: d.seed,
        generator_version: GENERATOR_VERSION,
        delta: d.delta,
        height: cfg.lidar.height,
        width: cfg.lidar.width,
        counts: SplitCounts {
            train: manifest.count(Split::Train),
            val: manifest.count(Split::Val),
            test: manifest.count(Split::Test),
        },
        edge_fraction,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_text(&cfg.paths.out_dir.join("dataset_summary.json"), &json)?;
    println!(
        "generated {} samples in {}: train {}, val {}, test {}",
        d.n,
        dir.display(),
        summary.counts.train,
        summary.counts.val,
        summary.counts.test
    );
    Ok(EXIT_OK)
}

fn require_dataset(cfg: &Config) -> Result<(PathBuf, lidar::DatasetManifest)> {
    let dir = cfg.paths.dataset_dir();
    if !dir.join(lidar::MANIFEST_FILE).is_file() {
        return Err(Error::Missing(format!(
            "no dataset manifest at {}; run gen-data first",
            dir.join(lidar::MANIFEST_FILE).display()
        )));
    }
    let manifest = load_manifest(&dir)?;
    Ok((dir, manifest))
}

fn print_epoch(total: usize) -> impl FnMut(&EpochRecord) {
    move |r| println!("epoch {:>3}/{total}  loss {:.6}  val_f1 {:.4}", r.epoch, r.train_loss, r.val_f1)
}

fn cmd_train(mut cfg: Config, a: TrainArgs) -> Result<i32> {
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(k) = a.optimizer {
        cfg.train.optimizer.kind = k;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.optimizer.learning_rate = lr;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if a.augment {
        cfg.augment.enabled = true;
    }
    if a.no_augment {
        cfg.augment.enabled = false;
    }
    cfg.validate()?;
    let (dir, manifest) = require_dataset(&cfg)?;
    let dims = match cfg.model.variant {
        Variant::Nested => (cfg.model.nested.height, cfg.model.nested.width),
        Variant::Patch => (cfg.lidar.height, cfg.lidar.width),
    };
    let pre = &cfg.dataset.preprocess;
    let mut train = load_split(&dir, &manifest, Split::Train, dims, pre)?;
    if let Some(limit) = a.limit {
        train.truncate(limit);
    }
    let val = load_split(&dir, &manifest, Split::Val, dims, pre)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Missing(format!(
            "training needs nonempty train and val splits (found {} and {})",
            train.len(),
            val.len()
        )));
    }
    create_dir(&cfg.paths.out_dir)?;
    let mut progress = print_epoch(cfg.train.epochs);
    let (model, log) = match cfg.model.variant {
        Variant::Nested => {
            let (net, log) = train_nested(&train, &val, cfg.model.nested.clone(), &cfg.train, &cfg.augment, &mut progress)?;
            (Model::Nested(net), log)
        }
        Variant::Patch => {
            let (net, log) = train_patch(&train, &val, cfg.model.patch.clone(), &cfg.train, &cfg.augment, &mut progress)?;
            (Model::Patch(net), log)
        }
    };
    let model_path = cfg.paths.model_path(cfg.model.variant);
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&model, &model_path)?;
    write_text(&cfg.paths.runlog_path(cfg.model.variant), &log.to_csv())?;
    println!(
        "best validation F1 {:.4} at epoch {}{}; model written to {}",
        log.best_val_f1,
        log.best_epoch,
        if log.stopped_early { " (stopped early)" } else { "" },
        model_path.display()
    );
    Ok(EXIT_OK)
}

/// Loads a model file, reporting a missing file as a missing prerequisite.
fn require_model(path: &Path) -> Result<Model> {
    if !path.is_file() {
        return Err(Error::Missing(format!("model file {} not found; run train first", path.display())));
    }
    load_model(path)
}

fn require_nested(path: &Path) -> Result<NestedNet> {
    match require_model(path)? {
        Model::Nested(net) => Ok(net),
        other => Err(Error::Config(format!("{} holds a {} model, expected nested", path.display(), other.kind_name()))),
    }
}

fn require_patch(path: &Path) -> Result<PatchNet> {
    match require_model(path)? {
        Model::Patch(net) => Ok(net),
        other => Err(Error::Config(format!("{} holds a {} model, expected patch", path.display(), other.kind_name()))),
    }
}

/// Reads a PGM directly or converts an LRI1 range raster to intensity.
fn read_input(path: &Path, cfg: &Config) -> Result<GrayImage> {
    let mut magic = [0u8; 4];
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = bytes.len().min(4);
    magic[..n].copy_from_slice(&bytes[..n]);
    if &magic == lidar::lri::MAGIC {
        let range = lidar::lri::read_range_image(path, &cfg.lidar)?;
        Ok(lidar::range_to_intensity(&range))
    } else {
        pgm::read_image(path)
    }
}

fn check_threshold(t: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(Error::Config(format!("--threshold must be in [0, 1], got {t}")))
    }
}

fn write_prob(path: &Path, map: &ProbMap) -> Result<()> {
    pgm::write_image(path, &map.to_image())
}

fn cmd_detect(cfg: Config, a: DetectArgs) -> Result<i32> {
    const ALGORITHMS: [&str; 5] = ["canny", "sobel", "roberts", "cnn", "patchcnn"];
    let algorithm = a.algorithm.to_ascii_lowercase();
    if !ALGORITHMS.contains(&algorithm.as_str()) {
        return Err(Error::Config(format!("unknown algorithm {:?} (expected one of {})", a.algorithm, ALGORITHMS.join(", "))));
    }
    let img = cfg.dataset.preprocess.apply(&read_input(&a.input, &cfg)?)?;
    let output = a.output.unwrap_or_else(|| {
        let stem = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        cfg.paths.out_dir.join("detect").join(format!("{stem}_{algorithm}.pgm"))
    });
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let stem = output.with_extension("");
    let companion = |suffix: &str| PathBuf::from(format!("{}_{suffix}.pgm", stem.display()));

    let edges = match algorithm.as_str() {
        "canny" => {
            let high = check_threshold(a.threshold.unwrap_or(cfg.eval.canny.high))?;
            let low = if a.threshold.is_some() { high * cfg.eval.canny_low_ratio } else { cfg.eval.canny.low };
            canny(&img, CannyParams { sigma: cfg.eval.canny.sigma, low, high })?
        }
        "sobel" | "roberts" => {
            let t = check_threshold(a.threshold.unwrap_or(cfg.eval.gradient_threshold))?;
            let g = if algorithm == "sobel" { sobel(&img)? } else { roberts(&img)? };
            gradient_edges(&g, t)
        }
        "cnn" => {
            let t = check_threshold(a.threshold.unwrap_or(cfg.eval.cnn_threshold))?;
            let net = require_nested(&a.model.unwrap_or_else(|| cfg.paths.model_path(Variant::Nested)))?;
            let (h, w) = (net.arch.height, net.arch.width);
            if img.dims() != (h, w) {
                return Err(Error::dim(format!("model expects {h}x{w} input, image is {:?}", img.dims())));
            }
            let trace = net.forward(&Tensor::from_image(&img))?;
            write_prob(&companion("prob"), &trace.fused)?;
            for (i, side) in trace.sides.iter().enumerate() {
                write_prob(&companion(&format!("side{}", i + 1)), side)?;
            }
            trace.fused.threshold(t)
        }
        _ => {
            let t = check_threshold(a.threshold.unwrap_or(cfg.eval.cnn_threshold))?;
            let net = require_patch(&a.model.unwrap_or_else(|| cfg.paths.model_path(Variant::Patch)))?;
            let prob = net.predict_map(&img)?;
            write_prob(&companion("prob"), &prob)?;
            prob.threshold(t)
        }
    };
    pgm::write_edges(&output, &edges)?;
    println!("{}: {} edge pixels written to {}", algorithm, edges.count(), output.display());
    Ok(EXIT_OK)
}

fn cmd_compare(mut cfg: Config, a: CompareArgs) -> Result<i32> {
    if let Some(d) = a.detectors {
        cfg.eval.detectors = d.into_iter().map(|s| s.trim().to_ascii_lowercase()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(t) = a.tolerance {
        cfg.eval.tolerance = t;
    }
    cfg.validate()?;
    if cfg.eval.detectors.is_empty() {
        return Err(Error::Config("eval.detectors is empty".into()));
    }
    for name in &cfg.eval.detectors {
        if !["canny", "sobel", "roberts", "cnn", "patchcnn"].contains(&name.as_str()) {
            return Err(Error::Config(format!("eval.detectors: unknown detector {name:?}")));
        }
    }
    let (dir, manifest) = require_dataset(&cfg)?;
    let wants = |name: &str| cfg.eval.detectors.iter().any(|d| d == name);
    let nested = if wants("cnn") { Some(require_nested(&cfg.paths.model_path(Variant::Nested))?) } else { None };
    let patch = if wants("patchcnn") { Some(require_patch(&cfg.paths.model_path(Variant::Patch))?) } else { None };
    let dims = match &nested {
        Some(net) => (net.arch.height, net.arch.width),
        None => (cfg.lidar.height, cfg.lidar.width),
    };
    let pre = &cfg.dataset.preprocess;
    let val = load_split(&dir, &manifest, Split::Val, dims, pre)?;
    let test = load_split(&dir, &manifest, Split::Test, dims, pre)?;
    let detectors: Vec<Detector<'_>> = cfg
        .eval
        .detectors
        .iter()
        .map(|name| match name.as_str() {
            "canny" => Detector::Canny,
            "sobel" => Detector::Sobel,
            "roberts" => Detector::Roberts,
            "cnn" => Detector::Cnn(nested.as_ref().expect("loaded above")),
            _ => Detector::PatchCnn(patch.as_ref().expect("loaded above")),
        })
        .collect();
    let table = compare_detectors(&val, &test, &detectors, &cfg.eval.compare_settings())?;
    create_dir(&cfg.paths.out_dir)?;
    write_text(&cfg.paths.out_dir.join("comparison.csv"), &table.to_csv())?;
    for row in &table.rows {
        if let Some(curve) = &row.roc {
            write_text(&cfg.paths.out_dir.join(format!("roc_{}.csv", row.algorithm)), &curve.to_csv())?;
        }
    }
    print!("{}", table.to_text());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    if !(a.tolerance > 0.0 && a.epsilon > 0.0) {
        return Err(Error::Config("--tolerance and --epsilon must be > 0".into()));
    }
    let cfg = GradCheckConfig {
        seed: a.seed,
        epsilon: a.epsilon,
        tolerance: a.tolerance,
        fault: a.inject_fault.then_some(BackwardFault::FlipFirstStageInnerGradient),
        ..Default::default()
    };
    let reports = grad_check(&cfg)?;
    let mut ok = true;
    for report in &reports {
        for t in &report.tensors {
            let pass = t.max_rel_error <= report.tolerance;
            ok &= pass;
            println!(
                "{:<7} {:<20} {:>6} params  max rel err {:.3e}  {}",
                report.model,
                t.name,
                t.len,
                t.max_rel_error,
                if pass { "ok" } else { "FAIL" }
            );
        }
    }
    println!("gradcheck {} (tolerance {:e})", if ok { "passed" } else { "FAILED" }, a.tolerance);
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}
