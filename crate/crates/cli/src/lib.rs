//! Command-line workbench: synthesize data, train, evaluate, count and serve.
//!
//! `run` returns the process exit code: 0 on success, 1 for usage errors
//! (bad flags, bad config), 2 when the command itself fails.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use finnger_core::dataset::synth::synth_generate_split;
use finnger_core::dataset::{load_entries, split, DatasetManifest, Image, ManifestEntry};
use finnger_core::edgecount::count_fingers;
use finnger_core::eval::{emit_report, evaluate, EvalReport, ReportFormat};
use finnger_core::model::FinngerModel;
use finnger_core::trainer::{predict_samples, train_loop, TrainConfig};
use finnger_service::{LoadedModel, ServiceConfig};

use crate::config::{
    adam_config, edge_config, parse_triple, resolve_seed, EdgeOverrides, FileConfig, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS, DEFAULT_VAL_FRACTION, DEFAULT_WIDTH_SCALE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "finnger", version, about = "Finger-counting workbench: CNN and edge-heuristic counters")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness [default: config, then $FINNGER_SEED, then 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render seeded synthetic hand silhouettes into DIR/<label>/.
    Synth {
        /// Images per label.
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Images per label tagged for validation.
        #[arg(long, default_value_t = 0)]
        val_per_class: usize,
    },
    /// Train a counting network on a dataset directory.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Output model file.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Channel-width multiplier: 1, 0.5, 0.25 or 0.125 [default: 1].
        #[arg(long)]
        width_scale: Option<f64>,
        /// [default: 100]
        #[arg(long)]
        epochs: Option<usize>,
        /// [default: 32]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Adam learning rate [default: 0.0003].
        #[arg(long)]
        lr: Option<f64>,
        /// L2 weight decay [default: 0.0001].
        #[arg(long)]
        weight_decay: Option<f64>,
        /// Apply weight decay AdamW-style instead of through the gradient.
        #[arg(long)]
        decoupled_decay: bool,
        /// Validation share when the data carries no split tags [default: 0.15].
        #[arg(long)]
        val_fraction: Option<f64>,
        /// Turn off random flips and shifts.
        #[arg(long)]
        no_augment: bool,
        /// Also write the validation report (.json or .csv).
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Score a counter on a dataset and write a report.
    Eval {
        /// Model file; required for the cnn method.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Report path; `.csv` selects CSV unless --format says otherwise.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Cnn)]
        method: Method,
        #[arg(long, value_enum, default_value_t = Subset::All)]
        split: Subset,
        /// json or csv [default: from the report extension].
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        edge: EdgeArgs,
    },
    /// Count fingers in one image with the edge heuristic.
    Count {
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        /// Write per-stage PNGs here.
        #[arg(long, value_name = "DIR")]
        debug_dir: Option<PathBuf>,
        #[command(flatten)]
        edge: EdgeArgs,
    },
    /// Serve predictions and dataset capture over HTTP.
    Serve {
        /// Model file; without one /api/predict answers 503.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Enables POST /api/dataset/{label}.
        #[arg(long, value_name = "DIR")]
        dataset_dir: Option<PathBuf>,
        /// Static files served from / (the browser client).
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Cnn,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Train,
    Val,
}

#[derive(Debug, Clone, Args)]
pub struct EdgeArgs {
    /// Lower HSV bound as h,s,v (hue 0..179) [default: 0,0,90].
    #[arg(long, value_parser = parse_triple)]
    pub hsv_lower: Option<[u8; 3]>,
    /// Upper HSV bound as h,s,v [default: 179,255,255].
    #[arg(long, value_parser = parse_triple)]
    pub hsv_upper: Option<[u8; 3]>,
    /// Circle radius over the farthest hull vertex [default: 0.7].
    #[arg(long)]
    pub circle_ratio: Option<f64>,
    /// Widest finger arc as a fraction of a turn; wider arcs are the wrist [default: 0.25].
    #[arg(long)]
    pub wrist_max_angle: Option<f64>,
}

impl EdgeArgs {
    fn overrides(&self) -> EdgeOverrides {
        EdgeOverrides {
            hsv_lower: self.hsv_lower,
            hsv_upper: self.hsv_upper,
            circle_ratio: self.circle_ratio,
            wrist_max_angle: self.wrist_max_angle,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Results go to `out`; diagnostics to stderr.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let seed = resolve_seed(cli.seed, &file).map_err(Failure::Usage)?;
    let say = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(runtime("writing output"));
    match cli.command {
        Command::Synth { per_class, out: dir, val_per_class } => {
            if per_class == 0 || val_per_class > per_class {
                return Err(Failure::Usage("need --per-class > 0 and --val-per-class <= --per-class".into()));
            }
            let m = synth_generate_split(per_class, val_per_class, seed, &dir).map_err(runtime("synth"))?;
            say(out, format!("wrote {} images to {}", m.len(), dir.display()))
        }
        Command::Train {
            data,
            out: model_path,
            width_scale,
            epochs,
            batch_size,
            lr,
            weight_decay,
            decoupled_decay,
            val_fraction,
            no_augment,
            report,
        } => {
            let config = TrainConfig {
                epochs: epochs.or(file.epochs).unwrap_or(DEFAULT_EPOCHS),
                batch_size: batch_size.or(file.batch_size).unwrap_or(DEFAULT_BATCH_SIZE),
                adam: adam_config(&file, lr, weight_decay, decoupled_decay),
                seed,
                augment: !no_augment && file.augment.unwrap_or(true),
            };
            if config.batch_size == 0 {
                return Err(Failure::Usage("--batch-size must be positive".into()));
            }
            let width = width_scale.or(file.width_scale).unwrap_or(DEFAULT_WIDTH_SCALE);
            let fraction = val_fraction.or(file.val_fraction).unwrap_or(DEFAULT_VAL_FRACTION);
            let mut model = FinngerModel::build(seed, width).map_err(|e| Failure::Usage(e.to_string()))?;
            let manifest = DatasetManifest::scan(&data).map_err(runtime("reading dataset"))?;
            let (train, val) = match manifest.presplit() {
                Some(parts) => parts,
                None => split(&manifest, 1.0 - fraction, seed).map_err(runtime("splitting dataset"))?,
            };
            log::info!("training on {} samples, validating on {}", train.len(), val.len());
            let train = load_entries(&manifest, &train).map_err(runtime("loading training images"))?;
            let val = load_entries(&manifest, &val).map_err(runtime("loading validation images"))?;
            let outcome = train_loop(&mut model, &train, &val, &config, |s| {
                log::info!("epoch {:>3}  loss {:.4}  val acc {:.4}", s.epoch, s.train_loss, s.val_accuracy);
            })
            .map_err(runtime("training"))?;
            let info = model.save(&model_path).map_err(runtime("saving model"))?;
            if let Some(path) = report {
                write_report(&outcome.report, &outcome.confusion, None, &path)?;
            }
            say(
                out,
                format!(
                    "saved {} ({}); best epoch {}; val accuracy {:.4}",
                    model_path.display(),
                    info.version_string(),
                    outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
                    outcome.report.accuracy
                ),
            )
        }
        Command::Eval { model, data, report, method, split: subset, format, edge } => {
            let format = format
                .map(|f| f.parse::<ReportFormat>().map_err(|e| Failure::Usage(e.to_string())))
                .transpose()?;
            let manifest = DatasetManifest::scan(&data).map_err(runtime("reading dataset"))?;
            let entries: Vec<ManifestEntry> = match subset {
                Subset::All => manifest.entries.clone(),
                Subset::Train => manifest.with_split(finnger_core::dataset::Split::Train),
                Subset::Val => manifest.with_split(finnger_core::dataset::Split::Val),
            };
            let (matrix, summary) = match method {
                Method::Cnn => {
                    let path = model.ok_or_else(|| Failure::Usage("--model is required for --method cnn".into()))?;
                    let model = FinngerModel::load(&path).map_err(runtime("loading model"))?;
                    eval_cnn(&model, &manifest, &entries)?
                }
                Method::Edge => {
                    let config = edge_config(&file, &edge.overrides());
                    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
                    let pairs = entries.iter().map(|e| (manifest.resolve(e), e.label as usize));
                    evaluate(pairs, |path: PathBuf| -> Result<Option<u8>, String> {
                        let img = Image::open(&path).map_err(|e| e.to_string())?;
                        let r = count_fingers(&img, &config).map_err(|e| e.to_string())?;
                        Ok(r.outcome.count())
                    })
                    .map_err(runtime("evaluating"))?
                }
            };
            write_report(&summary, &matrix, format, &report)?;
            say(
                out,
                format!(
                    "accuracy {:.4} ({}/{}); std {:.4}; six-finger rate {:.4}; no-hand rate {:.4}",
                    summary.accuracy,
                    matrix.correct(),
                    matrix.total(),
                    summary.std_dev_fingers_error,
                    summary.six_finger_rate,
                    summary.no_hand_rate
                ),
            )
        }
        Command::Count { image, debug_dir, edge } => {
            let config = edge_config(&file, &edge.overrides());
            config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let img = Image::open(&image).map_err(runtime("reading image"))?;
            let result = count_fingers(&img, &config).map_err(runtime("counting"))?;
            if let Some(dir) = debug_dir {
                result.save_debug(&dir).map_err(runtime("writing debug images"))?;
            }
            match result.outcome.count() {
                Some(n) => say(out, n.to_string()),
                None => say(out, "no-hand".into()),
            }
        }
        Command::Serve { model, listen, dataset_dir, static_dir } => {
            let model = model
                .map(|p| LoadedModel::load(&p).map_err(runtime("loading model")))
                .transpose()?;
            if model.is_none() {
                log::warn!("no model given; predictions will answer 503");
            }
            let rt = tokio::runtime::Runtime::new().map_err(runtime("starting runtime"))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(listen).await.map_err(runtime("binding"))?;
                finnger_service::serve(listener, ServiceConfig { model, dataset_dir, static_dir })
                    .await
                    .map_err(runtime("serving"))
            })
        }
    }
}

fn eval_cnn(
    model: &FinngerModel,
    manifest: &DatasetManifest,
    entries: &[ManifestEntry],
) -> Result<(finnger_core::eval::ConfusionMatrix, EvalReport), Failure> {
    // Load in slices so large datasets never sit in memory at once.
    let mut predicted = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(64) {
        let samples = load_entries(manifest, chunk).map_err(runtime("loading images"))?;
        predicted.extend(predict_samples(model, &samples).map_err(runtime("predicting"))?);
    }
    let pairs = predicted.into_iter().zip(entries.iter().map(|e| e.label as usize));
    evaluate(pairs, |p| Ok::<_, std::convert::Infallible>(Some(p as u8))).map_err(runtime("evaluating"))
}

fn write_report(
    report: &EvalReport,
    matrix: &finnger_core::eval::ConfusionMatrix,
    format: Option<ReportFormat>,
    path: &Path,
) -> Result<(), Failure> {
    let format = format.unwrap_or_else(|| ReportFormat::for_path(path));
    let written = emit_report(report, matrix, format, path).map_err(runtime("writing report"))?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}
