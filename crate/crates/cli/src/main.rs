//! `cloudup` command line: upsample, gen-data, train, eval.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cloudup::config::PipelineConfig;
use cloudup::dataprep::{build_training_set, DataPrepConfig, TrainingSet};
use cloudup::error::Error;
use cloudup::metrics::{evaluate, EvalConfig};
use cloudup::nn::{save_params, train, AdamHyper, HeadNorm, TrainConfig, TrainTask};
use cloudup::pipeline::{upsample, EstimatorSpec};
use cloudup::shapes::SurfaceSource;

#[derive(Parser)]
#[command(
    name = "cloudup",
    version,
    about = "Self-supervised arbitrary-scale point cloud upsampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upsample a sparse point cloud by one or more scale factors.
    Upsample(UpsampleArgs),
    /// Generate pretext-task training data.
    GenData(GenDataArgs),
    /// Train the direction or distance network on a training set.
    Train(TrainArgs),
    /// Evaluate a predicted cloud against a reference cloud and surface.
    Eval(EvalArgs),
}

#[derive(Args)]
struct UpsampleArgs {
    /// Input cloud (.xyz or .ply).
    #[arg(long)]
    input: PathBuf,
    /// Output path; with several --scale flags, `_x<r>` is inserted before
    /// the extension.
    #[arg(long)]
    output: PathBuf,
    /// Scale factor r; repeatable. All scales share one dense pass.
    #[arg(long = "scale", required = true)]
    scales: Vec<f64>,
    /// Flat key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimator: `analytic:<shape-spec>` or `learned:<dir>,<dist>`.
    #[arg(long)]
    estimator: Option<String>,
    /// Shorthand for `--estimator learned:<dir>,<dist>`.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Abort on the first failing seed instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Surface source: a shape spec (`sphere:0,0,0,0.4`) or `mesh:<path.obj>`;
    /// repeatable.
    #[arg(long = "source", required = true)]
    sources: Vec<String>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5000)]
    seeds_per_source: usize,
    #[arg(long, default_value_t = 2048)]
    cloud_size: usize,
    #[arg(long, default_value_t = 16)]
    group_size: usize,
    #[arg(long, default_value_t = 0.011)]
    dist_lower: f64,
    #[arg(long, default_value_t = 0.015)]
    dist_upper: f64,
    /// Band widening epsilon.
    #[arg(long, default_value_t = 0.002)]
    epsilon: f64,
    /// Tangent-disk radius for the ground-truth direction average.
    #[arg(long, default_value_t = 0.004)]
    gt_sample_radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// `direction` or `distance`.
    #[arg(long)]
    task: TrainTaskArg,
    /// Training-set file from gen-data.
    #[arg(long)]
    input: PathBuf,
    /// Output parameter file.
    #[arg(long)]
    output: PathBuf,
    /// Loss-curve CSV path (default: `<output>.loss.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Neighborhood size; defaults to 100 (direction) or 30 (distance).
    #[arg(long)]
    input_k: Option<usize>,
    /// Encoder per-point widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    encoder: Option<Vec<usize>>,
    /// Head hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    head: Option<Vec<usize>>,
    /// Head normalization: none, layer, or batch.
    #[arg(long, default_value = "layer")]
    norm: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy)]
struct TrainTaskArg(TrainTask);

impl std::str::FromStr for TrainTaskArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<TrainTask>()
            .map(TrainTaskArg)
            .map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Reference surface: shape spec or `mesh:<path.obj>`.
    #[arg(long)]
    surface: String,
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    /// NUC area fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    nuc_p: Option<Vec<f64>>,
    #[arg(long, default_value_t = 9000)]
    n_disks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print table-scaled values (x10^3, NUC rows by p x10^-2).
    #[arg(long)]
    table: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Upsample(args) => run_staged("upsample", || cmd_upsample(args)),
        Command::GenData(args) => run_staged("gen-data", || cmd_gen_data(args)),
        Command::Train(args) => run_staged("train", || cmd_train(args)),
        Command::Eval(args) => run_staged("eval", || cmd_eval(args)),
    };
    std::process::exit(code);
}

/// A stage label plus the underlying error; every CLI failure names the
/// stage it came from.
struct StageError {
    stage: &'static str,
    error: Error,
}

trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Staged<T> for Result<T, Error> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

fn run_staged(command: &str, f: impl FnOnce() -> Result<(), StageError>) -> i32 {
    match f() {
        Ok(()) => 0,
        Err(StageError { stage, error }) => {
            eprintln!("cloudup {command}: error in {stage}: {error}");
            exit_code(&error)
        }
    }
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Diverged { .. } | Error::NonFinite { .. } => 3,
        Error::InvalidParameter(_) => 1,
        Error::SeedProjection { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn parse_surface(spec: &str) -> Result<SurfaceSource, Error> {
    if let Some(path) = spec.strip_prefix("mesh:") {
        let mesh = cloudup::io::read_obj(Path::new(path.trim()))?;
        return Ok(SurfaceSource::Mesh(mesh));
    }
    Ok(SurfaceSource::Analytic(spec.parse()?))
}

fn scale_suffix(factor: f64) -> String {
    if factor.fract() == 0.0 {
        format!("{}", factor as u64)
    } else {
        format!("{factor}")
    }
}

fn output_path_for_scale(base: &Path, factor: f64, single: bool) -> PathBuf {
    if single {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("xyz");
    base.with_file_name(format!("{stem}_x{}.{ext}", scale_suffix(factor)))
}

fn cmd_upsample(args: UpsampleArgs) -> Result<(), StageError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path).stage("config loading")?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if args.strict {
        config.strict = true;
    }

    let estimator_spec = match (&args.estimator, &args.params) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter(
                "--estimator and --params are mutually exclusive".into(),
            ))
            .stage("argument parsing")
        }
        (Some(est), None) => est.clone(),
        (None, Some(params)) => format!("learned:{params}"),
        (None, None) => config.estimator.clone().ok_or_else(|| {
            Error::InvalidParameter(
                "an estimator is required (--estimator, --params, or config key)".into(),
            )
        })
        .stage("argument parsing")?,
    };
    let estimator = EstimatorSpec::parse(&estimator_spec).stage("estimator loading")?;

    let input = cloudup::io::read_cloud(&args.input).stage("input parsing")?;
    println!("[upsample] input: {} points from {}", input.len(), args.input.display());

    let start = Instant::now();
    let output = upsample(&input, &args.scales, &estimator, &config).stage("pipeline")?;

    for (name, duration) in &output.stats.stage_timings {
        println!("[upsample] {name}: {:.1} ms", duration.as_secs_f64() * 1e3);
    }
    println!(
        "[upsample] seeds: {}, projected: {} (skipped {}, negative-distance clamped {}), outliers removed: {}, dense: {}",
        output.stats.seed_count,
        output.stats.projection.projected,
        output.stats.projection.skipped,
        output.stats.projection.negative_distance_clamped,
        output.stats.outliers_removed,
        output.stats.dense_size
    );

    let single = output.scales.len() == 1;
    for (factor, cloud) in &output.scales {
        let path = output_path_for_scale(&args.output, *factor, single);
        cloudup::io::write_cloud(&path, cloud).stage("output writing")?;
        println!(
            "[upsample] x{}: {} points -> {}",
            scale_suffix(*factor),
            cloud.len(),
            path.display()
        );
    }
    println!(
        "[upsample] total: {:.1} ms",
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), StageError> {
    let sources: Vec<SurfaceSource> = args
        .sources
        .iter()
        .map(|s| parse_surface(s))
        .collect::<Result<_, _>>()
        .stage("source parsing")?;
    let config = DataPrepConfig {
        seeds_per_source: args.seeds_per_source,
        sparse_size: args.cloud_size,
        group_size: args.group_size,
        dist_lower: args.dist_lower,
        dist_upper: args.dist_upper,
        epsilon: args.epsilon,
        gt_sample_radius: args.gt_sample_radius,
        master_seed: args.seed,
    };
    let start = Instant::now();
    let set = build_training_set(&sources, &config).stage("data generation")?;
    std::fs::write(&args.output, set.serialize())
        .map_err(|e| Error::io(format!("writing {}", args.output.display()), e))
        .stage("output writing")?;
    println!(
        "[gen-data] {} samples, {} clouds ({} points each) -> {} in {:.1} ms",
        set.samples.len(),
        set.clouds.len(),
        set.sparse_size,
        args.output.display(),
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), StageError> {
    let task = args.task.0;
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::io(format!("reading {}", args.input.display()), e))
        .stage("training-set loading")?;
    let set = TrainingSet::parse(&text).stage("training-set parsing")?;

    let norm = match args.norm.as_str() {
        "none" => HeadNorm::None,
        "layer" => HeadNorm::Layer,
        "batch" => HeadNorm::Batch,
        other => {
            return Err(Error::InvalidParameter(format!("unknown norm `{other}`")))
                .stage("argument parsing")
        }
    };
    let defaults = TrainConfig::for_task(task);
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        hyper: AdamHyper {
            lr: args.lr,
            ..AdamHyper::default()
        },
        seed: args.seed,
        input_k: args.input_k.unwrap_or(defaults.input_k),
        encoder_widths: args.encoder.unwrap_or(defaults.encoder_widths),
        head_widths: args.head.unwrap_or(defaults.head_widths),
        norm,
    };

    let start = Instant::now();
    let report = train(task, &set, &config).stage("training")?;
    println!(
        "[train] {}: {} epochs in {:.1} s, first-epoch loss {:.3e}, final loss {:.3e}",
        task.name(),
        report.epoch_losses.len(),
        start.elapsed().as_secs_f64(),
        report.epoch_losses.first().copied().unwrap_or(f64::NAN),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );

    save_params(&report.params, &args.output).stage("params writing")?;
    let csv_path = args
        .loss_csv
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", args.output.display())));
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(&csv_path, csv)
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))
        .stage("loss-curve writing")?;
    println!(
        "[train] params -> {}, loss curve -> {}",
        args.output.display(),
        csv_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), StageError> {
    let pred = cloudup::io::read_cloud(&args.pred).stage("pred parsing")?;
    let gt = cloudup::io::read_cloud(&args.gt).stage("gt parsing")?;
    let surface = parse_surface(&args.surface).stage("surface parsing")?;
    let mut config = EvalConfig {
        tau: args.tau,
        n_disks: args.n_disks,
        seed: args.seed,
        ..EvalConfig::default()
    };
    if let Some(ps) = args.nuc_p {
        config.nuc_fractions = ps;
    }
    let start = Instant::now();
    let report = evaluate(&pred, &gt, &surface, &config).stage("evaluation")?;
    println!(
        "[eval] {} vs {} in {:.1} s",
        args.pred.display(),
        args.gt.display(),
        start.elapsed().as_secs_f64()
    );
    let text = report.serialize();
    match &args.output {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))
                .stage("report writing")?;
            println!("[eval] report -> {}", path.display());
        }
        None => print!("{text}"),
    }
    if args.table {
        print!("{}", report.format_table());
    }
    Ok(())
}
