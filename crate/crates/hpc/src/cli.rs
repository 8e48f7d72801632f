//! The `hpc` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hpc_core::kernel::{generate_kernel, KernelShape, OVERSAMPLE_FACTOR};
use hpc_core::metric::{response_map, DistributiveFn};
use hpc_core::network::{evaluate, predict, train_with, HpcNetwork, NetworkConfig, Sample, TrainState};
use hpc_core::scene::{generate_scene, SceneSpec, CLASS_NAMES};
use hpc_core::PointCloud;

use crate::ablation::{ablation_table, run_ablation, tile_samples, AblationOptions, Axis};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::colormap::colorize;
use crate::config::{load_config, to_json};
use crate::error::Error;
use crate::ply::{read_ply, read_ply_data, write_ply, write_ply_columns, Column, PlyFormat, ScalarType};
use crate::tables::{write_label_csv, write_metric_log, write_response_csv};

#[derive(Debug, Parser)]
#[command(name = "hpc", version, about = "Hausdorff point convolution toolkit")]
pub struct Cli {
    /// Overrides the seed of the command (scene seed, network seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to HPC_THREADS, then all cores.
    #[arg(long, global = true, env = "HPC_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a kernel prior as a PLY point set.
    GenKernels(GenKernels),
    /// Per-point Hausdorff response of a cloud against a kernel.
    Respond(Respond),
    /// Generate a labeled synthetic scene.
    Synth(Synth),
    /// Train a segmentation network.
    Train(Train),
    /// Evaluate a checkpoint on labeled clouds.
    Eval(Eval),
    /// Run an ablation sweep over one design axis.
    Ablate(Ablate),
    /// Write per-point head features and predictions.
    ExportFeatures(ExportFeatures),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlyEncoding {
    Binary,
    Ascii,
}

impl From<PlyEncoding> for PlyFormat {
    fn from(e: PlyEncoding) -> Self {
        match e {
            PlyEncoding::Binary => PlyFormat::BinaryLittleEndian,
            PlyEncoding::Ascii => PlyFormat::Ascii,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenKernels {
    #[arg(long)]
    pub shape: KernelShape,
    #[arg(long, default_value_t = 15)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: PlyEncoding,
}

#[derive(Debug, Args)]
pub struct Respond {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub kernel: KernelShape,
    #[arg(long, default_value_t = 15)]
    pub n: usize,
    #[arg(long)]
    pub radius: f64,
    #[arg(long, default_value = "max")]
    pub f: DistributiveFn,
    /// Colored PLY path; the CSV goes next to it with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
    /// Report `1 - distance` instead of the normalized distance.
    #[arg(long)]
    pub similarity: bool,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: PlyEncoding,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    PoleFloor,
}

#[derive(Debug, Args)]
pub struct Synth {
    /// Scene spec JSON; defaults apply when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "spec")]
    pub preset: Option<Preset>,
    /// Scene PLY path; the resolved spec goes next to it as `.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: PlyEncoding,
}

#[derive(Debug, Args)]
pub struct Train {
    /// Run config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Checkpoint path; the metric log goes next to it with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Leave the `seconds` column out of the metric log.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Write predicted labels as `index,label` CSV, points of all clouds in order
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Ablate {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Scene spec JSON used for every train and test scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub train_scenes: usize,
    #[arg(long, default_value_t = 1)]
    pub test_scenes: usize,
    /// CSV path; the aligned text table goes next to it with a `.txt` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportFeatures {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: PlyEncoding,
}

/// Failure of a command, mapped to exit code 2 (usage) or 1 (runtime).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult = Result<(), CliError>;

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    let mut w = crate::ply::create_file(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn network_config(path: &Option<PathBuf>) -> Result<NetworkConfig, Error> {
    match path {
        Some(p) => load_config(p),
        None => Ok(NetworkConfig::default()),
    }
}

fn load_clouds(paths: &[PathBuf]) -> Result<Vec<PointCloud>, Error> {
    paths.iter().map(read_ply).collect()
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::GenKernels(a) => gen_kernels(&ctx, a),
        Command::Respond(a) => respond(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
        Command::ExportFeatures(a) => export_features(&ctx, a),
    }
}

fn gen_kernels(ctx: &Ctx, a: GenKernels) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if a.shape == KernelShape::CenterPoint && a.n != 1 {
        return Err(CliError::Usage(
            "the center-point kernel has exactly one point (--n 1)".into(),
        ));
    }
    let kernel = generate_kernel(a.shape, a.n, a.n * OVERSAMPLE_FACTOR)?;
    let cloud = PointCloud::new(kernel.points().to_vec())?;
    write_ply(&cloud, &a.out, a.format.into())?;
    ctx.say(format!(
        "{} kernel, {} points, covering radius {:.6} -> {}",
        a.shape,
        kernel.len(),
        kernel.covering_radius(),
        a.out.display()
    ));
    Ok(())
}

fn respond(ctx: &Ctx, a: Respond) -> CliResult {
    if !(a.radius > 0.0 && a.radius.is_finite()) {
        return Err(CliError::Usage(format!("--radius must be positive, got {}", a.radius)));
    }
    if a.n == 0 || (a.kernel == KernelShape::CenterPoint && a.n != 1 && a.n != 15) {
        return Err(CliError::Usage("invalid --n for this kernel".into()));
    }
    let n = if a.kernel == KernelShape::CenterPoint { 1 } else { a.n };
    let data = read_ply_data(&a.cloud)?;
    let kernel = generate_kernel(a.kernel, n, n * OVERSAMPLE_FACTOR)?;
    let mut response = response_map(&data.cloud, &kernel, a.radius, a.f)?;
    if a.similarity {
        response.iter_mut().for_each(|v| *v = 1.0 - *v);
    }
    let colors = colorize(&response);
    let channel = |c: usize| colors.iter().map(|rgb| rgb[c] as f64).collect::<Vec<_>>();
    let (red, green, blue) = (channel(0), channel(1), channel(2));
    let labels: Option<Vec<f64>> = data.cloud.labels().map(|l| l.iter().map(|&v| v as f64).collect());
    let mut columns = vec![
        Column {
            name: "red",
            kind: ScalarType::UInt8,
            values: &red,
        },
        Column {
            name: "green",
            kind: ScalarType::UInt8,
            values: &green,
        },
        Column {
            name: "blue",
            kind: ScalarType::UInt8,
            values: &blue,
        },
        Column {
            name: "response",
            kind: ScalarType::Float64,
            values: &response,
        },
    ];
    if let Some(l) = &labels {
        columns.push(Column {
            name: "label",
            kind: ScalarType::Int32,
            values: l,
        });
    }
    write_ply_columns(&a.out, a.format.into(), data.cloud.points(), &columns)?;
    let csv_path = sibling(&a.out, "csv");
    let mut w = crate::ply::create_file(&csv_path)?;
    write_response_csv(&mut w, data.cloud.points(), &response)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&csv_path, e))?;
    let mean = response.iter().sum::<f64>() / response.len() as f64;
    ctx.say(format!(
        "{} points, mean {} {:.6} -> {}, {}",
        response.len(),
        if a.similarity { "similarity" } else { "distance" },
        mean,
        a.out.display(),
        csv_path.display()
    ));
    Ok(())
}

fn synth(ctx: &Ctx, a: Synth) -> CliResult {
    let mut spec: SceneSpec = match (&a.spec, a.preset) {
        (Some(p), _) => load_config(p)?,
        (None, Some(Preset::PoleFloor)) => SceneSpec::pole_floor(0),
        (None, _) => SceneSpec::default(),
    };
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    let cloud = generate_scene(&spec)?;
    write_ply(&cloud, &a.out, a.format.into())?;
    write_text(&sibling(&a.out, "json"), &to_json(&spec))?;
    let hist = hpc_core::scene::class_histogram(cloud.labels().unwrap_or(&[]));
    let parts: Vec<String> = CLASS_NAMES.iter().zip(hist).map(|(n, c)| format!("{n} {c}")).collect();
    ctx.say(format!(
        "{} points ({}) -> {}",
        cloud.len(),
        parts.join(", "),
        a.out.display()
    ));
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: Train) -> CliResult {
    let cfg = network_config(&a.config)?;
    let seed = ctx.seed.unwrap_or(0);
    let clouds = load_clouds(&a.data)?;
    let samples = tile_samples(&cfg, &clouds)?;
    ctx.say(format!(
        "{} clouds, {} tiles, {} parameters",
        clouds.len(),
        samples.len(),
        HpcNetwork::new(cfg.clone(), seed)?.parameter_count()
    ));
    let mut state = TrainState::new(HpcNetwork::new(cfg, seed)?, seed);
    let start = Instant::now();
    let mut seconds = Vec::new();
    let history = train_with(&mut state, &samples, a.epochs, |m| {
        let t = start.elapsed().as_secs_f64();
        seconds.push(t);
        ctx.say(format!(
            "epoch {:3}  lr {:.2e}  loss {:.5}  acc {:.4}  miou {:.4}  {:.1}s",
            m.epoch, m.learning_rate, m.loss, m.accuracy, m.miou, t
        ));
    })?;
    save_checkpoint(&a.out, &state)?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "csv"));
    let mut w = crate::ply::create_file(&log_path)?;
    write_metric_log(&mut w, &history, (!a.no_timing).then_some(&seconds[..]))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&log_path, e))?;
    ctx.say(format!(
        "checkpoint -> {}, log -> {}",
        a.out.display(),
        log_path.display()
    ));
    Ok(())
}

fn cmd_eval(_ctx: &Ctx, a: Eval) -> CliResult {
    let state = load_checkpoint(&a.checkpoint)?;
    let cfg = state.network.config().clone();
    let clouds = load_clouds(&a.data)?;
    let samples: Vec<Sample> = clouds
        .iter()
        .map(|c| Sample::new(&cfg, c))
        .collect::<hpc_core::Result<_>>()?;
    let m = evaluate(&state.network, &samples)?;
    println!("class          iou");
    for (c, iou) in m.confusion.class_iou().iter().enumerate() {
        let name = if cfg.num_classes == CLASS_NAMES.len() {
            CLASS_NAMES[c].to_string()
        } else {
            format!("class{c}")
        };
        match iou {
            Some(v) => println!("{name:<12} {v:.4}"),
            None => println!("{name:<12} -"),
        }
    }
    println!("miou         {:.4}", m.miou);
    println!("accuracy     {:.4}", m.accuracy);
    println!("loss         {:.5}", m.loss);
    if let Some(path) = &a.predictions {
        let mut labels = Vec::new();
        for s in &samples {
            labels.extend(predict(&state.network, s)?.into_iter().map(|c| c as i32));
        }
        let mut w = crate::ply::create_file(path)?;
        write_label_csv(&mut w, &labels)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn ablate(ctx: &Ctx, a: Ablate) -> CliResult {
    if a.seeds == 0 || a.train_scenes == 0 || a.test_scenes == 0 {
        return Err(CliError::Usage(
            "--seeds, --train-scenes and --test-scenes must be >= 1".into(),
        ));
    }
    let cfg = network_config(&a.config)?;
    let mut scene: SceneSpec = match &a.scene {
        Some(p) => load_config(p)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = ctx.seed {
        scene.seed = s;
    }
    let opts = AblationOptions {
        seeds: a.seeds,
        epochs: a.epochs,
        train_scenes: a.train_scenes,
        test_scenes: a.test_scenes,
        scene,
    };
    let rows = run_ablation(&cfg, a.axis, &opts, |variant, seed, miou| {
        ctx.say(format!("{variant:<14} seed {seed}  miou {miou:.4}"));
    })?;
    let table = ablation_table(&rows);
    write_text(&a.out, &table.to_csv())?;
    let text_path = sibling(&a.out, "txt");
    write_text(&text_path, &table.to_text())?;
    if !ctx.quiet {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn export_features(ctx: &Ctx, a: ExportFeatures) -> CliResult {
    let state = load_checkpoint(&a.checkpoint)?;
    let cloud = read_ply(&a.cloud)?;
    let sample = Sample::new(state.network.config(), &cloud)?;
    let fwd = state.network.forward(&sample)?;
    let pred: Vec<f64> = predict(&state.network, &sample)?
        .into_iter()
        .map(|p| p as f64)
        .collect();
    let feats = fwd.head_features();
    let cols: Vec<(String, Vec<f64>)> = (0..feats.cols())
        .map(|c| {
            (
                format!("feat_{c}"),
                (0..feats.rows()).map(|r| feats.get(r, c)).collect(),
            )
        })
        .collect();
    let mut columns: Vec<Column> = cols
        .iter()
        .map(|(n, v)| Column {
            name: n,
            kind: ScalarType::Float64,
            values: v,
        })
        .collect();
    columns.push(Column {
        name: "prediction",
        kind: ScalarType::Int32,
        values: &pred,
    });
    write_ply_columns(&a.out, a.format.into(), cloud.points(), &columns)?;
    ctx.say(format!(
        "{} points x {} features -> {}",
        cloud.len(),
        feats.cols(),
        a.out.display()
    ));
    Ok(())
}
