//! Command-line front end for the HRTF upsampling pipeline.
//!
//! Failures print one JSON line on stderr, e.g.
//! `{"status":"error","code":3,"kind":"data","command":"preprocess","stage":"align","message":"..."}`,
//! and exit with 2 (usage), 3 (data) or 4 (numeric failure).

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use hrtf_upsample::barycentric::{barycentric_upsample, WeightMode};
use hrtf_upsample::cubesphere::{downsample_with, set_from_grid, to_magnitudes, DownsampleOffset, PanelTensor, TENSOR_MAGIC};
use hrtf_upsample::data::{
    fibonacci_positions, load_hrir_set, ring_layout, save_hrir_set, split_subjects, synth_subject_with,
    SphericalDirection, SynthParams, HRIRSET_MAGIC,
};
use hrtf_upsample::eval::{evaluate, write_report, EvalReport};
use hrtf_upsample::itd::{align_set, KalmanOverrides};
use hrtf_upsample::neural::{
    load_checkpoint, save_checkpoint, train, upsample, GanConfig, NeuralError, TrainingPair, CHECKPOINT_MAGIC,
};
use hrtf_upsample::pipeline::{preprocess, PipelineError, PreprocessConfig};
use hrtf_upsample::projection::{make_grid, CubedSphereGrid, PANELS};
use hrtf_upsample::spectra::{reconstruct_set, MagnitudeHrtf, ReconstructConfig, HRTFMAG_MAGIC};

#[derive(Debug, Parser)]
#[command(name = "hrtf-upsample", version, about = "Spatial upsampling of head-related transfer functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Random seed (required by synth and train).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cubed-sphere panel width of the high-resolution grid.
    #[arg(long, global = true)]
    grid_w: Option<usize>,
    /// Upsampling factor r.
    #[arg(long, global = true)]
    factor: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic subjects as HRIRSET files.
    Synth(SynthArgs),
    /// Write the cubed-sphere grid directions as CSV.
    Grid(GridArgs),
    /// Trim every response so its onset sits at the pre-roll.
    Align(AlignArgs),
    /// Align, interpolate to the grid and extract magnitudes into a tensor.
    Preprocess(PreprocessArgs),
    /// Keep every r-th cell of a tensor.
    Downsample(DownsampleArgs),
    /// Barycentric interpolation of responses onto the grid directions.
    Interp(InterpArgs),
    /// Train the super-resolution network on high-resolution tensors.
    Train(TrainArgs),
    /// Run a trained generator on a low-resolution input.
    Upsample(UpsampleArgs),
    /// Minimum-phase responses with the spherical-head ITD from magnitudes.
    Reconstruct(ReconstructArgs),
    /// Score a candidate against a reference and write a CSV row.
    Evaluate(EvaluateArgs),
    /// Print a summary of any container file as JSON.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    subjects: usize,
    /// `fibonacci:N`, `grid:W=8` or `rings:STEP_DEG`.
    #[arg(long, default_value = "fibonacci:440")]
    positions: String,
    #[arg(long, default_value_t = 256)]
    taps: usize,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
    #[arg(long)]
    noise_floor: Option<f64>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Debug, Args)]
struct KalmanArgs {
    #[arg(long)]
    sigma_v: Option<f64>,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    pre_roll: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[command(flatten)]
    kalman: KalmanArgs,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    nfft: Option<usize>,
    #[arg(long)]
    pre_roll: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    skip_align: bool,
    #[arg(long)]
    planar: bool,
    /// Also write the grid magnitudes as an HRTFMAG file.
    #[arg(long)]
    magnitudes_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[command(flatten)]
    kalman: KalmanArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OffsetArg {
    Centered,
    First,
    Last,
}

#[derive(Debug, Args)]
struct DownsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "centered")]
    offset: OffsetArg,
}

#[derive(Debug, Args)]
struct InterpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    planar: bool,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// High-resolution tensors, one per subject.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Fraction of subjects held out for validation (0 disables).
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    /// Where to write the training report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_generator: Option<f64>,
    #[arg(long)]
    lr_discriminator: Option<f64>,
    #[arg(long)]
    lambda_content: Option<f64>,
    #[arg(long)]
    lambda_adversarial: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    residual_blocks: Option<usize>,
    #[arg(long)]
    hidden_features: Option<usize>,
    #[arg(long)]
    d_updates_per_g: Option<usize>,
    /// Start from the published settings for the factor instead of the
    /// desk-scale defaults.
    #[arg(long)]
    published: bool,
}

#[derive(Debug, Args)]
struct UpsampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Low-resolution tensor, HRTFMAG on a cubed-sphere grid, or HRIRSET.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long, default_value_t = 32)]
    base_delay: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long, default_value = "candidate")]
    method: String,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
}

/// Stage label attached as error context.
#[derive(Debug, Clone, Copy)]
struct Stage(&'static str);

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

struct Ctx {
    common: Common,
    file: Map<String, Value>,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.common.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self) -> Result<&Path> {
        self.common.out.as_deref().ok_or_else(|| usage("--out is required"))
    }

    fn grid_w(&self) -> Result<usize> {
        self.common.grid_w.ok_or_else(|| usage("--grid-w is required"))
    }

    fn seed(&self) -> Result<u64> {
        match self.common.seed {
            Some(s) => Ok(s),
            None => match self.file.get("seed") {
                Some(v) => v.as_u64().ok_or_else(|| usage("config seed must be a non-negative integer")),
                None => Err(usage("--seed is required")),
            },
        }
    }

    /// Config-file section `key` overlaid on `defaults`.
    fn section<T: Serialize + serde::de::DeserializeOwned>(&self, key: &str, defaults: &T) -> Result<T> {
        let mut base = serde_json::to_value(defaults)?;
        if let Some(over) = self.file.get(key) {
            let over = over
                .as_object()
                .ok_or_else(|| usage(format!("config section {key:?} must be an object")))?;
            let obj = base.as_object_mut().expect("struct serialises to an object");
            for (k, v) in over {
                obj.insert(k.clone(), v.clone());
            }
        }
        serde_json::from_value(base).map_err(|e| usage(format!("config section {key:?}: {e}")))
    }

    fn check_distinct(&self, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        for o in outputs {
            if inputs.iter().any(|i| same_path(i, o)) {
                return Err(usage(format!("output {} is also an input", o.display())));
            }
        }
        Ok(())
    }
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn load_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .context(Stage("config"))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage("config file must hold a JSON object")),
        Err(e) => Err(usage(format!("config file {}: {e}", path.display()))),
    }
}

fn kalman(k: &KalmanArgs, base: KalmanOverrides) -> KalmanOverrides {
    KalmanOverrides {
        sigma_v: k.sigma_v.or(base.sigma_v),
        sigma_w: k.sigma_w.or(base.sigma_w),
        gamma: k.gamma.or(base.gamma),
    }
}

fn magic_of(path: &Path) -> Result<String> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .context(Stage("load"))?;
    let mut line = Vec::new();
    BufReader::new(file)
        .read_until(b'\n', &mut line)
        .with_context(|| format!("reading {}", path.display()))
        .context(Stage("load"))?;
    let header: Value = serde_json::from_slice(line.strip_suffix(b"\n").unwrap_or(&line))
        .map_err(|e| anyhow!("{}: header is not JSON: {e}", path.display()))
        .context(Stage("load"))?;
    header
        .get("magic")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| anyhow!("{}: header has no magic", path.display()))
        .context(Stage("load"))
}

fn width_for(cells: usize) -> Option<usize> {
    let w = ((cells / PANELS) as f64).sqrt().round() as usize;
    (w > 0 && PANELS * w * w == cells).then_some(w)
}

fn grid(width: usize, radius: f64) -> Result<CubedSphereGrid> {
    make_grid(width, radius)
        .map_err(|e| usage(e.to_string()))
        .context(Stage("grid"))
}

/// A spectral input as a tensor on a cubed-sphere grid.
fn load_tensor(path: &Path, radius: f64) -> Result<PanelTensor> {
    let magic = magic_of(path)?;
    if magic == TENSOR_MAGIC {
        return PanelTensor::load(path).context(Stage("load"));
    }
    if magic == HRTFMAG_MAGIC {
        let mags = MagnitudeHrtf::load(path).context(Stage("load"))?;
        let w = width_for(mags.len())
            .ok_or_else(|| anyhow!("{} positions do not form a cubed-sphere grid", mags.len()))
            .context(Stage("project"))?;
        return set_from_grid(&mags, &grid(w, radius)?).context(Stage("project"));
    }
    Err(anyhow!("{}: expected {TENSOR_MAGIC} or {HRTFMAG_MAGIC}, found {magic}", path.display())).context(Stage("load"))
}

/// A spectral input as magnitudes; tensors are labelled with grid directions.
fn load_magnitudes(path: &Path, radius: f64, sample_rate: u32) -> Result<MagnitudeHrtf> {
    if magic_of(path)? == HRTFMAG_MAGIC {
        return MagnitudeHrtf::load(path).context(Stage("load"));
    }
    let t = load_tensor(path, radius)?;
    let id = path.file_stem().map_or("tensor".into(), |s| s.to_string_lossy().to_string());
    to_magnitudes(&t, grid(t.width(), radius)?.directions(), &id, sample_rate).context(Stage("project"))
}

fn position_spec(spec: &str) -> Result<Vec<SphericalDirection>> {
    let bad = || usage(format!("unrecognised --positions {spec:?}; use fibonacci:N, grid:W=8 or rings:STEP"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "fibonacci" => {
            let n: usize = arg.parse().map_err(|_| bad())?;
            if n < 3 {
                return Err(usage("fibonacci layouts need at least 3 points"));
            }
            Ok(fibonacci_positions(n))
        }
        "grid" => {
            let w: usize = arg.trim_start_matches("W=").parse().map_err(|_| bad())?;
            Ok(grid(w, 1.0)?.directions().to_vec())
        }
        "rings" => {
            let step: f64 = arg.parse().map_err(|_| bad())?;
            if step.is_nan() || step <= 0.0 {
                return Err(bad());
            }
            Ok(ring_layout(-30.0, 90.0, step, 72))
        }
        _ => Err(bad()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .context(Stage("save"))
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    if a.subjects == 0 {
        return Err(usage("--subjects must be at least 1"));
    }
    let seed = ctx.seed()?;
    let out = ctx.out()?;
    let positions = position_spec(&a.positions)?;
    let mut params: SynthParams = ctx.section("synth", &SynthParams::default())?;
    if let Some(n) = a.noise_floor {
        params.noise_floor = n;
    }
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .context(Stage("save"))?;
    for k in 0..a.subjects {
        let subject_seed = seed.wrapping_mul(10_000).wrapping_add(k as u64);
        let set = synth_subject_with(subject_seed, &positions, a.sample_rate, a.taps, &params).context(Stage("synth"))?;
        let path = out.join(format!("subject_{k:03}.hrir"));
        save_hrir_set(&set, &path).context(Stage("save"))?;
        ctx.log(format!("wrote {}", path.display()));
    }
    Ok(())
}

fn cmd_grid(ctx: &Ctx, a: &GridArgs) -> Result<()> {
    let g = grid(ctx.grid_w()?, a.radius)?;
    let out = ctx.out()?;
    fs::write(out, g.to_csv())
        .with_context(|| format!("writing {}", out.display()))
        .context(Stage("save"))
}

fn cmd_align(ctx: &Ctx, a: &AlignArgs) -> Result<()> {
    let out = ctx.out()?;
    ctx.check_distinct(&[&a.input], &[out])?;
    let base: PreprocessConfig = ctx.section("preprocess", &PreprocessConfig::default())?;
    let set = load_hrir_set(&a.input).context(Stage("load"))?;
    let pre_roll = a.pre_roll.unwrap_or(base.pre_roll);
    let length = a.length.or(base.length_out).unwrap_or(set.taps().saturating_sub(pre_roll).max(1) / 2);
    let (aligned, _) = align_set(&set, &kalman(&a.kalman, base.kalman), pre_roll, length).context(Stage("align"))?;
    save_hrir_set(&aligned, out).context(Stage("save"))
}

fn preprocess_config(ctx: &Ctx, a: &PreprocessArgs) -> Result<PreprocessConfig> {
    let mut cfg: PreprocessConfig = ctx.section("preprocess", &PreprocessConfig::default())?;
    if let Some(n) = a.nfft {
        cfg.nfft = n;
    }
    if let Some(p) = a.pre_roll {
        cfg.pre_roll = p;
    }
    if a.length.is_some() {
        cfg.length_out = a.length;
    }
    cfg.skip_align |= a.skip_align;
    if a.planar {
        cfg.weight_mode = WeightMode::Planar;
    }
    cfg.kalman = kalman(&a.kalman, cfg.kalman);
    Ok(cfg)
}

fn pipeline_stage(e: &PipelineError) -> Stage {
    Stage(match e {
        PipelineError::Align(_) => "align",
        PipelineError::Interpolate(_) => "interpolate",
        PipelineError::Magnitudes(_) => "magnitudes",
        PipelineError::Project(_) => "project",
    })
}

fn run_preprocess(set: &hrtf_upsample::data::HrirSet, g: &CubedSphereGrid, cfg: &PreprocessConfig) -> Result<hrtf_upsample::pipeline::Preprocessed> {
    preprocess(set, g, cfg).map_err(|e| {
        let stage = pipeline_stage(&e);
        anyhow::Error::new(e).context(stage)
    })
}

fn cmd_preprocess(ctx: &Ctx, a: &PreprocessArgs) -> Result<()> {
    let out = ctx.out()?;
    let mut outs = vec![out];
    outs.extend(a.magnitudes_out.as_deref());
    ctx.check_distinct(&[&a.input], &outs)?;
    let cfg = preprocess_config(ctx, a)?;
    let g = grid(ctx.grid_w()?, a.radius)?;
    let set = load_hrir_set(&a.input).context(Stage("load"))?;
    let result = run_preprocess(&set, &g, &cfg)?;
    result.tensor.save(out).context(Stage("save"))?;
    if let Some(m) = &a.magnitudes_out {
        result.magnitudes.save(m).context(Stage("save"))?;
    }
    ctx.log(format!(
        "tensor {}×5×{}×{}",
        result.tensor.channels(),
        result.tensor.width(),
        result.tensor.width()
    ));
    Ok(())
}

fn cmd_downsample(ctx: &Ctx, a: &DownsampleArgs) -> Result<()> {
    let out = ctx.out()?;
    ctx.check_distinct(&[&a.input], &[out])?;
    let factor = ctx.common.factor.ok_or_else(|| usage("--factor is required"))?;
    let t = load_tensor(&a.input, 1.0)?;
    let offset = match a.offset {
        OffsetArg::Centered => DownsampleOffset::Centered,
        OffsetArg::First => DownsampleOffset::First,
        OffsetArg::Last => DownsampleOffset::Last,
    };
    let low = downsample_with(&t, factor, offset)
        .map_err(|e| usage(e.to_string()))
        .context(Stage("downsample"))?;
    low.save(out).context(Stage("save"))
}

fn cmd_interp(ctx: &Ctx, a: &InterpArgs) -> Result<()> {
    let out = ctx.out()?;
    ctx.check_distinct(&[&a.input], &[out])?;
    let g = grid(ctx.grid_w()?, a.radius)?;
    let set = load_hrir_set(&a.input).context(Stage("load"))?;
    let mode = if a.planar { WeightMode::Planar } else { WeightMode::Spherical };
    let up = barycentric_upsample(&set, &g, mode).context(Stage("interpolate"))?;
    save_hrir_set(&up, out).context(Stage("save"))
}

fn gan_config(ctx: &Ctx, a: &TrainArgs) -> Result<GanConfig> {
    let file_factor = ctx
        .file
        .get("config")
        .and_then(|c| c.get("factor"))
        .and_then(Value::as_u64)
        .map(|f| f as usize);
    let factor = ctx.common.factor.or(file_factor).unwrap_or(4);
    let defaults = if a.published {
        GanConfig::published(factor).ok_or_else(|| usage(format!("no published settings for factor {factor}")))?
    } else {
        GanConfig::toy(factor)
    };
    let mut cfg: GanConfig = ctx.section("config", &defaults)?;
    cfg.factor = factor;
    macro_rules! flag {
        ($($f:ident),*) => {$(if let Some(v) = a.$f { cfg.$f = v; })*};
    }
    flag!(
        epochs,
        lr_generator,
        lr_discriminator,
        lambda_content,
        lambda_adversarial,
        batch_size,
        residual_blocks,
        hidden_features,
        d_updates_per_g
    );
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let out = ctx.out()?;
    let seed = ctx.seed()?;
    let cfg = gan_config(ctx, a)?;
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    let mut outs = vec![out];
    outs.extend(a.report.as_deref());
    ctx.check_distinct(&inputs, &outs)?;
    let mut subjects = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        let high = load_tensor(p, 1.0)?;
        let low = downsample_with(&high, cfg.factor, DownsampleOffset::Centered)
            .map_err(|e| usage(format!("{}: {e}", p.display())))
            .context(Stage("downsample"))?;
        subjects.push((p.display().to_string(), TrainingPair { low, high }));
    }
    let (train_pairs, validation): (Vec<TrainingPair>, Vec<TrainingPair>) = if a.validation_fraction > 0.0 {
        let ids: Vec<String> = subjects.iter().map(|(id, _)| id.clone()).collect();
        let split = split_subjects(&ids, 1.0 - a.validation_fraction, seed)
            .map_err(|e| usage(e.to_string()))
            .context(Stage("split"))?;
        let pick = |names: &[String]| -> Vec<TrainingPair> {
            subjects
                .iter()
                .filter(|(id, _)| names.contains(id))
                .map(|(_, p)| p.clone())
                .collect()
        };
        (pick(&split.train_subjects), pick(&split.validation_subjects))
    } else {
        (subjects.into_iter().map(|(_, p)| p).collect(), Vec::new())
    };
    ctx.log(format!(
        "training on {} subjects, validating on {}, {} epochs",
        train_pairs.len(),
        validation.len(),
        cfg.epochs
    ));
    let (mut gen, report) = train(&train_pairs, &validation, &cfg, seed).context(Stage("train"))?;
    for r in &report.epochs {
        ctx.log(format!(
            "epoch {} generator {:.5} content {:.5} adversarial {:.5} discriminator {:.5}",
            r.epoch, r.generator_loss, r.content_loss, r.adversarial_loss, r.discriminator_loss
        ));
    }
    save_checkpoint(out, &mut gen, &cfg).context(Stage("save"))?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_upsample(ctx: &Ctx, a: &UpsampleArgs) -> Result<()> {
    let out = ctx.out()?;
    ctx.check_distinct(&[&a.input, &a.checkpoint], &[out])?;
    let (mut gen, cfg) = load_checkpoint(&a.checkpoint).context(Stage("load"))?;
    let (low, subject_id) = if magic_of(&a.input)? == HRIRSET_MAGIC {
        let set = load_hrir_set(&a.input).context(Stage("load"))?;
        let hi = ctx.grid_w()?;
        if hi % cfg.factor != 0 {
            return Err(usage(format!("--grid-w {hi} is not divisible by factor {}", cfg.factor)));
        }
        let pcfg = PreprocessConfig {
            nfft: gen.channels,
            ..ctx.section("preprocess", &PreprocessConfig::default())?
        };
        let low = run_preprocess(&set, &grid(hi / cfg.factor, a.radius)?, &pcfg)?.tensor;
        (low, set.subject_id().to_string())
    } else {
        let id = a.input.file_stem().map_or("subject".into(), |s| s.to_string_lossy().to_string());
        (load_tensor(&a.input, a.radius)?, id)
    };
    let high = upsample(&low, &mut gen).context(Stage("upsample"))?;
    let g = grid(high.width(), a.radius)?;
    let mags = to_magnitudes(&high, g.directions(), &subject_id, a.sample_rate).context(Stage("project"))?;
    mags.save(out).context(Stage("save"))
}

fn cmd_reconstruct(ctx: &Ctx, a: &ReconstructArgs) -> Result<()> {
    let out = ctx.out()?;
    ctx.check_distinct(&[&a.input], &[out])?;
    let mags = load_magnitudes(&a.input, a.radius, a.sample_rate)?;
    let mut cfg = ReconstructConfig::new(a.taps.unwrap_or(a.base_delay + 2 * mags.nfft()));
    cfg.base_delay = a.base_delay;
    let set = reconstruct_set(&mags, &cfg).context(Stage("reconstruct"))?;
    save_hrir_set(&set, out).context(Stage("save"))
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let out = ctx.out()?;
    let mut outs = vec![out];
    outs.extend(a.svg.as_deref());
    ctx.check_distinct(&[&a.reference, &a.candidate], &outs)?;
    let reference = load_magnitudes(&a.reference, a.radius, 48_000)?;
    let candidate = load_magnitudes(&a.candidate, a.radius, 48_000)?;
    let mut report: EvalReport = evaluate(&reference, &candidate).context(Stage("evaluate"))?;
    report.method = a.method.clone();
    report.factor = ctx.common.factor.unwrap_or(1);
    report.positions_in = report.positions_out / (report.factor * report.factor).max(1);
    write_report(std::slice::from_ref(&report), out, a.svg.as_deref()).context(Stage("save"))?;
    emit(
        &json!({
            "method": report.method,
            "r": report.factor,
            "mean_lsd_db": report.mean_lsd_db,
            "sd_lsd_db": report.sd_lsd_db,
            "mean_ild_db": report.mean_ild_db,
        })
        .to_string(),
    );
    Ok(())
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn stats(values: impl Iterator<Item = f64>) -> Value {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    json!({"min": lo, "max": hi, "mean": if n > 0 { sum / n as f64 } else { 0.0 }})
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let magic = magic_of(&a.input)?;
    let summary = match magic.as_str() {
        m if m == HRIRSET_MAGIC => {
            let s = load_hrir_set(&a.input).context(Stage("load"))?;
            json!({
                "magic": m, "subject_id": s.subject_id(), "sample_rate_hz": s.sample_rate_hz(),
                "positions": s.len(), "taps": s.taps(),
                "samples": stats(s.irs().iter().flat_map(|ir| ir.left.iter().chain(&ir.right)).map(|&v| f64::from(v))),
            })
        }
        m if m == HRTFMAG_MAGIC => {
            let h = MagnitudeHrtf::load(&a.input).context(Stage("load"))?;
            json!({
                "magic": m, "subject_id": h.subject_id(), "sample_rate_hz": h.sample_rate_hz(),
                "positions": h.len(), "nfft": h.nfft(), "bins_per_ear": h.bins_per_ear(),
                "grid_width": width_for(h.len()),
                "magnitudes": stats(h.magnitudes().iter().copied()),
            })
        }
        m if m == TENSOR_MAGIC => {
            let t = PanelTensor::load(&a.input).context(Stage("load"))?;
            json!({
                "magic": m, "channels": t.channels(), "width": t.width(), "height": t.height(),
                "values": stats(t.data().iter().copied()),
            })
        }
        m if m == CHECKPOINT_MAGIC => {
            let (mut g, cfg) = load_checkpoint(&a.input).context(Stage("load"))?;
            let params: usize = hrtf_upsample::neural::Layer::params(&mut g).iter().map(|p| p.len()).sum();
            json!({"magic": m, "channels": g.channels, "config": cfg, "parameters": params})
        }
        other => return Err(anyhow!("unknown container magic {other:?}")).context(Stage("load")),
    };
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = load_config(cli.common.config.as_deref())?;
    let ctx = Ctx {
        common: cli.common,
        file,
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Grid(a) => cmd_grid(&ctx, a),
        Command::Align(a) => cmd_align(&ctx, a),
        Command::Preprocess(a) => cmd_preprocess(&ctx, a),
        Command::Downsample(a) => cmd_downsample(&ctx, a),
        Command::Interp(a) => cmd_interp(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Upsample(a) => cmd_upsample(&ctx, a),
        Command::Reconstruct(a) => cmd_reconstruct(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Grid(_) => "grid",
        Command::Align(_) => "align",
        Command::Preprocess(_) => "preprocess",
        Command::Downsample(_) => "downsample",
        Command::Interp(_) => "interp",
        Command::Train(_) => "train",
        Command::Upsample(_) => "upsample",
        Command::Reconstruct(_) => "reconstruct",
        Command::Evaluate(_) => "evaluate",
        Command::Inspect(_) => "inspect",
    }
}

/// Exit code and kind for a failure: usage 2, numeric 4, everything else 3.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return (2, "usage");
        }
        if let Some(NeuralError::NonFinite { .. } | NeuralError::Probability { .. }) = cause.downcast_ref::<NeuralError>() {
            return (4, "numeric");
        }
    }
    (3, "data")
}

fn error_line(code: u8, kind: &str, command: &str, stage: &str, message: &str) -> String {
    json!({"status": "error", "code": code, "kind": kind, "command": command, "stage": stage, "message": message})
        .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let msg = e.kind().to_string();
            eprintln!("{}", error_line(2, "usage", "", "parse", &msg));
            return ExitCode::from(2);
        }
    };
    let command = command_name(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            let stage = err.downcast_ref::<Stage>().map_or(if code == 2 { "args" } else { "run" }, |s| s.0);
            let mut message = String::new();
            for part in err.chain().map(|c| c.to_string()).filter(|m| m != stage) {
                if !message.contains(&part) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&part);
                }
            }
            eprintln!("{}", error_line(code, kind, command, stage, &message));
            ExitCode::from(code)
        }
    }
}
