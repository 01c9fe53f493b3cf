//! Command-line front end.
//!
//! All randomness derives from the global `--seed` through keyed streams, so
//! every subcommand is reproducible and independent of `--threads`.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{load_dir, save_dir};
use crate::error::{Error, Result};
use crate::forward::corrupt_at_step;
use crate::kernel::TransitionKernel;
use crate::lattice::{load_image, save_image, BoundaryCondition, IntensityGrid, ParticleLedger};
use crate::loss::LossKind;
use crate::metrics::{audit_totals, conservation_audit, intensity_correlation, mean_curve, mean_intensity};
use crate::rate_model::{
    oracle_predictor, percentile_scale, train_with_progress, Optimizer, ToyConvModel, TrainConfig, DEFAULT_HIDDEN,
};
use crate::rng;
use crate::sampler::{generate, inpaint, SamplerConfig, DEFAULT_MAX_STEPS};
use crate::schedule::{
    calibrate, cosine_schedule, logit_schedule, polynomial_schedule, Schedule, DEFAULT_RATE, DEFAULT_TAU1, DEFAULT_TAU2,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "dsd",
    version,
    about = "Particle-conserving discrete-space diffusion",
    long_about = "Particle-conserving discrete-space diffusion.\n\n\
        Images are directories of binary PGM (P5) or PPM (P6) files, selected with --glob \
        (default *.p?m) and read in lexicographic filename order. All randomness derives \
        from --seed via keyed streams; results do not depend on --threads."
)]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a transition kernel and dump it to a file.
    Kernel(KernelArgs),
    /// Corrupt an image to one schedule step, writing the image and its particle ledger.
    Corrupt(CorruptArgs),
    /// Mean SSIM against the clean data at every schedule step.
    Calibrate(CalibrateArgs),
    /// Train the toy convolutional rate model.
    Train(TrainArgs),
    /// Generate samples with exact per-channel totals.
    Generate(GenerateArgs),
    /// Regenerate the unfrozen part of an image.
    Inpaint(InpaintArgs),
    /// Porosity, two-point correlation and totals of generated vs reference images.
    Metrics(MetricsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleName {
    Logit,
    Poly,
    Cosine,
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, value_enum, default_value_t = ScheduleName::Logit)]
    pub schedule: ScheduleName,
    #[arg(long, default_value_t = DEFAULT_TAU1)]
    pub tau1: f64,
    #[arg(long, default_value_t = DEFAULT_TAU2)]
    pub tau2: f64,
    /// Polynomial degree for `--schedule poly`.
    #[arg(long, default_value_t = 4)]
    pub degree: u32,
    /// Number of observation times.
    #[arg(long = "T", alias = "steps", default_value_t = 200)]
    pub steps: usize,
}

impl ScheduleArgs {
    pub fn build(&self) -> Result<Schedule> {
        match self.schedule {
            ScheduleName::Logit => logit_schedule(self.steps, self.tau1, self.tau2),
            ScheduleName::Poly => polynomial_schedule(self.steps, self.degree),
            ScheduleName::Cosine => cosine_schedule(self.steps),
        }
    }
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[arg(long)]
    pub boundary: BoundaryCondition,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long)]
    pub time: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Schedule step; 0 copies the input.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long, default_value = "periodic")]
    pub boundary: BoundaryCondition,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV `channel,x0,y0,x,y`.
    #[arg(long)]
    pub ledger_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "*.p?m")]
    pub glob: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long, default_value = "periodic")]
    pub boundary: BoundaryCondition,
    /// Use at most this many images.
    #[arg(long)]
    pub samples: Option<usize>,
    /// SSIM dynamic range; defaults to the largest pixel value in the data.
    #[arg(long)]
    pub data_range: Option<f64>,
    /// CSV `k,t_k,mean_ssim,stderr`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "*.p?m")]
    pub glob: String,
    #[arg(long, default_value = "likelihood")]
    pub loss: LossKind,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long, default_value = "periodic")]
    pub boundary: BoundaryCondition,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Output multiplier on the softplus; defaults to --rate.
    #[arg(long)]
    pub rate_scale: Option<f64>,
    /// Clip the batch gradient norm.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// sgd or adam.
    #[arg(long, default_value = "sgd")]
    pub optimizer: Optimizer,
    #[arg(long)]
    pub ckpt_out: PathBuf,
    /// CSV `iter,loss`.
    #[arg(long)]
    pub history_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, conflicts_with = "oracle_ledger", required_unless_present = "oracle_ledger")]
    pub ckpt: Option<PathBuf>,
    /// Ledger CSV from `corrupt`; needs --width, --height, --boundary and --rate.
    #[arg(long)]
    pub oracle_ledger: Option<PathBuf>,
    /// Particles per channel, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub totals: Vec<u64>,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// CFL tolerance.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    /// Boundary for oracle runs; checkpoints carry their own.
    #[arg(long, default_value = "periodic")]
    pub boundary: BoundaryCondition,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step trace CSV of the first sample.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[arg(long)]
    pub partial: PathBuf,
    /// Image whose nonzero pixels are frozen.
    #[arg(long)]
    pub mask: PathBuf,
    /// Free-region particles per channel, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub region_totals: Vec<u64>,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value = "*.p?m")]
    pub glob: String,
    #[arg(long, default_value_t = 8)]
    pub max_lag: usize,
    #[arg(long, default_value = "periodic")]
    pub boundary: BoundaryCondition,
    /// CSV `lag,S2_generated,S2_reference`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) => EXIT_USAGE,
        Error::ZeroProbability { .. }
        | Error::ZeroPrediction { .. }
        | Error::InvalidRate { .. }
        | Error::MaxStepsExceeded { .. }
        | Error::Divergence { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parse `std::env::args` and run.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Corrupt(a) => cmd_corrupt(a, cli.seed),
        Command::Calibrate(a) => cmd_calibrate(a, cli.seed),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Generate(a) => cmd_generate(a, cli.seed),
        Command::Inpaint(a) => cmd_inpaint(a, cli.seed),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_kernel(a: &KernelArgs) -> Result<()> {
    let k = TransitionKernel::new(a.boundary, a.width, a.height, a.rate, a.time)?;
    k.dump(&a.out)?;
    println!("max row-sum deviation: {:e}", k.max_row_sum_deviation());
    Ok(())
}

fn cmd_corrupt(a: &CorruptArgs, seed: u64) -> Result<()> {
    let img = load_image(&a.input)?;
    let (out, ledger) = if a.k == 0 {
        (img.clone(), ParticleLedger::at_rest(&img))
    } else {
        let schedule = a.schedule.build()?;
        let mut r = rng::stream(seed, &[a.k as u64]);
        let s = corrupt_at_step(&img, &schedule, a.k, a.rate, a.boundary, &mut r)?;
        (s.grid, s.ledger)
    };
    save_image(&out, &a.out)?;
    if let Some(p) = &a.ledger_out {
        write(p, &ledger.to_csv())?;
    }
    print!("{}", conservation_audit(&img, &out)?.to_text());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, seed: u64) -> Result<()> {
    let mut data = load_dir(&a.data, &a.glob)?;
    if let Some(n) = a.samples {
        data.truncate(n);
    }
    let range = a
        .data_range
        .unwrap_or_else(|| data.iter().map(|g| g.max_value()).max().unwrap_or(1).max(1) as f64);
    let curve = calibrate(&data, &a.schedule.build()?, a.rate, a.boundary, range, seed)?;
    write(&a.out, &curve.to_csv())?;
    println!("unevenness: {:.6}", curve.unevenness());
    Ok(())
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let data = load_dir(&a.data, &a.glob)?;
    let first = data
        .first()
        .ok_or_else(|| Error::Dataset { file: a.data.clone(), reason: format!("no files match {}", a.glob) })?;
    let mut model = ToyConvModel::new(
        first.channels(),
        a.hidden,
        a.boundary,
        percentile_scale(&data),
        a.rate_scale.unwrap_or(a.rate),
        seed,
    )?;
    let cfg = TrainConfig {
        loss: a.loss,
        learning_rate: a.lr,
        batch_size: a.batch,
        iterations: a.iters,
        seed,
        schedule: a.schedule.build()?,
        rate: a.rate,
        boundary: a.boundary,
        grad_clip: a.grad_clip,
        optimizer: a.optimizer,
    };
    let every = (a.iters / 20).max(1);
    let report = train_with_progress(&mut model, &data, &cfg, |i, l| {
        if i % every == 0 || i + 1 == a.iters {
            eprintln!("iter {i}: loss {l:.6e}");
        }
    })?;
    model.save(&a.ckpt_out)?;
    if let Some(p) = &a.history_out {
        write(p, &report.history_csv())?;
    }
    println!("final loss: {:e}", report.history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    if a.totals.is_empty() {
        return Err(Error::InvalidParameter("--totals is required".into()));
    }
    let mut samples = Vec::with_capacity(a.n);
    let mut trace = None;
    for i in 0..a.n {
        let sample_seed = rng::derive_u64(seed, &[i as u64]);
        let generation = if let Some(ckpt) = &a.ckpt {
            let mut model = ToyConvModel::load(ckpt)?;
            if model.channels() != a.totals.len() {
                return Err(Error::InvalidParameter(format!(
                    "checkpoint has {} channels, --totals lists {}",
                    model.channels(),
                    a.totals.len()
                )));
            }
            let mut cfg = SamplerConfig::new(a.width, a.height, a.totals.clone(), model.boundary(), a.rate, a.eps);
            cfg.max_steps = a.max_steps;
            generate(&mut model, &cfg, sample_seed)?
        } else {
            let path = a.oracle_ledger.as_ref().expect("clap enforces one predictor");
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let ledger = ParticleLedger::from_csv(&text, a.width, a.height, a.totals.len())?;
            let mut oracle = oracle_predictor(Some(ledger), a.boundary, a.rate)?;
            let mut cfg = SamplerConfig::new(a.width, a.height, a.totals.clone(), a.boundary, a.rate, a.eps);
            cfg.max_steps = a.max_steps;
            generate(&mut oracle, &cfg, sample_seed)?
        };
        let audit = audit_totals(&a.totals, &generation.grid.totals());
        if !audit.all_conserved() {
            return Err(Error::Corrupt {
                what: "generated sample",
                reason: audit.to_text(),
            });
        }
        if trace.is_none() {
            trace = Some(generation.trace_csv());
        }
        samples.push(generation.grid);
    }
    save_dir(&a.out, "sample_", &samples)?;
    if let (Some(p), Some(t)) = (&a.trace, trace) {
        write(p, &t)?;
    }
    println!("generated {} samples with totals {:?}", samples.len(), a.totals);
    Ok(())
}

fn cmd_inpaint(a: &InpaintArgs, seed: u64) -> Result<()> {
    let partial = load_image(&a.partial)?;
    let mask_img = load_image(&a.mask)?;
    if mask_img.width() != partial.width() || mask_img.height() != partial.height() {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, partial image is {}x{}",
            mask_img.width(),
            mask_img.height(),
            partial.width(),
            partial.height()
        )));
    }
    let mask: Vec<bool> = (0..partial.height())
        .flat_map(|y| (0..partial.width()).map(move |x| (x, y)))
        .map(|(x, y)| (0..mask_img.channels()).any(|c| mask_img.get(x, y, c) > 0))
        .collect();
    let mut model = ToyConvModel::load(&a.ckpt)?;
    let mut cfg = SamplerConfig::new(
        partial.width(),
        partial.height(),
        vec![0; partial.channels()],
        model.boundary(),
        a.rate,
        a.eps,
    );
    cfg.max_steps = a.max_steps;
    let out = inpaint(&mut model, &partial, &mask, &a.region_totals, &cfg, seed)?;
    save_image(&out, &a.out)?;
    let frozen = mask.iter().filter(|&&m| m).count();
    println!("inpainted {} free pixels, {frozen} frozen", mask.len() - frozen);
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let describe = |dir: &PathBuf| -> Result<(Vec<IntensityGrid>, Vec<f64>, Vec<f64>)> {
        let grids = load_dir(dir, &a.glob)?;
        if grids.is_empty() {
            return Err(Error::Dataset { file: dir.clone(), reason: format!("no files match {}", a.glob) });
        }
        // Generated samples may stack units on a pixel, so both sides use the
        // intensity forms; on binary images they equal porosity and S₂.
        let phis: Vec<f64> = grids.iter().map(|g| mean_intensity(g, 0)).collect();
        let curves = grids
            .iter()
            .map(|g| intensity_correlation(g, a.max_lag, a.boundary))
            .collect::<Result<Vec<_>>>()?;
        Ok((grids, phis, mean_curve(&curves)))
    };
    let (gen, gen_phi, gen_s2) = describe(&a.generated)?;
    let (_, ref_phi, ref_s2) = describe(&a.reference)?;
    let mut csv = String::from("lag,S2_generated,S2_reference\n");
    for (lag, (g, r)) in gen_s2.iter().zip(&ref_s2).enumerate() {
        csv.push_str(&format!("{lag},{g},{r}\n"));
    }
    write(&a.out, &csv)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let dev = gen_s2.iter().zip(&ref_s2).map(|(g, r)| (g - r).abs()).sum::<f64>() / gen_s2.len() as f64;
    let totals = gen[0].totals();
    let same = gen.iter().filter(|g| g.totals() == totals).count();
    println!("mean intensity (porosity) generated {:.6} reference {:.6}", mean(&gen_phi), mean(&ref_phi));
    println!("mean |S2 deviation| over lags 0..={}: {dev:.6}", a.max_lag);
    println!("totals {:?}: {same}/{} generated images match", totals, gen.len());
    Ok(())
}
