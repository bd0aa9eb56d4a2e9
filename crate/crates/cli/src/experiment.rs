//! Dataset preparation, the per-method reconstruction pipeline, and run
//! directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use inctpv::data::{corrupt, generate_phantom, load_image_folder_named, write_png16, write_raw, EllipsePhantomSpec, NoiseModel};
use inctpv::guess::{load_guess_run, oracle_blend_guess, GuessOperator, IdentityGuess, ModelGuess};
use inctpv::incremental::{inc_dg_with, inc_tpv_with, scale_image, scale_observation, tpv_decreasing_with, IncrementalOutcome};
use inctpv::ir::{ir_solve_with, IrConfig};
use inctpv::metrics::batch_stats;
use inctpv::operators::{fbp_reconstruct, FanBeamGeometry, FanBeamProjector, GaussianBlur, LinearOperator};
use inctpv::{relative_error, ssim, tpv_objective, CpSolver, Image, IncrementalTrace, Observation, StepRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, ExperimentConfig, GuessConfig, Method, Task};
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.cfg";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DATASET_HASH_FILE: &str = "dataset_hash.txt";
pub const VERSIONS_FILE: &str = "versions.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TIMES_FILE: &str = "times.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// Noise streams are offset from the phantom seeds so the two never share a
/// ChaCha stream.
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub index: usize,
    pub name: String,
    pub sha256: String,
}

/// Ground truths and their observations, plus a hash identifying the whole
/// problem set (images, operator, noise, seed).
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    pub ground_truth: Vec<Image>,
    pub observations: Vec<Observation>,
    pub hash: String,
}

pub enum ForwardModel {
    Blur(GaussianBlur),
    FanBeam(FanBeamProjector),
}

impl ForwardModel {
    pub fn new(cfg: &ExperimentConfig, width: usize, height: usize) -> CliResult<Self> {
        Ok(match cfg.task {
            Task::Deblur => ForwardModel::Blur(GaussianBlur::new(width, height, cfg.operator.sigma)?),
            Task::Ct => {
                if width != height {
                    return Err(CliError::Dataset(format!("CT needs square images, got {width}x{height}")));
                }
                let geometry = FanBeamGeometry::new(width, cfg.operator.views, cfg.operator.detectors);
                ForwardModel::FanBeam(FanBeamProjector::new(geometry)?)
            }
        })
    }

    pub fn op(&self) -> &dyn LinearOperator {
        match self {
            ForwardModel::Blur(b) => b,
            ForwardModel::FanBeam(f) => f,
        }
    }

    /// `x̃`: the observation itself for deblurring, FBP for CT.
    pub fn starting_guess(&self, y: &Observation) -> CliResult<Image> {
        Ok(match self {
            ForwardModel::Blur(_) => y.to_image()?,
            ForwardModel::FanBeam(f) => fbp_reconstruct(y, f)?.clamped_nonneg(),
        })
    }

    fn describe(&self) -> String {
        match self {
            ForwardModel::Blur(b) => format!("blur sigma={}", b.kernel().sigma()),
            ForwardModel::FanBeam(f) => {
                let g = f.geometry();
                format!("fanbeam views={} detectors={} side={}", g.num_views, g.detector_count, g.image_side)
            }
        }
    }
}

fn image_digest(img: &Image) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    for v in img.as_slice() {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn load_ground_truth(cfg: &ExperimentConfig) -> CliResult<Vec<(String, Image)>> {
    match &cfg.dataset {
        DatasetConfig::Phantoms { count, side } => (0..*count)
            .map(|i| {
                let spec = EllipsePhantomSpec::with_side_and_seed(*side, cfg.seed.wrapping_add(i as u64));
                Ok((format!("phantom_{i:04}"), generate_phantom(&spec)?))
            })
            .collect(),
        DatasetConfig::Folder { path } => {
            if !path.is_dir() {
                return Err(CliError::Config {
                    field: "dataset.path".into(),
                    reason: format!("{} is not a directory", path.display()),
                });
            }
            let named = load_image_folder_named(path)?;
            if named.is_empty() {
                return Err(CliError::Dataset(format!("no PNG images in {}", path.display())));
            }
            Ok(named
                .into_iter()
                .map(|(p, img)| {
                    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    (name, img)
                })
                .collect())
        }
    }
}

pub fn noise_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(NOISE_STREAM).wrapping_add(index as u64)
}

/// Loads or generates the ground truths, builds the forward model, and
/// corrupts every image.
pub fn prepare(cfg: &ExperimentConfig) -> CliResult<(Dataset, ForwardModel)> {
    let named = load_ground_truth(cfg)?;
    let (w, h) = (named[0].1.width(), named[0].1.height());
    let model = ForwardModel::new(cfg, w, h)?;
    let mut entries = Vec::with_capacity(named.len());
    let mut ground_truth = Vec::with_capacity(named.len());
    let mut observations = Vec::with_capacity(named.len());
    let mut hasher = Sha256::new();
    hasher.update(model.describe().as_bytes());
    hasher.update(cfg.noise.to_le_bytes());
    hasher.update(cfg.seed.to_le_bytes());
    for (index, (name, img)) in named.into_iter().enumerate() {
        let y = corrupt(&img, model.op(), &NoiseModel::new(cfg.noise, noise_seed(cfg.seed, index))?)?;
        let sha256 = image_digest(&img);
        hasher.update(sha256.as_bytes());
        entries.push(DatasetEntry { index, name, sha256 });
        ground_truth.push(img);
        observations.push(y);
    }
    let hash = format!("{:x}", hasher.finalize());
    Ok((
        Dataset {
            entries,
            ground_truth,
            observations,
            hash,
        },
        model,
    ))
}

/// Guess operators for one image, in step order.
enum Guesses {
    Identity(IdentityGuess),
    Blend(Vec<inctpv::OracleBlendGuess>),
    Models(Vec<ModelGuess>),
}

impl Guesses {
    fn refs(&self, steps: usize) -> Vec<&dyn GuessOperator> {
        match self {
            Guesses::Identity(g) => vec![g as &dyn GuessOperator; steps],
            Guesses::Blend(v) => v.iter().map(|g| g as &dyn GuessOperator).collect(),
            Guesses::Models(v) => v.iter().map(|g| g as &dyn GuessOperator).collect(),
        }
    }
}

/// Everything shared by the per-image work of one method.
pub struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ForwardModel,
    solver: CpSolver<'a>,
    models: Option<Vec<ModelGuess>>,
}

/// One image's reconstruction and bookkeeping.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: Image,
    pub trace: IncrementalTrace,
    pub wall_time_s: f64,
    pub cp_iterations: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ExperimentConfig, model: &'a ForwardModel, side: usize) -> CliResult<Self> {
        // Estimating ‖[K; D]‖ once per operator keeps it out of per-image times.
        let solver = CpSolver::new(model.op())?;
        let models = match (&cfg.guess, cfg.method) {
            (Some(GuessConfig::Model { dir }), Method::IncDg | Method::IncNn) => {
                if !dir.is_dir() {
                    return Err(CliError::Config {
                        field: "guess.dir".into(),
                        reason: format!("{} is not a directory", dir.display()),
                    });
                }
                Some(load_guess_run(dir, cfg.schedule()?.steps(), side)?)
            }
            _ => None,
        };
        Ok(Self {
            cfg,
            model,
            solver,
            models,
        })
    }

    fn guesses(&self, gt: &Image, steps: usize) -> CliResult<Guesses> {
        Ok(match (&self.cfg.guess, &self.models) {
            (_, Some(models)) => Guesses::Models(models.clone()),
            (Some(GuessConfig::OracleBlend { beta }), _) => Guesses::Blend(
                (0..steps)
                    .map(|_| oracle_blend_guess(gt.clone(), *beta))
                    .collect::<inctpv::Result<_>>()?,
            ),
            _ => Guesses::Identity(IdentityGuess),
        })
    }

    /// Reconstructs one image; the timer covers the starting guess too.
    pub fn reconstruct(&self, y: &Observation, gt: &Image) -> CliResult<Reconstruction> {
        let started = Instant::now();
        let x0 = self.model.starting_guess(y)?;
        let outcome = match self.cfg.method {
            Method::Fbp => IncrementalOutcome {
                trace: IncrementalTrace::default(),
                image: x0,
                snapshots: vec![],
                guesses: vec![],
            },
            Method::TpvFixed => self.fixed(y, &x0, &self.cfg.baseline_ir()?)?,
            Method::TpvDecreasing => tpv_decreasing_with(&self.solver, y, &x0, self.cfg.schedule()?)?,
            Method::IncTpv => inc_tpv_with(&self.solver, y, &x0, self.cfg.schedule()?)?,
            Method::IncDg | Method::IncNn => {
                let schedule = self.cfg.effective_schedule()?;
                let guesses = self.guesses(gt, schedule.steps())?;
                inc_dg_with(&self.solver, y, &x0, &schedule, &guesses.refs(schedule.steps()))?
            }
        };
        let wall_time_s = started.elapsed().as_secs_f64();
        Ok(Reconstruction {
            cp_iterations: outcome.trace.total_cp_iterations(),
            image: outcome.image,
            trace: outcome.trace,
            wall_time_s,
        })
    }

    /// Single IR solve, recorded as a one-step trace.
    fn fixed(&self, y: &Observation, x0: &Image, ir: &IrConfig) -> CliResult<IncrementalOutcome> {
        let k = self.model.op();
        // Same units as the incremental schedule, so the two λ are comparable.
        let c = self.cfg.schedule()?.intensity_scale;
        let (y, x0) = (&scale_observation(y, c)?, &scale_image(&x0.clone().clamped_nonneg(), c)?);
        let f_init = tpv_objective(x0, y, k, ir.lambda, ir.p)?;
        let started = Instant::now();
        let mut out = ir_solve_with(&self.solver, y, x0, ir)?;
        let step = StepRecord {
            h: 0,
            p: ir.p,
            lambda: ir.lambda,
            f: tpv_objective(&out.image, y, k, ir.lambda, ir.p)?,
            cp_iterations: out.cp_iterations,
            ir_rounds: out.rounds,
            converged: out.converged,
            guess: "warm-start".into(),
            snapshot: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        if c != 1.0 {
            out.image = out.image.map(|v| v / c)?;
        }
        Ok(IncrementalOutcome {
            image: out.image,
            trace: IncrementalTrace {
                f_init,
                steps: vec![step],
            },
            snapshots: vec![],
            guesses: vec![],
        })
    }
}

/// Per-image row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub index: usize,
    pub name: String,
    pub re: f64,
    pub ssim: f64,
    pub input_re: f64,
    pub cp_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub name: String,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub label: String,
    pub dataset_hash: String,
    pub metrics: Vec<MetricRow>,
    pub times: Vec<f64>,
    pub failures: Vec<Failure>,
}

pub fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config {
            field: "workers".into(),
            reason: e.to_string(),
        })
}

fn mkdir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| CliError::io(path, e))).collect()
}

pub fn versions() -> String {
    format!(
        "inctpv-cli {}\ninctpv-core {}\nonnx-opset {}\ntarget {}-{}\n",
        env!("CARGO_PKG_VERSION"),
        inctpv::VERSION,
        inctpv::guess::ONNX_OPSET,
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Files every output directory starts with: config copy, dataset listing
/// and hash, versions.
pub fn write_preamble(dir: &Path, cfg: &ExperimentConfig, dataset: &Dataset) -> CliResult<()> {
    mkdir(dir)?;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    let mut listing = String::new();
    for e in &dataset.entries {
        listing.push_str(&serde_json::to_string(e).expect("entry serializes"));
        listing.push('\n');
    }
    write_text(&dir.join(DATASET_FILE), &listing)?;
    write_text(&dir.join(DATASET_HASH_FILE), &format!("{}\n", dataset.hash))?;
    write_text(&dir.join(VERSIONS_FILE), &versions())
}

pub fn output_dir(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    cfg.output.clone().ok_or_else(|| CliError::Config {
        field: "output".into(),
        reason: "no output directory: set `output` or pass --out".into(),
    })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    images: usize,
    failed: usize,
    re_mean: f64,
    re_std: f64,
    ssim_mean: f64,
    ssim_std: f64,
    input_re_mean: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub method: String,
    pub images: usize,
    pub repeats: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub repeat_std_s: f64,
    pub mean_cp_iterations: f64,
}

pub const TIMING_HEADER: [&str; 8] = [
    "label",
    "method",
    "images",
    "repeats",
    "mean_s",
    "std_s",
    "repeat_std_s",
    "mean_cp_iterations",
];

/// Timing summary from per-repeat, per-image samples.
pub fn timing_row(label: &str, method: &str, samples: &[Vec<f64>], mean_cp: f64) -> TimingRow {
    let all: Vec<f64> = samples.iter().flatten().copied().collect();
    let per_repeat: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let stats = |v: &[f64]| batch_stats(v).map(|s| (s.mean, s.std)).unwrap_or((f64::NAN, f64::NAN));
    let (mean_s, std_s) = stats(&all);
    TimingRow {
        label: label.to_string(),
        method: method.to_string(),
        images: samples.first().map_or(0, Vec::len),
        repeats: samples.len(),
        mean_s,
        std_s,
        repeat_std_s: stats(&per_repeat).1,
        mean_cp_iterations: mean_cp,
    }
}

/// Runs one configured experiment and writes its run directory:
/// `recon/` (PNG plus exact raw), `traces/`, metric, summary, and timing
/// CSVs. Per-image failures are recorded in `failures.csv` and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    cfg.validate()?;
    let dir = output_dir(cfg)?;
    let (dataset, model) = prepare(cfg)?;
    let side = dataset.ground_truth[0].width();
    let pipeline = Pipeline::new(cfg, &model, side)?;
    write_preamble(&dir, cfg, &dataset)?;
    for sub in ["recon", "traces"] {
        mkdir(&dir.join(sub))?;
    }

    let pool = thread_pool(cfg.workers())?;
    let n = dataset.entries.len();
    let results: Vec<CliResult<(MetricRow, f64)>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let entry = &dataset.entries[i];
                let (gt, y) = (&dataset.ground_truth[i], &dataset.observations[i]);
                let rec = pipeline.reconstruct(y, gt)?;
                let x0 = model.starting_guess(y)?;
                write_png16(&dir.join("recon").join(format!("{}.png", entry.name)), &rec.image)?;
                write_raw(
                    &dir.join("recon").join(format!("{}.raw", entry.name)),
                    rec.image.height(),
                    rec.image.width(),
                    rec.image.as_slice(),
                )?;
                rec.trace.save(&dir.join("traces").join(format!("{}.jsonl", entry.name)))?;
                let row = MetricRow {
                    index: entry.index,
                    name: entry.name.clone(),
                    re: relative_error(&rec.image, gt)?,
                    ssim: ssim(&rec.image, gt)?,
                    input_re: relative_error(&x0, gt)?,
                    cp_iterations: rec.cp_iterations,
                };
                Ok((row, rec.wall_time_s))
            })
            .collect()
    });

    let mut metrics = Vec::new();
    let mut times = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((row, t)) => {
                metrics.push(row);
                times.push(t);
            }
            Err(e) => failures.push(Failure {
                index: i,
                name: dataset.entries[i].name.clone(),
                error: e.to_string(),
            }),
        }
    }

    write_csv(&dir.join(METRICS_FILE), &metrics, &["index", "name", "re", "ssim", "input_re", "cp_iterations"])?;
    write_csv(&dir.join(FAILURES_FILE), &failures, &["index", "name", "error"])?;
    let time_rows: Vec<(usize, &str, f64)> =
        metrics.iter().zip(&times).map(|(m, t)| (m.index, m.name.as_str(), *t)).collect();
    write_csv(&dir.join(TIMES_FILE), &time_rows, &["index", "name", "wall_time_s"])?;

    let label = cfg.label();
    let col = |f: fn(&MetricRow) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
    let stats = |v: &[f64]| batch_stats(v).map(|s| (s.mean, s.std)).unwrap_or((f64::NAN, f64::NAN));
    let (re_mean, re_std) = stats(&col(|m| m.re));
    let (ssim_mean, ssim_std) = stats(&col(|m| m.ssim));
    let summary = SummaryRow {
        method: &label,
        images: metrics.len(),
        failed: failures.len(),
        re_mean,
        re_std,
        ssim_mean,
        ssim_std,
        input_re_mean: stats(&col(|m| m.input_re)).0,
    };
    write_csv(
        &dir.join(SUMMARY_FILE),
        &[summary],
        &["method", "images", "failed", "re_mean", "re_std", "ssim_mean", "ssim_std", "input_re_mean"],
    )?;
    let mean_cp = metrics.iter().map(|m| m.cp_iterations as f64).sum::<f64>() / metrics.len().max(1) as f64;
    write_csv(
        &dir.join(TIMING_FILE),
        &[timing_row(&label, cfg.method.name(), &[times.clone()], mean_cp)],
        &TIMING_HEADER,
    )?;

    Ok(RunReport {
        dir,
        label,
        dataset_hash: dataset.hash,
        metrics,
        times,
        failures,
    })
}

/// Writes the dataset without reconstructing: ground truths (PNG and raw),
/// observations (raw), and starting guesses (PNG).
pub fn generate(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = output_dir(cfg)?;
    let (dataset, model) = prepare(cfg)?;
    write_preamble(&dir, cfg, &dataset)?;
    for sub in ["gt", "observations", "start"] {
        mkdir(&dir.join(sub))?;
    }
    let mut notes = String::new();
    for (i, e) in dataset.entries.iter().enumerate() {
        let gt = &dataset.ground_truth[i];
        let y = &dataset.observations[i];
        write_png16(&dir.join("gt").join(format!("{}.png", e.name)), gt)?;
        write_raw(&dir.join("gt").join(format!("{}.raw", e.name)), gt.height(), gt.width(), gt.as_slice())?;
        inctpv::data::write_observation(&dir.join("observations").join(format!("{}.raw", e.name)), y)?;
        let x0 = model.starting_guess(y)?;
        write_png16(&dir.join("start").join(format!("{}.png", e.name)), &x0)?;
        let _ = writeln!(notes, "{},{}", e.name, relative_error(&x0, gt)?);
    }
    write_text(&dir.join("start_re.csv"), &format!("name,re\n{notes}"))?;
    Ok(dir)
}
