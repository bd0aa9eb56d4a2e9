//! Incremental TpV: an outer loop that shrinks `p` geometrically toward the ℓ0
//! limit and adapts `λ` from the ratio of successive objective values, running
//! a budgeted reweighting solve at every step. With guess operators injected
//! before each solve it becomes the deep-guess variant; a zero scheduler
//! reduces that to plain composition of the guesses.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cp::CpSolver;
use crate::error::{Error, Result};
use crate::guess::GuessOperator;
use crate::image::{tpv_objective, Image, Observation};
use crate::ir::{ir_solve_with, IrConfig};
use crate::operators::LinearOperator;

/// Tolerances and inner block length shared by every outer step. `p` and
/// `λ` inside come from the schedule, and `k_ir` from the scheduler entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrTemplate {
    #[serde(default = "crate::ir::defaults::xi")]
    pub xi: f64,
    #[serde(default = "crate::ir::defaults::k_cp")]
    pub k_cp: usize,
    #[serde(default = "crate::ir::defaults::tau")]
    pub tau_x: f64,
    #[serde(default = "crate::ir::defaults::tau")]
    pub tau_f: f64,
    #[serde(default = "crate::ir::defaults::warm_dual")]
    pub warm_dual: bool,
}

impl Default for IrTemplate {
    fn default() -> Self {
        Self {
            xi: crate::ir::defaults::xi(),
            k_cp: crate::ir::defaults::k_cp(),
            tau_x: crate::ir::defaults::tau(),
            tau_f: crate::ir::defaults::tau(),
            warm_dual: crate::ir::defaults::warm_dual(),
        }
    }
}

impl IrTemplate {
    pub fn instantiate(&self, p: f64, lambda: f64, k_ir: usize) -> IrConfig {
        IrConfig {
            p,
            lambda,
            xi: self.xi,
            k_cp: self.k_cp,
            k_ir,
            tau_x: self.tau_x,
            tau_f: self.tau_f,
            warm_dual: self.warm_dual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementalConfig {
    /// Per-step CP budgets `K_h`; its length is `H`.
    pub scheduler: Vec<usize>,
    pub alpha_p: f64,
    pub lambda0: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default)]
    pub ir: IrTemplate,
    /// Keep `x̄^(0..=H)` in the outcome (needed for training-target export).
    #[serde(default)]
    pub keep_snapshots: bool,
    /// Gray-level scale of the solve: data and iterates are multiplied by it
    /// before each subproblem and divided afterwards, so `λ⁽⁰⁾`, `ξ` and the
    /// logged objectives are in those units. Guesses, snapshots and the
    /// result stay in `[0, 1]` units.
    #[serde(default = "default_intensity_scale")]
    pub intensity_scale: f64,
}

fn default_p0() -> f64 {
    1.0
}

fn default_intensity_scale() -> f64 {
    1.0
}

/// 8-bit gray levels, the units of the deblurring `λ⁽⁰⁾ = 0.5`.
pub const GRAY_LEVELS: f64 = 255.0;

impl IncrementalConfig {
    pub fn new(scheduler: Vec<usize>, alpha_p: f64, lambda0: f64) -> Self {
        Self {
            scheduler,
            alpha_p,
            lambda0,
            p0: 1.0,
            ir: IrTemplate::default(),
            keep_snapshots: false,
            intensity_scale: 1.0,
        }
    }

    pub fn with_intensity_scale(mut self, scale: f64) -> Self {
        self.intensity_scale = scale;
        self
    }

    /// Deblurring: `K = [100, 100, 50, 10]`, `α_p = 0.5`, `λ⁽⁰⁾ = 0.5`, solved
    /// in 8-bit gray levels.
    pub fn deblur_default() -> Self {
        Self::new(vec![100, 100, 50, 10], 0.5, 0.5).with_intensity_scale(GRAY_LEVELS)
    }

    /// CT: `K = [200, 500, 500, 500, 700, 700]`, `α_p = 0.7`, `λ⁽⁰⁾ = 0.01`.
    pub fn ct_default() -> Self {
        Self::new(vec![200, 500, 500, 500, 700, 700], 0.7, 0.01)
    }

    /// Deblurring schedule with the short deep-guess scheduler `[5; 4]`.
    pub fn deblur_guess_default() -> Self {
        Self::new(vec![5; 4], 0.5, 0.5).with_intensity_scale(GRAY_LEVELS)
    }

    /// CT schedule with the short deep-guess scheduler `[5; 6]`.
    pub fn ct_guess_default() -> Self {
        Self::new(vec![5; 6], 0.7, 0.01)
    }

    pub fn steps(&self) -> usize {
        self.scheduler.len()
    }

    pub fn total_budget(&self) -> usize {
        self.scheduler.iter().sum()
    }

    /// `p^(H−1) = p0 · α_p^(H−1)`, computed by the same repeated products as
    /// the schedule so the two agree bitwise.
    pub fn final_p(&self) -> f64 {
        let mut p = self.p0;
        for _ in 1..self.steps() {
            p = p * self.alpha_p;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_p > 0.0 && self.alpha_p < 1.0) {
            return Err(Error::param("alpha_p", format!("must lie in (0, 1), got {}", self.alpha_p)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::param("lambda0", format!("must be > 0, got {}", self.lambda0)));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::param(
                "intensity_scale",
                format!("must be > 0, got {}", self.intensity_scale),
            ));
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::param("p0", format!("must lie in (0, 1], got {}", self.p0)));
        }
        self.ir.instantiate(self.p0, self.lambda0, 0).validate()
    }
}

/// `λ^(h+1)`: `λ0/2` after the first step, then `λ_h f_h / f_prev`.
pub fn update_lambda(h: usize, lambda_h: f64, f_h: f64, f_prev: f64, lambda0: f64) -> Result<f64> {
    if h == 0 {
        return Ok(lambda0 / 2.0);
    }
    if !(f_prev > 0.0) {
        return Err(Error::DegenerateObjective(format!(
            "previous objective {f_prev} must be positive for the λ ratio update at step {h}"
        )));
    }
    Ok(lambda_h * f_h / f_prev)
}

/// `p^(h+1) = p_h · α_p`.
pub fn update_p(p_h: f64, alpha_p: f64) -> Result<f64> {
    if !(alpha_p > 0.0 && alpha_p < 1.0) {
        return Err(Error::param("alpha_p", format!("must lie in (0, 1), got {alpha_p}")));
    }
    if !(p_h > 0.0 && p_h <= 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1], got {p_h}")));
    }
    Ok(p_h * alpha_p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub h: usize,
    pub p: f64,
    pub lambda: f64,
    /// `½‖Kx̄^(h+1) − y‖² + λ^(h) TpV_{p^(h)}(x̄^(h+1))`.
    pub f: f64,
    pub cp_iterations: usize,
    pub ir_rounds: usize,
    pub converged: bool,
    /// Provenance of the step's starting point (`warm-start` or a guess descriptor).
    pub guess: String,
    /// Where the snapshot `x̄^(h+1)` was written, when persisted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementalTrace {
    /// Objective at the starting guess with `(λ⁽⁰⁾, p⁽⁰⁾)`; not used by the λ rule.
    pub f_init: f64,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine {
    Init { f_init: f64 },
    Step(StepRecord),
}

impl IncrementalTrace {
    pub fn total_cp_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.cp_iterations).sum()
    }

    pub fn p_sequence(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.p).collect()
    }

    pub fn lambda_sequence(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.lambda).collect()
    }

    /// One JSON object per line: an `init` record, then one `step` per `h`.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut line = |rec: &TraceLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")
        };
        line(&TraceLine::Init { f_init: self.f_init })?;
        for s in &self.steps {
            line(&TraceLine::Step(s.clone()))?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> std::result::Result<Self, String> {
        let mut trace = Self::default();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))? {
                TraceLine::Init { f_init } => trace.f_init = f_init,
                TraceLine::Step(s) => trace.steps.push(s),
            }
        }
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file)).map_err(|reason| Error::format(path, reason))
    }
}

#[derive(Clone, Debug)]
pub struct IncrementalOutcome {
    pub image: Image,
    pub trace: IncrementalTrace,
    /// `x̄^(0), …, x̄^(H)` when snapshots were requested, otherwise empty.
    pub snapshots: Vec<Image>,
    /// Guess outputs `x̂^(1), …, x̂^(H)` (deep-guess runs with snapshots only).
    pub guesses: Vec<Image>,
}

/// `c·x`; the identity (and a plain clone) for `c = 1`.
pub fn scale_image(x: &Image, c: f64) -> Result<Image> {
    if c == 1.0 {
        return Ok(x.clone());
    }
    x.map(|v| v * c)
}

/// `c·y`; the identity for `c = 1`.
pub fn scale_observation(y: &Observation, c: f64) -> Result<Observation> {
    if c == 1.0 {
        return Ok(y.clone());
    }
    Observation::new(y.shape(), y.as_slice().iter().map(|v| v * c).collect())
}

enum PSchedule {
    Geometric,
    Fixed(f64),
}

fn run(
    solver: &CpSolver,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
    guesses: Option<&[&dyn GuessOperator]>,
    p_schedule: PSchedule,
) -> Result<IncrementalOutcome> {
    cfg.validate()?;
    let k = solver.operator();
    let h_count = cfg.steps();
    if let Some(g) = guesses {
        if g.len() != h_count {
            return Err(Error::param(
                "guesses",
                format!("expected {h_count} guess operators, got {}", g.len()),
            ));
        }
    }

    let c = cfg.intensity_scale;
    let y = &scale_observation(y, c)?;
    // `u` is the iterate in [0, 1] units; the solver sees `c·u`.
    let mut u = x_tilde.clone().clamped_nonneg();
    let mut p = match p_schedule {
        PSchedule::Geometric => cfg.p0,
        PSchedule::Fixed(p) => p,
    };
    let mut lambda = cfg.lambda0;
    let mut trace = IncrementalTrace {
        f_init: tpv_objective(&scale_image(&u, c)?, y, k, lambda, p)?,
        steps: Vec::with_capacity(h_count),
    };
    let mut snapshots = Vec::new();
    let mut guess_images = Vec::new();
    if cfg.keep_snapshots {
        snapshots.push(u.clone());
    }
    let mut f_prev = f64::NAN;

    for (h, &budget) in cfg.scheduler.iter().enumerate() {
        let started = Instant::now();
        let mut provenance = "warm-start".to_string();
        if let Some(g) = guesses {
            let op = g[h];
            u = op.apply(&u)?;
            provenance = op.descriptor();
            if cfg.keep_snapshots {
                guess_images.push(u.clone());
            }
        }
        let mut x = scale_image(&u, c)?;
        let (mut cp_iterations, mut ir_rounds, mut converged) = (0, 0, false);
        if budget > 0 {
            let outcome = ir_solve_with(solver, y, &x, &cfg.ir.instantiate(p, lambda, budget))?;
            x = outcome.image;
            cp_iterations = outcome.cp_iterations;
            ir_rounds = outcome.rounds;
            converged = outcome.converged;
        }
        let f = tpv_objective(&x, y, k, lambda, p)?;
        u = if c == 1.0 { x } else { x.map(|v| v / c)? };
        trace.steps.push(StepRecord {
            h,
            p,
            lambda,
            f,
            cp_iterations,
            ir_rounds,
            converged,
            guess: provenance,
            snapshot: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if cfg.keep_snapshots {
            snapshots.push(u.clone());
        }
        if h + 1 < h_count {
            lambda = update_lambda(h, lambda, f, f_prev, cfg.lambda0)?;
            if let PSchedule::Geometric = p_schedule {
                p = update_p(p, cfg.alpha_p)?;
            }
        }
        f_prev = f;
    }

    Ok(IncrementalOutcome {
        image: u,
        trace,
        snapshots,
        guesses: guess_images,
    })
}

/// Incremental TpV with a caller-supplied solver (so `‖[K; D]‖` is estimated
/// once per operator, not per image).
pub fn inc_tpv_with(
    solver: &CpSolver,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
) -> Result<IncrementalOutcome> {
    run(solver, y, x_tilde, cfg, None, PSchedule::Geometric)
}

pub fn inc_tpv(
    k: &dyn LinearOperator,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
) -> Result<(Image, IncrementalTrace)> {
    let solver = CpSolver::new(k)?;
    let out = inc_tpv_with(&solver, y, x_tilde, cfg)?;
    Ok((out.image, out.trace))
}

/// Incremental deep guess: `guesses[h]` maps `x̄^(h)` to the starting point of
/// step `h`. Zero scheduler entries skip the solve entirely.
pub fn inc_dg_with(
    solver: &CpSolver,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
    guesses: &[&dyn GuessOperator],
) -> Result<IncrementalOutcome> {
    run(solver, y, x_tilde, cfg, Some(guesses), PSchedule::Geometric)
}

pub fn inc_dg(
    k: &dyn LinearOperator,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
    guesses: &[&dyn GuessOperator],
) -> Result<(Image, IncrementalTrace)> {
    let solver = CpSolver::new(k)?;
    let out = inc_dg_with(&solver, y, x_tilde, cfg, guesses)?;
    Ok((out.image, out.trace))
}

/// Baseline with the λ rule but no `p` continuation: `p` stays at
/// `p^(H−1)` while `λ` follows the same ratio update across the same budget
/// partition.
pub fn tpv_decreasing_with(
    solver: &CpSolver,
    y: &Observation,
    x_tilde: &Image,
    cfg: &IncrementalConfig,
) -> Result<IncrementalOutcome> {
    run(solver, y, x_tilde, cfg, None, PSchedule::Fixed(cfg.final_p()))
}
