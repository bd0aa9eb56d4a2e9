//! Experiment configuration, one TOML file per run (conventionally `*.cfg`).

use std::path::{Path, PathBuf};

use inctpv::incremental::{IncrementalConfig, IrTemplate, GRAY_LEVELS};
use inctpv::ir::IrConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Deblur,
    Ct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The starting guess itself (filtered back projection); CT only.
    Fbp,
    TpvFixed,
    TpvDecreasing,
    IncTpv,
    IncNn,
    IncDg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::TpvFixed => "tpv_fixed",
            Method::TpvDecreasing => "tpv_decreasing",
            Method::IncTpv => "inc_tpv",
            Method::IncNn => "inc_nn",
            Method::IncDg => "inc_dg",
        }
    }

    fn needs_schedule(self) -> bool {
        !matches!(self, Method::Fbp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// Gaussian blur standard deviation (deblur).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Fan-beam views over 180° (ct).
    #[serde(default = "default_views")]
    pub views: usize,
    /// Fan-beam detector cells (ct).
    #[serde(default = "default_detectors")]
    pub detectors: usize,
}

fn default_sigma() -> f64 {
    inctpv::operators::DEFAULT_SIGMA
}

fn default_views() -> usize {
    60
}

fn default_detectors() -> usize {
    500
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            views: default_views(),
            detectors: default_detectors(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// `count` ellipse phantoms with seeds `seed, seed + 1, …`.
    Phantoms {
        count: usize,
        #[serde(default = "default_side")]
        side: usize,
    },
    /// Every `*.png` in a folder, sorted by file name.
    Folder { path: PathBuf },
}

fn default_side() -> usize {
    256
}

/// Fixed-`λ` TpV baseline. Its `p` is not configurable: it is the final
/// exponent of the `[incremental]` schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub lambda: f64,
    pub k_ir: usize,
    #[serde(default)]
    pub ir: IrTemplate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuessConfig {
    Identity,
    /// `(1 − β) x + β x_gt`; needs ground truth, so it is a test fixture.
    OracleBlend { beta: f64 },
    /// A directory holding `psi_0.onnx … psi_{H−1}.onnx`.
    Model { dir: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Relative noise level `ν`.
    pub noise: f64,
    /// Base seed: phantom `i` uses `seed + i`, its noise a derived stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub operator: OperatorConfig,
    pub dataset: DatasetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incremental: Option<IncrementalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<GuessConfig>,
}

/// Command-line overrides, applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub identity_guess: bool,
}

fn config_error(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Parses a config. A deblurring schedule without `intensity_scale`
    /// gets the gray-level scale its default `λ⁽⁰⁾` is expressed in.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .filter(|_| e.message().contains("field"))
                .unwrap_or("<syntax>")
                .to_string();
            config_error(&field, e.message().to_string())
        })?;
        let raw: toml::Table = toml::from_str(text).map_err(|e| config_error("<syntax>", e.message().to_string()))?;
        let scale_given = raw
            .get("incremental")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("intensity_scale"));
        if let (false, Task::Deblur, Some(inc)) = (scale_given, cfg.task, cfg.incremental.as_mut()) {
            inc.intensity_scale = GRAY_LEVELS;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if o.identity_guess && self.method == Method::IncDg {
            self.guess = Some(GuessConfig::Identity);
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn schedule(&self) -> CliResult<&IncrementalConfig> {
        self.incremental
            .as_ref()
            .ok_or_else(|| config_error("incremental", format!("required by method {}", self.method.name())))
    }

    /// Schedule actually run: `inc_nn` keeps `λ`/`p` but zeroes every budget.
    pub fn effective_schedule(&self) -> CliResult<IncrementalConfig> {
        let mut s = self.schedule()?.clone();
        if self.method == Method::IncNn {
            s.scheduler.iter_mut().for_each(|k| *k = 0);
        }
        Ok(s)
    }

    /// IR configuration of the fixed-`λ` baseline, with `p = p^(H−1)`.
    pub fn baseline_ir(&self) -> CliResult<IrConfig> {
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| config_error("baseline", "required by method tpv_fixed"))?;
        Ok(b.ir.instantiate(self.schedule()?.final_p(), b.lambda, b.k_ir))
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(config_error("noise", format!("must be a finite value >= 0, got {}", self.noise)));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be >= 1"));
        }
        match self.task {
            Task::Deblur if !(self.operator.sigma > 0.0 && self.operator.sigma.is_finite()) => {
                return Err(config_error("operator.sigma", format!("must be > 0, got {}", self.operator.sigma)));
            }
            Task::Ct if self.operator.views == 0 => return Err(config_error("operator.views", "must be >= 1")),
            Task::Ct if self.operator.detectors == 0 => {
                return Err(config_error("operator.detectors", "must be >= 1"))
            }
            Task::Deblur if self.method == Method::Fbp => {
                return Err(config_error("method", "fbp is only defined for task ct"))
            }
            _ => {}
        }
        match &self.dataset {
            DatasetConfig::Phantoms { count: 0, .. } => return Err(config_error("dataset.count", "must be >= 1")),
            DatasetConfig::Phantoms { side, .. } if *side < 11 => {
                return Err(config_error("dataset.side", format!("must be >= 11, got {side}")))
            }
            _ => {}
        }
        if self.method.needs_schedule() {
            self.schedule()?
                .validate()
                .map_err(|e| config_error("incremental", e.to_string()))?;
        }
        match self.method {
            Method::TpvFixed => {
                self.baseline_ir()?.validate().map_err(|e| config_error("baseline", e.to_string()))?;
            }
            Method::IncNn => match &self.guess {
                Some(GuessConfig::Model { .. }) => {}
                _ => return Err(config_error("guess.dir", "method inc_nn needs [guess] kind = \"model\" with a dir")),
            },
            Method::IncDg => match &self.guess {
                None => return Err(config_error("guess", "method inc_dg needs a [guess] table or --identity-guess")),
                Some(GuessConfig::OracleBlend { beta }) if !(0.0..=1.0).contains(beta) => {
                    return Err(config_error("guess.beta", format!("must lie in [0, 1], got {beta}")))
                }
                _ => {}
            },
            _ => {}
        }
        Ok(())
    }
}
