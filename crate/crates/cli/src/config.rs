//! Run configuration: a strict key-value tree with every default filled in
//! and echoed.  Unknown keys are fatal so typos cannot silently change a run.

use serde::{Deserialize, Serialize};

use cghydro_core::{ExponentFactor, FluctuationMode, KappaParenthesization, PrefactorMode};

use crate::CliError;

/// Environment variable overriding `budget` (bytes).
pub const MEM_BUDGET_ENV: &str = "CGHYDRO_MEM_BUDGET";

fn default_budget() -> u64 {
    2 * 1024 * 1024 * 1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    pub initial_state: StateConfig,
    #[serde(default)]
    pub fluctuation: FluctuationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub box_length: f64,
    pub points_per_dim: usize,
    #[serde(default = "one")]
    pub dims: usize,
    #[serde(default = "one")]
    pub particles: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub m: f64,
    #[serde(default)]
    pub l_av: f64,
    #[serde(default = "default_c_p")]
    pub c_p: f64,
    #[serde(default)]
    pub prefactor_mode: PrefactorModeCfg,
    #[serde(default = "default_s_h")]
    pub s_h: f64,
    #[serde(default = "default_s_zeta")]
    pub s_zeta: f64,
    #[serde(default = "default_eps_node")]
    pub eps_node: f64,
    #[serde(default)]
    pub kappa_parenthesization: KappaParenCfg,
}

fn default_c_p() -> f64 {
    0.5
}

fn default_s_h() -> f64 {
    -1.0
}

fn default_s_zeta() -> f64 {
    1.0
}

fn default_eps_node() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorModeCfg {
    #[default]
    Standard,
    Paper,
}

impl From<PrefactorModeCfg> for PrefactorMode {
    fn from(v: PrefactorModeCfg) -> Self {
        match v {
            PrefactorModeCfg::Standard => PrefactorMode::Standard,
            PrefactorModeCfg::Paper => PrefactorMode::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaParenCfg {
    #[default]
    Inside,
    Outside,
}

impl From<KappaParenCfg> for KappaParenthesization {
    fn from(v: KappaParenCfg) -> Self {
        match v {
            KappaParenCfg::Inside => KappaParenthesization::Inside,
            KappaParenCfg::Outside => KappaParenthesization::Outside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    GaussianPacket {
        center: Vec<f64>,
        sigma: f64,
        #[serde(default)]
        momentum: Vec<f64>,
    },
    PlaneWave {
        mode: Vec<i64>,
    },
    Superposition {
        components: Vec<ComponentConfig>,
    },
    File {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: [f64; 2],
    pub state: StateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationConfig {
    #[serde(default)]
    pub mode: FluctuationModeCfg,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub irrelevant_amplitude: f64,
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        FluctuationConfig {
            mode: FluctuationModeCfg::Deterministic,
            seed: 0,
            irrelevant_amplitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FluctuationModeCfg {
    #[default]
    Deterministic,
    Ensemble,
}

impl From<FluctuationModeCfg> for FluctuationMode {
    fn from(v: FluctuationModeCfg) -> Self {
        match v {
            FluctuationModeCfg::Deterministic => FluctuationMode::Deterministic,
            FluctuationModeCfg::Ensemble => FluctuationMode::Ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub l_values: Vec<f64>,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub l_count: Option<usize>,
    #[serde(default = "default_t_probe")]
    pub t_probe: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_ratio_threshold")]
    pub ratio_threshold: f64,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: usize,
    pub expansion_k_max: Option<f64>,
}

fn default_t_probe() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-3
}

fn default_ratio_threshold() -> f64 {
    0.1
}

fn default_sample_stride() -> usize {
    16
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            l_values: Vec::new(),
            l_min: None,
            l_max: None,
            l_count: None,
            t_probe: default_t_probe(),
            tol: default_tol(),
            ratio_threshold: default_ratio_threshold(),
            sample_stride: default_sample_stride(),
            expansion_k_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "cgh".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

impl RunConfig {
    /// Parse and validate; every violation names the offending field path.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.grid.box_length) {
            errors.push("grid.box_length: must be positive".to_string());
        }
        if !(1..=3).contains(&self.grid.dims) {
            errors.push("grid.dims: must be 1, 2 or 3".to_string());
        }
        if !(1..=3).contains(&self.grid.particles) {
            errors.push("grid.particles: must be 1, 2 or 3".to_string());
        }
        if self.grid.points_per_dim < 2 || !self.grid.points_per_dim.is_power_of_two() {
            errors.push("grid.points_per_dim: must be a power of two".to_string());
        }
        if !positive(self.physics.m) {
            errors.push("physics.m: must be positive".to_string());
        }
        if !(self.physics.l_av.is_finite() && self.physics.l_av >= 0.0) {
            errors.push("physics.l_av: must be non-negative".to_string());
        }
        if self.physics.c_p != 0.5 && self.physics.c_p != 0.25 {
            errors.push("physics.c_p: must be 0.5 or 0.25".to_string());
        }
        if self.physics.s_h.abs() != 1.0 {
            errors.push("physics.s_h: must be +1 or -1".to_string());
        }
        if self.physics.s_zeta.abs() != 1.0 {
            errors.push("physics.s_zeta: must be +1 or -1".to_string());
        }
        if !positive(self.physics.eps_node) || self.physics.eps_node >= 1.0 {
            errors.push("physics.eps_node: must be in (0, 1)".to_string());
        }
        if !positive(self.time.dt) {
            errors.push("time.dt: must be positive".to_string());
        }
        if !(self.time.t_final.is_finite() && self.time.t_final >= 0.0) {
            errors.push("time.t_final: must be non-negative".to_string());
        }
        if self.time.snapshot_stride == 0 {
            errors.push("time.snapshot_stride: must be at least 1".to_string());
        }
        self.validate_state(&self.initial_state, "initial_state", true, &mut errors);
        if self.fluctuation.irrelevant_amplitude < 0.0 {
            errors.push("fluctuation.irrelevant_amplitude: must be non-negative".to_string());
        }
        if !self.sweep.l_values.is_empty() {
            if self
                .sweep
                .l_values
                .windows(2)
                .any(|w| w[1] <= w[0])
                || self.sweep.l_values[0] <= 0.0
            {
                errors
                    .push("sweep.l_values: must be positive and strictly increasing".to_string());
            }
        }
        if !positive(self.sweep.t_probe) {
            errors.push("sweep.t_probe: must be positive".to_string());
        }
        if !(self.sweep.tol > 0.0) {
            errors.push("sweep.tol: must be positive".to_string());
        }
        if !positive(self.sweep.ratio_threshold) {
            errors.push("sweep.ratio_threshold: must be positive".to_string());
        }
        for f in &self.output.formats {
            if f != "csv" && f != "cgh" {
                errors.push(format!("output.formats: unknown format \"{f}\""));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors.join("; ")))
        }
    }

    fn validate_state(
        &self,
        state: &StateConfig,
        path: &str,
        allow_super: bool,
        errors: &mut Vec<String>,
    ) {
        let d = self.grid.dims;
        match state {
            StateConfig::GaussianPacket {
                center,
                sigma,
                momentum,
            } => {
                if center.len() != d {
                    errors.push(format!("{path}.center: needs {d} components"));
                }
                if !momentum.is_empty() && momentum.len() != d {
                    errors.push(format!("{path}.momentum: needs {d} components"));
                }
                if !(*sigma > 0.0) {
                    errors.push(format!("{path}.sigma: must be positive"));
                }
            }
            StateConfig::PlaneWave { mode } => {
                if mode.len() != d {
                    errors.push(format!("{path}.mode: needs {d} components"));
                }
            }
            StateConfig::Superposition { components } => {
                if !allow_super {
                    errors.push(format!("{path}: superpositions cannot nest"));
                }
                if components.is_empty() {
                    errors.push(format!("{path}.components: must not be empty"));
                }
                for (i, c) in components.iter().enumerate() {
                    self.validate_state(
                        &c.state,
                        &format!("{path}.components[{i}].state"),
                        false,
                        errors,
                    );
                }
            }
            StateConfig::File { path: p } => {
                if p.is_empty() {
                    errors.push(format!("{path}.path: must not be empty"));
                }
            }
        }
    }

    /// `l` grid for sweeps: explicit values win over the `(min, max, count)`
    /// triple.
    pub fn sweep_l_grid(&self) -> Result<Vec<f64>, CliError> {
        if !self.sweep.l_values.is_empty() {
            return Ok(self.sweep.l_values.clone());
        }
        match (self.sweep.l_min, self.sweep.l_max, self.sweep.l_count) {
            (Some(lo), Some(hi), Some(n)) if n >= 3 && lo > 0.0 && hi > lo => Ok((0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()),
            _ => Err(CliError::Config(
                "sweep: provide l_values or the triple l_min < l_max with l_count >= 3".into(),
            )),
        }
    }

    pub fn exponent_factor(&self) -> ExponentFactor {
        if self.physics.c_p == 0.25 {
            ExponentFactor::Quarter
        } else {
            ExponentFactor::Half
        }
    }

    /// Budget in bytes with the environment override applied.
    pub fn effective_budget(&self) -> u128 {
        std::env::var(MEM_BUDGET_ENV)
            .ok()
            .and_then(|v| v.parse::<u128>().ok())
            .unwrap_or(self.budget as u128)
    }

    pub fn wants_format(&self, f: &str) -> bool {
        self.output.formats.iter().any(|x| x == f)
    }
}
