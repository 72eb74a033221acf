use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use vaisman_core::models::DcConvention;
use vaisman_core::pipeline::Tolerances;
use vaisman_core::solver::SolverConfig;

use crate::error::CliError;

/// Which subcommand is being configured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Solve,
    Uniqueness,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Uniqueness => "uniqueness",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Hopf2,
    Hopf3,
    Nil3,
}

impl ModelId {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "hopf2" => Ok(Self::Hopf2),
            "hopf3" => Ok(Self::Hopf3),
            "nil3" => Ok(Self::Nil3),
            _ => Err(CliError::Usage(format!("unknown model `{s}` (hopf2, hopf3, nil3)"))),
        }
    }

    pub fn is_hopf(self) -> bool {
        !matches!(self, Self::Nil3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Standard,
    Flipped,
}

impl From<Convention> for DcConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Standard => DcConvention::Standard,
            Convention::Flipped => DcConvention::Flipped,
        }
    }
}

/// Every tolerance used by a pass/fail decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToleranceConfig {
    pub identity: f64,
    pub order: f64,
    pub character: f64,
    pub residual: f64,
    pub volume: f64,
    pub vaisman: f64,
    pub lee_class: f64,
    pub kernel: f64,
    pub uniqueness: f64,
    pub metric: f64,
}

impl ToleranceConfig {
    pub fn pipeline(&self) -> Tolerances {
        Tolerances {
            volume: self.volume,
            vaisman: self.vaisman,
            lee_class: self.lee_class,
            kernel_angle: self.kernel,
            uniqueness_potential: self.uniqueness,
            uniqueness_metric: self.metric,
        }
    }
}

/// Effective configuration of one run; echoed verbatim in the report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelId,
    pub grid: usize,
    pub psi: String,
    pub lee_scale: f64,
    pub alpha: f64,
    pub seed: u64,
    pub samples: usize,
    pub inits: usize,
    pub fd_step: f64,
    pub order_step: f64,
    pub max_iters: usize,
    pub convention: Convention,
    pub tol: ToleranceConfig,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON echo.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol_residual: self.tol.residual,
            max_iters: self.max_iters,
            ..SolverConfig::default()
        }
    }
}

/// Raw `key = value` settings, from a file or from flags.
#[derive(Clone, Debug, Default)]
pub struct Settings(BTreeMap<String, String>);

const KEYS: &[&str] = &[
    "model",
    "grid",
    "psi",
    "lee_scale",
    "alpha",
    "seed",
    "samples",
    "inits",
    "fd_step",
    "order_step",
    "max_iters",
    "convention",
    "out",
    "tol_identity",
    "tol_order",
    "tol_character",
    "tol_residual",
    "tol_volume",
    "tol_vaisman",
    "tol_lee_class",
    "tol_kernel",
    "tol_uniqueness",
    "tol_metric",
];

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = normalize_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("unknown configuration key `{key}`")));
        }
        self.0.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
            out.set(key, value)
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `other` wins on conflicts.
    pub fn merged(mut self, other: Settings) -> Self {
        self.0.extend(other.0);
        self
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.get::<f64>(key)?.unwrap_or(default);
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::Usage(format!("`{key}` must be positive and finite, got {v}")));
        }
        Ok(v)
    }

    pub fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let model = ModelId::parse(self.0.get("model").map_or("hopf2", String::as_str))?;
        let grid = self.get::<usize>("grid")?.unwrap_or(match model {
            ModelId::Nil3 => 16,
            _ => 32,
        });
        if model == ModelId::Hopf3 && command != Command::Verify {
            return Err(CliError::Usage(
                "the solve, uniqueness and report commands support hopf2 and nil3".into(),
            ));
        }
        let psi = self.0.get("psi").cloned().unwrap_or_else(|| {
            match model {
                ModelId::Nil3 => "cc13:0.2",
                ModelId::Hopf2 => "y20:0.3",
                ModelId::Hopf3 => "zero",
            }
            .to_string()
        });
        let convention = match self.0.get("convention").map_or("standard", String::as_str) {
            "standard" => Convention::Standard,
            "flipped" => Convention::Flipped,
            other => return Err(CliError::Usage(format!("unknown convention `{other}` (standard, flipped)"))),
        };
        let alpha = self.positive("alpha", 2.0)?;
        if alpha <= 1.0 {
            return Err(CliError::Usage(format!("`alpha` must exceed 1, got {alpha}")));
        }
        let samples = self.get::<usize>("samples")?.unwrap_or(match (command, model) {
            (Command::Verify, ModelId::Nil3) => 100,
            (Command::Verify, _) => 1000,
            _ => 64,
        });
        if samples == 0 {
            return Err(CliError::Usage("`samples` must be at least 1".into()));
        }
        let inits = self.get::<usize>("inits")?.unwrap_or(3);
        if matches!(command, Command::Uniqueness | Command::Report) && inits < 2 {
            return Err(CliError::Usage(format!(
                "uniqueness needs at least 2 initializations, got {inits}"
            )));
        }
        let sphere = model.is_hopf();
        let tol = ToleranceConfig {
            identity: self.positive("tol_identity", if sphere { 1e-6 } else { 1e-12 })?,
            order: self.positive("tol_order", 0.5)?,
            character: self.positive("tol_character", 1e-10)?,
            residual: self.positive("tol_residual", 1e-10)?,
            volume: self.positive("tol_volume", 1e-6)?,
            vaisman: self.positive("tol_vaisman", 1e-5)?,
            lee_class: self.positive("tol_lee_class", 1e-8)?,
            kernel: self.positive("tol_kernel", 1e-6)?,
            uniqueness: self.positive("tol_uniqueness", if sphere { 1e-12 } else { 1e-8 })?,
            metric: self.positive("tol_metric", 1e-7)?,
        };
        let cfg = RunConfig {
            command,
            model,
            grid,
            psi,
            lee_scale: self.positive("lee_scale", 1.0)?,
            alpha,
            seed: self.get::<u64>("seed")?.unwrap_or(0),
            samples,
            inits,
            fd_step: self.positive("fd_step", 1e-4)?,
            order_step: self.positive("order_step", 1e-2)?,
            max_iters: self.get::<usize>("max_iters")?.unwrap_or(50),
            convention,
            tol,
            out: PathBuf::from(self.0.get("out").map_or("out", String::as_str)),
        };
        cfg.solver().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}
