//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! scenarios = pmpm_fc, spc_mpm
//! num_antennas = 32
//! rf_chains = 8
//! angles = 0
//! snr_db = 20
//! snapshots = 128
//! sweep = theta
//! grid = -60, -30, 0, 30, 60
//! trials = 200
//! seed = 7
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    FdMpm,
    PmpmFc,
    PmpmPc,
    SpcMpm,
    /// `L`-antenna FD pencil on the virtual `M_RF`-spaced array, branch chosen
    /// by the true angle.
    FdMpmVirtual,
    /// FD bound with all `K~` snapshots.
    CrlbFd,
    /// FD bound with `K = K~/N` snapshots, the PMPM reference.
    CrlbFdK,
    CrlbSpc,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::FdMpm,
        ScenarioKind::PmpmFc,
        ScenarioKind::PmpmPc,
        ScenarioKind::SpcMpm,
        ScenarioKind::FdMpmVirtual,
        ScenarioKind::CrlbFd,
        ScenarioKind::CrlbFdK,
        ScenarioKind::CrlbSpc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::FdMpm => "fd_mpm",
            ScenarioKind::PmpmFc => "pmpm_fc",
            ScenarioKind::PmpmPc => "pmpm_pc",
            ScenarioKind::SpcMpm => "spc_mpm",
            ScenarioKind::FdMpmVirtual => "fd_mpm_virtual",
            ScenarioKind::CrlbFd => "crlb_fd",
            ScenarioKind::CrlbFdK => "crlb_fd_k",
            ScenarioKind::CrlbSpc => "crlb_spc",
        }
    }

    /// Bound-only scenarios run no estimator.
    pub fn is_bound(&self) -> bool {
        matches!(self, ScenarioKind::CrlbFd | ScenarioKind::CrlbFdK | ScenarioKind::CrlbSpc)
    }

    pub fn needs_hybrid(&self) -> bool {
        !matches!(self, ScenarioKind::FdMpm | ScenarioKind::CrlbFd)
    }

    pub fn needs_partially_connected(&self) -> bool {
        matches!(self, ScenarioKind::SpcMpm | ScenarioKind::FdMpmVirtual | ScenarioKind::CrlbSpc)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                DoaError::Config(format!("unknown scenario `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// SNR in dB applied to every source.
    Snr,
    /// Angle of the first source in degrees.
    Theta,
    /// Total snapshot budget `K~`.
    Snapshots,
    /// Second source placed at `theta_1 - value` degrees.
    Separation,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::Theta => "theta",
            SweepAxis::Snapshots => "snapshots",
            SweepAxis::Separation => "separation",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "snr" => Ok(SweepAxis::Snr),
            "theta" => Ok(SweepAxis::Theta),
            "snapshots" => Ok(SweepAxis::Snapshots),
            "separation" => Ok(SweepAxis::Separation),
            other => Err(DoaError::Config(format!(
                "unknown sweep `{other}`; expected snr, theta, snapshots or separation"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AngleSpec {
    Fixed(Vec<f64>),
    /// Drawn uniformly per trial, redrawn until every pair is at least
    /// `min_separation` degrees apart.
    Random {
        count: usize,
        min_deg: f64,
        max_deg: f64,
        min_separation: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenarios: Vec<ScenarioKind>,
    pub num_antennas: usize,
    pub spacing_ratio: f64,
    pub rf_chains: usize,
    pub angles: AngleSpec,
    /// One value for all sources, or one per source.
    pub snr_db: Vec<f64>,
    pub noiseless: bool,
    pub snapshots: usize,
    /// SPC reserves `max(1, K~ / stage_two_divisor)` snapshots for disambiguation.
    pub stage_two_divisor: usize,
    /// FD and PMPM pencil parameter, default `M/2`.
    pub pencil_parameter: Option<usize>,
    /// SPC pencil parameter, default `L/2`.
    pub spc_pencil_parameter: Option<usize>,
    pub sweep: SweepAxis,
    /// Empty means a single point at the configured value.
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// When false, `wall_ms` is written as zero so output is byte-stable.
    pub timing: bool,
    /// Worker threads, 0 defers to `PENCIL_DOA_THREADS` or the machine default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            scenarios: vec![ScenarioKind::FdMpm],
            num_antennas: 32,
            spacing_ratio: 0.5,
            rf_chains: 8,
            angles: AngleSpec::Fixed(vec![0.0]),
            snr_db: vec![20.0],
            noiseless: false,
            snapshots: 128,
            stage_two_divisor: 8,
            pencil_parameter: None,
            spc_pencil_parameter: None,
            sweep: SweepAxis::Snr,
            grid: Vec::new(),
            trials: 200,
            seed: 1,
            timing: true,
            threads: 0,
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`].
pub const CONFIG_KEYS: [&str; 22] = [
    "name",
    "scenarios",
    "num_antennas",
    "spacing_ratio",
    "rf_chains",
    "angles",
    "num_sources",
    "theta_min",
    "theta_max",
    "min_separation",
    "snr_db",
    "noiseless",
    "snapshots",
    "stage_two_divisor",
    "pencil_parameter",
    "spc_pencil_parameter",
    "sweep",
    "grid",
    "trials",
    "seed",
    "timing",
    "threads",
];

fn field_err(key: &str, value: &str, why: impl fmt::Display) -> DoaError {
    DoaError::Config(format!("field `{key}`: cannot use `{value}`: {why}"))
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| field_err(key, value, e))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_one::<f64>(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(field_err(key, value, "expected true or false")),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim() {
        "" | "auto" => Ok(None),
        v => parse_one(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let key = key.as_str();
        match key {
            "name" => self.name = value.trim().to_string(),
            "scenarios" => {
                self.scenarios = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse().map_err(|e: DoaError| e.in_context(format_args!("field `{key}`"))))
                    .collect::<Result<_>>()?;
            }
            "num_antennas" => self.num_antennas = parse_one(key, value)?,
            "spacing_ratio" => self.spacing_ratio = parse_one(key, value)?,
            "rf_chains" => self.rf_chains = parse_one(key, value)?,
            "angles" => {
                if value.trim() == "random" {
                    self.angles = match self.angles {
                        AngleSpec::Random { .. } => self.angles.clone(),
                        AngleSpec::Fixed(ref a) => AngleSpec::Random {
                            count: a.len().max(1),
                            min_deg: -60.0,
                            max_deg: 60.0,
                            min_separation: 2.0,
                        },
                    };
                } else {
                    self.angles = AngleSpec::Fixed(parse_list(key, value)?);
                }
            }
            "num_sources" | "theta_min" | "theta_max" | "min_separation" => {
                let AngleSpec::Random {
                    count,
                    min_deg,
                    max_deg,
                    min_separation,
                } = &mut self.angles
                else {
                    return Err(field_err(key, value, "only valid after `angles = random`"));
                };
                match key {
                    "num_sources" => *count = parse_one(key, value)?,
                    "theta_min" => *min_deg = parse_one(key, value)?,
                    "theta_max" => *max_deg = parse_one(key, value)?,
                    _ => *min_separation = parse_one(key, value)?,
                }
            }
            "snr_db" => self.snr_db = parse_list(key, value)?,
            "noiseless" => self.noiseless = parse_bool(key, value)?,
            "snapshots" => self.snapshots = parse_one(key, value)?,
            "stage_two_divisor" => self.stage_two_divisor = parse_one(key, value)?,
            "pencil_parameter" => self.pencil_parameter = parse_optional(key, value)?,
            "spc_pencil_parameter" => self.spc_pencil_parameter = parse_optional(key, value)?,
            "sweep" => self.sweep = value.parse().map_err(|e: DoaError| e.in_context(format_args!("field `{key}`")))?,
            "grid" => self.grid = parse_list(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "threads" => self.threads = parse_one(key, value)?,
            _ => {
                return Err(DoaError::Config(format!(
                    "unknown field `{key}`; expected one of {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DoaError::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            self.set(key, value)
                .map_err(|e| e.in_context(format_args!("line {}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Values actually swept: the grid, or the configured value when empty.
    pub fn sweep_values(&self) -> Vec<f64> {
        if !self.grid.is_empty() {
            return self.grid.clone();
        }
        let current = match self.sweep {
            SweepAxis::Snr => self.snr_db.first().copied().unwrap_or(0.0),
            SweepAxis::Theta => match &self.angles {
                AngleSpec::Fixed(a) => a.first().copied().unwrap_or(0.0),
                AngleSpec::Random { .. } => 0.0,
            },
            SweepAxis::Snapshots => self.snapshots as f64,
            SweepAxis::Separation => match &self.angles {
                AngleSpec::Fixed(a) if a.len() >= 2 => a[0] - a[1],
                _ => 0.0,
            },
        };
        vec![current]
    }
}
