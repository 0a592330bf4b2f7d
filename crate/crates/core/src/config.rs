//! Run configuration shared by the command-line tool and the bindings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControlGains;
use crate::error::{Result, ShieldError};
use crate::quadric::QuadricSurface;
use crate::simulator::{Method, StudyConfig, DEFAULT_DT};

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_t_end() -> f64 {
    30.0
}

fn default_runs() -> usize {
    5
}

fn default_sample_times() -> Vec<f64> {
    vec![8.0, 16.0, 30.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_gains() -> ControlGains {
    ControlGains::new(0.1, 1e3, 1e-3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: QuadricSurface,
    pub n: usize,
    #[serde(default = "default_gains")]
    pub gains: ControlGains,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs_per_delta: usize,
    #[serde(default = "default_sample_times")]
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub edge_slack: Option<f64>,
}

impl RunConfig {
    pub fn new(surface: QuadricSurface, n: usize) -> Self {
        Self {
            surface,
            n,
            gains: default_gains(),
            delta: None,
            deltas: Vec::new(),
            runs_per_delta: default_runs(),
            sample_times: default_sample_times(),
            seed: 0,
            dt: default_dt(),
            t_end: default_t_end(),
            method: Method::default(),
            out: default_out(),
            edge_slack: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            ShieldError::InvalidInput(format!("config JSON, line {} column {}: {e}", e.line(), e.column()))
        })?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ShieldError::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(ShieldError::InvalidInput(format!("at least 4 nodes are required, got {}", self.n)));
        }
        self.gains.validate()?;
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(ShieldError::InvalidInput(format!("bad time grid dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(ShieldError::InvalidInput(format!("delta must be positive, got {d}")));
            }
        }
        Ok(())
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            deltas: self.deltas.clone(),
            runs_per_delta: self.runs_per_delta,
            sample_times: self.sample_times.clone(),
            base_seed: self.seed,
            dt: self.dt,
            t_end: self.t_end,
            method: self.method,
        }
    }
}
