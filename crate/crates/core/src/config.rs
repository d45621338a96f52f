//! Run configuration: a TOML document with dotted sections.
//!
//! Every key is optional; omitted keys take their defaults. Unknown keys,
//! type mismatches and constraint violations are reported with the line
//! they occur on (line 0 when the offending value is a default).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::cost::{CostSpec, CostWeights, RlTerm};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::mixing::InfluenceConfig;
use crate::mppi::MppiConfig;
use crate::ppo::PpoConfig;
use crate::trainer::{Mode, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiSection {
    pub samples: usize,
    /// Defaults to 10 for tracking/value forms, 3 for quadratic forms (2 on racing).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub noise_sigma: f64,
    pub lambda: f64,
}

impl Default for MppiSection {
    fn default() -> Self {
        let d = MppiConfig::default();
        Self { samples: d.samples, horizon: None, noise_sigma: d.noise_sigma, lambda: d.lambda }
    }
}

/// Cost form plus optional overrides of the per-environment weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub form: RlTerm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_rl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_act: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_coll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_value: Option<f64>,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            form: RlTerm::Tracking,
            w_rl: None,
            w_d: None,
            w_act: None,
            w_y: None,
            w_bound: None,
            w_coll: None,
            w_value: None,
        }
    }
}

impl CostSection {
    pub fn weights(&self, env: EnvKind) -> CostWeights {
        let d = CostWeights::for_env(env);
        CostWeights {
            w_rl: self.w_rl.unwrap_or(d.w_rl),
            w_d: self.w_d.unwrap_or(d.w_d),
            w_act: self.w_act.unwrap_or(d.w_act),
            w_y: self.w_y.unwrap_or(d.w_y),
            w_bound: self.w_bound.unwrap_or(d.w_bound),
            w_coll: self.w_coll.unwrap_or(d.w_coll),
            w_value: self.w_value.unwrap_or(d.w_value),
        }
    }
}

/// Model-error inputs of the value-error bound; unset spans are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub alpha_p: f64,
    pub alpha_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_g: Option<f64>,
    /// Start states and random rollouts per start for empirical estimates.
    pub starts: usize,
    pub rollouts_per_start: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        Self {
            alpha_p: 0.1,
            alpha_r: 0.05,
            span_r: None,
            r_max: None,
            span_g: None,
            starts: 32,
            rollouts_per_start: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub trainer: TrainerConfig,
    pub ppo: PpoConfig,
    pub mppi: MppiSection,
    pub cost: CostSection,
    pub rho: InfluenceConfig,
    pub bound: BoundSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Acrobot,
            mode: Mode::PpoMppi,
            track_file: None,
            out_dir: PathBuf::from("runs"),
            seeds: vec![0],
            trainer: TrainerConfig::default(),
            ppo: PpoConfig::default(),
            mppi: MppiSection::default(),
            cost: CostSection::default(),
            rho: InfluenceConfig::default(),
            bound: BoundSection::default(),
        }
    }
}

impl RunConfig {
    pub fn mppi(&self) -> MppiConfig {
        let horizon = self.mppi.horizon.unwrap_or(match (self.cost.form.is_quadratic(), self.env) {
            (false, _) => 10,
            (true, EnvKind::Racing) => 2,
            (true, _) => 3,
        });
        MppiConfig { samples: self.mppi.samples, horizon, noise_sigma: self.mppi.noise_sigma, lambda: self.mppi.lambda }
    }

    pub fn cost(&self) -> CostSpec {
        CostSpec { form: self.cost.form, weights: self.cost.weights(self.env) }
    }

    /// Checks every constraint, naming the offending key.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let tag = |key: &'static str| move |e: Error| (key, e.to_string());
        self.ppo.validate().map_err(tag("ppo"))?;
        self.mppi().validate().map_err(tag("mppi"))?;
        self.trainer.validate().map_err(tag("trainer"))?;
        let r = &self.rho;
        if !(0.0..=1.0).contains(&r.rho0) {
            return Err(("rho.rho0", format!("rho0 must lie in [0, 1], got {}", r.rho0)));
        }
        if !(0.0..1.0).contains(&r.lambda) {
            return Err(("rho.lambda", format!("lambda must lie in [0, 1), got {}", r.lambda)));
        }
        r.validate().map_err(tag("rho"))?;
        if !self.cost.weights(self.env).all_non_negative() {
            return Err(("cost", "cost weights must be finite and non-negative".into()));
        }
        if self.seeds.is_empty() {
            return Err(("seeds", "at least one seed is required".into()));
        }
        let b = &self.bound;
        if !(0.0..=2.0).contains(&b.alpha_p) || !(b.alpha_r >= 0.0 && b.alpha_r.is_finite()) {
            return Err(("bound", "alpha_p must lie in [0, 2] and alpha_r be non-negative".into()));
        }
        if b.starts == 0 || b.rollouts_per_start == 0 {
            return Err(("bound", "starts and rollouts_per_start must be at least 1".into()));
        }
        if self.track_file.is_some() && self.env != EnvKind::Racing {
            return Err(("track_file", "track_file only applies to the racing environment".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(_, msg)| Error::Config { line: 0, msg })
    }

    /// TOML rendering that parses back to an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { line: 0, msg: e.to_string() })
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::Config { line, msg: e.message().to_string() }
    })?;
    cfg.check().map_err(|(key, msg)| Error::Config { line: locate_key(text, key), msg: format!("{key}: {msg}") })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { line: 0, msg: format!("{}: {e}", path.display()) })?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config { line, msg } => Error::Config { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key` (dotted, e.g. `rho.lambda`) or opening its
/// table; 0 when the key is absent.
fn locate_key(text: &str, key: &str) -> usize {
    let mut table = String::new();
    let mut header_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = h.trim().to_string();
            if table == key && header_line == 0 {
                header_line = i + 1;
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(str::trim).collect::<Vec<_>>().join(".");
        let full = if table.is_empty() { lhs } else { format!("{table}.{lhs}") };
        if full == key || full.starts_with(&format!("{key}.")) {
            return i + 1;
        }
    }
    header_line
}
