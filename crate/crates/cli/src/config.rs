//! Run configuration. Every struct rejects unknown keys.

use std::path::{Path, PathBuf};

use anomix::cascade::{CascadeInput, DeskOverrides, Mode, Scale, StageDurations, LN_100};
use anomix::fields::ProfileKind;
use anomix::solver::DtPolicy;
use serde::{Deserialize, Serialize};

/// a0 as a number, or as a decimal literal such as "1e-50000" when the
/// value underflows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSpec {
    Number(f64),
    Text(String),
}

impl ScaleSpec {
    pub fn to_scale(&self) -> anomix::Result<Scale> {
        match self {
            ScaleSpec::Number(v) if *v > 0.0 => Ok(Scale::from_value(*v)),
            ScaleSpec::Number(v) => Err(anomix::Error::Input(format!("a0 = {v} must be positive"))),
            ScaleSpec::Text(s) => Scale::parse(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskConfig {
    pub durations: Vec<StageDurations>,
    pub ratios: Vec<u64>,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_budget")]
    pub decay_budget: f64,
}

fn default_window() -> f64 {
    4.0
}

fn default_budget() -> f64 {
    LN_100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub mode: Mode,
    #[serde(default)]
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub a0: ScaleSpec,
    #[serde(rename = "Q")]
    pub q_count: usize,
    #[serde(default = "default_m")]
    pub m: u64,
    #[serde(default)]
    pub desk: Option<DeskConfig>,
}

fn default_m() -> u64 {
    1
}

impl CascadeConfig {
    pub fn to_input(&self) -> anomix::Result<CascadeInput> {
        Ok(CascadeInput {
            alpha: self.alpha,
            epsilon: self.epsilon,
            delta: self.delta,
            a0: self.a0.to_scale()?,
            q_count: self.q_count,
            m: self.m,
            mode: self.mode,
            desk: self.desk.as_ref().map(|d| DeskOverrides {
                durations: d.durations.clone(),
                ratios: d.ratios.clone(),
                window: d.window,
                decay_budget: d.decay_budget,
            }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// 2D sweep grid.
    pub n: usize,
    /// Grid for the mixing-stage checks.
    #[serde(default = "default_mix_n")]
    pub n_mix: usize,
    /// 3D scalar grid of the Navier–Stokes check.
    #[serde(default = "default_nxy")]
    pub n_xy: usize,
    #[serde(default = "default_nz")]
    pub n_z: usize,
    /// Velocity planes of the Navier–Stokes check.
    #[serde(default = "default_plane_t")]
    pub plane_t: usize,
    #[serde(default = "default_plane_z")]
    pub plane_z: usize,
}

fn default_mix_n() -> usize {
    512
}
fn default_nxy() -> usize {
    64
}
fn default_nz() -> usize {
    256
}
fn default_plane_t() -> usize {
    1024
}
fn default_plane_z() -> usize {
    4096
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    /// The literal string "matched": one run per stage at κ_q.
    Keyword(String),
    List(Vec<f64>),
}

impl Default for KappaSpec {
    fn default() -> Self {
        KappaSpec::Keyword("matched".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Write profile CSVs next to sweep.csv.
    #[serde(default = "yes")]
    pub profiles: bool,
    /// Write the JSON step list of the schedule.
    #[serde(default)]
    pub schedule_json: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cascade: CascadeConfig,
    pub grid: GridConfig,
    /// Starting substep, halved by the dt policy as needed.
    pub dt: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    #[serde(default)]
    pub kappas: KappaSpec,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
    /// Initial mollification radius as a fraction of a0.
    #[serde(default = "quarter")]
    pub moll_frac: f64,
    /// Multiplies every shear displacement in mix-test.
    #[serde(default = "one")]
    pub amplitude_scale: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Seeds the sampling diagnostics only.
    #[serde(default)]
    pub seed: u64,
    /// Viscosities for ns-check; matched (0 and every ν_q) when absent.
    #[serde(default)]
    pub nus: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}
fn quarter() -> f64 {
    0.25
}
fn default_profile() -> ProfileKind {
    ProfileKind::Square
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(serde_json::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        serde_json::from_str(text).map_err(ConfigError::Parse)
    }

    pub fn matched(&self) -> Result<bool, String> {
        match &self.kappas {
            KappaSpec::Keyword(k) if k == "matched" => Ok(true),
            KappaSpec::Keyword(k) => Err(format!("unknown kappa keyword {k:?}")),
            KappaSpec::List(_) => Ok(false),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT: &str = include_str!("../config/default.json");

    #[test]
    fn shipped_config_parses_and_roundtrips() {
        let c = RunConfig::parse(DEFAULT).unwrap();
        let back = RunConfig::parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert!(c.matched().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT).unwrap();
        v["grid"]["bogus"] = serde_json::json!(1);
        assert!(RunConfig::parse(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT).unwrap();
        v["extra"] = serde_json::json!(true);
        assert!(RunConfig::parse(&v.to_string()).is_err());
    }

    #[test]
    fn log_form_a0() {
        let s = ScaleSpec::Text("1e-50000".into()).to_scale().unwrap();
        assert!((s.ln + 50000.0 * std::f64::consts::LN_10).abs() < 1e-6);
        assert_eq!(s.value, 0.0);
    }
}
