//! Experiment configuration: a TOML file with one table per stage.
//!
//! ```toml
//! seed = 7
//!
//! [driving]
//! kind = "iid"
//! alpha_lo = 0.35
//! alpha_hi = 0.65
//!
//! [system]
//! family = "expanding"
//! bins = 1024
//!
//! [observable]
//! kind = "cos"
//! freq = 1.0
//!
//! [ensemble]
//! n_grid = [64, 128, 256, 512]
//! paths = 500
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decomposition::{system_for, DecompositionSetup};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::observable::Observable;
use crate::random_system::{admissible_q, DrivingKind, DrivingSpec, MapFamily, GOLDEN_ANGLE, RandomSystem};
use crate::tower_sim::{TailSpec, TowerObservable, TowerSpec};
use crate::transfer::DEFAULT_BURN;
use crate::wasserstein::{FunctionalKind, FunctionalSpec, DEFAULT_BOOTSTRAP};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivingConfig {
    pub kind: DrivingKind,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    /// Seed of the driving realization; the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub family: MapFamily,
    pub bins: usize,
    /// Number of pushed terms `K`; the family default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    pub burn: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            family: MapFamily::Expanding,
            bins: 1024,
            truncation: None,
            burn: DEFAULT_BURN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_grid: Vec<usize>,
    pub paths: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_grid: vec![64, 128, 256, 512],
            paths: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub p: f64,
    /// Moment order; derived from the family tail when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// `δ` in `q = (a − 1 − δ)/(δ + 1)` when `q` is derived.
    pub delta: f64,
    pub bootstrap: usize,
    pub functionals: Vec<FunctionalKind>,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            p: 1.0,
            q: None,
            delta: 0.05,
            bootstrap: DEFAULT_BOOTSTRAP,
            functionals: vec![FunctionalKind::Endpoint, FunctionalKind::Sup],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerConfig {
    pub tail: TailSpec,
    pub samples: usize,
    pub renewal_steps: usize,
    pub lags: Vec<usize>,
    pub paths: usize,
    pub observable: TowerObservable,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            tail: TailSpec::polynomial(6.0, 8f64.powi(6)),
            samples: 100_000,
            renewal_steps: 200_000,
            lags: vec![1, 2, 4, 8, 16, 32],
            paths: 20_000,
            observable: TowerObservable::Base,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    pub driving: DrivingConfig,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default = "Observable::cos")]
    pub observable: Observable,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub tower: TowerConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

impl ExperimentConfig {
    /// Defaults around a driving range.
    pub fn new(driving: DrivingConfig) -> Self {
        ExperimentConfig {
            seed: 0,
            workers: None,
            out: default_out(),
            format: default_format(),
            driving,
            system: SystemConfig::default(),
            observable: Observable::cos(),
            ensemble: EnsembleConfig::default(),
            rate: RateConfig::default(),
            tower: TowerConfig::default(),
        }
    }

    /// Parses and validates; does not check rate-specific constraints.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .map_or(String::new(), |l| format!("line {l}: "));
            config_err("<file>", format!("{line}{}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.driving;
        if !(d.alpha_lo > 0.0 && d.alpha_lo < 1.0) {
            return Err(config_err("driving.alpha_lo", format!("{} must lie in (0, 1)", d.alpha_lo)));
        }
        if !(d.alpha_hi > 0.0 && d.alpha_hi < 1.0) {
            return Err(config_err("driving.alpha_hi", format!("{} must lie in (0, 1)", d.alpha_hi)));
        }
        if d.alpha_lo > d.alpha_hi {
            return Err(config_err("driving.alpha_hi", "must be >= alpha_lo"));
        }
        if let Some(t) = d.theta {
            if !t.is_finite() {
                return Err(config_err("driving.theta", "must be finite"));
            }
        }
        self.driving_spec().validate().map_err(|e| config_err("driving", e.to_string()))?;
        if self.system.bins < 2 {
            return Err(config_err("system.bins", "need at least 2 bins"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be >= 1"));
        }
        self.observable
            .validate()
            .map_err(|e| config_err("observable", e.to_string()))?;
        let g = &self.ensemble.n_grid;
        if g.is_empty() || g[0] == 0 {
            return Err(config_err("ensemble.n_grid", "must be nonempty with positive entries"));
        }
        if g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("ensemble.n_grid", "must be strictly increasing"));
        }
        if self.ensemble.paths == 0 {
            return Err(config_err("ensemble.paths", "must be >= 1"));
        }
        if !(self.rate.p >= 1.0) {
            return Err(config_err("rate.p", "must be >= 1"));
        }
        if !(self.rate.delta >= 0.0) {
            return Err(config_err("rate.delta", "must be >= 0"));
        }
        self.tower
            .tail
            .validate()
            .map_err(|e| config_err("tower.tail", e.to_string()))?;
        if self.tower.lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("tower.lags", "must be strictly increasing"));
        }
        Ok(())
    }

    /// Extra constraints of the rate experiment.
    pub fn validate_rate(&self) -> Result<()> {
        let q = self.effective_q();
        if !(q >= 4.0) {
            return Err(config_err("rate.q", format!("q = {q} < 4; the rate experiment needs q >= 4")));
        }
        if self.ensemble.n_grid.len() < 4 {
            return Err(config_err("ensemble.n_grid", "the rate fit needs at least 4 grid points"));
        }
        if self.ensemble.paths < 2 {
            return Err(config_err("ensemble.paths", "the rate experiment needs at least 2 paths"));
        }
        Ok(())
    }

    /// The configured `q`, or the one admitted by the family tail
    /// (infinite for exponential tails).
    pub fn effective_q(&self) -> f64 {
        self.rate.q.unwrap_or_else(|| {
            self.system
                .family
                .tail_exponent(self.driving.alpha_lo)
                .map_or(f64::INFINITY, |a| admissible_q(a, self.rate.delta))
        })
    }

    pub fn driving_spec(&self) -> DrivingSpec {
        let d = &self.driving;
        DrivingSpec {
            kind: d.kind,
            alpha_lo: d.alpha_lo,
            alpha_hi: d.alpha_hi,
            theta: d.theta.unwrap_or(GOLDEN_ANGLE),
            phase: d.phase,
            seed: d.seed.unwrap_or(self.seed),
        }
    }

    pub fn setup(&self) -> DecompositionSetup {
        let mut s = DecompositionSetup::for_family(self.system.family, self.system.bins);
        s.burn = self.system.burn;
        if let Some(k) = self.system.truncation {
            s.truncation = k;
        }
        s
    }

    /// The random system over fibers `0..=n` with the history the
    /// decomposition needs.
    pub fn system(&self, n: usize) -> Result<RandomSystem> {
        system_for(self.system.family, self.driving_spec(), self.setup(), 0, n)
    }

    /// Like [`Self::system`] with `history` extra fibers before 0.
    pub fn system_with_history(&self, history: usize, n: usize) -> Result<RandomSystem> {
        system_for(self.system.family, self.driving_spec(), self.setup(), history, n)
    }

    pub fn functionals(&self) -> Vec<FunctionalSpec> {
        self.rate
            .functionals
            .iter()
            .map(|&kind| FunctionalSpec { kind, t: 1.0 })
            .collect()
    }

    pub fn tower_spec(&self) -> TowerSpec {
        TowerSpec::new(self.tower.tail.clone())
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`], with the
    /// output directory and worker count excluded since they do not affect
    /// results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = None;
        c.format = OutputFormat::Csv;
        sha256_hex(c.canonical().as_bytes())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[driving]\nkind = \"iid\"\nalpha_lo = 0.4\nalpha_hi = 0.6\n";

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.system.family, MapFamily::Expanding);
        assert_eq!(c.observable, Observable::cos());
        assert_eq!(c.driving_spec().seed, 3);
        assert_eq!(c.setup().truncation, 30);
        assert!(c.effective_q().is_infinite());
    }

    #[test]
    fn canonical_round_trip_and_hash() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let back = ExperimentConfig::parse(&c.canonical()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        let mut other = c.clone();
        other.seed = 4;
        assert_ne!(c.hash(), other.hash());
        other = c.clone();
        other.out = "elsewhere".into();
        assert_eq!(c.hash(), other.hash());
    }

    #[test]
    fn validation_names_the_field() {
        let bad = MINIMAL.replace("alpha_lo = 0.4", "alpha_lo = 0");
        assert_eq!(field_of(ExperimentConfig::parse(&bad).unwrap_err()), "driving.alpha_lo");
        let bad = format!("{MINIMAL}[ensemble]\nn_grid = [8, 8]\n");
        assert_eq!(field_of(ExperimentConfig::parse(&bad).unwrap_err()), "ensemble.n_grid");
        let e = ExperimentConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(field_of(e), "<file>");
    }

    #[test]
    fn rate_requires_q_at_least_four() {
        let lsv = format!("{MINIMAL}[system]\nfamily = \"lsv\"\n").replace("alpha_lo = 0.4", "alpha_lo = 0.25");
        let c = ExperimentConfig::parse(&lsv).unwrap();
        // a = 4 gives q < 4
        assert_eq!(field_of(c.validate_rate().unwrap_err()), "rate.q");
        let ok = lsv.replace("alpha_lo = 0.25", "alpha_lo = 0.1");
        assert!(ExperimentConfig::parse(&ok).unwrap().validate_rate().is_ok());
    }
}
