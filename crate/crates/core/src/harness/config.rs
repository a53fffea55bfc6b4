use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::error::{Error, Result};
use crate::gcn::Activation;
use crate::gctm::{GctmConfig, RhoMode};
use crate::inference::VbOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Gctm,
    Svb,
    SvbPp,
    Pvb,
}

impl ModelKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            ModelKind::Gctm => None,
            ModelKind::Svb => Some(BaselineKind::Svb),
            ModelKind::SvbPp => Some(BaselineKind::SvbPp),
            ModelKind::Pvb => Some(BaselineKind::Pvb),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gctm" => Ok(ModelKind::Gctm),
            "svb" => Ok(ModelKind::Svb),
            "svbpp" => Ok(ModelKind::SvbPp),
            "pvb" => Ok(ModelKind::Pvb),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gctm => "gctm",
            ModelKind::Svb => "svb",
            ModelKind::SvbPp => "svbpp",
            ModelKind::Pvb => "pvb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Fixed,
    Timestamp,
    Label,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Scenario::Fixed),
            "timestamp" => Ok(Scenario::Timestamp),
            "label" => Ok(Scenario::Label),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Everything a run depends on. Written verbatim to `config.resolved`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelKind,
    pub scenario: Scenario,
    pub seed: u64,

    pub vocab: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    /// `None` means identity features.
    pub features: Option<PathBuf>,
    pub feature_dim: Option<usize>,
    pub out: Option<PathBuf>,

    pub num_topics: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub min_test_len: u32,
    pub test_size: usize,
    pub label_order: Vec<String>,
    pub holdout_per_class: usize,

    pub vb_tol: f64,
    pub vb_max_iter: usize,
    pub lpp_ratio: f64,
    pub lpp_splits: usize,
    pub top_t: usize,

    /// Prior scale σ_β on β, and on W̃ unless `sigma_w` is set.
    pub sigma: f64,
    pub sigma_w: Option<f64>,
    pub lr: f64,
    pub inner_steps: usize,
    pub num_layers: usize,
    pub hidden_dim: Option<usize>,
    pub rho_init: f64,
    pub rho_mode: RhoMode,
    pub init_std: f64,
    pub output_activation: Activation,

    pub eta: f64,
    pub rho_pp: f64,
    pub tau0: f64,
    pub kappa: f64,
    pub population: f64,
    pub init_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BaselineConfig::default();
        Self {
            preset: None,
            model: ModelKind::Gctm,
            scenario: Scenario::Fixed,
            seed: 0,
            vocab: None,
            corpus: None,
            graph: None,
            features: None,
            feature_dim: None,
            out: None,
            num_topics: 50,
            alpha: 0.01,
            batch_size: 100,
            min_test_len: 5,
            test_size: 1000,
            label_order: Vec::new(),
            holdout_per_class: 100,
            vb_tol: 1e-5,
            vb_max_iter: 50,
            lpp_ratio: 0.8,
            lpp_splits: 5,
            top_t: 20,
            sigma: 1.0,
            sigma_w: None,
            lr: 0.01,
            inner_steps: 100,
            num_layers: 2,
            hidden_dim: None,
            rho_init: 0.5,
            rho_mode: RhoMode::Sigmoid,
            init_std: 0.1,
            output_activation: Activation::Linear,
            eta: b.eta,
            rho_pp: b.rho_pp,
            tau0: b.tau0,
            kappa: b.kappa,
            population: b.population,
            init_noise: b.init_noise,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_topics == 0 {
            return bad("num_topics must be positive");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma_w.is_none_or(|s| s > 0.0)) {
            return bad("sigma must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if !(self.lpp_ratio > 0.0 && self.lpp_ratio < 1.0) {
            return bad("lpp_ratio must lie in (0,1)");
        }
        if self.lpp_splits == 0 {
            return bad("lpp_splits must be at least 1");
        }
        if self.top_t < 2 {
            return bad("top_t must be at least 2");
        }
        if self.min_test_len < crate::corpus::MIN_SPLIT_LEN {
            return bad("min_test_len must be at least 5");
        }
        self.baseline_config().validate()
    }

    pub fn vb_options(&self) -> VbOptions {
        VbOptions {
            tol: self.vb_tol,
            max_iter: self.vb_max_iter,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            eta: self.eta,
            rho_pp: self.rho_pp,
            tau0: self.tau0,
            kappa: self.kappa,
            population: self.population,
            init_noise: self.init_noise,
        }
    }

    pub fn gctm_config(&self, vocab_size: usize, feature_dim: usize) -> GctmConfig {
        GctmConfig {
            num_topics: self.num_topics,
            vocab_size,
            feature_dim,
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            alpha: self.alpha,
            sigma_beta: self.sigma,
            sigma_w: self.sigma_w.unwrap_or(self.sigma),
            rho_init: self.rho_init,
            rho_mode: self.rho_mode,
            init_std: self.init_std,
            output_activation: self.output_activation,
        }
    }

    /// Applies a named preset of tuned hyperparameters.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = PRESETS
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; known: {}", preset_names().join(", "))))?;
        self.preset = Some(name.to_string());
        self.num_topics = p.num_topics;
        self.sigma = p.sigma;
        self.kappa = p.kappa;
        self.population = p.population;
        self.rho_pp = p.rho_pp;
        Ok(())
    }
}

/// Tuned settings per dataset; `sigma` is the value for the Wordnet graph,
/// `-w2v` variants carry the embedding-graph value.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub num_topics: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub population: f64,
    pub rho_pp: f64,
}

const fn preset(name: &'static str, num_topics: usize, sigma: f64, kappa: f64, population: f64, rho_pp: f64) -> Preset {
    Preset {
        name,
        num_topics,
        sigma,
        kappa,
        population,
        rho_pp,
    }
}

pub const PRESETS: &[Preset] = &[
    preset("agnews", 50, 1.0, 0.9, 1e4, 0.99),
    preset("agnews-w2v", 50, 1.0, 0.9, 1e4, 0.99),
    preset("agnews-title", 50, 1.0, 0.9, 1e6, 0.99),
    preset("agnews-title-w2v", 50, 1.0, 0.9, 1e6, 0.99),
    preset("tmn", 50, 1.0, 0.9, 1e3, 0.99),
    preset("tmn-w2v", 50, 100.0, 0.9, 1e3, 0.99),
    preset("tmn-title", 50, 1.0, 0.9, 1e3, 0.99),
    preset("tmn-title-w2v", 50, 100.0, 0.9, 1e3, 0.99),
    preset("yahoo-title", 100, 0.01, 0.9, 1e6, 0.99),
    preset("yahoo-title-w2v", 100, 100.0, 0.9, 1e6, 0.99),
    preset("nyt-title", 100, 100.0, 0.9, 1e5, 0.99),
    preset("nyt-title-w2v", 100, 1.0, 0.9, 1e5, 0.99),
    preset("irishtimes", 100, 0.01, 0.9, 1e5, 0.9),
    preset("irishtimes-w2v", 100, 0.01, 0.9, 1e5, 0.9),
    preset("irishtimes-timestamp", 100, 0.01, 0.5, 1e5, 0.5),
    preset("irishtimes-timestamp-w2v", 100, 0.01, 0.5, 1e5, 0.5),
    preset("twitter", 100, 1.0, 0.9, 1e6, 0.99),
    preset("twitter-w2v", 100, 1.0, 0.9, 1e6, 0.99),
    preset("drift", 50, 100.0, 0.9, 1e6, 0.9),
    preset("drift-w2v", 50, 0.01, 0.9, 1e6, 0.9),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
