use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::baselines::{BaselineConfig, NoiseTransition, DEFAULT_BETA_HARD, DEFAULT_BETA_SOFT, DEFAULT_SCE};
use crate::imaging::AbductionParams;
use crate::mtl::{BaseLoss, LossKind, TargetRegime, TrainConfig};
use crate::synthgen::GenParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    None,
    Forward,
    Backward,
    BoostHard,
    BoostSoft,
    Sce,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::None, Method::Forward, Method::Backward, Method::BoostHard, Method::BoostSoft, Method::Sce];

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "None",
            Method::Forward => "Forward",
            Method::Backward => "Backward",
            Method::BoostHard => "Boost-Hard",
            Method::BoostSoft => "Boost-Soft",
            Method::Sce => "SCE",
        }
    }
}

fn regime_label(r: TargetRegime) -> &'static str {
    match r {
        TargetRegime::T1 => "T1",
        TargetRegime::T2 => "T2",
        TargetRegime::Joint => "OSAMTLF",
    }
}

/// A training solution such as `None_T1` or `SCE_OSAMTLF`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Solution {
    pub method: Method,
    pub regime: TargetRegime,
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.method.label(), regime_label(self.regime))
    }
}

impl FromStr for Solution {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Config(format!("unknown solution {s:?}"));
        if s == "OSAMTLF" {
            return Ok(Solution { method: Method::None, regime: TargetRegime::Joint });
        }
        let (m, r) = s.rsplit_once('_').ok_or_else(bad)?;
        if m == "D2L" {
            return Err(ExperimentError::Config(format!("{s}: D2L is not supported")));
        }
        let method = Method::ALL.into_iter().find(|x| x.label() == m).ok_or_else(bad)?;
        let regime = match r {
            "T1" => TargetRegime::T1,
            "T2" => TargetRegime::T2,
            "OSAMTLF" => TargetRegime::Joint,
            _ => return Err(bad()),
        };
        Ok(Solution { method, regime })
    }
}

impl Solution {
    pub fn anchor(self, regime: TargetRegime) -> Solution {
        Solution { method: self.method, regime }
    }
}

pub fn default_solutions() -> Vec<String> {
    Method::ALL
        .into_iter()
        .flat_map(|m| [TargetRegime::T1, TargetRegime::T2, TargetRegime::Joint].map(move |regime| Solution { method: m, regime }))
        .map(|s| s.to_string())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Load this corpus instead of generating one.
    pub dir: Option<PathBuf>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub params: GenParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { dir: None, n_train: 200, n_val: 50, n_test: 50, params: GenParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub base_loss: BaseLoss,
    /// Weights of (Target1, Target2) in the joint loss.
    pub alphas: Vec<f64>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { base_loss: BaseLoss::Ace, alphas: vec![0.5, 0.5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub beta_hard: f64,
    pub beta_soft: f64,
    pub sce_alpha: f64,
    pub sce_beta: f64,
    pub sce_log_floor: f64,
    /// Fixed transition matrix; estimated from the training targets if absent.
    pub transition: Option<NoiseTransition>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            beta_hard: DEFAULT_BETA_HARD,
            beta_soft: DEFAULT_BETA_SOFT,
            sce_alpha: DEFAULT_SCE.0,
            sce_beta: DEFAULT_SCE.1,
            sce_log_floor: DEFAULT_SCE.2,
            transition: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Test patches rendered as overlays per solution.
    pub overlays: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { overlays: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; copied into the corpus, training and bootstrap seeds.
    pub seed: u64,
    pub solutions: Vec<String>,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub corpus: CorpusConfig,
    pub abduction: AbductionParams,
    pub train: TrainConfig,
    pub objective: ObjectiveConfig,
    pub baselines: BaselineParams,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let seed = 20211130;
        let mut c = ExperimentConfig {
            seed,
            solutions: default_solutions(),
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            corpus: CorpusConfig::default(),
            abduction: AbductionParams::default(),
            train: TrainConfig::default(),
            objective: ObjectiveConfig::default(),
            baselines: BaselineParams::default(),
            report: ReportConfig::default(),
        };
        c.set_seed(seed);
        c
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut c: ExperimentConfig = toml::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.corpus.params.seed = seed;
        self.train.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parsed_solutions(&self) -> Result<Vec<Solution>, ExperimentError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for name in &self.solutions {
            let s: Solution = name.parse()?;
            if !seen.insert(s) {
                return Err(ExperimentError::Config(format!("solution {s} listed twice")));
            }
            out.push(s);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.parsed_solutions()?.is_empty() {
            return bad("no solutions configured".into());
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level {} outside (0, 1)", self.ci_level));
        }
        if self.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples must be positive".into());
        }
        if self.corpus.dir.is_none() {
            self.corpus.params.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
            if self.corpus.n_train == 0 || self.corpus.n_test == 0 {
                return bad("corpus needs training and test patches".into());
            }
        }
        self.abduction.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        crate::mtl::Objective::new(TargetRegime::Joint, LossKind::Base(self.objective.base_loss), self.objective.alphas.clone())
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// Per-target loss of `method`; `transition` feeds the correction methods.
    pub fn loss_kind(&self, method: Method, transition: NoiseTransition) -> LossKind {
        let b = &self.baselines;
        match method {
            Method::None => LossKind::Base(self.objective.base_loss),
            Method::Forward => LossKind::Baseline(BaselineConfig::Forward { transition }),
            Method::Backward => LossKind::Baseline(BaselineConfig::Backward { transition }),
            Method::BoostHard => LossKind::Baseline(BaselineConfig::BootstrapHard { beta: b.beta_hard }),
            Method::BoostSoft => LossKind::Baseline(BaselineConfig::BootstrapSoft { beta: b.beta_soft }),
            Method::Sce => LossKind::Baseline(BaselineConfig::Sce { alpha: b.sce_alpha, beta: b.sce_beta, log_floor: b.sce_log_floor }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_names_round_trip() {
        for name in default_solutions() {
            assert_eq!(name.parse::<Solution>().unwrap().to_string(), name);
        }
        assert_eq!(default_solutions().len(), 18);
        assert_eq!("OSAMTLF".parse::<Solution>().unwrap().to_string(), "None_OSAMTLF");
        assert!("D2L_T1".parse::<Solution>().is_err());
        assert!("None_T3".parse::<Solution>().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c: ExperimentConfig = toml::from_str("seed = 3\nsolutions = [\"None_T1\"]\n[train]\nepochs = 2\n").unwrap();
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.corpus.n_train, 200);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig { solutions: vec!["None_T1".into(), "None_T1".into()], ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        c.solutions = vec!["None_T1".into()];
        c.ci_level = 1.0;
        assert!(c.validate().is_err());
    }
}
