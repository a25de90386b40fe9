use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{SimilarityOptions, SimilarityScope, TrueGradient};
use crate::datagen::DomainSuiteConfig;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::MlpSpec;
use crate::optimizer::{GesturHyper, Method};
use crate::pretrain::PretrainConfig;

/// Where `theta_0` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PretrainSource {
    /// A checkpoint file; relative paths resolve against the config file.
    Checkpoint {
        checkpoint: PathBuf,
    },
    Train(PretrainConfig),
}

/// `"all"` or an explicit list of domain ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Targets {
    #[default]
    All,
    List(Vec<usize>),
}

impl Targets {
    pub fn resolve(&self, num_domains: usize) -> Result<Vec<usize>> {
        match self {
            Targets::All => Ok((0..num_domains).collect()),
            Targets::List(ids) => {
                if ids.is_empty() {
                    return Err(Error::InvalidConfig("empty target list".into()));
                }
                if let Some(&bad) = ids.iter().find(|&&t| t >= num_domains) {
                    return Err(Error::UnknownDomain(bad));
                }
                let mut seen = ids.clone();
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != ids.len() {
                    return Err(Error::InvalidConfig("duplicate target ids".into()));
                }
                Ok(ids.clone())
            }
        }
    }
}

impl std::str::FromStr for Targets {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Targets::All);
        }
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad target {p:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Targets::List)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetsRepr {
    Keyword(String),
    List(Vec<usize>),
}

impl Serialize for Targets {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Targets::All => TargetsRepr::Keyword("all".into()),
            Targets::List(v) => TargetsRepr::List(v.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Targets {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TargetsRepr::deserialize(d)? {
            TargetsRepr::Keyword(k) if k == "all" => Ok(Targets::All),
            TargetsRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "targets must be \"all\" or a list of ids, got {k:?}"
            ))),
            TargetsRepr::List(v) => Ok(Targets::List(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub conflicts: bool,
    pub similarity: bool,
    pub probe: bool,
    pub checkpoint_every: usize,
    pub similarity_scope: SimilarityScope,
    pub true_gradient: TrueGradient,
    /// Also write an SVG plot next to every `similarity.csv`.
    pub plots: bool,
    /// Write per-run CSVs under `diagnostics/`.
    pub per_run_files: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let s = SimilarityOptions::default();
        Self {
            conflicts: false,
            similarity: false,
            probe: false,
            checkpoint_every: s.checkpoint_every,
            similarity_scope: s.scope,
            true_gradient: s.true_gradient,
            plots: false,
            per_run_files: true,
        }
    }
}

impl DiagnosticsConfig {
    pub fn any(&self) -> bool {
        self.conflicts || self.similarity || self.probe
    }

    pub fn similarity_options(&self) -> SimilarityOptions {
        SimilarityOptions {
            checkpoint_every: self.checkpoint_every,
            scope: self.similarity_scope,
            true_gradient: self.true_gradient,
        }
    }
}

fn default_reps() -> usize {
    3
}

fn default_method() -> Method {
    Method::Gestur
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    /// When set, the two-expert method is trained once per value and the
    /// value with the best source-validation accuracy is selected per target.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// Number of concurrent runs; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub suite: DomainSuiteConfig,
    pub model: MlpSpec,
    pub hyper: GesturHyper,
    pub pretrain: PretrainSource,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            what: "experiment config",
            detail: e.to_string(),
        })
    }

    /// Parses a TOML file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml_str(&fsutil::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let PretrainSource::Checkpoint { checkpoint } = &mut config.pretrain {
            if checkpoint.is_relative() {
                *checkpoint = base.join(&*checkpoint);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format {
            what: "experiment config",
            detail: e.to_string(),
        })
    }

    /// The lambda values a run trains with.
    pub fn lambda_grid(&self) -> Vec<f64> {
        match (&self.lambdas, self.method) {
            (Some(l), Method::Gestur) => l.clone(),
            _ => vec![self.hyper.lambda],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        self.suite.validate()?;
        self.model.validate()?;
        self.hyper.validate()?;
        if self.model.input_dim != self.suite.input_dim
            || self.model.num_classes != self.suite.num_classes
        {
            return bad(format!(
                "model ({} inputs, {} classes) does not fit the suite ({} inputs, {} classes)",
                self.model.input_dim,
                self.model.num_classes,
                self.suite.input_dim,
                self.suite.num_classes
            ));
        }
        self.targets.resolve(self.suite.num_domains)?;
        if let Some(l) = &self.lambdas {
            if l.is_empty() {
                return bad("lambdas must hold at least one value".into());
            }
            for &x in l {
                GesturHyper {
                    lambda: x,
                    ..self.hyper.clone()
                }
                .validate()?;
            }
        }
        match &self.pretrain {
            PretrainSource::Checkpoint { checkpoint } => {
                if !checkpoint.is_file() {
                    return bad(format!(
                        "theta_0 checkpoint {} does not exist",
                        checkpoint.display()
                    ));
                }
            }
            PretrainSource::Train(p) => p.validate(&self.model)?,
        }
        Ok(())
    }
}
