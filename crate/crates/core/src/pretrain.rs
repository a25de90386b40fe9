//! Stand-in for a large pre-trained backbone.
//!
//! The feature extractor is trained by ERM on an auxiliary suite that spans a
//! wider range of domains and uses a different label set than the target task.
//! Only the feature segment is kept; the classifier segment of the result is
//! freshly random.

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_suite, BatchComposition, DomainSuiteConfig};
use crate::error::{Error, Result};
use crate::model::{init_params, reinit_classifier, MlpSpec};
use crate::numerics::{ParamVector, Segment};
use crate::optimizer::{train_erm, BaseOptimizer, GesturHyper};
use crate::rng::{stream, Stage};

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub aux_suite: DomainSuiteConfig,
    pub iterations: usize,
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
    /// Auxiliary domains kept out of pre-training, for evaluating the result.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holdout_domains: Vec<usize>,
}

impl PretrainConfig {
    pub fn validate(&self, spec: &MlpSpec) -> Result<()> {
        self.aux_suite.validate()?;
        spec.validate()?;
        if self.aux_suite.num_classes == spec.num_classes {
            return Err(Error::InvalidConfig(format!(
                "pretrain: auxiliary task must use a different label set than the target \
                 ({} classes in both)",
                spec.num_classes
            )));
        }
        if self.aux_suite.input_dim != spec.input_dim {
            return Err(Error::InvalidConfig(format!(
                "pretrain: auxiliary input_dim {} vs model input_dim {}",
                self.aux_suite.input_dim, spec.input_dim
            )));
        }
        if let Some(&d) = self
            .holdout_domains
            .iter()
            .find(|&&d| d >= self.aux_suite.num_domains)
        {
            return Err(Error::UnknownDomain(d));
        }
        if self.holdout_domains.len() >= self.aux_suite.num_domains {
            return Err(Error::InvalidConfig(
                "pretrain: every auxiliary domain is held out".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "pretrain: learning_rate and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn aux_spec(&self, spec: &MlpSpec) -> MlpSpec {
        spec.with_classes(self.aux_suite.num_classes)
    }

    fn hyper(&self) -> GesturHyper {
        GesturHyper {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            optimizer: BaseOptimizer::adam(),
            composition: BatchComposition::Balanced,
            ..GesturHyper::default()
        }
    }
}

/// Auxiliary model (aux head attached) after pre-training.
pub fn pretrain_aux(config: &PretrainConfig, spec: &MlpSpec) -> Result<ParamVector> {
    config.validate(spec)?;
    let aux_spec = config.aux_spec(spec);
    let init = init_params(&aux_spec, &mut stream(config.seed, Stage::Init, &[]))?;
    let suite: Vec<_> = generate_suite(&config.aux_suite)?
        .into_iter()
        .filter(|d| !config.holdout_domains.contains(&d.domain_id))
        .collect();
    let mut rng = stream(config.seed, Stage::Pretrain, &[]);
    let outcome = train_erm(&init, &config.hyper(), &suite, &aux_spec, &mut rng)?;
    Ok(outcome.state.te)
}

/// `theta_0` for `spec`: pre-trained features plus a random target classifier.
pub fn pretrain(config: &PretrainConfig, spec: &MlpSpec) -> Result<ParamVector> {
    let aux = pretrain_aux(config, spec)?;
    let mut theta0 = ParamVector::zeros(spec.layout());
    theta0
        .segment_mut(Segment::Feature)
        .copy_from_slice(aux.segment(Segment::Feature));
    reinit_classifier(
        &mut theta0,
        spec,
        &mut stream(config.seed, Stage::Head, &[]),
    )?;
    Ok(theta0)
}
