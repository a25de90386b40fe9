//! Leave-one-domain-out experiments: seeding, orchestration, model selection
//! and persistence.
//!
//! Seeds are derived from the master seed as
//!
//! ```text
//! suite seed of repetition r     = derive_seed(master, [SUITE_NAMESPACE, r])
//! run seed of (target t, rep r)  = derive_seed(master, [RUN_NAMESPACE, t, r])
//! stage stream of a run          = stream(run seed, stage, ..)
//! ```
//!
//! The class prototypes and domain transforms stay fixed across repetitions
//! (the suite's `mean_seed`); only the samples are redrawn. Every lambda value
//! and both methods share the run seed, so they see the same classifier
//! initialization and the same minibatch sequence.

pub mod config;
pub mod report;

use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{
    conflicts_csv, probe_extractor, ConflictMonitor, ConflictRow, ExtractorTag, SimilarityCurve,
    SimilarityMonitor,
};
use crate::datagen::{generate_suite, leave_one_out, DomainDataset, DomainSuiteConfig, LodoSplit};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::{accuracy, reinit_classifier, MlpSpec};
use crate::numerics::ParamVector;
use crate::optimizer::{train, GesturHyper, Method, Monitor, Observation, StepContext};
use crate::pretrain::pretrain;
use crate::rng::{derive_seed, stream, Stage};

pub use config::{DiagnosticsConfig, ExperimentConfig, PretrainSource, Targets};
pub use report::{
    report_read, report_write, Aggregate, ConflictEntry, DiagnosticsSummary, ExperimentReport,
    MeanStderr, Overall, ProbeEntry, RawRow, Selection, SimilarityEntry,
};

pub const SUITE_NAMESPACE: u64 = 0x5355_4954;
pub const RUN_NAMESPACE: u64 = 0x0052_554e;
/// Share of training skipped before averaging the similarity curve.
pub const SIMILARITY_WARMUP: f64 = 0.1;
pub const SWEEP_TABLE_FILE: &str = "lambda_table.csv";
pub const PROBE_FILE: &str = "probe.csv";
pub const THETA0_FILE: &str = "theta0.ckpt";

pub fn suite_seed(master: u64, repetition: usize) -> u64 {
    derive_seed(master, &[SUITE_NAMESPACE, repetition as u64])
}

pub fn run_seed(master: u64, target: usize, repetition: usize) -> u64 {
    derive_seed(master, &[RUN_NAMESPACE, target as u64, repetition as u64])
}

/// The suite of one repetition: fresh samples, fixed geometry.
pub fn repetition_suite(
    config: &DomainSuiteConfig,
    master: u64,
    repetition: usize,
) -> Result<Vec<DomainDataset>> {
    generate_suite(&DomainSuiteConfig {
        seed: suite_seed(master, repetition),
        mean_seed: Some(config.mean_seed()),
        ..config.clone()
    })
}

/// `theta_0` from a checkpoint or a fresh pre-training run.
pub fn obtain_theta0(config: &ExperimentConfig) -> Result<ParamVector> {
    let theta0 = match &config.pretrain {
        PretrainSource::Checkpoint { checkpoint } => ParamVector::read_checkpoint(checkpoint)?,
        PretrainSource::Train(p) => pretrain(p, &config.model)?,
    };
    if *theta0.layout() != config.model.layout() {
        return Err(Error::Shape(format!(
            "theta_0 has {} parameters, the model needs {}",
            theta0.len(),
            config.model.layout().len()
        )));
    }
    Ok(theta0)
}

/// Identity of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunId {
    pub method: Method,
    pub target: usize,
    pub repetition: usize,
    pub seed: u64,
}

impl RunId {
    fn fail(&self, stage: &'static str) -> impl FnOnce(Error) -> Error + '_ {
        move |e| Error::Run {
            target: self.target,
            repetition: self.repetition,
            stage,
            source: Box::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub row: RawRow,
    pub conflicts: Option<Vec<ConflictRow>>,
    pub similarity: Option<SimilarityCurve>,
    pub probes: Vec<(ExtractorTag, f64)>,
}

struct Monitors<'a> {
    conflict: Option<ConflictMonitor<'a>>,
    similarity: Option<SimilarityMonitor<'a>>,
}

impl Monitor for Monitors<'_> {
    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Observation> {
        let mut obs = Observation::default();
        if let Some(m) = self.conflict.as_mut() {
            obs.dot = m.observe(ctx)?.dot;
        }
        if let Some(m) = self.similarity.as_mut() {
            obs.cosine = m.observe(ctx)?.cosine;
        }
        Ok(obs)
    }
}

/// Trains one model on `split` and evaluates it. `theta0` is the shared
/// pre-trained vector; the classifier is re-drawn from the run seed.
pub fn run_split(
    id: RunId,
    split: &LodoSplit,
    theta0: &ParamVector,
    hyper: &GesturHyper,
    spec: &MlpSpec,
    diagnostics: &DiagnosticsConfig,
) -> Result<RunOutput> {
    let mut init = theta0.clone();
    reinit_classifier(&mut init, spec, &mut stream(id.seed, Stage::Head, &[]))
        .map_err(id.fail("init"))?;

    let two_expert = id.method == Method::Gestur;
    let mut monitors = Monitors {
        conflict: diagnostics.conflicts.then(|| {
            ConflictMonitor::new(
                &split.unseen,
                spec,
                hyper.batch_size,
                stream(id.seed, Stage::Diagnostics, &[0]),
            )
        }),
        similarity: (diagnostics.similarity && two_expert).then(|| {
            SimilarityMonitor::new(
                &split.unseen,
                spec,
                hyper.batch_size,
                diagnostics.similarity_options(),
                stream(id.seed, Stage::Diagnostics, &[1]),
            )
        }),
    };
    let mut rng = stream(id.seed, Stage::Train, &[]);
    let outcome = train(
        id.method,
        &init,
        hyper,
        &split.sources,
        spec,
        &mut rng,
        &mut monitors,
    )
    .map_err(id.fail("train"))?;

    let evaluate = || -> Result<(f64, f64, f64, f64)> {
        let unseen = split.unseen.all();
        let source_val = split.source_validation();
        let te = outcome.te();
        let ge = outcome.ge().unwrap_or(te);
        Ok((
            accuracy(ge, spec, &unseen)?,
            accuracy(te, spec, &unseen)?,
            accuracy(ge, spec, &source_val)?,
            accuracy(te, spec, &source_val)?,
        ))
    };
    let (unseen_ge, unseen_te, sv_ge, sv_te) = evaluate().map_err(id.fail("evaluate"))?;

    let mut probes = Vec::new();
    if diagnostics.probe && two_expert {
        let ge = outcome.ge().expect("two-expert run has a GE");
        for (tag, params) in [(ExtractorTag::FrozenTheta0, theta0), (ExtractorTag::Ge, ge)] {
            let mut rng = stream(id.seed, Stage::Probe, &[]);
            let r = probe_extractor(tag, params, spec, &split.unseen, &mut rng)
                .map_err(id.fail("probe"))?;
            probes.push((tag, r.probe_accuracy));
        }
    }

    Ok(RunOutput {
        row: RawRow {
            method: id.method,
            target: id.target,
            repetition: id.repetition,
            seed: id.seed,
            lambda: two_expert.then_some(hyper.lambda),
            m: two_expert.then_some(hyper.m),
            unseen_acc_ge: unseen_ge,
            unseen_acc_te: unseen_te,
            sourceval_acc_ge: sv_ge,
            sourceval_acc_te: sv_te,
        },
        conflicts: monitors.conflict.map(|m| m.rows),
        similarity: monitors.similarity.map(|m| m.curve),
        probes,
    })
}

#[derive(Debug, Clone, Copy)]
struct Job {
    target: usize,
    repetition: usize,
    lambda: f64,
}

fn build_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} workers: {e}")))
}

/// Full leave-one-domain-out experiment. Writes report files when the config
/// names an output directory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let theta0 = obtain_theta0(config)?;
    run_with_theta0(config, &theta0)
}

pub fn run_with_theta0(
    config: &ExperimentConfig,
    theta0: &ParamVector,
) -> Result<ExperimentReport> {
    config.validate()?;
    if *theta0.layout() != config.model.layout() {
        return Err(Error::Shape("theta_0 does not match the model".into()));
    }
    let targets = config.targets.resolve(config.suite.num_domains)?;
    let suites: Vec<Vec<DomainDataset>> = (0..config.repetitions)
        .map(|r| {
            repetition_suite(&config.suite, config.master_seed, r).map_err(|e| Error::Run {
                target: targets[0],
                repetition: r,
                stage: "suite",
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let lambdas = config.lambda_grid();
    let jobs: Vec<Job> = targets
        .iter()
        .flat_map(|&target| {
            let lambdas = &lambdas;
            (0..config.repetitions).flat_map(move |repetition| {
                lambdas.iter().map(move |&lambda| Job {
                    target,
                    repetition,
                    lambda,
                })
            })
        })
        .collect();

    let run_one = |job: &Job| -> Result<RunOutput> {
        let id = RunId {
            method: config.method,
            target: job.target,
            repetition: job.repetition,
            seed: run_seed(config.master_seed, job.target, job.repetition),
        };
        let split = leave_one_out(&suites[job.repetition], job.target).map_err(id.fail("split"))?;
        let hyper = GesturHyper {
            lambda: job.lambda,
            ..config.hyper.clone()
        };
        run_split(
            id,
            &split,
            theta0,
            &hyper,
            &config.model,
            &config.diagnostics,
        )
    };
    let results: Vec<Result<RunOutput>> =
        build_pool(config.jobs)?.install(|| jobs.par_iter().map(run_one).collect());
    let outputs: Vec<RunOutput> = results.into_iter().collect::<Result<_>>()?;

    let mut diagnostics = DiagnosticsSummary::default();
    for o in &outputs {
        let r = &o.row;
        if let Some(rows) = &o.conflicts {
            diagnostics.conflicts.push(ConflictEntry {
                method: r.method,
                target: r.target,
                repetition: r.repetition,
                lambda: r.lambda,
                report: crate::analysis::ConflictReport::from_flags(
                    rows.iter().map(|c| c.is_conflict),
                ),
            });
        }
        if let Some(curve) = &o.similarity {
            diagnostics.similarity.push(SimilarityEntry {
                target: r.target,
                repetition: r.repetition,
                lambda: r.lambda.unwrap_or(f64::NAN),
                mean_cosine_after_warmup: curve
                    .mean_after(SIMILARITY_WARMUP, config.hyper.iterations),
                defined_points: curve.checkpoints.iter().filter(|c| c.1.is_some()).count(),
            });
        }
        for &(tag, accuracy) in &o.probes {
            diagnostics.probes.push(ProbeEntry {
                extractor_tag: tag.name().to_string(),
                target: r.target,
                repetition: r.repetition,
                seed: r.seed,
                lambda: r.lambda.unwrap_or(f64::NAN),
                accuracy,
            });
        }
    }

    let rows = outputs.iter().map(|o| o.row.clone()).collect();
    let report = ExperimentReport::from_rows(config.clone(), rows, diagnostics);
    if let Some(dir) = &config.out_dir {
        write_outputs(&report, &outputs, dir)?;
    }
    Ok(report)
}

fn run_dir_name(row: &RawRow) -> String {
    match row.lambda {
        Some(l) => format!(
            "{}_target{}_rep{}_lambda{l}",
            row.method.name(),
            row.target,
            row.repetition
        ),
        None => format!(
            "{}_target{}_rep{}",
            row.method.name(),
            row.target,
            row.repetition
        ),
    }
}

fn write_outputs(report: &ExperimentReport, outputs: &[RunOutput], dir: &Path) -> Result<()> {
    report_write(report, dir)?;
    if report.config.lambdas.is_some() && report.config.method == Method::Gestur {
        fsutil::write_atomic(
            &dir.join(SWEEP_TABLE_FILE),
            report.lambda_table_csv().as_bytes(),
        )?;
    }
    if !report.diagnostics.probes.is_empty() {
        let mut text = String::from("extractor_tag,target_id,seed,accuracy\n");
        for p in &report.diagnostics.probes {
            text.push_str(&format!(
                "{},{},{},{}\n",
                p.extractor_tag, p.target, p.seed, p.accuracy
            ));
        }
        fsutil::write_atomic(&dir.join(PROBE_FILE), text.as_bytes())?;
    }
    if report.config.diagnostics.per_run_files {
        for o in outputs {
            let run_dir = dir.join("diagnostics").join(run_dir_name(&o.row));
            if let Some(rows) = &o.conflicts {
                fsutil::write_atomic(
                    &run_dir.join("conflicts.csv"),
                    conflicts_csv(rows).as_bytes(),
                )?;
            }
            if let Some(curve) = &o.similarity {
                fsutil::write_atomic(&run_dir.join("similarity.csv"), curve.to_csv().as_bytes())?;
                if report.config.diagnostics.plots {
                    let title = format!("cosine(GE - TE, unseen descent), target {}", o.row.target);
                    fsutil::write_atomic(
                        &run_dir.join("similarity.svg"),
                        curve.to_svg(&title).as_bytes(),
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Trains every lambda in `lambdas` and writes the per-target table.
pub fn sweep_lambda(config: &ExperimentConfig, lambdas: &[f64]) -> Result<ExperimentReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one lambda".into(),
        ));
    }
    let config = ExperimentConfig {
        method: Method::Gestur,
        lambdas: Some(lambdas.to_vec()),
        ..config.clone()
    };
    run(&config)
}
