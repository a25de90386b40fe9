//! Diagnostics: gradient conflicts, estimated-vs-true direction cosine,
//! linear probing and expert evaluation.
//!
//! Unseen-domain labels are used here and nowhere else. Studies attach to the
//! trainer through [`Monitor`], which only ever sees read-only snapshots, and
//! draw their unseen batches from a diagnostics rng that is separate from the
//! training rng.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_any, DomainDataset, LodoSplit};
use crate::error::{Error, Result};
use crate::model::{accuracy, argmax, extract_features, loss_and_grad, Minibatch, MlpSpec};
use crate::numerics::{dot, l2_norm, ParamVector, Segment};
use crate::optimizer::{
    train, GesturHyper, Method, Monitor, Observation, StepContext, TrainOutcome,
};
use crate::rng::{stream, Rng, Stage};

/// `g_source . g_unseen < 0`. An exactly zero product is not a conflict.
pub fn conflict_check(g_source: &ParamVector, g_unseen: &ParamVector) -> Result<bool> {
    Ok(g_source.dot(g_unseen)? < 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub total_iterations: usize,
    pub conflict_count: usize,
    pub conflict_percent: f64,
}

impl ConflictReport {
    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Self {
        let (mut total, mut count) = (0, 0);
        for f in flags {
            total += 1;
            count += usize::from(f);
        }
        Self {
            total_iterations: total,
            conflict_count: count,
            conflict_percent: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictRow {
    pub iter: usize,
    pub dot: f64,
    pub is_conflict: bool,
}

/// Where the "true" unseen gradient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrueGradient {
    /// One unseen minibatch of the training batch size.
    #[default]
    Batch,
    /// The whole unseen domain.
    FullSet,
}

/// Records `g . g_u` at the current task expert every iteration.
pub struct ConflictMonitor<'a> {
    unseen: &'a DomainDataset,
    spec: &'a MlpSpec,
    batch_size: usize,
    rng: Rng,
    pub rows: Vec<ConflictRow>,
}

impl<'a> ConflictMonitor<'a> {
    pub fn new(unseen: &'a DomainDataset, spec: &'a MlpSpec, batch_size: usize, rng: Rng) -> Self {
        Self {
            unseen,
            spec,
            batch_size,
            rng,
            rows: Vec::new(),
        }
    }

    pub fn report(&self) -> ConflictReport {
        ConflictReport::from_flags(self.rows.iter().map(|r| r.is_conflict))
    }
}

impl Monitor for ConflictMonitor<'_> {
    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Observation> {
        let batch = sample_any(self.unseen, self.batch_size, &mut self.rng);
        let (_, g_u) = loss_and_grad(ctx.te, self.spec, &batch)?;
        let d = ctx.raw_grad.dot(&g_u)?;
        self.rows.push(ConflictRow {
            iter: ctx.iteration,
            dot: d,
            is_conflict: d < 0.0,
        });
        Ok(Observation {
            dot: Some(d),
            cosine: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictStudy {
    pub report: ConflictReport,
    /// Per seed: the per-iteration rows.
    pub runs: Vec<(u64, Vec<ConflictRow>)>,
}

/// Training and diagnostics streams of one study seed.
pub fn study_streams(seed: u64) -> (Rng, Rng) {
    (
        stream(seed, Stage::Train, &[]),
        stream(seed, Stage::Diagnostics, &[]),
    )
}

/// Trains once per seed while counting conflicts between the source gradient
/// and an unseen-domain gradient taken at the same parameters.
pub fn run_conflict_study(
    method: Method,
    split: &LodoSplit,
    theta0: &ParamVector,
    hyper: &GesturHyper,
    spec: &MlpSpec,
    seeds: &[u64],
) -> Result<ConflictStudy> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (mut train_rng, diag_rng) = study_streams(seed);
        let mut monitor = ConflictMonitor::new(&split.unseen, spec, hyper.batch_size, diag_rng);
        train(
            method,
            theta0,
            hyper,
            &split.sources,
            spec,
            &mut train_rng,
            &mut monitor,
        )?;
        runs.push((seed, monitor.rows));
    }
    let report = ConflictReport::from_flags(
        runs.iter()
            .flat_map(|(_, r)| r.iter().map(|x| x.is_conflict)),
    );
    Ok(ConflictStudy { report, runs })
}

pub fn conflicts_csv(rows: &[ConflictRow]) -> String {
    let mut out = String::from("iter,dot,is_conflict\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.iter, r.dot, u8::from(r.is_conflict));
    }
    out
}

/// Recounts a `conflicts.csv` body.
pub fn recount_conflicts_csv(text: &str) -> Result<ConflictReport> {
    let mut flags = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let flag = line.rsplit(',').next().unwrap_or("");
        flags.push(match flag {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Format {
                    what: "conflicts csv",
                    detail: format!("bad flag {other:?}"),
                })
            }
        });
    }
    Ok(ConflictReport::from_flags(flags))
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = dot(a, b)?;
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Undefined("cosine of a zero-norm vector".into()));
    }
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

/// Which part of the parameter difference is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityScope {
    #[default]
    Full,
    Feature,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCurve {
    /// `(iteration, cosine)`; `None` where a norm was zero.
    pub checkpoints: Vec<(usize, Option<f64>)>,
}

impl SimilarityCurve {
    /// Mean of the defined points at or after `fraction * total_iterations`.
    pub fn mean_after(&self, fraction: f64, total_iterations: usize) -> Option<f64> {
        let start = (fraction * total_iterations as f64).ceil() as usize;
        let vals: Vec<f64> = self
            .checkpoints
            .iter()
            .filter(|(it, _)| *it >= start)
            .filter_map(|(_, c)| *c)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,cosine\n");
        for (it, c) in &self.checkpoints {
            let _ = writeln!(out, "{it},{}", c.map(|v| v.to_string()).unwrap_or_default());
        }
        out
    }

    /// Single-file line plot of the defined points.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 360.0, 48.0);
        let max_it = self
            .checkpoints
            .iter()
            .map(|(i, _)| *i)
            .max()
            .unwrap_or(1)
            .max(1) as f64;
        let x = |it: usize| pad + (w - 2.0 * pad) * it as f64 / max_it;
        let y = |c: f64| h - pad - (h - 2.0 * pad) * (c + 1.0) / 2.0;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            w / 2.0,
            escape_xml(title)
        );
        for (label, c) in [("1", 1.0), ("0", 0.0), ("-1", -1.0)] {
            let _ = writeln!(
                svg,
                "<line x1=\"{pad}\" y1=\"{yy}\" x2=\"{x2}\" y2=\"{yy}\" stroke=\"#ccc\"/>\
                 <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{label}</text>",
                yy = y(c),
                x2 = w - pad,
                tx = pad - 6.0,
                ty = y(c) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">iteration</text>",
            w / 2.0,
            h - 12.0
        );
        // Gaps at undefined points split the polyline.
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (it, c) in &self.checkpoints {
            match c {
                Some(c) => runs.last_mut().unwrap().push((x(*it), y(*c))),
                None => runs.push(Vec::new()),
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOptions {
    pub checkpoint_every: usize,
    pub scope: SimilarityScope,
    pub true_gradient: TrueGradient,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        Self {
            checkpoint_every: 10,
            scope: SimilarityScope::Full,
            true_gradient: TrueGradient::Batch,
        }
    }
}

/// Cosine between `theta_GE - theta_TE` and `-grad loss_unseen(theta_TE)`.
pub struct SimilarityMonitor<'a> {
    unseen: &'a DomainDataset,
    spec: &'a MlpSpec,
    batch_size: usize,
    options: SimilarityOptions,
    rng: Rng,
    pub curve: SimilarityCurve,
}

impl<'a> SimilarityMonitor<'a> {
    pub fn new(
        unseen: &'a DomainDataset,
        spec: &'a MlpSpec,
        batch_size: usize,
        options: SimilarityOptions,
        rng: Rng,
    ) -> Self {
        Self {
            unseen,
            spec,
            batch_size,
            options,
            rng,
            curve: SimilarityCurve::default(),
        }
    }
}

/// `cosine(ge - te, descent)` restricted to `scope`; `None` on a zero norm.
pub fn direction_similarity(
    te: &ParamVector,
    ge: &ParamVector,
    descent: &ParamVector,
    scope: SimilarityScope,
) -> Result<Option<f64>> {
    let e = ge.sub(te)?;
    let (a, b) = match scope {
        SimilarityScope::Full => (e.values(), descent.values()),
        SimilarityScope::Feature => (
            e.segment(Segment::Feature),
            descent.segment(Segment::Feature),
        ),
    };
    match cosine(a, b) {
        Ok(c) => Ok(Some(c)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl Monitor for SimilarityMonitor<'_> {
    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Observation> {
        let every = self.options.checkpoint_every.max(1);
        let Some(ge) = ctx.ge else {
            return Ok(Observation::default());
        };
        if !ctx.iteration.is_multiple_of(every) {
            return Ok(Observation::default());
        }
        let batch = match self.options.true_gradient {
            TrueGradient::Batch => sample_any(self.unseen, self.batch_size, &mut self.rng),
            TrueGradient::FullSet => self.unseen.all(),
        };
        let (_, g_u) = loss_and_grad(ctx.te, self.spec, &batch)?;
        let descent = g_u.scale(-1.0);
        let c = direction_similarity(ctx.te, ge, &descent, self.options.scope)?;
        self.curve.checkpoints.push((ctx.iteration, c));
        Ok(Observation {
            dot: None,
            cosine: c,
        })
    }
}

/// Trains the two-expert method once, sampling the similarity along the way.
pub fn run_similarity_study(
    split: &LodoSplit,
    theta0: &ParamVector,
    hyper: &GesturHyper,
    spec: &MlpSpec,
    options: SimilarityOptions,
    seed: u64,
) -> Result<(SimilarityCurve, TrainOutcome)> {
    let (mut train_rng, diag_rng) = study_streams(seed);
    let mut monitor =
        SimilarityMonitor::new(&split.unseen, spec, hyper.batch_size, options, diag_rng);
    let outcome = train(
        Method::Gestur,
        theta0,
        hyper,
        &split.sources,
        spec,
        &mut train_rng,
        &mut monitor,
    )?;
    Ok((monitor.curve, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorTag {
    #[serde(rename = "frozen_theta0")]
    FrozenTheta0,
    #[serde(rename = "GE")]
    Ge,
}

impl ExtractorTag {
    pub fn name(self) -> &'static str {
        match self {
            ExtractorTag::FrozenTheta0 => "frozen_theta0",
            ExtractorTag::Ge => "GE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub extractor_tag: ExtractorTag,
    pub probe_accuracy: f64,
}

pub const PROBE_TRAIN_FRACTION: f64 = 0.8;
const PROBE_MAX_STEPS: usize = 10_000;
const PROBE_TOL: f64 = 1e-8;
const PROBE_LR: f64 = 0.5;

/// Multinomial logistic regression fitted by full-batch gradient descent on
/// a random `train_fraction` of the rows; returns accuracy on the rest.
pub fn linear_probe(
    features: &[f64],
    feature_dim: usize,
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let n = labels.len();
    if feature_dim == 0 || features.len() != n * feature_dim {
        return Err(Error::Shape(format!(
            "{} feature values for {n} rows of dimension {feature_dim}",
            features.len()
        )));
    }
    if n < num_classes || num_classes < 2 {
        return Err(Error::DegenerateProbe(format!(
            "{n} rows for {num_classes} classes"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("non-finite probe features".into()));
    }
    if labels.iter().any(|&y| y >= num_classes) {
        return Err(Error::Shape("probe label out of range".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train_rows, eval_rows) = order.split_at(n_train);
    let first = labels[train_rows[0]];
    if train_rows.iter().all(|&r| labels[r] == first) {
        return Err(Error::DegenerateProbe(
            "training split holds a single class".into(),
        ));
    }

    let (f, c) = (feature_dim, num_classes);
    let mut w = vec![0.0; c * f];
    let mut b = vec![0.0; c];
    let mut prev = f64::INFINITY;
    let mut probs = vec![0.0; c];
    let mut logits = vec![0.0; c];
    let inv = 1.0 / train_rows.len() as f64;
    for _ in 0..PROBE_MAX_STEPS {
        let mut gw = vec![0.0; c * f];
        let mut gb = vec![0.0; c];
        let mut loss = 0.0;
        for &r in train_rows {
            let x = &features[r * f..(r + 1) * f];
            for k in 0..c {
                logits[k] = b[k]
                    + w[k * f..(k + 1) * f]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
            let y = labels[r];
            loss += max + z.ln() - logits[y];
            for k in 0..c {
                probs[k] = (logits[k] - max).exp() / z;
                let d = (probs[k] - f64::from(u8::from(k == y))) * inv;
                gb[k] += d;
                for (gwi, xi) in gw[k * f..(k + 1) * f].iter_mut().zip(x) {
                    *gwi += d * xi;
                }
            }
        }
        loss *= inv;
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= PROBE_LR * gi;
        }
        for (bi, gi) in b.iter_mut().zip(&gb) {
            *bi -= PROBE_LR * gi;
        }
        if (prev - loss).abs() < PROBE_TOL {
            break;
        }
        prev = loss;
    }

    let mut hits = 0usize;
    for &r in eval_rows {
        let x = &features[r * f..(r + 1) * f];
        for k in 0..c {
            logits[k] = b[k]
                + w[k * f..(k + 1) * f]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
        hits += usize::from(argmax(&logits) == labels[r]);
    }
    Ok(hits as f64 / eval_rows.len() as f64)
}

/// Probes the feature extractor of `params` on the whole `domain`.
pub fn probe_extractor(
    tag: ExtractorTag,
    params: &ParamVector,
    spec: &MlpSpec,
    domain: &DomainDataset,
    rng: &mut Rng,
) -> Result<ProbeResult> {
    let feats = extract_features(params, spec, &domain.inputs)?;
    let acc = linear_probe(
        &feats,
        spec.feature_dim,
        &domain.labels,
        spec.num_classes,
        PROBE_TRAIN_FRACTION,
        rng,
    )?;
    Ok(ProbeResult {
        extractor_tag: tag,
        probe_accuracy: acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertAccuracies {
    pub te_unseen: f64,
    pub ge_unseen: f64,
    pub te_sourceval: f64,
    pub ge_sourceval: f64,
}

pub fn evaluate_experts(
    te: &ParamVector,
    ge: &ParamVector,
    spec: &MlpSpec,
    split: &LodoSplit,
) -> Result<ExpertAccuracies> {
    let unseen = split.unseen.all();
    let source_val = split.source_validation();
    let acc = |p: &ParamVector, d: &Minibatch| accuracy(p, spec, d);
    Ok(ExpertAccuracies {
        te_unseen: acc(te, &unseen)?,
        ge_unseen: acc(ge, &unseen)?,
        te_sourceval: acc(te, &source_val)?,
        ge_sourceval: acc(ge, &source_val)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Layout;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_values(Layout::new(1, v.len() - 1), v.to_vec()).unwrap()
    }

    #[test]
    fn conflict_examples() {
        assert!(conflict_check(&pv(&[1.0, 0.0]), &pv(&[-1.0, 0.1])).unwrap());
        let g = pv(&[0.3, -2.0, 1.0]);
        assert!(!conflict_check(&g, &g).unwrap());
        assert!(!conflict_check(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap());
    }

    #[test]
    fn conflict_percent_counts() {
        let r = ConflictReport::from_flags([false, true, false, true]);
        assert_eq!(r.total_iterations, 4);
        assert_eq!(r.conflict_count, 2);
        assert_eq!(r.conflict_percent, 50.0);
    }

    #[test]
    fn csv_recount_matches() {
        let rows = vec![
            ConflictRow {
                iter: 0,
                dot: 1.0,
                is_conflict: false,
            },
            ConflictRow {
                iter: 1,
                dot: -0.5,
                is_conflict: true,
            },
            ConflictRow {
                iter: 2,
                dot: 0.0,
                is_conflict: false,
            },
        ];
        let r = recount_conflicts_csv(&conflicts_csv(&rows)).unwrap();
        assert_eq!(r.conflict_count, 1);
        assert_eq!(r.total_iterations, 3);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, 4.0], &[0.3, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn similarity_is_absent_for_identical_experts() {
        let te = pv(&[1.0, 2.0, 3.0]);
        let d = pv(&[0.1, 0.1, 0.1]);
        assert_eq!(
            direction_similarity(&te, &te, &d, SimilarityScope::Full).unwrap(),
            None
        );
        let ge = d.scale(0.7).axpy(1.0, &te).unwrap();
        let c = direction_similarity(&te, &ge, &d, SimilarityScope::Full)
            .unwrap()
            .unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_after_skips_absent_and_early_points() {
        let curve = SimilarityCurve {
            checkpoints: vec![
                (0, None),
                (5, Some(-1.0)),
                (10, Some(0.2)),
                (20, None),
                (30, Some(0.4)),
            ],
        };
        assert!((curve.mean_after(0.1, 100).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(curve.mean_after(0.5, 100), None);
        let csv = curve.to_csv();
        assert!(csv.starts_with("iter,cosine\n0,\n5,-1\n"));
        let svg = curve.to_svg("t<1>");
        assert!(svg.starts_with("<svg") && svg.contains("t&lt;1&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn probe_separable_features() {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let y = i % 2;
            let s = if y == 0 { -1.0 } else { 1.0 };
            feats.extend_from_slice(&[s * (1.0 + (i as f64) * 0.01), 0.3 * ((i * 7) % 5) as f64]);
            labels.push(y);
        }
        let acc = linear_probe(&feats, 2, &labels, 2, 0.8, &mut rng_from_seed(1)).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn probe_zero_features_predict_training_majority() {
        // 70% class 1 in every split, so the majority agrees everywhere.
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 10 >= 3)).collect();
        let feats = vec![0.0; 100 * 3];
        let mut rng = rng_from_seed(4);
        let mut order: Vec<usize> = (0..100).collect();
        order.shuffle(&mut rng_from_seed(4));
        let eval = &order[80..];
        let ones = eval.iter().filter(|&&r| labels[r] == 1).count() as f64 / 20.0;
        let train_ones = order[..80].iter().filter(|&&r| labels[r] == 1).count();
        assert!(train_ones > 40 && ones >= 0.5);
        let acc = linear_probe(&feats, 3, &labels, 2, 0.8, &mut rng).unwrap();
        assert_eq!(acc, ones);
    }

    #[test]
    fn probe_rejects_single_class_training() {
        let labels = vec![0; 10];
        let feats = vec![1.0; 10];
        assert!(matches!(
            linear_probe(&feats, 1, &labels, 2, 0.8, &mut rng_from_seed(0)),
            Err(Error::DegenerateProbe(_))
        ));
        assert!(linear_probe(&[1.0], 1, &[0], 2, 0.8, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn probe_is_deterministic() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let feats: Vec<f64> = (0..100).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
        let a = linear_probe(&feats, 2, &labels, 3, 0.8, &mut rng_from_seed(8)).unwrap();
        let b = linear_probe(&feats, 2, &labels, 3, 0.8, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                prop::collection::vec(-3.0f64..3.0, n + 1),
                prop::collection::vec(-3.0f64..3.0, n + 1),
            )
        })
    }

    proptest! {
        #[test]
        fn conflict_is_invariant_under_global_negation((a, b) in pair()) {
            let (a, b) = (pv(&a), pv(&b));
            let (na, nb) = (a.scale(-1.0), b.scale(-1.0));
            prop_assert_eq!(conflict_check(&a, &b).unwrap(), conflict_check(&na, &nb).unwrap());
        }

        #[test]
        fn cosine_scale_behaviour((a, b) in pair(), c in 0.01f64..10.0) {
            prop_assume!(l2_norm(&a) > 1e-6 && l2_norm(&b) > 1e-6);
            let base = cosine(&a, &b).unwrap();
            let pos = cosine(&crate::numerics::scale(c, &a), &b).unwrap();
            let neg = cosine(&crate::numerics::scale(-c, &a), &b).unwrap();
            prop_assert!((pos - base).abs() <= 1e-12);
            prop_assert!((neg + base).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base));
        }
    }
}
