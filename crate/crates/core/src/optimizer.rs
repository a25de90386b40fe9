//! ERM and two-expert (task expert / generalization expert) training.
//!
//! One iteration of the two-expert method, given a source minibatch:
//!
//! 1. `g = grad loss(theta_TE)` on the batch,
//! 2. `e = theta_GE^f - theta_TE^f` (estimated unseen-domain direction),
//! 3. `g^f <- combine(g^f, e, lambda)`,
//! 4. base optimizer step on `theta_TE^f` with the combined `g^f` and on
//!    `theta_TE^c` with the untouched `g^c`,
//! 5. `theta_GE <- m * theta_GE + (1 - m) * theta_TE` over the full vector.
//!
//! ERM runs the same loop with steps 2, 3 and 5 skipped, so both trainers
//! consume the training rng identically.

use serde::{Deserialize, Serialize};

use crate::datagen::{gather, sample_indices, BatchComposition, DomainDataset};
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, Minibatch, MlpSpec};
use crate::numerics::{self, l2_norm, ParamVector, Segment};
use crate::rng::Rng;

/// Default search set for the gradient scale factor.
pub const LAMBDA_SEARCH_SET: [f64; 4] = [0.01, 0.05, 0.1, 0.5];
pub const DEFAULT_EMA: f64 = 0.999;
pub const DEFAULT_EPS_DIR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseOptimizer {
    pub kind: OptimizerKind,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for BaseOptimizer {
    fn default() -> Self {
        Self::adam()
    }
}

impl BaseOptimizer {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam()
        }
    }

    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    /// Updates `params` in place from `grad`.
    pub fn step(
        &self,
        moments: &mut Moments,
        params: &mut [f64],
        grad: &[f64],
        lr: f64,
    ) -> Result<()> {
        if params.len() != grad.len() || moments.m.len() != grad.len() {
            return Err(Error::Shape(format!(
                "optimizer step on {} params with {} gradient entries and {} moments",
                params.len(),
                grad.len(),
                moments.m.len()
            )));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                moments.t += 1;
                let t = moments.t as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    moments.m[i] = self.beta1 * moments.m[i] + (1.0 - self.beta1) * g;
                    moments.v[i] = self.beta2 * moments.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = moments.m[i] / bc1;
                    let v_hat = moments.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// First/second moment estimates and step count of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Optimizer state keyed by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub feature: Moments,
    pub classifier: Moments,
}

impl OptState {
    pub fn for_params(p: &ParamVector) -> Self {
        Self {
            feature: Moments::zeros(p.segment(Segment::Feature).len()),
            classifier: Moments::zeros(p.segment(Segment::Classifier).len()),
        }
    }

    pub fn segment_mut(&mut self, segment: Segment) -> &mut Moments {
        match segment {
            Segment::Feature => &mut self.feature,
            Segment::Classifier => &mut self.classifier,
        }
    }
}

/// One base-optimizer update of one segment of `params`.
pub fn base_step(
    opt: &BaseOptimizer,
    state: &mut OptState,
    segment: Segment,
    params: &mut ParamVector,
    grad: &[f64],
    lr: f64,
) -> Result<()> {
    opt.step(
        state.segment_mut(segment),
        params.segment_mut(segment),
        grad,
        lr,
    )
}

/// Sign used when the estimated direction enters the combined gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CombineSign {
    /// `½(g - λ‖g‖ê)`: the descent step moves toward the generalization expert.
    #[default]
    TowardGe,
    /// `½(g + λ‖g‖ê)`, the formula read literally.
    Literal,
}

/// What `combine` returns when the direction is (numerically) zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackMode {
    /// The raw gradient, unhalved.
    #[default]
    Raw,
    /// `½ g`.
    Halved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GesturHyper {
    pub lambda: f64,
    #[serde(default = "default_ema")]
    pub m: f64,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default = "default_eps_dir")]
    pub eps_dir: f64,
    #[serde(default)]
    pub optimizer: BaseOptimizer,
    #[serde(default)]
    pub combine_sign: CombineSign,
    #[serde(default)]
    pub fallback: FallbackMode,
    #[serde(default)]
    pub composition: BatchComposition,
}

fn default_ema() -> f64 {
    DEFAULT_EMA
}
fn default_eps_dir() -> f64 {
    DEFAULT_EPS_DIR
}

impl Default for GesturHyper {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            m: DEFAULT_EMA,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 32,
            iterations: 1000,
            eps_dir: DEFAULT_EPS_DIR,
            optimizer: BaseOptimizer::adam(),
            combine_sign: CombineSign::TowardGe,
            fallback: FallbackMode::Raw,
            composition: BatchComposition::Balanced,
        }
    }
}

impl GesturHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("hyper: {m}")));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.m) {
            return bad("m must lie in [0, 1]");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        // +inf is allowed: it forces the fallback on every step.
        if self.eps_dir.is_nan() || self.eps_dir <= 0.0 {
            return bad("eps_dir must be positive");
        }
        Ok(())
    }
}

/// `theta_GE^f - theta_TE^f`.
pub fn estimate_direction(ge_feat: &[f64], te_feat: &[f64]) -> Result<Vec<f64>> {
    numerics::sub(ge_feat, te_feat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub grad: Vec<f64>,
    pub fell_back: bool,
}

/// Combines the feature gradient with the normalized direction estimate.
pub fn combine(g: &[f64], e: &[f64], lambda: f64, eps_dir: f64) -> Result<Vec<f64>> {
    Ok(combine_with(
        g,
        e,
        lambda,
        eps_dir,
        CombineSign::TowardGe,
        FallbackMode::Raw,
    )?
    .grad)
}

pub fn combine_with(
    g: &[f64],
    e: &[f64],
    lambda: f64,
    eps_dir: f64,
    sign: CombineSign,
    fallback: FallbackMode,
) -> Result<Combined> {
    if g.len() != e.len() {
        return Err(Error::Shape(format!(
            "gradient length {} vs direction length {}",
            g.len(),
            e.len()
        )));
    }
    if !lambda.is_finite() || g.iter().chain(e).any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("non-finite input to combine".into()));
    }
    let g_norm = l2_norm(g);
    let e_norm = l2_norm(e);
    if e_norm < eps_dir || g_norm == 0.0 {
        let grad = match fallback {
            FallbackMode::Raw => g.to_vec(),
            FallbackMode::Halved => g.iter().map(|v| 0.5 * v).collect(),
        };
        return Ok(Combined {
            grad,
            fell_back: true,
        });
    }
    let coef = match sign {
        CombineSign::TowardGe => -lambda * g_norm / e_norm,
        CombineSign::Literal => lambda * g_norm / e_norm,
    };
    let grad = g
        .iter()
        .zip(e)
        .map(|(gi, ei)| 0.5 * (gi + coef * ei))
        .collect();
    Ok(Combined {
        grad,
        fell_back: false,
    })
}

/// `m * ge + (1 - m) * te` over every element.
pub fn ema_update(ge: &ParamVector, te: &ParamVector, m: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidConfig(format!(
            "moving average coefficient {m} outside [0, 1]"
        )));
    }
    if ge.layout() != te.layout() {
        return Err(Error::Shape("experts have different layouts".into()));
    }
    let mut out = ge.clone();
    ema_in_place(&mut out, te, m);
    Ok(out)
}

fn ema_in_place(ge: &mut ParamVector, te: &ParamVector, m: f64) {
    for (g, t) in ge.values_mut().iter_mut().zip(te.values()) {
        *g = m * *g + (1.0 - m) * t;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Erm,
    Gestur,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Gestur => "gestur",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Method::Erm),
            "gestur" => Ok(Method::Gestur),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Trainer state. `ge` is present for the two-expert method only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub te: ParamVector,
    pub ge: Option<ParamVector>,
    pub opt: OptState,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(method: Method, theta0: &ParamVector) -> Self {
        Self {
            te: theta0.clone(),
            ge: (method == Method::Gestur).then(|| theta0.clone()),
            opt: OptState::for_params(theta0),
            iteration: 0,
        }
    }

    pub fn method(&self) -> Method {
        if self.ge.is_some() {
            Method::Gestur
        } else {
            Method::Erm
        }
    }

    /// The designated final model: GE when present, TE otherwise.
    pub fn final_model(&self) -> &ParamVector {
        self.ge.as_ref().unwrap_or(&self.te)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iter: usize,
    pub loss: f64,
    pub norm_g_f: f64,
    /// `None` for ERM.
    pub norm_e: Option<f64>,
    pub fell_back: bool,
    /// Sign of `g . g_u` when a conflict monitor ran.
    pub dot_sign: Option<i8>,
    /// Cosine between estimated and true unseen direction, when measured.
    pub cos_est_true: Option<f64>,
}

/// What a monitor sees right before the update of one iteration.
pub struct StepContext<'a> {
    pub iteration: usize,
    pub te: &'a ParamVector,
    pub ge: Option<&'a ParamVector>,
    /// Loss gradient at `te` on the training batch, before weight decay.
    pub raw_grad: &'a ParamVector,
    /// `(domain_id, row)` of every sample in the training batch.
    pub batch_origin: &'a [(usize, usize)],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Observation {
    pub dot: Option<f64>,
    pub cosine: Option<f64>,
}

/// Read-only hook into the training loop. Monitors get snapshots; they cannot
/// reach the trainer's rng or state.
pub trait Monitor {
    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Observation>;
}

impl Monitor for () {
    fn observe(&mut self, _: &StepContext<'_>) -> Result<Observation> {
        Ok(Observation::default())
    }
}

fn diverged(iteration: usize, e: Error) -> Error {
    match e {
        Error::NumericOverflow(detail) => Error::Divergence { iteration, detail },
        other => other,
    }
}

/// One iteration of the configured method on a prepared batch.
pub fn gestur_iteration(
    state: &mut TrainState,
    hyper: &GesturHyper,
    spec: &MlpSpec,
    batch: &Minibatch,
) -> Result<IterationTrace> {
    iterate(state, hyper, spec, batch, &[], &mut ())
}

fn iterate(
    state: &mut TrainState,
    hyper: &GesturHyper,
    spec: &MlpSpec,
    batch: &Minibatch,
    origin: &[(usize, usize)],
    monitor: &mut dyn Monitor,
) -> Result<IterationTrace> {
    let iteration = state.iteration;
    let (loss, grad) = loss_and_grad(&state.te, spec, batch).map_err(|e| diverged(iteration, e))?;

    let obs = monitor.observe(&StepContext {
        iteration,
        te: &state.te,
        ge: state.ge.as_ref(),
        raw_grad: &grad,
        batch_origin: origin,
    })?;

    let mut g = grad;
    if hyper.weight_decay > 0.0 {
        for (gi, ti) in g.values_mut().iter_mut().zip(state.te.values()) {
            *gi += hyper.weight_decay * ti;
        }
    }

    let g_f = g.segment(Segment::Feature);
    let norm_g_f = l2_norm(g_f);
    let (feature_grad, norm_e, fell_back) = match &state.ge {
        Some(ge) => {
            let e = estimate_direction(
                ge.segment(Segment::Feature),
                state.te.segment(Segment::Feature),
            )?;
            let combined = combine_with(
                g_f,
                &e,
                hyper.lambda,
                hyper.eps_dir,
                hyper.combine_sign,
                hyper.fallback,
            )
            .map_err(|e| diverged(iteration, e))?;
            (combined.grad, Some(l2_norm(&e)), combined.fell_back)
        }
        None => (g_f.to_vec(), None, false),
    };

    let lr = hyper.learning_rate;
    base_step(
        &hyper.optimizer,
        &mut state.opt,
        Segment::Feature,
        &mut state.te,
        &feature_grad,
        lr,
    )?;
    base_step(
        &hyper.optimizer,
        &mut state.opt,
        Segment::Classifier,
        &mut state.te,
        g.segment(Segment::Classifier),
        lr,
    )?;
    if !state.te.is_finite() {
        return Err(Error::Divergence {
            iteration,
            detail: "non-finite parameters after update".into(),
        });
    }

    if let Some(ge) = state.ge.as_mut() {
        ema_in_place(ge, &state.te, hyper.m);
    }
    state.iteration += 1;

    Ok(IterationTrace {
        iter: iteration,
        loss,
        norm_g_f,
        norm_e,
        fell_back,
        dot_sign: obs.dot.map(|d| {
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        }),
        cos_est_true: obs.cosine,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub traces: Vec<IterationTrace>,
}

impl TrainOutcome {
    pub fn te(&self) -> &ParamVector {
        &self.state.te
    }

    pub fn ge(&self) -> Option<&ParamVector> {
        self.state.ge.as_ref()
    }

    pub fn final_model(&self) -> &ParamVector {
        self.state.final_model()
    }
}

/// Full training run. The rng drives minibatch sampling only.
pub fn train(
    method: Method,
    theta0: &ParamVector,
    hyper: &GesturHyper,
    sources: &[DomainDataset],
    spec: &MlpSpec,
    rng: &mut Rng,
    monitor: &mut dyn Monitor,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    spec.validate()?;
    if *theta0.layout() != spec.layout() {
        return Err(Error::Shape(
            "initial parameters do not match the model".into(),
        ));
    }
    let mut state = TrainState::new(method, theta0);
    let mut traces = Vec::with_capacity(hyper.iterations);
    for _ in 0..hyper.iterations {
        let picks = sample_indices(sources, hyper.batch_size, hyper.composition, rng)?;
        let batch = gather(sources, &picks);
        let origin: Vec<(usize, usize)> = picks
            .iter()
            .map(|&(pos, row)| (sources[pos].domain_id, row))
            .collect();
        traces.push(iterate(&mut state, hyper, spec, &batch, &origin, monitor)?);
    }
    Ok(TrainOutcome { state, traces })
}

pub fn train_erm(
    theta0: &ParamVector,
    hyper: &GesturHyper,
    sources: &[DomainDataset],
    spec: &MlpSpec,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    train(Method::Erm, theta0, hyper, sources, spec, rng, &mut ())
}

pub fn train_gestur(
    theta0: &ParamVector,
    hyper: &GesturHyper,
    sources: &[DomainDataset],
    spec: &MlpSpec,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    train(Method::Gestur, theta0, hyper, sources, spec, rng, &mut ())
}

/// Writes `iter,loss,norm_g_f,norm_e,dot_sign,cos_est_true`.
pub fn traces_to_csv(traces: &[IterationTrace]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("iter,loss,norm_g_f,norm_e,dot_sign,cos_est_true\n");
    for t in traces {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.iter,
            t.loss,
            t.norm_g_f,
            opt(t.norm_e),
            t.dot_sign.map(|s| s.to_string()).unwrap_or_default(),
            opt(t.cos_est_true),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn direction_examples() {
        assert_eq!(
            estimate_direction(&[0.3, -1.0], &[0.3, -1.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            estimate_direction(&[1.0, 1.0], &[0.0, 1.0]).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(estimate_direction(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn combine_hand_examples() {
        let out = combine(&[3.0, 4.0], &[-3.0, -4.0], 1.0, 1e-12).unwrap();
        assert!(close(&out, &[3.0, 4.0], 1e-12));
        let out = combine(&[3.0, 4.0], &[1.0, 2.0], 0.0, 1e-12).unwrap();
        assert_eq!(out, vec![1.5, 2.0]);
        let out = combine(&[3.0, 4.0], &[0.0, -2.0], 0.1, 1e-12).unwrap();
        assert!(close(&out, &[1.5, 2.25], 1e-12), "{out:?}");
    }

    #[test]
    fn combine_fallbacks() {
        let g = [3.0, 4.0];
        let raw = combine_with(
            &g,
            &[0.0, 0.0],
            0.5,
            1e-12,
            CombineSign::TowardGe,
            FallbackMode::Raw,
        )
        .unwrap();
        assert!(raw.fell_back);
        assert_eq!(raw.grad, g);
        let half = combine_with(
            &g,
            &[0.0, 1e-13],
            0.5,
            1e-12,
            CombineSign::TowardGe,
            FallbackMode::Halved,
        )
        .unwrap();
        assert!(half.fell_back);
        assert_eq!(half.grad, vec![1.5, 2.0]);
        let zero_g = combine_with(
            &[0.0, 0.0],
            &[1.0, 0.0],
            0.5,
            1e-12,
            CombineSign::TowardGe,
            FallbackMode::Raw,
        )
        .unwrap();
        assert!(zero_g.fell_back);
        assert_eq!(zero_g.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn literal_sign_adds_the_direction() {
        let out = combine_with(
            &[3.0, 4.0],
            &[0.0, -2.0],
            0.1,
            1e-12,
            CombineSign::Literal,
            FallbackMode::Raw,
        )
        .unwrap();
        assert!(close(&out.grad, &[1.5, 1.75], 1e-12));
    }

    #[test]
    fn combine_rejects_bad_input() {
        assert!(matches!(
            combine(&[f64::NAN], &[1.0], 0.1, 1e-12),
            Err(Error::NumericOverflow(_))
        ));
        assert!(matches!(
            combine(&[1.0], &[1.0, 0.0], 0.1, 1e-12),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ema_examples() {
        let layout = numerics::Layout::new(1, 1);
        let ge = ParamVector::from_values(layout, vec![1.0, -2.0]).unwrap();
        let te = ParamVector::from_values(layout, vec![0.0, 4.0]).unwrap();
        assert_eq!(ema_update(&ge, &te, 1.0).unwrap(), ge);
        assert_eq!(ema_update(&ge, &te, 0.0).unwrap(), te);
        let out = ema_update(&ge, &te, 0.999).unwrap();
        assert!((out.values()[0] - 0.999).abs() < 1e-15);
        assert!(ema_update(&ge, &te, 1.5).is_err());
        assert!(ema_update(&ge, &te, -0.1).is_err());
    }

    #[test]
    fn sgd_step_example() {
        let opt = BaseOptimizer::sgd();
        let mut m = Moments::zeros(1);
        let mut p = [1.0];
        opt.step(&mut m, &mut p, &[1.0], 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let opt = BaseOptimizer::adam();
        let lr = 0.01;
        for c in [0.1, 1.0, 37.0] {
            let mut m = Moments::zeros(1);
            let mut p = [2.0];
            opt.step(&mut m, &mut p, &[c], lr).unwrap();
            let drop = 2.0 - p[0];
            let delta = 1.0 - drop / lr;
            assert!((0.0..=1e-7).contains(&delta), "c={c}: delta={delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        for opt in [BaseOptimizer::sgd(), BaseOptimizer::adam()] {
            let mut m = Moments::zeros(3);
            let mut p = [1.0, -2.0, 0.5];
            opt.step(&mut m, &mut p, &[0.0; 3], 0.1).unwrap();
            assert_eq!(p, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn method_parses() {
        assert_eq!("erm".parse::<Method>().unwrap(), Method::Erm);
        assert_eq!("gestur".parse::<Method>().unwrap(), Method::Gestur);
        assert!("swad".parse::<Method>().is_err());
    }

    #[test]
    fn hyper_validation() {
        let mut h = GesturHyper::default();
        assert!(h.validate().is_ok());
        h.m = 1.2;
        assert!(h.validate().is_err());
        let mut h = GesturHyper::default();
        h.lambda = f64::INFINITY;
        assert!(h.validate().is_err());
        let mut h = GesturHyper::default();
        h.eps_dir = f64::INFINITY;
        assert!(h.validate().is_ok());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (1usize..24).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
                0.0f64..2.0,
            )
        })
    }

    proptest! {
        #[test]
        fn combine_norm_bound((g, e, lambda) in instance()) {
            prop_assume!(l2_norm(&e) >= 1e-12 && l2_norm(&g) > 0.0);
            let out = combine(&g, &e, lambda, 1e-12).unwrap();
            let n = l2_norm(&out);
            let gn = l2_norm(&g);
            let tol = 1e-10 * gn;
            prop_assert!(n >= 0.5 * (1.0 - lambda).abs() * gn - tol);
            prop_assert!(n <= 0.5 * (1.0 + lambda) * gn + tol);
        }

        #[test]
        fn direction_matches_numerics_sub((a, b, _l) in instance()) {
            prop_assert_eq!(estimate_direction(&a, &b).unwrap(), numerics::sub(&a, &b).unwrap());
        }
    }
}
