//! Synthetic multi-domain classification suites.
//!
//! Every domain of a suite shares the same classes. A class is a Gaussian blob
//! around a fixed prototype mean; domain `k` moves the means through a smooth
//! parametric transform whose strength grows linearly with `k`:
//!
//! * `rotation`: each coordinate plane `(2i, 2i+1)` is rotated by
//!   `k * shift_magnitude` radians (an odd trailing coordinate is untouched),
//! * `affine`: `x -> (I + k*s*A) x + k*s*u` for a fixed random matrix `A`
//!   and unit vector `u`,
//! * `mean-shift`: `x -> x + k*s*u`.
//!
//! Samples are `T_k(mean[y]) + noise_std * N(0, I)`. Class prototypes and
//! transforms come from `mean_seed`, samples and splits from `seed`, and every
//! domain draws from its own stream so domain `k` does not depend on how many
//! domains the suite has.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::model::Minibatch;
use crate::rng::{stream, Rng, Stage};

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    Rotation,
    Affine,
    MeanShift,
}

/// How a source minibatch is spread over the source domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BatchComposition {
    /// `batch_size / |sources|` per domain, remainder to the lowest ids.
    #[default]
    Balanced,
    /// Every sample picks its domain uniformly at random.
    UniformPool,
}

fn default_separation() -> f64 {
    3.0
}

fn default_subclasses() -> usize {
    1
}

fn default_subclass_spread() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSuiteConfig {
    pub num_domains: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_domain: usize,
    pub shift_kind: ShiftKind,
    pub shift_magnitude: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Seed of the class prototypes and domain transforms. Defaults to `seed`.
    #[serde(default)]
    pub mean_seed: Option<u64>,
    /// Norm of every class prototype.
    #[serde(default = "default_separation")]
    pub class_separation: f64,
    /// Consecutive groups of this many classes share one prototype and differ
    /// by a per-class offset, giving a finer label granularity.
    #[serde(default = "default_subclasses")]
    pub subclasses: usize,
    /// Norm of the per-class offset, relative to `class_separation`.
    #[serde(default = "default_subclass_spread")]
    pub subclass_spread: f64,
}

impl DomainSuiteConfig {
    pub fn mean_seed(&self) -> u64 {
        self.mean_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("suite: {m}")));
        if self.num_domains < 3 {
            return bad(format!("need at least 3 domains, got {}", self.num_domains));
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.samples_per_domain < 2 {
            return bad("need at least 2 samples per domain".into());
        }
        if self.shift_kind == ShiftKind::Rotation && self.input_dim < 2 {
            return bad("rotation shift needs input_dim >= 2".into());
        }
        if !self.shift_magnitude.is_finite() {
            return bad("shift_magnitude must be finite".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and non-negative".into());
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return bad("class_separation must be positive".into());
        }
        if self.subclasses == 0 || !self.num_classes.is_multiple_of(self.subclasses) {
            return bad(format!(
                "num_classes {} is not a multiple of subclasses {}",
                self.num_classes, self.subclasses
            ));
        }
        if !self.subclass_spread.is_finite() {
            return bad("subclass_spread must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: usize,
    pub input_dim: usize,
    /// `(n, input_dim)` row-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Minibatch {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Minibatch {
            inputs,
            labels,
            input_dim: self.input_dim,
        }
    }

    pub fn all(&self) -> Minibatch {
        Minibatch {
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
            input_dim: self.input_dim,
        }
    }

    pub fn train_set(&self) -> Minibatch {
        self.subset(&self.train_indices)
    }

    pub fn val_set(&self) -> Minibatch {
        self.subset(&self.val_indices)
    }
}

/// Leave-one-domain-out partition of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct LodoSplit {
    /// Ordered by domain id.
    pub sources: Vec<DomainDataset>,
    pub unseen: DomainDataset,
}

impl LodoSplit {
    /// Pooled validation splits of all source domains.
    pub fn source_validation(&self) -> Minibatch {
        concat(self.sources.iter().map(|d| d.val_set()))
    }

    pub fn source_ids(&self) -> Vec<usize> {
        self.sources.iter().map(|d| d.domain_id).collect()
    }
}

pub(crate) fn concat(parts: impl Iterator<Item = Minibatch>) -> Minibatch {
    let mut out = Minibatch {
        inputs: Vec::new(),
        labels: Vec::new(),
        input_dim: 0,
    };
    for p in parts {
        out.input_dim = p.input_dim;
        out.inputs.extend(p.inputs);
        out.labels.extend(p.labels);
    }
    out
}

fn random_direction(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Untransformed class means, one row per class.
pub fn base_class_means(config: &DomainSuiteConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let d = config.input_dim;
    let seed = config.mean_seed();
    let means = (0..config.num_classes)
        .map(|c| {
            let proto = c / config.subclasses;
            let mut rng = stream(seed, Stage::ClassMeans, &[0, proto as u64]);
            let mut m: Vec<f64> = random_direction(&mut rng, d)
                .into_iter()
                .map(|x| x * config.class_separation)
                .collect();
            if config.subclasses > 1 {
                let mut sub = stream(seed, Stage::ClassMeans, &[1, c as u64]);
                let off = random_direction(&mut sub, d);
                let r = config.subclass_spread * config.class_separation;
                for (mi, oi) in m.iter_mut().zip(off) {
                    *mi += r * oi;
                }
            }
            m
        })
        .collect();
    Ok(means)
}

/// The per-domain input transform.
#[derive(Debug, Clone)]
pub struct DomainTransform {
    kind: ShiftKind,
    strength: f64,
    matrix: Vec<f64>,
    direction: Vec<f64>,
}

impl DomainTransform {
    pub fn new(config: &DomainSuiteConfig, domain_index: usize) -> Self {
        let d = config.input_dim;
        let strength = domain_index as f64 * config.shift_magnitude;
        let mut rng = stream(config.mean_seed(), Stage::Transform, &[]);
        let direction = random_direction(&mut rng, d);
        let scale = 1.0 / (d as f64).sqrt();
        let matrix = (0..d * d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            kind: config.shift_kind,
            strength,
            matrix,
            direction,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let t = self.strength;
        match self.kind {
            ShiftKind::Rotation => {
                let (s, c) = t.sin_cos();
                let mut out = x.to_vec();
                for p in 0..d / 2 {
                    let (a, b) = (x[2 * p], x[2 * p + 1]);
                    out[2 * p] = c * a - s * b;
                    out[2 * p + 1] = s * a + c * b;
                }
                out
            }
            ShiftKind::Affine => (0..d)
                .map(|i| {
                    let ax: f64 = (0..d).map(|j| self.matrix[i * d + j] * x[j]).sum();
                    x[i] + t * ax + t * self.direction[i]
                })
                .collect(),
            ShiftKind::MeanShift => x
                .iter()
                .zip(&self.direction)
                .map(|(xi, ui)| xi + t * ui)
                .collect(),
        }
    }
}

/// Class means as they appear in domain `domain_index`.
pub fn domain_class_means(
    config: &DomainSuiteConfig,
    domain_index: usize,
) -> Result<Vec<Vec<f64>>> {
    let t = DomainTransform::new(config, domain_index);
    Ok(base_class_means(config)?
        .iter()
        .map(|m| t.apply(m))
        .collect())
}

fn generate_domain(config: &DomainSuiteConfig, means: &[Vec<f64>], k: usize) -> DomainDataset {
    let d = config.input_dim;
    let n = config.samples_per_domain;
    let shifted: Vec<Vec<f64>> = {
        let t = DomainTransform::new(config, k);
        means.iter().map(|m| t.apply(m)).collect()
    };
    let mut rng = stream(config.seed, Stage::DomainSamples, &[k as u64]);
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % config.num_classes;
        for &mu in &shifted[y] {
            let eps: f64 = rng.sample(StandardNormal);
            inputs.push(mu + config.noise_std * eps);
        }
        labels.push(y);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(config.seed, Stage::Split, &[k as u64]));
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut train_indices = order[..n_train].to_vec();
    let mut val_indices = order[n_train..].to_vec();
    train_indices.sort_unstable();
    val_indices.sort_unstable();
    DomainDataset {
        domain_id: k,
        input_dim: d,
        inputs,
        labels,
        train_indices,
        val_indices,
    }
}

pub fn generate_suite(config: &DomainSuiteConfig) -> Result<Vec<DomainDataset>> {
    let means = base_class_means(config)?;
    Ok((0..config.num_domains)
        .map(|k| generate_domain(config, &means, k))
        .collect())
}

pub fn leave_one_out(suite: &[DomainDataset], target_id: usize) -> Result<LodoSplit> {
    let unseen = suite
        .iter()
        .find(|d| d.domain_id == target_id)
        .cloned()
        .ok_or(Error::UnknownDomain(target_id))?;
    let mut sources: Vec<DomainDataset> = suite
        .iter()
        .filter(|d| d.domain_id != target_id)
        .cloned()
        .collect();
    sources.sort_by_key(|d| d.domain_id);
    Ok(LodoSplit { sources, unseen })
}

/// `(position in sources, row index)` of every sample of one draw.
pub fn sample_indices(
    sources: &[DomainDataset],
    batch_size: usize,
    composition: BatchComposition,
    rng: &mut Rng,
) -> Result<Vec<(usize, usize)>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    if sources.is_empty() || sources.iter().any(|s| s.train_indices.is_empty()) {
        return Err(Error::InvalidConfig(
            "every source needs training samples".into(),
        ));
    }
    let counts: Vec<usize> = match composition {
        BatchComposition::Balanced => {
            let per = batch_size / sources.len();
            let rem = batch_size % sources.len();
            (0..sources.len())
                .map(|i| per + usize::from(i < rem))
                .collect()
        }
        BatchComposition::UniformPool => {
            let mut counts = vec![0; sources.len()];
            for _ in 0..batch_size {
                counts[rng.random_range(0..sources.len())] += 1;
            }
            counts
        }
    };
    let mut picks = Vec::with_capacity(batch_size);
    for (pos, (src, &count)) in sources.iter().zip(&counts).enumerate() {
        for _ in 0..count {
            let j = rng.random_range(0..src.train_indices.len());
            picks.push((pos, src.train_indices[j]));
        }
    }
    Ok(picks)
}

pub fn gather(sources: &[DomainDataset], picks: &[(usize, usize)]) -> Minibatch {
    let dim = sources[0].input_dim;
    let mut inputs = Vec::with_capacity(picks.len() * dim);
    let mut labels = Vec::with_capacity(picks.len());
    for &(pos, row) in picks {
        inputs.extend_from_slice(sources[pos].row(row));
        labels.push(sources[pos].labels[row]);
    }
    Minibatch {
        inputs,
        labels,
        input_dim: dim,
    }
}

pub fn sample_minibatch(
    sources: &[DomainDataset],
    batch_size: usize,
    composition: BatchComposition,
    rng: &mut Rng,
) -> Result<Minibatch> {
    let picks = sample_indices(sources, batch_size, composition, rng)?;
    Ok(gather(sources, &picks))
}

/// Uniform draw with replacement from every row of one dataset (diagnostics).
pub fn sample_any(data: &DomainDataset, batch_size: usize, rng: &mut Rng) -> Minibatch {
    let rows: Vec<usize> = (0..batch_size)
        .map(|_| rng.random_range(0..data.len()))
        .collect();
    data.subset(&rows)
}

/// Writes `domain_id,label,x0..x{d-1},split`, rows in index order.
pub fn write_csv(suite: &[DomainDataset], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let d = suite.first().map(|s| s.input_dim).unwrap_or(0);
        let mut header = vec!["domain_id".to_string(), "label".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.push("split".to_string());
        writeln!(buf, "{}", header.join(",")).expect("write to vec");
        for ds in suite {
            let mut is_train = vec![false; ds.len()];
            for &i in &ds.train_indices {
                is_train[i] = true;
            }
            for i in 0..ds.len() {
                let mut fields = vec![ds.domain_id.to_string(), ds.labels[i].to_string()];
                fields.extend(ds.row(i).iter().map(|v| format!("{v:e}")));
                fields.push(if is_train[i] { "train" } else { "val" }.to_string());
                writeln!(buf, "{}", fields.join(",")).expect("write to vec");
            }
        }
    }
    fsutil::write_atomic(path, &buf)
}

pub fn read_csv(path: &Path) -> Result<Vec<DomainDataset>> {
    let bad = |detail: String| Error::Format {
        what: "dataset csv",
        detail,
    };
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let d = header
        .len()
        .checked_sub(3)
        .ok_or_else(|| bad("too few columns".into()))?;
    if &header[0] != "domain_id" || &header[1] != "label" || &header[d + 2] != "split" {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut suite: Vec<DomainDataset> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let id: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad domain id {:?}", &rec[0])))?;
        let label: usize = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad label {:?}", &rec[1])))?;
        if suite.last().map(|s| s.domain_id) != Some(id) {
            if suite.iter().any(|s| s.domain_id == id) {
                return Err(bad(format!("rows of domain {id} are not contiguous")));
            }
            suite.push(DomainDataset {
                domain_id: id,
                input_dim: d,
                inputs: Vec::new(),
                labels: Vec::new(),
                train_indices: Vec::new(),
                val_indices: Vec::new(),
            });
        }
        let ds = suite.last_mut().unwrap();
        let idx = ds.labels.len();
        for i in 0..d {
            let v: f64 = rec[i + 2]
                .parse()
                .map_err(|_| bad(format!("bad value {:?}", &rec[i + 2])))?;
            ds.inputs.push(v);
        }
        ds.labels.push(label);
        match &rec[d + 2] {
            "train" => ds.train_indices.push(idx),
            "val" => ds.val_indices.push(idx),
            other => return Err(bad(format!("bad split {other:?}"))),
        }
    }
    Ok(suite)
}
