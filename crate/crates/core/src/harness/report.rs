use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::analysis::ConflictReport;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::optimizer::Method;

pub const SCHEMA_VERSION: u32 = 1;
pub const RAW_ROWS_FILE: &str = "raw_rows.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RAW_ROWS_HEADER: [&str; 10] = [
    "method",
    "target",
    "repetition",
    "seed",
    "lambda",
    "m",
    "unseen_acc_ge",
    "unseen_acc_te",
    "sourceval_acc_ge",
    "sourceval_acc_te",
];

/// One trained model. ERM rows have no `lambda`/`m` and report the single
/// model in both the GE and TE columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub method: Method,
    pub target: usize,
    pub repetition: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub m: Option<f64>,
    pub unseen_acc_ge: f64,
    pub unseen_acc_te: f64,
    pub sourceval_acc_ge: f64,
    pub sourceval_acc_te: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    /// Sample (n-1) standard deviation over `sqrt(n)`; 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        };
        Self { mean, stderr, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub target: usize,
    pub lambda: Option<f64>,
    pub unseen_acc_ge: MeanStderr,
    pub unseen_acc_te: MeanStderr,
    pub sourceval_acc_ge: MeanStderr,
    pub sourceval_acc_te: MeanStderr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: Method,
    pub target: usize,
    pub lambda: Option<f64>,
    /// Mean GE source-validation accuracy the choice was made on.
    pub sourceval_acc_ge: f64,
    pub unseen_acc_ge: MeanStderr,
    pub unseen_acc_te: MeanStderr,
}

/// Grand means over every (target, repetition) row at the selected lambdas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub method: Method,
    pub unseen_acc_ge: f64,
    pub unseen_acc_te: f64,
    pub sourceval_acc_ge: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEntry {
    pub method: Method,
    pub target: usize,
    pub repetition: usize,
    pub lambda: Option<f64>,
    pub report: ConflictReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub target: usize,
    pub repetition: usize,
    pub lambda: f64,
    /// Mean defined cosine after the first 10% of training.
    pub mean_cosine_after_warmup: Option<f64>,
    pub defined_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub extractor_tag: String,
    pub target: usize,
    pub repetition: usize,
    pub seed: u64,
    pub lambda: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub conflicts: Vec<ConflictEntry>,
    pub similarity: Vec<SimilarityEntry>,
    pub probes: Vec<ProbeEntry>,
}

impl DiagnosticsSummary {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty() && self.similarity.is_empty() && self.probes.is_empty()
    }

    /// Keeps the entries of the selected lambda of every target.
    pub fn at_selection(&self, selection: &[Selection]) -> DiagnosticsSummary {
        let chosen = |target: usize, lambda: Option<f64>| {
            selection
                .iter()
                .any(|s| s.target == target && lambda_key(s.lambda) == lambda_key(lambda))
        };
        DiagnosticsSummary {
            conflicts: self
                .conflicts
                .iter()
                .filter(|c| chosen(c.target, c.lambda))
                .cloned()
                .collect(),
            similarity: self
                .similarity
                .iter()
                .filter(|s| chosen(s.target, Some(s.lambda)))
                .cloned()
                .collect(),
            probes: self
                .probes
                .iter()
                .filter(|p| chosen(p.target, Some(p.lambda)))
                .cloned()
                .collect(),
        }
    }

    /// Conflict percentage pooled over every recorded iteration of `method`.
    pub fn conflict_percent(&self, method: Method) -> Option<f64> {
        let (mut total, mut count) = (0usize, 0usize);
        for c in self.conflicts.iter().filter(|c| c.method == method) {
            total += c.report.total_iterations;
            count += c.report.conflict_count;
        }
        (total > 0).then(|| 100.0 * count as f64 / total as f64)
    }

    /// Per target: mean over repetitions of the post-warm-up cosine.
    pub fn mean_cosine_by_target(&self) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in &self.similarity {
            if let Some(c) = s.mean_cosine_after_warmup {
                acc.entry(s.target).or_default().push(c);
            }
        }
        acc.into_iter()
            .map(|(t, v)| (t, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    /// Per target: mean probe accuracy of `tag` over repetitions.
    pub fn mean_probe_by_target(&self, tag: &str) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for p in self.probes.iter().filter(|p| p.extractor_tag == tag) {
            acc.entry(p.target).or_default().push(p.accuracy);
        }
        acc.into_iter()
            .map(|(t, v)| (t, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<RawRow>,
    pub aggregates: Vec<Aggregate>,
    pub selection: Vec<Selection>,
    pub overall: Vec<Overall>,
    pub diagnostics: DiagnosticsSummary,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    schema_version: u32,
    config: ExperimentConfig,
    aggregates: Vec<Aggregate>,
    selection: Vec<Selection>,
    overall: Vec<Overall>,
    diagnostics: DiagnosticsSummary,
    artifacts: BTreeMap<String, String>,
}

fn lambda_key(l: Option<f64>) -> Option<u64> {
    l.map(f64::to_bits)
}

/// Groups rows by (method, target, lambda) in first-appearance order.
pub fn aggregate(rows: &[RawRow]) -> Vec<Aggregate> {
    let mut order: Vec<(Method, usize, Option<f64>)> = Vec::new();
    for r in rows {
        let key = (r.method, r.target, r.lambda);
        if !order
            .iter()
            .any(|k| k.0 == key.0 && k.1 == key.1 && lambda_key(k.2) == lambda_key(key.2))
        {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(method, target, lambda)| {
            let group: Vec<&RawRow> = rows
                .iter()
                .filter(|r| {
                    r.method == method
                        && r.target == target
                        && lambda_key(r.lambda) == lambda_key(lambda)
                })
                .collect();
            let col = |f: fn(&RawRow) -> f64| {
                MeanStderr::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            Aggregate {
                method,
                target,
                lambda,
                unseen_acc_ge: col(|r| r.unseen_acc_ge),
                unseen_acc_te: col(|r| r.unseen_acc_te),
                sourceval_acc_ge: col(|r| r.sourceval_acc_ge),
                sourceval_acc_te: col(|r| r.sourceval_acc_te),
            }
        })
        .collect()
}

/// Per (method, target): the lambda with the highest mean GE source-validation
/// accuracy; ties go to the earliest lambda. Reads no unseen column.
pub fn select(aggregates: &[Aggregate]) -> Vec<Selection> {
    let mut out: Vec<Selection> = Vec::new();
    for a in aggregates {
        let candidate = Selection {
            method: a.method,
            target: a.target,
            lambda: a.lambda,
            sourceval_acc_ge: a.sourceval_acc_ge.mean,
            unseen_acc_ge: a.unseen_acc_ge,
            unseen_acc_te: a.unseen_acc_te,
        };
        match out
            .iter_mut()
            .find(|s| s.method == a.method && s.target == a.target)
        {
            Some(s) if candidate.sourceval_acc_ge > s.sourceval_acc_ge => *s = candidate,
            Some(_) => {}
            None => out.push(candidate),
        }
    }
    out
}

pub fn overall(rows: &[RawRow], selection: &[Selection]) -> Vec<Overall> {
    let mut methods: Vec<Method> = Vec::new();
    for s in selection {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let chosen: Vec<&RawRow> = rows
                .iter()
                .filter(|r| {
                    r.method == method
                        && selection.iter().any(|s| {
                            s.method == method
                                && s.target == r.target
                                && lambda_key(s.lambda) == lambda_key(r.lambda)
                        })
                })
                .collect();
            let n = chosen.len() as f64;
            let mean = |f: fn(&RawRow) -> f64| chosen.iter().map(|r| f(r)).sum::<f64>() / n;
            Overall {
                method,
                unseen_acc_ge: mean(|r| r.unseen_acc_ge),
                unseen_acc_te: mean(|r| r.unseen_acc_te),
                sourceval_acc_ge: mean(|r| r.sourceval_acc_ge),
                rows: chosen.len(),
            }
        })
        .collect()
}

impl ExperimentReport {
    /// Derives aggregates, selection and grand means from raw rows.
    pub fn from_rows(
        config: ExperimentConfig,
        rows: Vec<RawRow>,
        diagnostics: DiagnosticsSummary,
    ) -> Self {
        let aggregates = aggregate(&rows);
        let selection = select(&aggregates);
        let overall = overall(&rows, &selection);
        Self {
            config,
            rows,
            aggregates,
            selection,
            overall,
            diagnostics,
        }
    }

    pub fn overall_for(&self, method: Method) -> Option<&Overall> {
        self.overall.iter().find(|o| o.method == method)
    }

    /// Table of GE unseen accuracy: one row per target, one mean/stderr
    /// column pair per lambda, and a closing average row.
    pub fn lambda_table_csv(&self) -> String {
        let mut lambdas: Vec<f64> = Vec::new();
        let mut targets: Vec<usize> = Vec::new();
        for a in self
            .aggregates
            .iter()
            .filter(|a| a.method == Method::Gestur)
        {
            let l = a.lambda.unwrap_or(f64::NAN);
            if !lambdas.iter().any(|x| x.to_bits() == l.to_bits()) {
                lambdas.push(l);
            }
            if !targets.contains(&a.target) {
                targets.push(a.target);
            }
        }
        let mut out = String::from("target");
        for l in &lambdas {
            out.push_str(&format!(",lambda_{l}_mean,lambda_{l}_stderr"));
        }
        out.push('\n');
        let mut sums = vec![0.0; lambdas.len()];
        for t in &targets {
            out.push_str(&t.to_string());
            for (i, l) in lambdas.iter().enumerate() {
                let a = self.aggregates.iter().find(|a| {
                    a.method == Method::Gestur
                        && a.target == *t
                        && a.lambda.map(f64::to_bits) == Some(l.to_bits())
                });
                match a {
                    Some(a) => {
                        sums[i] += a.unseen_acc_ge.mean;
                        out.push_str(&format!(
                            ",{},{}",
                            a.unseen_acc_ge.mean, a.unseen_acc_ge.stderr
                        ));
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out.push_str("avg");
        for s in sums {
            out.push_str(&format!(",{},", s / targets.len() as f64));
        }
        out.push('\n');
        out
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Shortest round-trip formatting, so the file is lossless.
pub fn rows_to_csv(rows: &[RawRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RAW_ROWS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.target.to_string(),
            r.repetition.to_string(),
            r.seed.to_string(),
            opt_cell(r.lambda),
            opt_cell(r.m),
            r.unseen_acc_ge.to_string(),
            r.unseen_acc_te.to_string(),
            r.sourceval_acc_ge.to_string(),
            r.sourceval_acc_te.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Format {
        what: "raw rows csv",
        detail: e.to_string(),
    })
}

pub fn rows_from_csv(bytes: &[u8]) -> Result<Vec<RawRow>> {
    let bad = |detail: String| Error::Format {
        what: "raw rows csv",
        detail,
    };
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RAW_ROWS_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        let of = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let u = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("bad integer {:?}", &rec[i])))
        };
        rows.push(RawRow {
            method: rec[0].parse()?,
            target: u(1)? as usize,
            repetition: u(2)? as usize,
            seed: u(3)?,
            lambda: of(4)?,
            m: of(5)?,
            unseen_acc_ge: f(6)?,
            unseen_acc_te: f(7)?,
            sourceval_acc_ge: f(8)?,
            sourceval_acc_te: f(9)?,
        });
    }
    Ok(rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `raw_rows.csv` and `summary.json` into `dir`.
pub fn report_write(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let csv = rows_to_csv(&report.rows)?;
    let mut artifacts = BTreeMap::new();
    artifacts.insert(RAW_ROWS_FILE.to_string(), sha256_hex(&csv));
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: report.config.clone(),
        aggregates: report.aggregates.clone(),
        selection: report.selection.clone(),
        overall: report.overall.clone(),
        diagnostics: report.diagnostics.clone(),
        artifacts,
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    fsutil::write_atomic(&dir.join(RAW_ROWS_FILE), &csv)?;
    fsutil::write_atomic(&dir.join(SUMMARY_FILE), &json)
}

/// Reads a report back, checking the schema version, the raw-row checksum and
/// that the stored aggregates still follow from the rows.
pub fn report_read(dir: &Path) -> Result<ExperimentReport> {
    let json = fsutil::read(&dir.join(SUMMARY_FILE))?;
    let value: serde_json::Value = serde_json::from_slice(&json)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format {
            what: "summary",
            detail: "missing schema_version".into(),
        })?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found: u32::try_from(found).unwrap_or(u32::MAX),
        });
    }
    let summary: Summary = serde_json::from_value(value)?;
    let csv = fsutil::read(&dir.join(RAW_ROWS_FILE))?;
    let expected = summary
        .artifacts
        .get(RAW_ROWS_FILE)
        .cloned()
        .unwrap_or_default();
    let actual = sha256_hex(&csv);
    if expected != actual {
        return Err(Error::Checksum {
            artifact: RAW_ROWS_FILE.into(),
            expected,
            found: actual,
        });
    }
    let rows = rows_from_csv(&csv)?;
    let report = ExperimentReport::from_rows(summary.config, rows, summary.diagnostics);
    if report.aggregates != summary.aggregates
        || report.selection != summary.selection
        || report.overall != summary.overall
    {
        return Err(Error::Format {
            what: "summary",
            detail: "aggregates do not follow from the raw rows".into(),
        });
    }
    Ok(report)
}
