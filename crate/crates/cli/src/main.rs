use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gestur::harness::{
    self, ExperimentConfig, ExperimentReport, PretrainSource, Targets, THETA0_FILE,
};
use gestur::optimizer::{Method, LAMBDA_SEARCH_SET};
use gestur::pretrain::pretrain;
use gestur::{Error, Result};

mod print;

#[derive(Parser)]
#[command(
    name = "gestur",
    version,
    about = "Two-expert domain-generalization experiments on synthetic shifted domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train theta_0 on the auxiliary suite and write it as a checkpoint.
    Pretrain(Common),
    /// Leave-one-domain-out training at a single lambda.
    Train(Common),
    /// Train every lambda and select per target on source validation.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid; defaults to the config's list, then 0.01,0.05,0.1,0.5.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Run with one diagnostic switched on and summarize it.
    Analyze {
        #[arg(value_enum)]
        kind: Analysis,
        #[command(flatten)]
        common: Common,
    },
    /// Read a result directory back, verify it and print the summary.
    Report {
        /// Result directory; defaults to --out / GESTUR_OUT.
        dir: Option<PathBuf>,
        #[arg(long, env = "GESTUR_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Conflicts,
    Similarity,
    Probe,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Erm,
    Gestur,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "configs/default.toml")]
    config: PathBuf,
    /// Master seed (pre-training seed for `pretrain`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "GESTUR_OUT")]
    out: Option<PathBuf>,
    /// Concurrent runs; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Moving-average coefficient m.
    #[arg(long)]
    ema: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Domain id, comma-separated ids, or `all`.
    #[arg(long)]
    target: Option<Targets>,
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(o) = &self.out {
            c.out_dir = Some(o.clone());
        }
        if let Some(j) = self.jobs {
            c.jobs = j;
        }
        if let Some(l) = self.lambda {
            c.hyper.lambda = l;
            c.lambdas = None;
        }
        if let Some(m) = self.ema {
            c.hyper.m = m;
        }
        if let Some(m) = self.method {
            c.method = match m {
                MethodArg::Erm => Method::Erm,
                MethodArg::Gestur => Method::Gestur,
            };
        }
        if let Some(t) = &self.target {
            c.targets = t.clone();
        }
        if let Some(r) = self.reps {
            c.repetitions = r;
        }
        Ok(c)
    }
}

fn out_dir(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| {
        Error::InvalidConfig("no output directory: pass --out or set GESTUR_OUT".into())
    })
}

fn cmd_pretrain(common: &Common) -> Result<()> {
    let config = common.load()?;
    let PretrainSource::Train(mut p) = config.pretrain else {
        return Err(Error::InvalidConfig(
            "config names a checkpoint, nothing to pre-train".into(),
        ));
    };
    if let Some(s) = common.seed {
        p.seed = s;
    }
    let dir = out_dir(config.out_dir.as_deref())?;
    let theta0 = pretrain(&p, &config.model)?;
    let path = dir.join(THETA0_FILE);
    theta0.write_checkpoint(&path)?;
    println!("wrote {} ({} parameters)", path.display(), theta0.len());
    Ok(())
}

fn cmd_train(common: &Common) -> Result<ExperimentReport> {
    let mut config = common.load()?;
    config.lambdas = None;
    let report = harness::run(&config)?;
    print::results(&report);
    Ok(report)
}

fn cmd_sweep(common: &Common, lambdas: Option<Vec<f64>>) -> Result<()> {
    let config = common.load()?;
    let grid = lambdas
        .or_else(|| config.lambdas.clone())
        .unwrap_or_else(|| LAMBDA_SEARCH_SET.to_vec());
    let report = harness::sweep_lambda(&config, &grid)?;
    print::results(&report);
    print!("{}", report.lambda_table_csv());
    Ok(())
}

fn cmd_analyze(kind: Analysis, common: &Common) -> Result<()> {
    let mut config = common.load()?;
    let d = &mut config.diagnostics;
    match kind {
        Analysis::Conflicts => d.conflicts = true,
        Analysis::Similarity | Analysis::Probe => {
            if config.method == Method::Erm {
                return Err(Error::InvalidConfig(
                    "this analysis needs the two-expert method".into(),
                ));
            }
            d.similarity = matches!(kind, Analysis::Similarity);
            d.probe = matches!(kind, Analysis::Probe);
        }
    }
    let report = harness::run(&config)?;
    print::results(&report);
    let diag = report.diagnostics.at_selection(&report.selection);
    match kind {
        Analysis::Conflicts => print::conflicts(&diag, config.method),
        Analysis::Similarity => print::similarity(&diag),
        Analysis::Probe => print::probe(&diag),
    }
    Ok(())
}

fn cmd_report(dir: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let dir = dir.or(out);
    let report = harness::report_read(out_dir(dir.as_deref())?)?;
    println!("verified {} rows", report.rows.len());
    print::results(&report);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(c) => cmd_pretrain(&c),
        Command::Train(c) => cmd_train(&c).map(drop),
        Command::Sweep { common, lambdas } => cmd_sweep(&common, lambdas),
        Command::Analyze { kind, common } => cmd_analyze(kind, &common),
        Command::Report { dir, out } => cmd_report(dir, out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
