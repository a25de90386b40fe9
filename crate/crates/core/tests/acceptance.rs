//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits nonzero when any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use gestur::datagen::leave_one_out;
use gestur::harness::report::{aggregate, select, RAW_ROWS_FILE};
use gestur::harness::{
    obtain_theta0, repetition_suite, run, run_seed, run_split, run_with_theta0, DiagnosticsConfig,
    ExperimentConfig, ExperimentReport, RunId,
};
use gestur::model::{init_params, loss, loss_and_grad, Activation, Minibatch, MlpSpec};
use gestur::numerics::{l2_norm, Layout, ParamVector};
use gestur::optimizer::{combine, ema_update, train, GesturHyper, Method};
use gestur::rng::{rng_from_seed, Rng};
use rand::Rng as _;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    ExperimentConfig::load(&path).expect("default config")
}

fn combine_exactness() -> Check {
    let out = combine(&[3.0, 4.0], &[0.0, -2.0], 0.1, 1e-12).map_err(|e| e.to_string())?;
    let hand = (out[0] - 1.5).abs().max((out[1] - 2.25).abs());
    if hand > 1e-12 {
        return Err(format!("hand example gave {out:?}"));
    }
    let mut rng = rng_from_seed(101);
    for i in 0..1000 {
        let n = rng.random_range(1..20);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lambda = rng.random_range(0.0..2.0);
        let out = combine(&g, &e, lambda, 1e-12).map_err(|e| e.to_string())?;
        let (gn, on) = (l2_norm(&g), l2_norm(&out));
        let slack = 1e-12 * gn;
        if on < 0.5 * (1.0 - lambda).abs() * gn - slack || on > 0.5 * (1.0 + lambda) * gn + slack {
            return Err(format!(
                "instance {i}: |out| {on} outside bounds for |g| {gn}, lambda {lambda}"
            ));
        }
    }
    Ok(format!(
        "hand error {hand:.1e}; norm bound held on 1000 instances"
    ))
}

fn ema_exactness() -> Check {
    let mut rng = rng_from_seed(102);
    let layout = Layout::new(9, 4);
    let random = |rng: &mut Rng| {
        ParamVector::from_values(
            layout,
            (0..13).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
        .unwrap()
    };
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (te, ge) = (random(&mut rng), random(&mut rng));
        let m = rng.random_range(0.0..1.0);
        let next = ema_update(&ge, &te, m).map_err(|e| e.to_string())?;
        for i in 0..13 {
            let before = ge.values()[i] - te.values()[i];
            let after = next.values()[i] - te.values()[i];
            worst = worst.max((after - m * before).abs());
        }
        if ema_update(&ge, &te, 1.0).unwrap() != ge || ema_update(&ge, &te, 0.0).unwrap() != te {
            return Err("fixed point broken".into());
        }
    }
    ensure(
        worst <= 1e-15,
        format!("worst contraction error {worst:.1e}; m=1 and m=0 exact"),
    )
}

fn gradient_check() -> Check {
    let mut rng = rng_from_seed(103);
    let mut worst = 0.0f64;
    let nets = 25;
    for _ in 0..nets {
        let depth = rng.random_range(0..3);
        let spec = MlpSpec {
            input_dim: rng.random_range(1..6),
            hidden_dims: (0..depth).map(|_| rng.random_range(1..6)).collect(),
            feature_dim: rng.random_range(1..6),
            num_classes: rng.random_range(2..5),
            activation: Activation::Tanh,
        };
        let p = init_params(&spec, &mut rng).unwrap();
        let mut p = ParamVector::from_values(
            *p.layout(),
            p.values()
                .iter()
                .map(|v| v + rng.random_range(-0.3..0.3))
                .collect(),
        )
        .unwrap();
        let rows = rng.random_range(1..8);
        let inputs = (0..rows * spec.input_dim)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let labels = (0..rows)
            .map(|_| rng.random_range(0..spec.num_classes))
            .collect();
        let batch = Minibatch::new(inputs, labels, spec.input_dim).unwrap();
        let (_, grad) = loss_and_grad(&p, &spec, &batch).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut numeric = vec![0.0; p.len()];
        for i in 0..p.len() {
            let orig = p.values()[i];
            p.values_mut()[i] = orig + h;
            let up = loss(&p, &spec, &batch).unwrap();
            p.values_mut()[i] = orig - h;
            let down = loss(&p, &spec, &batch).unwrap();
            p.values_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * h);
        }
        let diff = l2_norm(&gestur::numerics::sub(grad.values(), &numeric).unwrap());
        let scale = grad.l2_norm().max(l2_norm(&numeric)).max(1e-12);
        worst = worst.max(diff / scale);
    }
    ensure(
        worst <= 1e-6,
        format!("{nets} nets, worst relative error {worst:.1e}"),
    )
}

fn fallback_reduces_to_erm(config: &ExperimentConfig, theta0: &ParamVector) -> Check {
    let suite =
        repetition_suite(&config.suite, config.master_seed, 0).map_err(|e| e.to_string())?;
    let split = leave_one_out(&suite, 0).map_err(|e| e.to_string())?;
    let base = GesturHyper {
        iterations: 500,
        ..config.hyper.clone()
    };
    let forced = GesturHyper {
        eps_dir: f64::INFINITY,
        m: 0.0,
        ..base.clone()
    };
    let go = |method, hyper: &GesturHyper| {
        train(
            method,
            theta0,
            hyper,
            &split.sources,
            &config.model,
            &mut rng_from_seed(5),
            &mut (),
        )
    };
    let erm = go(Method::Erm, &base).map_err(|e| e.to_string())?;
    let ges = go(Method::Gestur, &forced).map_err(|e| e.to_string())?;
    let bits = |p: &ParamVector| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same_losses = erm
        .traces
        .iter()
        .zip(&ges.traces)
        .all(|(a, b)| a.loss.to_bits() == b.loss.to_bits());
    ensure(
        same_losses
            && bits(erm.te()) == bits(ges.te())
            && bits(ges.te()) == bits(ges.ge().unwrap()),
        "500 iterations, parameters and losses bitwise equal".into(),
    )
}

fn ordering(gestur: &ExperimentReport, erm: &ExperimentReport) -> Check {
    let g = gestur
        .overall_for(Method::Gestur)
        .ok_or("no GESTUR overall")?;
    let e = erm.overall_for(Method::Erm).ok_or("no ERM overall")?;
    ensure(
        g.unseen_acc_ge > e.unseen_acc_ge
            && g.unseen_acc_ge > g.unseen_acc_te
            && g.rows == 15
            && e.rows == 15,
        format!(
            "GE {:.4} vs TE {:.4} vs ERM {:.4} over {} rows",
            g.unseen_acc_ge, g.unseen_acc_te, e.unseen_acc_ge, g.rows
        ),
    )
}

fn conflicts(gestur: &ExperimentReport, erm: &ExperimentReport) -> Check {
    let g = gestur
        .diagnostics
        .at_selection(&gestur.selection)
        .conflict_percent(Method::Gestur)
        .ok_or("no GESTUR conflicts")?;
    let e = erm
        .diagnostics
        .conflict_percent(Method::Erm)
        .ok_or("no ERM conflicts")?;
    ensure(g <= e, format!("GESTUR {g:.2}% vs ERM {e:.2}%"))
}

fn similarity(gestur: &ExperimentReport) -> Check {
    let by_target = gestur
        .diagnostics
        .at_selection(&gestur.selection)
        .mean_cosine_by_target();
    let positive = by_target.values().filter(|&&c| c > 0.0).count();
    let shown: Vec<String> = by_target
        .iter()
        .map(|(t, c)| format!("{t}:{c:.3}"))
        .collect();
    ensure(
        by_target.len() == 5 && positive >= 4,
        format!("{positive}/5 targets positive [{}]", shown.join(" ")),
    )
}

fn probe(gestur: &ExperimentReport) -> Check {
    let d = gestur.diagnostics.at_selection(&gestur.selection);
    let ge = d.mean_probe_by_target("GE");
    let frozen = d.mean_probe_by_target("frozen_theta0");
    // Means of equal sets can differ in the last bit through summation order.
    let wins = ge
        .iter()
        .filter(|(t, g)| frozen.get(t).is_some_and(|f| **g >= f - 1e-9))
        .count();
    let shown: Vec<String> = ge
        .iter()
        .map(|(t, g)| {
            format!(
                "{t}:{g:.3}/{:.3}",
                frozen.get(t).copied().unwrap_or(f64::NAN)
            )
        })
        .collect();
    ensure(
        ge.len() == 5 && wins >= 3,
        format!("GE >= frozen on {wins}/5 targets [{}]", shown.join(" ")),
    )
}

fn sweep_machinery(
    config: &ExperimentConfig,
    theta0: &ParamVector,
    gestur: &ExperimentReport,
) -> Check {
    let lambdas = [0.01, 0.05, 0.1, 0.5];
    if config.lambdas.as_deref() != Some(&lambdas[..]) {
        return Err(format!("default grid is {:?}", config.lambdas));
    }
    let table = gestur.lambda_table_csv();
    let lines: Vec<&str> = table.lines().collect();
    let header_ok = lines[0]
        == "target,lambda_0.01_mean,lambda_0.01_stderr,lambda_0.05_mean,lambda_0.05_stderr,\
            lambda_0.1_mean,lambda_0.1_stderr,lambda_0.5_mean,lambda_0.5_stderr";
    let rows_ok = lines.len() == 7
        && lines[1..6].iter().enumerate().all(|(t, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            cells.len() == 9
                && cells[0] == t.to_string()
                && cells[1..].iter().all(|c| c.parse::<f64>().is_ok())
        })
        && lines[6].starts_with("avg,");
    if !(header_ok && rows_ok) {
        return Err(format!("malformed table:\n{table}"));
    }

    // Rewriting every unseen accuracy must not move the selection.
    let mut scrambled = gestur.rows.clone();
    let mut rng = rng_from_seed(104);
    for r in &mut scrambled {
        r.unseen_acc_ge = rng.random_range(0.0..1.0);
        r.unseen_acc_te = rng.random_range(0.0..1.0);
    }
    let picked = |s: &[gestur::harness::Selection]| {
        s.iter().map(|s| (s.target, s.lambda)).collect::<Vec<_>>()
    };
    if picked(&select(&aggregate(&scrambled))) != picked(&gestur.selection) {
        return Err("selection moved when only unseen accuracies changed".into());
    }

    // Replacing the unseen domain leaves every source-side number bitwise
    // unchanged, with all diagnostics reading that domain.
    let suite =
        repetition_suite(&config.suite, config.master_seed, 0).map_err(|e| e.to_string())?;
    let split = leave_one_out(&suite, 2).map_err(|e| e.to_string())?;
    let mut altered = split.clone();
    for (x, i) in altered.unseen.inputs.iter_mut().zip(0..) {
        *x = -*x * 3.0 + (i % 7) as f64;
    }
    altered.unseen.labels.reverse();
    let hyper = GesturHyper {
        iterations: 300,
        ..config.hyper.clone()
    };
    let diag = DiagnosticsConfig {
        conflicts: true,
        similarity: true,
        probe: true,
        ..DiagnosticsConfig::default()
    };
    let id = RunId {
        method: Method::Gestur,
        target: 2,
        repetition: 0,
        seed: run_seed(config.master_seed, 2, 0),
    };
    let a =
        run_split(id, &split, theta0, &hyper, &config.model, &diag).map_err(|e| e.to_string())?;
    let b =
        run_split(id, &altered, theta0, &hyper, &config.model, &diag).map_err(|e| e.to_string())?;
    ensure(
        a.row.sourceval_acc_ge.to_bits() == b.row.sourceval_acc_ge.to_bits()
            && a.row.sourceval_acc_te.to_bits() == b.row.sourceval_acc_te.to_bits()
            && a.row.unseen_acc_ge != b.row.unseen_acc_ge,
        format!(
            "5x4 table emitted; selection {:?} independent of unseen data",
            picked(&gestur.selection)
        ),
    )
}

fn determinism(config: &ExperimentConfig) -> Check {
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let c = ExperimentConfig {
            out_dir: Some(dir.path().to_path_buf()),
            ..config.clone()
        };
        run(&c).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(dir.path().join(RAW_ROWS_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!(
            "two runs wrote identical {} ({} bytes)",
            RAW_ROWS_FILE,
            bytes[0].len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let config = default_config();
    let theta0 = obtain_theta0(&config).expect("theta_0");

    let mut with_diag = config.clone();
    with_diag.diagnostics.conflicts = true;
    with_diag.diagnostics.similarity = true;
    with_diag.diagnostics.probe = true;
    let gestur = run_with_theta0(&with_diag, &theta0).expect("GESTUR run");
    let erm = run_with_theta0(
        &ExperimentConfig {
            method: Method::Erm,
            ..with_diag.clone()
        },
        &theta0,
    )
    .expect("ERM run");

    let results: Vec<(&str, Check)> = vec![
        ("combine exactness", combine_exactness()),
        ("moving-average exactness", ema_exactness()),
        ("gradient correctness", gradient_check()),
        (
            "fallback reduces to ERM",
            fallback_reduces_to_erm(&config, &theta0),
        ),
        ("GE beats ERM and TE", ordering(&gestur, &erm)),
        ("fewer gradient conflicts", conflicts(&gestur, &erm)),
        (
            "direction points toward unseen descent",
            similarity(&gestur),
        ),
        ("GE features probe at least as well", probe(&gestur)),
        (
            "lambda sweep and selection",
            sweep_machinery(&config, &theta0, &gestur),
        ),
        ("determinism", determinism(&config)),
    ];

    let mut failed = 0;
    for (i, (name, result)) in results.iter().enumerate() {
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0?}",
        results.len() - failed,
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
