use gestur::harness::{DiagnosticsSummary, ExperimentReport};
use gestur::optimizer::Method;

fn lambda_cell(l: Option<f64>) -> String {
    l.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

pub fn results(report: &ExperimentReport) {
    println!("target  lambda  sourceval_ge  unseen_ge          unseen_te");
    for s in &report.selection {
        println!(
            "{:<7} {:<7} {:<13.4} {:.4} ± {:.4}    {:.4} ± {:.4}",
            s.target,
            lambda_cell(s.lambda),
            s.sourceval_acc_ge,
            s.unseen_acc_ge.mean,
            s.unseen_acc_ge.stderr,
            s.unseen_acc_te.mean,
            s.unseen_acc_te.stderr,
        );
    }
    for o in &report.overall {
        println!(
            "overall {}: unseen GE {:.4}, TE {:.4} over {} runs",
            o.method.name(),
            o.unseen_acc_ge,
            o.unseen_acc_te,
            o.rows
        );
    }
    if let Some(dir) = &report.config.out_dir {
        println!("results in {}", dir.display());
    }
}

pub fn conflicts(diag: &DiagnosticsSummary, method: Method) {
    match diag.conflict_percent(method) {
        Some(p) => println!("conflict_percent {}: {p:.2}", method.name()),
        None => println!("conflict_percent {}: no iterations recorded", method.name()),
    }
}

pub fn similarity(diag: &DiagnosticsSummary) {
    for (t, c) in diag.mean_cosine_by_target() {
        println!("target {t}: mean cosine after warm-up {c:.4}");
    }
}

pub fn probe(diag: &DiagnosticsSummary) {
    let frozen = diag.mean_probe_by_target("frozen_theta0");
    for (t, ge) in diag.mean_probe_by_target("GE") {
        let f = frozen.get(&t).copied().unwrap_or(f64::NAN);
        println!("target {t}: probe GE {ge:.4}, frozen theta_0 {f:.4}");
    }
}
