//! The closed-form bias verifier, end to end.
//!
//! Runs the canonical constructions (exact push-forward consistency, a
//! too-narrow function class, exchangeable unit ratios, the inverse-discount
//! mean-bias ratio) plus a battery of random in-window instances, prints the
//! per-transition ratio tables, and writes CSV reports.

use std::path::Path;

use tdu::harness::{run_bias_suite, write_bias_outputs};

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "  undef".to_string(), |x| format!("{x:7.4}"))
}

fn main() {
    let outcome = run_bias_suite(0, 100).unwrap();

    for (name, report) in &outcome.reports {
        println!("== {name} (gamma {}) ==", report.gamma);
        for p in &report.pairs {
            println!(
                "  pair ({}, {}): mean residual {:+.3e}, var residual {:+.3e}",
                p.s,
                p.a,
                p.mean_residual(),
                p.var_residual()
            );
        }
        println!("  transition  rho     phi     kappa   alpha   bias(E d)   bias(V d)");
        for t in &report.transitions {
            println!(
                "  {} -{}-> {}   {} {} {} {}  {:+.3e}  {:+.3e}",
                t.s,
                t.a,
                t.next,
                show(t.rho),
                show(t.phi),
                show(t.kappa),
                show(t.alpha),
                t.bias_mean_delta,
                t.bias_var_delta
            );
        }
    }

    println!();
    println!(
        "consistency residual:      {:.3e}",
        outcome.consistency_max_residual
    );
    println!(
        "narrow-class residual:     {:.3e}",
        outcome.narrow_min_residual
    );
    println!(
        "unit-ratio gap:            {:.3e}",
        outcome.unit_ratio_max_gap
    );
    println!(
        "variance identity gap:     {:.3e}",
        outcome.identity_max_gap
    );
    println!(
        "inverse-gamma mean bias:   {:.3e}",
        outcome.rho_inverse_max_mean_bias
    );
    println!(
        "in-window mean ordering:   {}/{}",
        outcome.battery_holds, outcome.battery_cases
    );

    let dir = Path::new("out/bias-example");
    write_bias_outputs(&outcome, dir).unwrap();
    println!("reports written to {}", dir.display());
    println!(
        "verdict: {}",
        if outcome.passes() { "pass" } else { "FAIL" }
    );
}
