//! A small sweep grid, its CSV/score artifacts, and a re-plot from disk.
//!
//! Runs TDU and the no-bonus baseline over two Deep Sea sizes, writes
//! `runs.csv`, `summary.csv`, `score.csv` and `curves.svg`, then reads the
//! CSV back and regenerates the plot from it — the same round trip the
//! `tdu plot` subcommand performs.

use tdu::config::parse_config;
use tdu::harness::{curve_series, run_sweep};
use tdu::metrics::{emit_svg_curves_to_path, read_runs_csv, CurveOptions};

fn main() {
    let cfg = parse_config(
        r#"
        [run]
        seeds = [0, 1, 2]
        output_dir = "out/sweep-example"

        [sweep]
        sizes = [4, 6]
        variants = ["tdu", "bdqn"]
        "#,
        &[],
    )
    .unwrap();

    let artifacts = run_sweep(&cfg).unwrap();
    println!("{} runs finished", artifacts.runs.len());
    for path in [
        &artifacts.runs_csv,
        &artifacts.summary_csv,
        &artifacts.score_csv,
        &artifacts.curves_svg,
    ] {
        println!("wrote {}", path.display());
    }

    let runs = read_runs_csv(&artifacts.runs_csv).unwrap();
    let replot = artifacts.runs_csv.with_file_name("curves_replot.svg");
    let options = CurveOptions {
        title: "replotted from runs.csv".to_string(),
        ..CurveOptions::default()
    };
    emit_svg_curves_to_path(&curve_series(&runs), &options, &replot).unwrap();
    println!("wrote {}", replot.display());
}
