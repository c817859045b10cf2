//! Thin command-line front end over the library. Exit codes: 0 on success,
//! 1 when a run or suite fails, 2 on configuration errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tdu::config::load_config;
use tdu::error::{Error, Result};
use tdu::harness::{
    curve_series, run_bias_suite, run_sweep, score_runs, write_bias_outputs, SweepArtifacts,
};
use tdu::metrics::{emit_svg_curves_to_path, fmt_f64, read_runs_csv, CurveOptions};

#[derive(Parser)]
#[command(
    name = "tdu",
    version,
    about = "Ensemble TD-uncertainty exploration lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set agent.beta=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base setting across the configured seeds.
    Run(ConfigArgs),
    /// Run the full sweep grid and write all artifacts.
    Sweep(ConfigArgs),
    /// Run the closed-form bias verification suite.
    Bias {
        /// Directory for per-instance reports and the summary.
        #[arg(long, default_value = "out/bias")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random in-window instances in the ordering battery.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Re-plot learning curves from an existing runs CSV.
    Plot {
        /// A `runs.csv` produced by `run` or `sweep`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "curves.svg")]
        output: PathBuf,
        #[arg(long, default_value = "average regret")]
        title: String,
    },
    /// Aggregate solve scores from an existing runs CSV.
    Score {
        #[arg(long)]
        input: PathBuf,
    },
}

fn print_artifacts(artifacts: &SweepArtifacts) {
    for run in &artifacts.runs {
        let solve = run
            .metrics
            .solve_episode
            .map_or_else(|| "unsolved".to_string(), |e| format!("solved@{e}"));
        println!(
            "{}: {} episodes, {}",
            run.run_id,
            run.metrics.episodes(),
            solve
        );
    }
    println!("wrote {}", artifacts.runs_csv.display());
    println!("wrote {}", artifacts.summary_csv.display());
    println!("wrote {}", artifacts.score_csv.display());
    println!("wrote {}", artifacts.curves_svg.display());
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load_config(args.config.as_deref(), &args.set)?;
            // A plain run ignores sweep axes: one setting, all seeds.
            cfg.sweep = Default::default();
            print_artifacts(&run_sweep(&cfg)?);
        }
        Command::Sweep(args) => {
            let cfg = load_config(args.config.as_deref(), &args.set)?;
            print_artifacts(&run_sweep(&cfg)?);
        }
        Command::Bias {
            out,
            seed,
            instances,
        } => {
            let outcome = run_bias_suite(seed, instances)?;
            write_bias_outputs(&outcome, &out)?;
            println!(
                "consistency residual {:.3e}, narrow residual {:.3e}, ratio gap {:.3e}, \
                 identity gap {:.3e}, inverse-gamma bias {:.3e}, ordering {}/{}",
                outcome.consistency_max_residual,
                outcome.narrow_min_residual,
                outcome.unit_ratio_max_gap,
                outcome.identity_max_gap,
                outcome.rho_inverse_max_mean_bias,
                outcome.battery_holds,
                outcome.battery_cases,
            );
            println!("wrote {}", out.join("summary.csv").display());
            if !outcome.passes() {
                return Err(Error::run("bias suite checks failed"));
            }
            println!("bias suite: pass");
        }
        Command::Plot {
            input,
            output,
            title,
        } => {
            let runs = read_runs_csv(&input)?;
            let options = CurveOptions {
                title,
                ..CurveOptions::default()
            };
            emit_svg_curves_to_path(&curve_series(&runs), &options, &output)?;
            println!("wrote {}", output.display());
        }
        Command::Score { input } => {
            let runs = read_runs_csv(&input)?;
            println!("variant,beta,lambda,seed,score");
            for row in score_runs(&runs) {
                println!(
                    "{},{},{},{},{}",
                    row.variant,
                    fmt_f64(row.beta),
                    fmt_f64(row.lambda),
                    row.seed,
                    fmt_f64(row.score)
                );
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match real_main(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    });
}
