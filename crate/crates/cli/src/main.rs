//! `busca`: batch front end for the mixture toolkit.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "busca", version, about = "Poisson + self-feeding mixture analysis of event series")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "BUSCA_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate mixture series as JSONL, with a ground-truth label sidecar.
    Simulate(commands::SimulateArgs),
    /// Fit the mixture by EM: id, lambda_p, mu, psi, loglik, iterations, converged, mu_refined.
    Fit(SeriesArgs),
    /// Likelihood-ratio classification: id, phi_p, phi_s, verdict, psi.
    Classify(commands::ClassifyArgs),
    /// Per-event source labels: id, timestamp, label.
    Disentangle(SeriesArgs),
    /// R² of each disentangled component: id, r2_pp, r2_sfp.
    Goodness(SeriesArgs),
    /// AIC against a Hawkes process: id, aic_busca, aic_hawkes, winner.
    Compare(SeriesArgs),
    /// Robust Mahalanobis anomalies over MIXED fits: id, log_lambda_p, log_mu, d2, is_anomalous.
    Anomalies(commands::AnomalyArgs),
    /// Burst segments: id, t_start, t_end, sfp_count, tau, is_burst.
    Bursts(commands::BurstArgs),
    /// Synthetic bias study: n, psi, rep, delta_lambda, delta_mu_em, delta_mu_refined, phi_p, phi_s.
    Eval(commands::EvalArgs),
}

/// Input, output and fitting flags shared by the per-series commands.
#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    /// Series files, plain text or JSONL.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long, env = "BUSCA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Replace the EM estimate of mu by the pseudo-event deletion estimate.
    #[arg(long, env = "BUSCA_REFINE_MU", overrides_with = "no_refine_mu")]
    pub refine_mu: bool,
    #[arg(long, env = "BUSCA_NO_REFINE_MU", overrides_with = "refine_mu")]
    pub no_refine_mu: bool,
    /// Monte Carlo replications for mu refinement and disentangling.
    #[arg(long, env = "BUSCA_REPLICATIONS")]
    pub replications: Option<usize>,
    #[arg(long, env = "BUSCA_TRUNCATION_DEPTH")]
    pub truncation_depth: Option<usize>,
    #[arg(long, env = "BUSCA_MAX_ITERS")]
    pub max_iters: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Disentangle(a) => commands::disentangle(&a),
        Command::Goodness(a) => commands::goodness(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Anomalies(a) => commands::anomalies(&a),
        Command::Bursts(a) => commands::bursts(&a),
        Command::Eval(a) => commands::eval(&a),
    });
    outcome.exit_code()
}
