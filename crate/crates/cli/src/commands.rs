//! One function per subcommand. Each returns an [`Outcome`] rather than exiting.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use busca::anomaly::{anomaly_scores, fit_robust_gaussian};
use busca::burst::{detect_bursts, BurstConfig, DEFAULT_MAX_BLOCKS, DEFAULT_TAU_THRESHOLD};
use busca::classify::classify as classify_series;
use busca::disentangle::{disentangle as disentangle_series, DEFAULT_REPLICATIONS};
use busca::estimate::{fit_em, EmConfig};
use busca::eval::{censor, run_eval, EvalConfig};
use busca::hawkes::{busca_aic, compare_aic, fit_hawkes};
use busca::io::{read_series_file, write_jsonl, LabelRecord, SeriesRecord};
use busca::simulate::{pick_params_for_psi, simulate_mixture};
use busca::{EventSeries, MixtureFit, Verdict};
use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;

use crate::output::{fmt_float, open_out, write_csv, Outcome};
use crate::{FitArgs, SeriesArgs};

type Rows = Vec<Vec<String>>;

impl FitArgs {
    fn em_config(&self) -> EmConfig {
        let d = EmConfig::default();
        EmConfig {
            max_iterations: self.max_iters.unwrap_or(d.max_iterations),
            refine_mu: !self.no_refine_mu,
            refine_replications: self.replications.unwrap_or(d.refine_replications),
            seed: self.seed,
            truncation_depth: self.truncation_depth.unwrap_or(d.truncation_depth),
            ..d
        }
    }

    fn disentangle_replications(&self) -> usize {
        self.replications.unwrap_or(DEFAULT_REPLICATIONS)
    }
}

/// Reads every input file. Unreadable files abort; bad lines become failures.
fn load(paths: &[PathBuf]) -> Result<(Vec<EventSeries>, Vec<String>), Outcome> {
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        let items = read_series_file(path).map_err(|e| Outcome::Invalid(e.to_string()))?;
        for item in items {
            match item {
                Ok(s) => series.push(s),
                Err(e) => failures.push(format!("{}: {e}", path.display())),
            }
        }
    }
    Ok((series, failures))
}

/// Applies `f` to every series in parallel, keeping input order.
fn per_series<F>(args: &SeriesArgs, header: &[&str], f: F) -> Outcome
where
    F: Fn(&EventSeries) -> busca::Result<Rows> + Sync,
{
    let (series, mut failures) = match load(&args.input) {
        Ok(x) => x,
        Err(o) => return o,
    };
    if let Err(e) = args.fit.em_config().validate() {
        return Outcome::Invalid(e.to_string());
    }
    let results: Vec<busca::Result<Rows>> = series.par_iter().map(&f).collect();
    let mut rows = Vec::new();
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(format!("{}: {e}", s.id())),
        }
    }
    if let Err(e) = write_csv(args.out.as_deref(), header, rows) {
        return Outcome::Fatal(e);
    }
    Outcome::from_failures(&failures)
}

fn fit_one(s: &EventSeries, fit: &FitArgs) -> busca::Result<MixtureFit> {
    fit_em(s, &fit.em_config())
}

pub fn fit(args: &SeriesArgs) -> Outcome {
    let header = ["id", "lambda_p", "mu", "psi", "loglik", "iterations", "converged", "mu_refined"];
    per_series(args, &header, |s| {
        let f = fit_one(s, &args.fit)?;
        Ok(vec![vec![
            s.id().to_string(),
            fmt_float(f.params.lambda_p),
            fmt_float(f.params.mu),
            fmt_float(f.psi),
            fmt_float(f.log_likelihood),
            f.em_iterations.to_string(),
            f.converged.to_string(),
            f.mu_refined.to_string(),
        ]])
    })
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Significance level of both likelihood-ratio tests.
    #[arg(long, env = "BUSCA_ALPHA", default_value_t = busca::classify::DEFAULT_ALPHA)]
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<(), Outcome> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Outcome::Invalid(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn classify(args: &ClassifyArgs) -> Outcome {
    if let Err(o) = check_alpha(args.alpha) {
        return o;
    }
    per_series(&args.series, &["id", "phi_p", "phi_s", "verdict", "psi"], |s| {
        let f = fit_one(s, &args.series.fit)?;
        let c = classify_series(s, &f, args.alpha)?;
        Ok(vec![vec![
            s.id().to_string(),
            fmt_float(c.phi_p),
            fmt_float(c.phi_s),
            c.verdict.to_string(),
            fmt_float(f.psi),
        ]])
    })
}

pub fn disentangle(args: &SeriesArgs) -> Outcome {
    per_series(args, &["id", "timestamp", "label"], |s| {
        let f = fit_one(s, &args.fit)?;
        let a = disentangle_series(s, &f, args.fit.disentangle_replications(), args.fit.seed)?;
        Ok(s.timestamps()
            .iter()
            .zip(&a.labels)
            .map(|(t, l)| vec![s.id().to_string(), fmt_float(*t), l.to_string()])
            .collect())
    })
}

pub fn goodness(args: &SeriesArgs) -> Outcome {
    per_series(args, &["id", "r2_pp", "r2_sfp"], |s| {
        let f = fit_one(s, &args.fit)?;
        let a = disentangle_series(s, &f, args.fit.disentangle_replications(), args.fit.seed)?;
        Ok(vec![vec![s.id().to_string(), fmt_float(a.r2_poisson), fmt_float(a.r2_sfp)]])
    })
}

pub fn compare(args: &SeriesArgs) -> Outcome {
    per_series(args, &["id", "aic_busca", "aic_hawkes", "winner"], |s| {
        let f = fit_one(s, &args.fit)?;
        let h = fit_hawkes(s)?;
        Ok(vec![vec![
            s.id().to_string(),
            fmt_float(busca_aic(&f)),
            fmt_float(h.aic),
            compare_aic(&f, &h).to_string(),
        ]])
    })
}

#[derive(Args, Debug)]
pub struct BurstArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Segments whose SFP-to-expected-Poisson ratio exceeds this are bursts.
    #[arg(long, env = "BUSCA_TAU_THRESHOLD", default_value_t = DEFAULT_TAU_THRESHOLD)]
    pub tau_threshold: f64,
    /// Per-segment penalty of the segmentation; a residual-variance default when absent.
    #[arg(long, env = "BUSCA_PENALTY")]
    pub penalty: Option<f64>,
    #[arg(long, env = "BUSCA_MAX_BLOCKS", default_value_t = DEFAULT_MAX_BLOCKS)]
    pub max_blocks: usize,
}

pub fn bursts(args: &BurstArgs) -> Outcome {
    let config = BurstConfig {
        replications: args.series.fit.disentangle_replications(),
        seed: args.series.fit.seed,
        tau_threshold: args.tau_threshold,
        penalty: args.penalty,
        max_blocks: args.max_blocks,
    };
    if args.penalty.is_some_and(|p| !(p >= 0.0)) {
        return Outcome::Invalid("--penalty must be >= 0".into());
    }
    let header = ["id", "t_start", "t_end", "sfp_count", "tau", "is_burst"];
    per_series(&args.series, &header, |s| {
        let f = fit_one(s, &args.series.fit)?;
        let report = detect_bursts(s, &f, &config)?;
        Ok(report
            .segments
            .iter()
            .map(|g| {
                vec![
                    s.id().to_string(),
                    fmt_float(g.t_start),
                    fmt_float(g.t_end),
                    g.sfp_count.to_string(),
                    fmt_float(g.tau),
                    g.is_burst.to_string(),
                ]
            })
            .collect())
    })
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Target percentage of self-feeding events.
    #[arg(long)]
    pub psi: f64,
    /// Expected number of events per series; the window is (0, n].
    #[arg(long)]
    pub n: usize,
    /// Number of series.
    #[arg(long, default_value_t = 1)]
    pub series: usize,
    #[arg(long, env = "BUSCA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// JSONL series output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth labels; defaults to `<out>.labels.jsonl` when --out is given.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".labels.jsonl");
    out.with_file_name(name)
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let end = args.n as f64;
    let params = match pick_params_for_psi(args.psi, args.n, 0.0, end) {
        Ok(p) => p,
        Err(e) => return Outcome::Invalid(e.to_string()),
    };
    let sims: Vec<_> = (0..args.series)
        .into_par_iter()
        .map(|k| {
            let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            simulate_mixture(&params, 0.0, end, seed).map(|mut sim| {
                sim.series = sim.series.with_id(format!("sim-{k}"));
                sim
            })
        })
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (k, s) in sims.into_iter().enumerate() {
        match s {
            Ok(s) => ok.push(s),
            Err(e) => failures.push(format!("sim-{k}: {e}")),
        }
    }
    let written = open_out(args.out.as_deref())
        .map_err(|e| e.to_string())
        .and_then(|mut w| {
            write_jsonl(&mut w, ok.iter().map(|s| SeriesRecord::from_series(&s.series))).map_err(|e| e.to_string())?;
            w.flush().map_err(|e| e.to_string())
        });
    if let Err(e) = written {
        return Outcome::Fatal(e);
    }
    let label_path = args.labels.clone().or_else(|| args.out.as_deref().map(sidecar));
    if let Some(p) = label_path {
        let records = ok.iter().map(|s| LabelRecord {
            id: s.series.id().to_string(),
            labels: s.labels.clone(),
        });
        let written = open_out(Some(&p))
            .map_err(|e| e.to_string())
            .and_then(|mut w| {
                write_jsonl(&mut w, records).map_err(|e| e.to_string())?;
                w.flush().map_err(|e| e.to_string())
            });
        if let Err(e) = written {
            return Outcome::Fatal(e);
        }
    }
    Outcome::from_failures(&failures)
}

#[derive(Args, Debug)]
pub struct AnomalyArgs {
    /// Fit CSV written by `fit`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Classification CSV written by `classify`.
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "BUSCA_ALPHA", default_value_t = busca::anomaly::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
struct FitRow {
    id: String,
    lambda_p: f64,
    mu: f64,
}

#[derive(Debug, Deserialize)]
struct VerdictRow {
    id: String,
    verdict: Verdict,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, failures: &mut Vec<String>) -> Result<Vec<T>, Outcome> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Outcome::Invalid(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, row) in r.deserialize().enumerate() {
        match row {
            Ok(row) => rows.push(row),
            // Line 1 is the header.
            Err(e) => failures.push(format!("{} line {}: {e}", path.display(), k + 2)),
        }
    }
    Ok(rows)
}

pub fn anomalies(args: &AnomalyArgs) -> Outcome {
    if let Err(o) = check_alpha(args.alpha) {
        return o;
    }
    let mut failures = Vec::new();
    let (fits, verdicts) = match (
        read_rows::<FitRow>(&args.input, &mut failures),
        read_rows::<VerdictRow>(&args.verdicts, &mut failures),
    ) {
        (Ok(f), Ok(v)) => (f, v),
        (Err(o), _) | (_, Err(o)) => return o,
    };
    let mixed: HashMap<&str, bool> = verdicts
        .iter()
        .map(|v| (v.id.as_str(), v.verdict == Verdict::Mixed))
        .collect();
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for f in &fits {
        match mixed.get(f.id.as_str()) {
            Some(true) if f.lambda_p > 0.0 && f.mu > 0.0 && f.mu.is_finite() => {
                ids.push(f.id.as_str());
                points.push([f.lambda_p.ln(), f.mu.ln()]);
            }
            Some(true) => failures.push(format!("{}: non-positive rate or scale", f.id)),
            Some(false) => {}
            None => failures.push(format!("{}: no verdict", f.id)),
        }
    }
    let scores = match fit_robust_gaussian(&points).and_then(|m| anomaly_scores(&points, &m, args.alpha)) {
        Ok(s) => s,
        Err(e) => {
            failures.push(format!("robust fit over {} MIXED series: {e}", points.len()));
            Vec::new()
        }
    };
    let rows = ids.iter().zip(&points).zip(&scores).map(|((id, p), s)| {
        vec![
            id.to_string(),
            fmt_float(p[0]),
            fmt_float(p[1]),
            fmt_float(s.d2),
            s.is_anomalous.to_string(),
        ]
    });
    if let Err(e) = write_csv(args.out.as_deref(), &["id", "log_lambda_p", "log_mu", "d2", "is_anomalous"], rows) {
        return Outcome::Fatal(e);
    }
    Outcome::from_failures(&failures)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Series sizes; the full study uses 100..=1000 by 100.
    #[arg(long, value_delimiter = ',', default_values_t = EvalConfig::default().ns)]
    pub ns: Vec<usize>,
    /// Target SFP percentages; the full study uses 10..=90 by 10.
    #[arg(long, value_delimiter = ',', default_values_t = EvalConfig::default().psis)]
    pub psis: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, env = "BUSCA_ALPHA", default_value_t = busca::classify::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

pub fn eval(args: &EvalArgs) -> Outcome {
    if let Err(o) = check_alpha(args.alpha) {
        return o;
    }
    let config = EvalConfig {
        ns: args.ns.clone(),
        psis: args.psis.clone(),
        reps: args.reps,
        seed: args.fit.seed,
        alpha: args.alpha,
        em: args.fit.em_config(),
    };
    let results = match run_eval(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::Invalid(e.to_string()),
    };
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let keys = config
        .ns
        .iter()
        .flat_map(|&n| config.psis.iter().flat_map(move |&psi| (0..config.reps).map(move |rep| (n, psi, rep))));
    for (r, (n, psi, rep)) in results.into_iter().zip(keys) {
        match r {
            Ok(r) => rows.push(vec![
                r.n.to_string(),
                fmt_float(r.psi),
                r.rep.to_string(),
                fmt_float(censor(r.delta_lambda)),
                fmt_float(censor(r.delta_mu_em)),
                fmt_float(censor(r.delta_mu_refined)),
                fmt_float(r.phi_p),
                fmt_float(r.phi_s),
            ]),
            Err(e) => failures.push(format!("n={n} psi={psi} rep={rep}: {e}")),
        }
    }
    let header = ["n", "psi", "rep", "delta_lambda", "delta_mu_em", "delta_mu_refined", "phi_p", "phi_s"];
    if let Err(e) = write_csv(args.out.as_deref(), &header, rows) {
        return Outcome::Fatal(e);
    }
    Outcome::from_failures(&failures)
}
