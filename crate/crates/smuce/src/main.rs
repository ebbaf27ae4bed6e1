//! Command-line front end: fit series, simulate null tables, choose
//! thresholds, export bands, and run named simulation scenarios.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smuce::expfam::ExpFamily;
use smuce::io::{self, FitDocument};
use smuce::multiscale::PenaltyMode;
use smuce::nulldist::{self, NullTable, SimOptions};
use smuce::segdp::{fit_quantile, fit_smuce, FitConfig};
use smuce::{confidence, experiments, tuning, Error, Result};

#[derive(Parser)]
#[command(
    name = "smuce",
    version,
    about = "Multiscale change-point inference for exponential-family regression"
)]
struct Cli {
    /// Worker threads for simulation (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a step function to a series and emit a JSON fit document.
    Fit(FitArgs),
    /// Simulate the null distribution of the multiscale statistic.
    Null(NullArgs),
    /// Choose a threshold balancing over- and underestimation risk.
    ChooseQ(ChooseQArgs),
    /// Export a fit document and its series as a plot-ready CSV.
    BandCsv(BandCsvArgs),
    /// Run a named simulation scenario and emit its report.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input series: single-column CSV, optional `value` header.
    #[arg(long)]
    input: PathBuf,
    /// Output path for the JSON fit document (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Observation model: gauss-mean, gauss-variance, poisson, bernoulli,
    /// or quantile.
    #[arg(long, default_value = "gauss-mean")]
    family: String,
    /// Noise standard deviation (gauss-mean).
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Quantile level in (0,1) (family quantile).
    #[arg(long)]
    quantile_level: Option<f64>,
    /// MA(1) coefficient of the noise (gauss-mean only).
    #[arg(long)]
    ma_beta: Option<f64>,
    /// Explicit multiscale threshold.
    #[arg(long, conflicts_with_all = ["alpha", "auto_q"])]
    q: Option<f64>,
    /// Significance level: the threshold becomes the (1-alpha)-quantile of
    /// the null table.
    #[arg(long, conflicts_with = "auto_q")]
    alpha: Option<f64>,
    /// Choose the threshold automatically from theoretical error bounds.
    #[arg(long)]
    auto_q: bool,
    /// Null-table file; otherwise a table is simulated on demand.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Replicates for an on-demand null table.
    #[arg(long, default_value_t = 5000)]
    table_reps: usize,
    /// Seed for an on-demand null table.
    #[arg(long, default_value_t = 1)]
    table_seed: u64,
    /// Shortest scanned scale as a fraction of n (default: 1/n).
    #[arg(long)]
    min_scale: Option<f64>,
    /// Cache directory for on-demand null tables (or SMUCE_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct NullArgs {
    /// Series length the statistic is simulated at.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output table file.
    #[arg(long)]
    out: PathBuf,
    /// Shortest scanned scale as a fraction of n (default: 1/n).
    #[arg(long)]
    min_scale: Option<f64>,
    /// Penalty mode: sqrt, loglog, or uncalibrated.
    #[arg(long, default_value = "sqrt")]
    mode: String,
    /// Permit simulations beyond the built-in compute budget.
    #[arg(long)]
    force_budget: bool,
}

#[derive(Args)]
struct ChooseQArgs {
    /// Series length the choice is made for.
    #[arg(long)]
    n: usize,
    /// Null-table file; otherwise a table is simulated on demand.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    table_reps: usize,
    #[arg(long, default_value_t = 1)]
    table_seed: u64,
    /// Cache directory for on-demand null tables (or SMUCE_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BandCsvArgs {
    /// Fit document produced by `smuce fit`.
    #[arg(long)]
    fit: PathBuf,
    /// The series the document was fitted to.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario name; see --list.
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    /// Override the scenario's replicate count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the JSON report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// List known scenarios and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // Threads only matter for simulation; a second global build (as in
    // tests) is harmless and ignored.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build_global();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Io(_) | Error::Parse { .. } => 1,
                Error::Infeasible(_) => 2,
                Error::InvalidInput(_) | Error::Budget(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Fit(args) => cmd_fit(args),
        Cmd::Null(args) => cmd_null(args),
        Cmd::ChooseQ(args) => cmd_choose_q(args),
        Cmd::BandCsv(args) => cmd_band_csv(args),
        Cmd::Simulate(args) => cmd_simulate(args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let stdout = std::io::stdout();
            stdout
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| Error::Io(format!("stdout: {e}")))
        }
    }
}

fn table_desc(t: &NullTable) -> String {
    format!(
        "null table (n={}, reps={}, seed={}, min_scale={}, mode={})",
        t.n, t.reps, t.seed, t.min_scale, t.mode
    )
}

fn load_table(
    path: Option<&Path>,
    series_n: usize,
    reps: usize,
    seed: u64,
    min_scale: Option<f64>,
    cache_dir: Option<&Path>,
) -> Result<NullTable> {
    match path {
        Some(p) => NullTable::read_from(p),
        None => {
            let n = series_n.min(experiments::TABLE_N_CAP);
            let mut opts = SimOptions::new(n, reps, seed);
            if let Some(c) = min_scale {
                opts.min_scale = c;
            }
            nulldist::load_or_simulate(nulldist::cache_dir(cache_dir).as_deref(), &opts)
        }
    }
}

/// Resolved threshold: value, significance level when one is behind it,
/// and a human-readable origin.
struct Threshold {
    q: f64,
    alpha: Option<f64>,
    provenance: String,
}

fn resolve_threshold(args: &FitArgs, series_n: usize) -> Result<Threshold> {
    if let Some(q) = args.q {
        if !q.is_finite() {
            return Err(Error::InvalidInput("q must be finite".to_string()));
        }
        return Ok(Threshold {
            q,
            alpha: None,
            provenance: format!("q={q} given explicitly"),
        });
    }
    if args.alpha.is_none() && !args.auto_q {
        return Err(Error::InvalidInput(
            "need exactly one of --q, --alpha, --auto-q".to_string(),
        ));
    }
    let table = load_table(
        args.table.as_deref(),
        series_n,
        args.table_reps,
        args.table_seed,
        args.min_scale,
        args.cache_dir.as_deref(),
    )?;
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be in (0,1), got {alpha}"
            )));
        }
        let q = table.quantile(1.0 - alpha)?;
        return Ok(Threshold {
            q,
            alpha: Some(alpha),
            provenance: format!(
                "q is the {}-quantile of the {}",
                1.0 - alpha,
                table_desc(&table)
            ),
        });
    }
    let choice = tuning::choose_q(series_n, &table)?;
    Ok(Threshold {
        q: choice.q,
        alpha: Some(choice.alpha),
        provenance: format!(
            "automatic: overestimation {:.6} + underestimation bound {:.6} minimized \
             (lambda*={:.6}, eta*={:.6}) over the {}",
            choice.alpha,
            choice.beta,
            choice.lambda_star,
            choice.eta_star,
            table_desc(&table)
        ),
    })
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let y = io::read_series(&args.input)?;
    let threshold = resolve_threshold(&args, y.len())?;

    let doc = if args.family == "quantile" {
        let beta = args.quantile_level.ok_or_else(|| {
            Error::InvalidInput("family quantile needs --quantile-level".to_string())
        })?;
        let fit = fit_quantile(&y, beta, threshold.q, args.min_scale)?;
        let region = confidence::quantile_confidence_region(&y, &fit, threshold.alpha)?;
        FitDocument::from_quantile_fit(&fit, &region, threshold.alpha, threshold.provenance)
    } else {
        let family = match args.family.as_str() {
            "gauss-mean" => ExpFamily::GaussMean { sigma: args.sigma },
            "gauss-variance" => ExpFamily::GaussVariance,
            "poisson" => ExpFamily::Poisson,
            "bernoulli" => ExpFamily::Bernoulli,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown family {other:?}; known: gauss-mean, gauss-variance, poisson, \
                     bernoulli, quantile"
                )))
            }
        };
        if args.ma_beta.is_some() && !matches!(family, ExpFamily::GaussMean { .. }) {
            return Err(Error::InvalidInput(
                "--ma-beta applies to gauss-mean only".to_string(),
            ));
        }
        if args.quantile_level.is_some() {
            return Err(Error::InvalidInput(
                "--quantile-level applies to family quantile only".to_string(),
            ));
        }
        // Variance regression works on the squared observations.
        let data: Vec<f64> = match family {
            ExpFamily::GaussVariance => y.iter().map(|v| v * v).collect(),
            _ => y,
        };
        let cfg = FitConfig {
            family,
            q: threshold.q,
            min_scale: args.min_scale,
            ma_beta: args.ma_beta,
        };
        let fit = fit_smuce(&data, &cfg)?;
        let region = confidence::confidence_region(&data, &cfg, &fit, threshold.alpha)?;
        FitDocument::from_step_fit(
            &cfg.family,
            args.ma_beta,
            &fit,
            &region,
            threshold.alpha,
            threshold.provenance,
        )
    };
    emit(args.out.as_deref(), &doc.to_json()?)
}

fn cmd_null(args: NullArgs) -> Result<()> {
    let mut opts = SimOptions::new(args.n, args.reps, args.seed);
    if let Some(c) = args.min_scale {
        opts.min_scale = c;
    }
    opts.mode = PenaltyMode::from_token(&args.mode)?;
    opts.force_budget = args.force_budget;
    let table = nulldist::simulate_null(&opts)?;
    table.write_to(&args.out)
}

fn cmd_choose_q(args: ChooseQArgs) -> Result<()> {
    let table = load_table(
        args.table.as_deref(),
        args.n,
        args.table_reps,
        args.table_seed,
        None,
        args.cache_dir.as_deref(),
    )?;
    let choice = tuning::choose_q(args.n, &table)?;
    let report = serde_json::json!({
        "n": args.n,
        "q": choice.q,
        "alpha": choice.alpha,
        "beta": choice.beta,
        "lambda_star": choice.lambda_star,
        "eta_star": choice.eta_star,
        "objective": choice.objective(),
        "table": table_desc(&table),
    });
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Io(format!("serializing report: {e}")))?;
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn cmd_band_csv(args: BandCsvArgs) -> Result<()> {
    let doc = FitDocument::read_from(&args.fit)?;
    let y = io::read_series(&args.input)?;
    let mut buf = Vec::new();
    io::write_band_csv(&doc, &y, &mut buf)?;
    let text = String::from_utf8(buf).expect("CSV output is UTF-8");
    emit(args.out.as_deref(), &text)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    if args.list {
        let mut text = String::new();
        for name in experiments::registry() {
            text.push_str(name);
            text.push('\n');
        }
        return emit(args.out.as_deref(), &text);
    }
    let name = args.scenario.as_deref().expect("clap enforces --scenario");
    let scenarios = experiments::by_name(name, args.reps, args.seed)?;
    let reports = scenarios
        .iter()
        .map(experiments::run_scenario)
        .collect::<Result<Vec<_>>>()?;
    let value = if reports.len() == 1 {
        serde_json::to_value(&reports[0])
    } else {
        serde_json::to_value(&reports)
    };
    let mut text = serde_json::to_string_pretty(
        &value.map_err(|e| Error::Io(format!("serializing report: {e}")))?,
    )
    .map_err(|e| Error::Io(format!("serializing report: {e}")))?;
    text.push('\n');
    emit(args.out.as_deref(), &text)
}
