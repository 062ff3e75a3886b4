//! `contagion`: command-line experiments for the interbank contagion model.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage error.

mod grid;
mod output;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use contagion_core::calibration::{load_balance_sheets, stability_scan, summarize, trajectory_overlay};
use contagion_core::cascade::{initialize_banks, monte_carlo, sweep_liabilities, HISTOGRAM_BINS};
use contagion_core::meanfield::{
    classify_fixed_points, critical_theta, equilibrium, hysteresis_sweep, leverage_min, phase_diagram,
    solve_fixed_point, DEFAULT_MAX_ITER, FIXED_POINT_TOL,
};
use contagion_core::netgen::{assign_loans, write_edge_list, NetworkMeta};
use contagion_core::rng::{trial_stream, Stream};
use contagion_core::{
    BalanceSheetSpec, CascadeConfig, Error as CoreError, LocationScaleDistribution, MeanFieldParams, NetworkSpec,
    Recovery,
};

use grid::GridSpec;
use output::{emit, json_bytes, sidecar_path, table_bytes, write_atomic, write_plain, Format};

const THREADS_ENV: &str = "CONTAGION_THREADS";

#[derive(Parser)]
#[command(
    name = "contagion",
    version,
    about = "Interbank contagion: mean-field analysis, cascade simulation, calibration"
)]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file. Tables go to stdout when omitted; file outputs get a
    /// JSON sidecar with the resolved configuration.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Output encoding. Tables default to CSV, single reports to JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classified fixed points for one (a, b).
    #[command(allow_negative_numbers = true)]
    Meanfield(MeanfieldArgs),
    /// Forward and backward equilibrium curves over a.
    #[command(allow_negative_numbers = true)]
    Hysteresis(HysteresisArgs),
    /// Equilibrium over an (a, b) grid.
    #[command(allow_negative_numbers = true)]
    Phase(PhaseArgs),
    /// Minimum leverage over theta for several shock scales.
    Leverage(LeverageArgs),
    /// Monte Carlo cascade ensemble, optionally swept over mu_L.
    #[command(alias = "simulate")]
    Mc(McArgs),
    /// Stability scan over (theta, f) from balance-sheet data.
    Calibrate(CalibrateArgs),
    /// Aggregate statistics for one country and year.
    Summarize(SummarizeArgs),
    /// Export the exposure network of one trial as an edge list.
    Network(NetworkArgs),
}

fn parse_dist(s: &str) -> Result<LocationScaleDistribution, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_network(s: &str) -> Result<NetworkSpec, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_recovery(s: &str) -> Result<Recovery, String> {
    match s {
        "monotone" => Ok(Recovery::Monotone),
        "reversible" => Ok(Recovery::Reversible),
        _ => Err(format!("expected `monotone` or `reversible`, got `{s}`")),
    }
}

#[derive(Args, Serialize)]
struct MeanfieldArgs {
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    p0: f64,
    /// `normal` or `t:NU`.
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
}

#[derive(Args, Serialize)]
struct HysteresisArgs {
    #[arg(long)]
    b: f64,
    #[arg(long)]
    a_min: f64,
    #[arg(long)]
    a_max: f64,
    #[arg(long, default_value_t = 401)]
    steps: usize,
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
}

#[derive(Args, Serialize)]
struct PhaseArgs {
    /// `min:max:steps`.
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    a_grid: GridSpec,
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    b_grid: GridSpec,
    #[arg(long, default_value_t = 1.0)]
    p0: f64,
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
}

#[derive(Args, Serialize)]
struct LeverageArgs {
    /// Comma-separated shock scales sigma / mu_A.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.03,0.05")]
    sigma_frac: Vec<f64>,
    #[arg(long, default_value = "0:1:201")]
    #[serde(serialize_with = "ser_display")]
    theta_grid: GridSpec,
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
}

#[derive(Args)]
struct McArgs {
    /// JSON file with any of `network`, `sheet`, `cascade`, `trials`,
    /// `seed`, `mu_l_grid`; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `er:ALPHA`, `ws:C:BETA`, `cp:CORE:ALPHA:LINKS`, `cp:sparse`, `cp:dense`, `complete`.
    #[arg(long, value_parser = parse_network)]
    network: Option<NetworkSpec>,
    #[arg(long, value_parser = parse_dist)]
    dist: Option<LocationScaleDistribution>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mu_a: Option<f64>,
    #[arg(long)]
    sigma_a: Option<f64>,
    #[arg(long)]
    mu_l: Option<f64>,
    #[arg(long)]
    sigma_l: Option<f64>,
    /// Sweep mean liabilities over `min:max:steps` instead of a single `--mu-l`.
    #[arg(long, conflicts_with = "mu_l")]
    mu_l_grid: Option<GridSpec>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_parser = parse_recovery)]
    recovery: Option<Recovery>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Also write the survival histogram (100 bins on [0, 1]) here.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CalibrateArgs {
    /// CSV with header `bank_id,country,year,total_assets,tier1_capital`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    country: String,
    #[arg(long)]
    year: i32,
    /// Comma-separated interbank fractions.
    #[arg(long, value_delimiter = ',', default_value = "0,0.03,0.07,0.1,0.11,0.13,0.3,0.4,0.5")]
    theta: Vec<f64>,
    #[arg(long, default_value = "0.01:1:100")]
    #[serde(serialize_with = "ser_display")]
    f_grid: GridSpec,
    #[arg(long, default_value_t = 1.0)]
    p0: f64,
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
    /// Also export the (a, b, p) path over `--overlay-f` at this theta.
    #[arg(long, requires = "overlay_out")]
    overlay_theta: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,1")]
    overlay_f: Vec<f64>,
    #[arg(long)]
    overlay_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SummarizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    country: String,
    #[arg(long)]
    year: i32,
}

#[derive(Args, Serialize)]
struct NetworkArgs {
    #[arg(long, default_value = "er:0.1", value_parser = parse_network)]
    spec: NetworkSpec,
    #[arg(long, default_value_t = 500)]
    m: usize,
    /// Loans are sized from this trial's asset draws, as in `mc`.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    #[arg(long, default_value_t = 1000.0)]
    mu_a: f64,
    #[arg(long, default_value_t = 30.0)]
    sigma_a: f64,
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: LocationScaleDistribution,
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

const DEFAULT_SEED: u64 = 1;

fn default_network() -> NetworkSpec {
    NetworkSpec::ErdosRenyi { alpha: 0.1 }
}

fn default_trials() -> usize {
    100
}

/// Fully resolved Monte Carlo run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McConfig {
    #[serde(default = "default_network")]
    network: NetworkSpec,
    #[serde(default)]
    sheet: BalanceSheetSpec,
    #[serde(default)]
    cascade: CascadeConfig,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    mu_l_grid: Option<Vec<f64>>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            network: default_network(),
            sheet: BalanceSheetSpec::default(),
            cascade: CascadeConfig::default(),
            trials: default_trials(),
            seed: None,
            mu_l_grid: None,
        }
    }
}

impl McArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<McConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                serde_json::from_reader(file).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => McConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field {
                    cfg.$($target)+ = v;
                }
            };
        }
        set!(network => network);
        set!(dist => sheet.dist);
        set!(m => sheet.m);
        set!(mu_a => sheet.mu_a);
        set!(sigma_a => sheet.sigma_a);
        set!(sigma_l => sheet.sigma_l);
        set!(theta => cascade.theta);
        set!(q => cascade.q);
        set!(recovery => cascade.recovery);
        set!(max_rounds => cascade.max_rounds);
        set!(trials => trials);
        if let Some(mu_l) = self.mu_l {
            cfg.sheet.mu_l = mu_l;
            cfg.mu_l_grid = None;
        }
        if let Some(g) = self.mu_l_grid {
            cfg.mu_l_grid = Some(g.values());
        }
        cfg.seed = Some(seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
        Ok(cfg)
    }
}

/// Marker for errors that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidParameter { .. }
            | CoreError::Parse { .. }
            | CoreError::EmptyInput
            | CoreError::EmptySelection { .. },
        ) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_meanfield(args: &MeanfieldArgs, out: Option<&Path>, format: Format) -> Result<()> {
    let params = MeanFieldParams::new(args.a, args.b, args.dist)?;
    let solution = classify_fixed_points(&params);
    let reached = solve_fixed_point(&params, args.p0, FIXED_POINT_TOL, DEFAULT_MAX_ITER)?;
    let report = json!({
        "config": to_value(args)?,
        "solution": solution,
        "equilibrium": { "p0": args.p0, "p": reached.p, "iterations": reached.iterations },
    });
    let bytes = match format {
        Format::Json => json_bytes(&report)?,
        Format::Csv => table_bytes(solution.roots, Format::Csv)?,
    };
    write_plain(out, &bytes)
}

#[derive(Serialize)]
struct HysteresisRow {
    a: f64,
    p_forward: f64,
    p_backward: f64,
}

fn cmd_hysteresis(args: &HysteresisArgs, out: Option<&Path>, format: Format) -> Result<()> {
    if args.steps < 2 {
        return Err(usage("--steps must be at least 2"));
    }
    if args.a_max.partial_cmp(&args.a_min) != Some(std::cmp::Ordering::Greater) {
        return Err(usage("--a-max must exceed --a-min"));
    }
    let a_grid = GridSpec {
        min: args.a_min,
        max: args.a_max,
        steps: args.steps,
    }
    .values();
    let curves = hysteresis_sweep(args.b, &a_grid, &args.dist)?;
    let rows = (0..a_grid.len()).map(|i| HysteresisRow {
        a: curves.a[i],
        p_forward: curves.forward[i],
        p_backward: curves.backward[i],
    });
    emit(out, &table_bytes(rows, format)?, &to_value(args)?, None, json!({}))
}

#[derive(Serialize)]
struct PhaseRow {
    a: f64,
    b: f64,
    p: f64,
}

fn cmd_phase(args: &PhaseArgs, out: Option<&Path>, format: Format) -> Result<()> {
    if args.p0 != 0.0 && args.p0 != 1.0 {
        return Err(usage("--p0 must be 0 or 1"));
    }
    let diagram = phase_diagram(&args.a_grid.values(), &args.b_grid.values(), args.p0, &args.dist)?;
    let rows = diagram.cells().map(|(a, b, p)| PhaseRow { a, b, p });
    emit(out, &table_bytes(rows, format)?, &to_value(args)?, None, json!({}))
}

#[derive(Serialize)]
struct LeverageRow {
    sigma_frac: f64,
    theta: f64,
    theta_c: f64,
    gamma_min: f64,
}

fn cmd_leverage(args: &LeverageArgs, out: Option<&Path>, format: Format) -> Result<()> {
    let mut rows = Vec::new();
    for &sf in &args.sigma_frac {
        let theta_c = critical_theta(sf, &args.dist);
        for theta in args.theta_grid.values() {
            rows.push(LeverageRow {
                sigma_frac: sf,
                theta,
                theta_c,
                gamma_min: leverage_min(theta, sf, &args.dist)?,
            });
        }
    }
    emit(out, &table_bytes(rows, format)?, &to_value(args)?, None, json!({}))
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    p_final: f64,
    rounds: usize,
}

#[derive(Serialize)]
struct SweepRow {
    mu_l: f64,
    shortfall: f64,
    mean_p: f64,
    std_p: f64,
    meanfield_p: f64,
    round_limit_hits: usize,
}

#[derive(Serialize)]
struct HistogramRow {
    mu_l: f64,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

fn histogram_rows(mu_l: f64, histogram: &[u64]) -> impl Iterator<Item = HistogramRow> + '_ {
    let width = 1.0 / HISTOGRAM_BINS as f64;
    histogram.iter().enumerate().map(move |(k, &count)| HistogramRow {
        mu_l,
        bin_lo: k as f64 * width,
        bin_hi: if k + 1 == HISTOGRAM_BINS {
            1.0
        } else {
            (k + 1) as f64 * width
        },
        count,
    })
}

fn meanfield_reference(cfg: &McConfig, mu_l: f64) -> Result<f64> {
    let params = cfg
        .sheet
        .with_mu_l(mu_l)
        .meanfield_params(cfg.cascade.theta, cfg.cascade.q)?;
    Ok(equilibrium(&params, 1.0)?)
}

fn cmd_mc(args: &McArgs, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<()> {
    let cfg = args.resolve(seed)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let config = to_value(&cfg)?;
    match &cfg.mu_l_grid {
        None => {
            let stats = monte_carlo(&cfg.network, &cfg.sheet, &cfg.cascade, cfg.trials, seed)?;
            let rows = stats.trials.iter().map(|t| TrialRow {
                trial: t.trial,
                p_final: t.p_final,
                rounds: t.rounds,
            });
            if let Some(path) = &args.histogram_out {
                let rows = histogram_rows(cfg.sheet.mu_l, &stats.histogram);
                emit(Some(path), &table_bytes(rows, format)?, &config, Some(seed), json!({}))?;
            }
            let extra = json!({
                "mean_p": stats.mean_p,
                "std_p": stats.std_p,
                "histogram": stats.histogram,
                "round_limit_hits": stats.round_limit_hits,
                "shortfall": cfg.sheet.shortfall(),
                "meanfield_p": meanfield_reference(&cfg, cfg.sheet.mu_l)?,
            });
            emit(out, &table_bytes(rows, format)?, &config, Some(seed), extra)
        }
        Some(grid) => {
            let points = sweep_liabilities(&cfg.network, &cfg.sheet, &cfg.cascade, grid, cfg.trials, seed)?;
            let mut rows = Vec::with_capacity(points.len());
            for pt in &points {
                rows.push(SweepRow {
                    mu_l: pt.mu_l,
                    shortfall: pt.shortfall,
                    mean_p: pt.stats.mean_p,
                    std_p: pt.stats.std_p,
                    meanfield_p: meanfield_reference(&cfg, pt.mu_l)?,
                    round_limit_hits: pt.stats.round_limit_hits,
                });
            }
            if let Some(path) = &args.histogram_out {
                let rows = points
                    .iter()
                    .flat_map(|pt| histogram_rows(pt.mu_l, &pt.stats.histogram));
                emit(Some(path), &table_bytes(rows, format)?, &config, Some(seed), json!({}))?;
            }
            let histograms: Vec<_> = points
                .iter()
                .map(|pt| json!({ "mu_l": pt.mu_l, "histogram": pt.stats.histogram }))
                .collect();
            emit(
                out,
                &table_bytes(rows, format)?,
                &config,
                Some(seed),
                json!({ "histograms": histograms }),
            )
        }
    }
}

fn load_records(path: &Path) -> Result<Vec<contagion_core::BalanceSheetRecord>> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(load_balance_sheets(file)?)
}

fn cmd_calibrate(args: &CalibrateArgs, out: Option<&Path>, format: Format) -> Result<()> {
    let records = load_records(&args.data)?;
    let summary = summarize(&records, &args.country, args.year)?;
    let scan = stability_scan(&summary, &args.theta, &args.f_grid.values(), &args.dist, args.p0)?;
    if let (Some(theta), Some(path)) = (args.overlay_theta, &args.overlay_out) {
        let path_rows = trajectory_overlay(&summary, theta, &args.overlay_f, &args.dist, args.p0)?;
        emit(
            Some(path),
            &table_bytes(path_rows, format)?,
            &to_value(args)?,
            None,
            json!({ "summary": summary }),
        )?;
    }
    let rows: Vec<_> = scan.iter().copied().collect();
    emit(
        out,
        &table_bytes(rows, format)?,
        &to_value(args)?,
        None,
        json!({ "summary": summary }),
    )
}

fn cmd_summarize(args: &SummarizeArgs, out: Option<&Path>, format: Format) -> Result<()> {
    let records = load_records(&args.data)?;
    let summary = summarize(&records, &args.country, args.year)?;
    let bytes = match format {
        Format::Json => json_bytes(&json!({ "config": to_value(args)?, "summary": summary }))?,
        Format::Csv => table_bytes(vec![summary], Format::Csv)?,
    };
    write_plain(out, &bytes)
}

fn cmd_network(args: &NetworkArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let out = out.ok_or_else(|| usage("network export needs --out"))?;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let sheet = BalanceSheetSpec {
        m: args.m,
        mu_a: args.mu_a,
        sigma_a: args.sigma_a,
        dist: args.dist,
        ..BalanceSheetSpec::default()
    };
    let net = args
        .spec
        .generate(args.m, &mut trial_stream(seed, args.trial, Stream::Network))?;
    let banks = initialize_banks(
        &sheet,
        &mut trial_stream(seed, args.trial, Stream::Assets),
        &mut trial_stream(seed, args.trial, Stream::Liabilities),
    )?;
    let net = assign_loans(net, args.theta, &banks.assets0)?;
    let mut bytes = Vec::new();
    write_edge_list(&net, &mut bytes)?;
    write_atomic(out, &bytes)?;
    let meta = NetworkMeta {
        m: net.len(),
        seed,
        generator: net.generator().to_string(),
    };
    let mut sidecar = to_value(&meta)?;
    if let Value::Object(m) = &mut sidecar {
        m.insert("config".into(), to_value(args)?);
    }
    write_atomic(&sidecar_path(out), &json_bytes(&sidecar)?)
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let out = cli.out.as_deref();
    let table = cli.format.unwrap_or(Format::Csv);
    let report = cli.format.unwrap_or(Format::Json);
    match &cli.command {
        Command::Meanfield(a) => cmd_meanfield(a, out, report),
        Command::Hysteresis(a) => cmd_hysteresis(a, out, table),
        Command::Phase(a) => cmd_phase(a, out, table),
        Command::Leverage(a) => cmd_leverage(a, out, table),
        Command::Mc(a) => cmd_mc(a, cli.seed, out, table),
        Command::Calibrate(a) => cmd_calibrate(a, out, table),
        Command::Summarize(a) => cmd_summarize(a, out, report),
        Command::Network(a) => {
            if cli.format == Some(Format::Json) {
                return Err(usage("network export writes a CSV edge list"));
            }
            cmd_network(a, cli.seed, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
