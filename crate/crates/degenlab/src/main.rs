//! degenlab command-line front end: loads experiment configs, dispatches
//! to the checker modules, and emits schema-versioned JSON reports plus
//! optional CSV series.
//!
//! Exit codes: 0 = completed, all checks consistent; 2 = completed, some
//! mathematical check failed or was flagged; 1 = operational error.

use clap::{Args, Parser, Subcommand};
use degenlab::config::{self, parse_sweep};
use degenlab::grid::Grid;
use degenlab::inequal;
use degenlab::koike::{self, ClassifyThresholds, CriterionForm, Verdict};
use degenlab::matrixcheck::{self, EstimateParams};
use degenlab::profiles::{Profile, ScalarField};
use degenlab::report::{to_value, write_csv, Report};
use degenlab::spectral;
use degenlab::symcalc;
use serde_json::{json, Value};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "degenlab", version, about = "Numerical laboratory for hypoellipticity criteria of infinitely degenerate Grushin-type operators")]
struct Cli {
    /// Cap on worker threads for the parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here.
    #[arg(long, global = true)]
    json: Option<String>,
    /// Write the CSV series here (commands that produce one).
    #[arg(long, global = true)]
    csv: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the hypoellipticity criterion for a degeneracy family.
    Classify(ClassifyArgs),
    /// Tabulate the Koike functional and the envelope functions w, r.
    KoikeScan(KoikeScanArgs),
    /// Check the structural matrix hypotheses.
    MatrixCheck(MatrixCheckArgs),
    /// Verify a candidate sum-of-squares decomposition.
    SosVerify(SosVerifyArgs),
    /// Build a parametrix chain and measure its residual decay.
    Parametrix(ParametrixArgs),
    /// Eigenvalue growth scan, mass concentration, derivative-ratio test.
    Sharpness(SharpnessArgs),
    /// Seeded random-bump property suite for the sufficiency inequalities.
    InequalitySuite(InequalityArgs),
    /// Envelope lower bound w(tau)^2 against the least eigenvalue.
    Lowerbound(LowerboundArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// Family config file.
    #[arg(long)]
    family: String,
    /// Criterion form: sum-product, max-min, or both.
    #[arg(long, default_value = "both")]
    form: String,
}

#[derive(Args)]
struct KoikeScanArgs {
    /// Profile config file.
    #[arg(long)]
    profile: String,
    /// Scale sweep for mu, e.g. 0.01:0.5:20log.
    #[arg(long, default_value = "0.01:0.5:20log")]
    scales: String,
    /// Tau sweep for w and r, e.g. 10:1e4:10log.
    #[arg(long, default_value = "10:1e4:10log")]
    taus: String,
    /// Envelope grid nodes per axis.
    #[arg(long, default_value_t = 4001)]
    grid_n: usize,
}

#[derive(Args)]
struct MatrixCheckArgs {
    /// Matrix config file.
    #[arg(long)]
    matrix: String,
    /// Estimate parameters, e.g. eps=0.25,delta=0.05,delta2=0.1.
    #[arg(long, default_value = "eps=0.25,delta=0.05,delta2=0.1")]
    params: String,
    #[arg(long, default_value_t = 201)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Cap for the empirical constants.
    #[arg(long, default_value_t = matrixcheck::DEFAULT_CAP)]
    cap: f64,
}

#[derive(Args)]
struct SosVerifyArgs {
    #[arg(long)]
    matrix: String,
    /// Decomposition config file.
    #[arg(long)]
    sos: String,
    #[arg(long, default_value = "eps=0.25,delta=0.05,delta2=0.1")]
    params: String,
    #[arg(long, default_value_t = 201)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = matrixcheck::DEFAULT_CAP)]
    cap: f64,
    /// Residual above this counts as a failed decomposition.
    #[arg(long, default_value_t = 1e-10)]
    residual_tol: f64,
}

#[derive(Args)]
struct ParametrixArgs {
    /// Symbol expression in x1..xd, xi1..xid.
    #[arg(long)]
    symbol: String,
    /// Chain length M (0..=2).
    #[arg(long, default_value_t = 2)]
    order: u32,
    /// Nominal symbol order m.
    #[arg(long, default_value_t = 2.0)]
    nominal: f64,
    /// Phase-space dimension d.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

#[derive(Args)]
struct SharpnessArgs {
    /// Coefficient f config file.
    #[arg(long)]
    f: String,
    /// Mass coefficient h config file.
    #[arg(long)]
    h: String,
    /// Eta sweep, e.g. 10:1e4:12log.
    #[arg(long, default_value = "10:1e4:12log")]
    etas: String,
    /// Derivative order for the ratio test.
    #[arg(long, default_value_t = 3)]
    k: u32,
    /// Slab half-thickness for the ratio test.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 2001)]
    grid_n: usize,
    /// Ball radius.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Args)]
struct InequalityArgs {
    #[arg(long)]
    family: String,
    /// Number of random bumps per check.
    #[arg(long, default_value_t = 500)]
    bumps: usize,
    /// Mandatory seed for the randomized suite.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 4001)]
    grid_n: usize,
    /// Support radius for the Hardy check.
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    /// Tau sweep for the sufficiency split.
    #[arg(long, default_value = "10:1e4:4log")]
    taus: String,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long)]
    f: String,
    #[arg(long, default_value = "10:1e4:8log")]
    taus: String,
    #[arg(long, default_value_t = 2001)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(violation) => std::process::exit(if violation { 2 } else { 0 }),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

struct Outcome {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    results: Value,
    /// Rows for the optional CSV series.
    csv: Option<(Vec<&'static str>, Vec<Vec<f64>>)>,
    violation: bool,
}

fn run(cli: &Cli) -> Result<bool, String> {
    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Classify(args) => run_classify(args)?,
        Command::KoikeScan(args) => run_koike_scan(args)?,
        Command::MatrixCheck(args) => run_matrix_check(args)?,
        Command::SosVerify(args) => run_sos_verify(args)?,
        Command::Parametrix(args) => run_parametrix(args)?,
        Command::Sharpness(args) => run_sharpness(args)?,
        Command::InequalitySuite(args) => run_inequality(args)?,
        Command::Lowerbound(args) => run_lowerbound(args)?,
    };
    let timings = json!({ "total": started.elapsed().as_secs_f64() * 1e3 });
    let report = Report::new(
        outcome.command,
        outcome.config,
        outcome.seed,
        outcome.results.clone(),
        timings,
    );
    if let Some(path) = &cli.json {
        report.write_json(path).map_err(|e| e.to_string())?;
    }
    if let Some(path) = &cli.csv {
        match &outcome.csv {
            Some((header, rows)) => write_csv(path, header, rows).map_err(|e| e.to_string())?,
            None => return Err("this command produces no CSV series".into()),
        }
    }
    println!(
        "{} finished: {}",
        outcome.command,
        if outcome.violation {
            "check violations found (exit 2)"
        } else {
            "all checks consistent"
        }
    );
    println!("determinism hash: {}", report.determinism_hash);
    Ok(outcome.violation)
}

fn run_classify(args: &ClassifyArgs) -> Result<Outcome, String> {
    let (family, echo) = config::load_family(&args.family).map_err(|e| e.to_string())?;
    let form = match args.form.as_str() {
        "both" => None,
        "sum-product" => Some(CriterionForm::SumProduct),
        "max-min" => Some(CriterionForm::MaxMin),
        other => return Err(format!("unknown form `{other}`")),
    };
    let thresholds = ClassifyThresholds::default();
    let report = koike::classify(&family, form, &thresholds);
    let fails = [&report.sum_product, &report.max_min]
        .into_iter()
        .flatten()
        .any(|f| f.verdict == Verdict::Fails);
    let mut csv_rows = Vec::new();
    if let Some(sp) = &report.sum_product {
        for row in &sp.rows {
            csv_rows.push(vec![0.0, row.k as f64, row.t, row.mu, row.c]);
        }
    }
    if let Some(mm) = &report.max_min {
        for row in &mm.rows {
            csv_rows.push(vec![1.0, row.k as f64, row.t, row.mu, row.c]);
        }
    }
    Ok(Outcome {
        command: "classify",
        config: json!({ "family": echo, "form": args.form }),
        seed: None,
        results: to_value(&report),
        csv: Some((vec!["form", "k", "t", "mu", "c"], csv_rows)),
        violation: fails,
    })
}

fn run_koike_scan(args: &KoikeScanArgs) -> Result<Outcome, String> {
    let (profile, echo) = config::load_profile(&args.profile).map_err(|e| e.to_string())?;
    let scales = parse_sweep(&args.scales)?;
    let taus = parse_sweep(&args.taus)?;
    let grid = Grid::new(profile.m, profile.radius, args.grid_n).map_err(|e| e.to_string())?;
    let env = degenlab::profiles::radial_envelopes(&profile, &grid).map_err(|e| e.to_string())?;

    let mut mu_rows = Vec::new();
    let mut csv_rows = Vec::new();
    for &t in &scales {
        let (value, argmax) = koike::mu(t, &profile).map_err(|e| e.to_string())?;
        mu_rows.push(json!({ "t": t, "mu": value, "argmax": argmax }));
        csv_rows.push(vec![t, value, argmax]);
    }
    let mut wr_rows = Vec::new();
    for &tau in &taus {
        let w = koike::w_of_tau(&env, tau);
        let r = koike::r_of_tau(&env, tau).ok();
        wr_rows.push(json!({ "tau": tau, "w": w, "r": r }));
    }
    Ok(Outcome {
        command: "koike-scan",
        config: json!({ "profile": echo, "scales": args.scales, "taus": args.taus,
                        "grid_n": args.grid_n }),
        seed: None,
        results: json!({ "mu": mu_rows, "envelope": wr_rows }),
        csv: Some((vec!["t", "mu", "argmax"], csv_rows)),
        violation: false,
    })
}

fn parse_params(spec: &str) -> Result<EstimateParams, String> {
    let (mut eps, mut delta, mut delta2) = (0.25, 0.05, 0.1);
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("bad parameter `{part}`"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("bad number in `{part}`"))?;
        match key.trim() {
            "eps" | "epsilon" => eps = v,
            "delta" => delta = v,
            "delta2" => delta2 = v,
            other => return Err(format!("unknown parameter `{other}`")),
        }
    }
    EstimateParams::new(eps, delta, delta2).map_err(|e| e.to_string())
}

fn run_matrix_check(args: &MatrixCheckArgs) -> Result<Outcome, String> {
    let (matrix, echo) = config::load_matrix(&args.matrix).map_err(|e| e.to_string())?;
    let params = parse_params(&args.params)?;
    let grid = Grid::line(args.radius, args.grid_n).map_err(|e| e.to_string())?;
    matrix.check_symmetry(&grid).map_err(|e| e.to_string())?;

    let subordinate = matrixcheck::check_subordinate(&matrix.mat, &grid);
    let estimates = matrixcheck::check_differential_estimates(&matrix, &params, &grid, args.cap)
        .map_err(|e| e.to_string())?;
    let flagged = estimates.any_flagged();
    let (sub_value, sub_witness) = match subordinate {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    // extra diagnostic: comparability against the frozen diagonal
    let diag_comp = match matrixcheck::check_diagonal_comparability(&matrix, &grid) {
        Ok((beta, alpha)) => json!({ "beta": beta, "alpha": alpha }),
        Err(e) => json!({ "failed": e.to_string() }),
    };
    let violation = flagged || sub_witness.is_some();
    Ok(Outcome {
        command: "matrix-check",
        config: json!({ "matrix": echo, "params": to_value(&params),
                        "grid_n": args.grid_n, "radius": args.radius, "cap": args.cap }),
        seed: None,
        results: json!({
            "subordinate_constant": sub_value,
            "subordinate_witness": sub_witness,
            "diagonal_comparability": diag_comp,
            "differential_estimates": to_value(&estimates),
        }),
        csv: None,
        violation,
    })
}

fn run_sos_verify(args: &SosVerifyArgs) -> Result<Outcome, String> {
    let (matrix, matrix_echo) = config::load_matrix(&args.matrix).map_err(|e| e.to_string())?;
    let (cand, sos_echo) =
        config::load_sos(&args.sos, matrix.n, matrix.p).map_err(|e| e.to_string())?;
    let params = parse_params(&args.params)?;
    let grid = Grid::line(args.radius, args.grid_n).map_err(|e| e.to_string())?;
    let report = matrixcheck::verify_sos(&matrix, &cand, &grid, &params, args.cap)
        .map_err(|e| e.to_string())?;
    let violation =
        report.residual > args.residual_tol || report.smoothness.iter().any(|s| s.flagged);
    Ok(Outcome {
        command: "sos-verify",
        config: json!({ "matrix": matrix_echo, "sos": sos_echo,
                        "params": to_value(&params), "grid_n": args.grid_n,
                        "radius": args.radius, "cap": args.cap,
                        "residual_tol": args.residual_tol }),
        seed: None,
        results: to_value(&report),
        csv: None,
        violation,
    })
}

fn run_parametrix(args: &ParametrixArgs) -> Result<Outcome, String> {
    let symbol = symcalc::SymbolExpr::parse(&args.symbol, args.dim, args.nominal)
        .map_err(|e| e.to_string())?;
    let lattice = symcalc::Lattice::standard(args.dim, 1.0);
    let order =
        symcalc::estimate_order(&symbol, &vec![0; args.dim], &vec![0; args.dim], &lattice)
            .map_err(|e| e.to_string())?;
    let chain = symcalc::parametrix(&symbol, args.order, &lattice).map_err(|e| e.to_string())?;
    let slope = symcalc::residual_order(&symbol, &chain, &lattice).map_err(|e| e.to_string())?;
    let slope_json = if slope.is_finite() {
        json!(slope)
    } else {
        json!("-inf")
    };
    Ok(Outcome {
        command: "parametrix",
        config: json!({ "symbol": args.symbol, "order": args.order,
                        "nominal": args.nominal, "dim": args.dim }),
        seed: None,
        results: json!({
            "order_estimate": to_value(&order),
            "ellipticity": chain.ellipticity,
            "chain_length": chain.terms.len(),
            "residual_slope": slope_json,
        }),
        csv: None,
        violation: false,
    })
}

fn run_sharpness(args: &SharpnessArgs) -> Result<Outcome, String> {
    let (f, f_echo) = config::load_profile(&args.f).map_err(|e| e.to_string())?;
    let (h, h_echo) = config::load_profile(&args.h).map_err(|e| e.to_string())?;
    let etas = parse_sweep(&args.etas)?;
    let grid = Grid::new(f.m, args.a.max(f.radius), args.grid_n).map_err(|e| e.to_string())?;
    let series =
        spectral::lambda0_scan(&f, &h, args.a, &etas, &grid).map_err(|e| e.to_string())?;
    let ratio = spectral::hoshiro_ratio(&series, args.k, args.delta);
    let csv_rows: Vec<Vec<f64>> = series
        .rows
        .iter()
        .zip(&ratio.rows)
        .map(|(r, hr)| vec![r.eta, r.lambda0, r.mass_half, hr.ln_ratio])
        .collect();
    let violation = ratio.contradiction;
    Ok(Outcome {
        command: "sharpness",
        config: json!({ "f": f_echo, "h": h_echo, "etas": args.etas, "k": args.k,
                        "delta": args.delta, "grid_n": args.grid_n, "a": args.a }),
        seed: None,
        results: json!({
            "series": to_value(&series),
            "hoshiro": to_value(&ratio),
        }),
        csv: Some((vec!["eta", "lambda0", "mass_half", "ln_ratio_k"], csv_rows)),
        violation,
    })
}

fn run_inequality(args: &InequalityArgs) -> Result<Outcome, String> {
    let (family, echo) = config::load_family(&args.family).map_err(|e| e.to_string())?;
    let radius = family.radius();
    let grid = Grid::new(family.m, radius, args.grid_n).map_err(|e| e.to_string())?;
    let taus = parse_sweep(&args.taus)?;

    // Hardy check against the family's sum aggregate
    let sum_profile = aggregate_profile(&family)?;
    let (hardy_worst, hardy_seed, hardy_rows) =
        inequal::batch_hardy(&sum_profile, args.bumps, args.seed, args.r, &grid)
            .map_err(|e| e.to_string())?;

    let sweep = inequal::suffic_sweep(&family, &taus, args.bumps.min(100), args.seed, &grid)
        .map_err(|e| e.to_string())?;

    let csv_rows: Vec<Vec<f64>> = hardy_rows
        .iter()
        .map(|r| vec![r.seed.unwrap_or(0) as f64, r.ratio, r.mu, r.lhs, r.grad_sq])
        .collect();
    // the sweep monotonicity monitor only flags the report; the Hardy
    // bound is the hard check here
    let violation = hardy_worst > 1.05;
    Ok(Outcome {
        command: "inequality-suite",
        config: json!({ "family": echo, "bumps": args.bumps, "grid_n": args.grid_n,
                        "r": args.r, "taus": args.taus }),
        seed: Some(args.seed),
        results: json!({
            "hardy_worst_ratio": hardy_worst,
            "hardy_worst_seed": hardy_seed,
            // per-bump rows keyed by seed so any failure replays exactly
            "hardy_rows": to_value(&hardy_rows),
            "suffic_sweep": to_value(&sweep),
        }),
        csv: Some((vec!["seed", "ratio", "mu", "lhs", "grad_sq"], csv_rows)),
        violation,
    })
}

/// The family's Λ_sum as a profile (sum of the component expressions).
fn aggregate_profile(family: &degenlab::koike::DegeneracyFamily) -> Result<Profile, String> {
    let mut expr: Option<degenlab::expr::Expr> = None;
    let mut at0_sum = 0.0;
    let mut any_at0 = false;
    for p in &family.profiles {
        expr = Some(match expr {
            None => p.expr.clone(),
            Some(acc) => acc.add(p.expr.clone()),
        });
        if let Some(v) = p.at0 {
            at0_sum += v;
            any_at0 = true;
        } else {
            at0_sum += p.eval(&vec![0.0; family.m]).map_err(|e| e.to_string())?;
        }
    }
    Profile::new(
        "lambda_sum",
        expr.ok_or("family has no profiles")?,
        family.m,
        family.radius(),
        if any_at0 { Some(at0_sum) } else { None },
        true,
    )
    .map_err(|e| e.to_string())
}

fn run_lowerbound(args: &LowerboundArgs) -> Result<Outcome, String> {
    let (f, echo) = config::load_profile(&args.f).map_err(|e| e.to_string())?;
    let taus = parse_sweep(&args.taus)?;
    let grid = Grid::new(f.m, args.a.max(f.radius), args.grid_n).map_err(|e| e.to_string())?;
    let report =
        spectral::lowerbound_check(&f, &taus, args.a, &grid).map_err(|e| e.to_string())?;
    let csv_rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| vec![r.tau, r.w, r.lambda0, r.c_emp])
        .collect();
    Ok(Outcome {
        command: "lowerbound",
        config: json!({ "f": echo, "taus": args.taus, "grid_n": args.grid_n, "a": args.a }),
        seed: None,
        results: to_value(&report),
        csv: Some((vec!["tau", "w", "lambda0", "c_emp"], csv_rows)),
        violation: false,
    })
}
