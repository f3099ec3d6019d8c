//! Command-line front end: single solves, solver comparisons, the
//! scaled-initial-angle robustness sweep, and convergence-region tables.
//!
//! Exit codes: 0 on success (and convergence where that applies), 1 when
//! a requested solve did not converge, 2 for usage, parse or I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pflow::analysis::{self, PencilSpec};
use pflow::casefile::{self, NetworkCase};
use pflow::harness::{self, SweepConfig};
use pflow::network::Network;
use pflow::solvers::{self, Method, SolverConfig};

#[derive(Parser)]
#[command(
    name = "pflow",
    about = "Power-flow solvers on the continuous Newton flow",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case with one method; write solution and trace files
    Solve(SolveArgs),
    /// Run several methods on one case and tabulate iteration counts
    Compare(CompareArgs),
    /// Scaled-initial-angle robustness sweep
    Sweep(SweepArgs),
    /// Local convergence region of a discretization pencil
    Region(RegionArgs),
}

#[derive(Args, Clone)]
struct Tunables {
    /// Initial step size
    #[arg(long)]
    h0: Option<f64>,
    /// QSS quantum
    #[arg(long = "dq")]
    dq: Option<f64>,
    /// Step size ceiling
    #[arg(long = "hmax")]
    h_max: Option<f64>,
    /// Convergence tolerance (state update, residual and inner loop)
    #[arg(long)]
    tol: Option<f64>,
    /// Inner Newton iteration cap for bem-j / bem-j-qss
    #[arg(long = "inner-max")]
    inner_max: Option<usize>,
    /// Outer iteration cap
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    /// Keep adaptive methods at the fixed step h0
    #[arg(long = "fixed-step")]
    fixed_step: bool,
    /// Estimate the Jacobian condition number each iteration
    #[arg(long = "estimate-cond")]
    estimate_cond: bool,
}

impl Tunables {
    fn config(&self, method: Method) -> Result<SolverConfig<f64>> {
        for (name, value) in [
            ("--h0", self.h0),
            ("--dq", self.dq),
            ("--hmax", self.h_max),
            ("--tol", self.tol),
        ] {
            if let Some(v) = value {
                if !(v > 0.0) {
                    bail!("{name} must be positive, got {v}");
                }
            }
        }
        let mut cfg = SolverConfig::new(method);
        if let Some(h0) = self.h0 {
            cfg.h0 = h0;
            cfg.h_max = cfg.h_max.max(h0);
        }
        if let Some(dq) = self.dq {
            cfg.quantum = dq;
        }
        if let Some(h_max) = self.h_max {
            if h_max < cfg.h0 {
                bail!("--hmax {h_max} is below the initial step {}", cfg.h0);
            }
            cfg.h_max = h_max;
        }
        if let Some(tol) = self.tol {
            cfg.outer_tol = tol;
            cfg.residual_tol = tol;
            cfg.inner_tol = tol;
        }
        if let Some(m) = self.inner_max {
            if m == 0 {
                bail!("--inner-max must be at least 1");
            }
            if !method.single_inner() {
                cfg.max_inner = m;
            }
        }
        if let Some(m) = self.max_outer {
            cfg.max_outer = m;
        }
        cfg.fixed_step = self.fixed_step;
        cfg.estimate_condition = self.estimate_cond;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Case file path or bundled name (case2, case14, case118)
    #[arg(long)]
    case: String,
    /// Solver: fem, fdpf, rk4, bem-j1, bem-j, bem-j1-qss, bem-j-qss
    #[arg(long)]
    method: String,
    /// Scale every non-slack initial angle by this factor
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[command(flatten)]
    tunables: Tunables,
    /// Output directory
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    /// Also write per-iteration state columns (states.csv)
    #[arg(long = "trace-states")]
    trace_states: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    case: String,
    /// Comma-separated methods; defaults to all seven
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[command(flatten)]
    tunables: Tunables,
    /// Write the table as CSV here as well
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Case file path or bundled name; defaults to the 118-bus system
    #[arg(long, default_value = "case118")]
    case: String,
    /// Comma-separated methods; defaults to all seven
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "alpha-lo", default_value_t = 1.0)]
    alpha_lo: f64,
    #[arg(long = "alpha-hi", default_value_t = 2.0)]
    alpha_hi: f64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Evenly spaced alphas instead of seeded uniform sampling
    #[arg(long = "alpha-grid")]
    alpha_grid: bool,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    tunables: Tunables,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RegionArgs {
    /// Pencil: fem or bem
    scheme: String,
    /// Step grid as lo:step:hi
    #[arg(long, default_value = "0.05:0.05:3")]
    grid: String,
    /// Factorization-imprecision distortion (fem only)
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Accumulated-residual distortion (fem only)
    #[arg(long = "eps-res", allow_negative_numbers = true)]
    eps_res: Option<f64>,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Region(args) => cmd_region(args),
    };
    match outcome {
        Ok(converged) => {
            if converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_case(spec: &str) -> Result<NetworkCase<f64>> {
    let text = match pflow::cases::by_name(spec) {
        Some(text) => text.to_string(),
        None => fs::read_to_string(spec).with_context(|| format!("reading case `{spec}`"))?,
    };
    let parsed = casefile::parse_case::<f64>(&text)?;
    for warning in &parsed.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(parsed.case)
}

fn parse_method(name: &str) -> Result<Method> {
    Method::parse(name).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        anyhow!(
            "unknown method `{name}`; valid methods: {}",
            names.join(", ")
        )
    })
}

fn parse_method_list(spec: Option<&str>) -> Result<Vec<Method>> {
    match spec {
        None => Ok(Method::ALL.to_vec()),
        Some(s) => s.split(',').map(parse_method).collect(),
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut buf = Vec::new();
    write(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn cmd_solve(args: SolveArgs) -> Result<bool> {
    let case = load_case(&args.case)?;
    let method = parse_method(&args.method)?;
    let net = Network::new(&case)?;
    let y0 = net.assemble_state(args.alpha);
    let cfg = args.tunables.config(method)?;
    let report = solvers::solve(&net, &y0, &cfg);

    let trace = write_file(&args.out_dir, "trace.csv", |buf| {
        report.write_trace_csv(buf).map_err(Into::into)
    })?;
    println!(
        "{}: {} after {} outer / {} inner iterations in {:.1} ms",
        method.name(),
        report.verdict.label(),
        report.outer_count,
        report.inner_total,
        report.wall_time.as_secs_f64() * 1e3
    );
    println!("trace: {}", trace.display());
    if args.trace_states {
        let states = write_file(&args.out_dir, "states.csv", |buf| {
            report.write_states_csv(&net, buf).map_err(Into::into)
        })?;
        println!("states: {}", states.display());
    }
    if report.converged() {
        let solution = net.back_substitute(&report.final_state);
        let path = write_file(&args.out_dir, "solution.txt", |buf| {
            casefile::write_solution(&case, &solution, buf).map_err(Into::into)
        })?;
        println!("solution: {}", path.display());
    }
    Ok(report.converged())
}

fn cmd_compare(args: CompareArgs) -> Result<bool> {
    let case = load_case(&args.case)?;
    let methods = parse_method_list(args.method.as_deref())?;
    if methods.is_empty() {
        bail!("no methods given");
    }
    let net = Network::new(&case)?;
    let configs: Vec<SolverConfig<f64>> = methods
        .iter()
        .map(|&m| args.tunables.config(m))
        .collect::<Result<_>>()?;
    let cmp = harness::compare(&net, args.alpha, &configs);

    println!(
        "{:<12} {:<16} {:>9} {:>10} {:>10}",
        "method", "verdict", "main", "inner", "time_ms"
    );
    for row in &cmp.rows {
        let inner = if row.method.has_inner_loop() {
            row.inner_total.to_string()
        } else {
            "--".to_string()
        };
        println!(
            "{:<12} {:<16} {:>9} {:>10} {:>10.1}",
            row.method.name(),
            row.verdict.label(),
            row.outer,
            inner,
            row.wall_time.as_secs_f64() * 1e3
        );
    }
    let n_converged = cmp.rows.iter().filter(|r| r.verdict.is_converged()).count();
    if n_converged >= 2 {
        println!(
            "max cross-method state disagreement: {:.3e}",
            cmp.max_state_disagreement
        );
        if cmp.max_state_disagreement > 1e-6 {
            eprintln!("warning: converged states disagree beyond 1e-6");
        }
    }
    if let Some(dir) = &args.out_dir {
        write_file(dir, "compare.csv", |buf| {
            writeln!(buf, "method,verdict,outer,inner_total")?;
            for row in &cmp.rows {
                writeln!(
                    buf,
                    "{},{},{},{}",
                    row.method.name(),
                    row.verdict.label(),
                    row.outer,
                    row.inner_total
                )?;
            }
            Ok(())
        })?;
    }
    Ok(cmp.rows.iter().all(|r| r.verdict.is_converged()))
}

fn cmd_sweep(args: SweepArgs) -> Result<bool> {
    let case = load_case(&args.case)?;
    let methods = parse_method_list(args.method.as_deref())?;
    let net = Network::new(&case)?;
    let configs: Vec<SolverConfig<f64>> = methods
        .iter()
        .map(|&m| args.tunables.config(m))
        .collect::<Result<_>>()?;
    let mut sweep = SweepConfig::new(configs);
    sweep.alpha_lo = args.alpha_lo;
    sweep.alpha_hi = args.alpha_hi;
    sweep.samples = args.samples;
    sweep.seed = args.seed;
    sweep.grid = args.alpha_grid;
    sweep.jobs = args.jobs;

    let result = harness::run_sweep(&net, &sweep);

    let runs = write_file(&args.out_dir, "sweep_runs.csv", |buf| {
        result.write_runs_csv(buf).map_err(Into::into)
    })?;
    let summary = write_file(&args.out_dir, "sweep_summary.csv", |buf| {
        result.write_summary_csv(buf).map_err(Into::into)
    })?;

    println!(
        "sweep: {} samples in ({}, {}], seed {}{}",
        args.samples,
        args.alpha_lo,
        args.alpha_hi,
        args.seed,
        if args.alpha_grid { " (grid)" } else { "" }
    );
    println!(
        "{:<12} {:>12} {:>10} {:>10}",
        "method", "converged_%", "max_alpha", "runs"
    );
    for s in &result.summaries {
        println!(
            "{:<12} {:>12.2} {:>10} {:>10}",
            s.method.name(),
            s.converged_pct(),
            s.max_alpha
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into()),
            s.total
        );
        if !s.stragglers.is_empty() {
            println!(
                "  note: {} non-monotone sample(s) below max_alpha: {:?}",
                s.stragglers.len(),
                s.stragglers
            );
        }
    }
    if result.max_state_disagreement > 1e-6 {
        println!(
            "note: converged states disagree up to {:.3e} within a sample",
            result.max_state_disagreement
        );
    }
    println!("runs: {}", runs.display());
    println!("summary: {}", summary.display());
    Ok(true)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be lo:step:hi, got `{spec}`");
    }
    let lo: f64 = parts[0].parse().context("bad grid lo")?;
    let step: f64 = parts[1].parse().context("bad grid step")?;
    let hi: f64 = parts[2].parse().context("bad grid hi")?;
    if lo.is_nan() || lo <= 0.0 || step.is_nan() || step <= 0.0 || hi < lo {
        bail!("grid must satisfy 0 < lo <= hi with positive step");
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let h = lo + step * k as f64;
        if h > hi + step * 1e-9 {
            break;
        }
        grid.push(h);
        k += 1;
    }
    Ok(grid)
}

fn cmd_region(args: RegionArgs) -> Result<bool> {
    let spec = match args.scheme.to_ascii_lowercase().as_str() {
        "fem" => match (args.eta, args.eps_res) {
            (None, None) => PencilSpec::fem(),
            (eta, eps) => PencilSpec::fem_distorted(eta.unwrap_or(0.0), eps.unwrap_or(0.0)),
        },
        "bem" => {
            if args.eta.is_some() || args.eps_res.is_some() {
                bail!("distortion parameters only apply to the fem pencil");
            }
            PencilSpec::bem()
        }
        other => bail!("unknown scheme `{other}`; valid schemes: fem, bem"),
    };
    let grid = parse_grid(&args.grid)?;
    let scan = analysis::region_scan(&spec, &grid);
    let path = write_file(&args.out_dir, "region.csv", |buf| {
        scan.write_csv(buf).map_err(Into::into)
    })?;
    let stable = scan.points.iter().filter(|p| p.stable).count();
    println!(
        "{} grid points, {} stable; region: {}",
        scan.points.len(),
        stable,
        path.display()
    );
    Ok(true)
}
