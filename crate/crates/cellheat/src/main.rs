//! Command-line front end over the cellheat library: solve a network file,
//! run the sine verification study, run sweeps and solver comparisons,
//! inspect spectra and generate random lattices.
//!
//! Exit codes: 0 on success, 1 on argument/validation/configuration errors,
//! 2 on numerical blow-up (explicit Euler beyond its stability limit).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cellheat::{
    BenchConfig, BenchRow, CellNetwork, ErrorReport, ExperimentError, ProblemSpec,
    ReferenceChoice, SchemeError, SchemeSpec, SweepConfig, ValueSpec, euler_max_step, fit_order,
    integrate, reports_to_csv, run_benchmark, run_gitc_sweep, run_h_sweep, run_iteration_sweep,
    spectrum, temperatures_to_csv, write_reports_csv,
};

/// Solvers and studies for heat conduction on resistance-capacitance cell
/// networks.
///
/// Units throughout: temperatures in K, time and stepsizes in s, heat
/// capacities in J/K, thermal resistances in K/W, sources in K/s.
#[derive(Parser)]
#[command(name = "cellheat", version, about, long_about = None)]
struct Cli {
    /// Worker threads for stage evaluation (results are identical for any
    /// value). Defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a network file to a final time and write the temperatures
    /// (CSV: cell id, temperature in K).
    Solve(SolveArgs),
    /// Sine-profile verification study: order fits per scheme against an
    /// exact reference, plus the sweep CSV. Defaults reproduce the classic
    /// 101-cell configuration (the `paper-sine` preset).
    VerifySine(VerifySineArgs),
    /// Error sweeps over stepsize, iteration count, or a fixed global
    /// iteration budget (GITC).
    Sweep(SweepArgs),
    /// Solver comparison table: cost and error per solver, over one or many
    /// seeds.
    Bench(BenchArgs),
    /// Eigenvalue analysis of a network file: extreme eigenvalues, stiffness
    /// ratio and the explicit-Euler stepsize limit (s).
    Spectrum(SpectrumArgs),
    /// Generate a random lattice network file with log-uniform capacities
    /// (J/K) and resistances (K/W).
    GenLattice(GenLatticeArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Network file (JSON, `rc-network` format).
    #[arg(long)]
    network: PathBuf,
    /// Scheme token: euler, cnK or lnK with K in 1..=16 (ln1 equals cn1).
    #[arg(long)]
    scheme: SchemeSpec,
    /// Stepsize in s.
    #[arg(long)]
    h: f64,
    /// Final time in s.
    #[arg(long)]
    t_final: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifySineArgs {
    /// Number of cells along the chain.
    #[arg(long, default_value_t = 101)]
    n: usize,
    /// Comma-separated scheme tokens.
    #[arg(long, value_delimiter = ',', default_value = "cn1,cn2,cn3,ln2,ln3")]
    schemes: Vec<SchemeSpec>,
    /// Comma-separated stepsizes in s; defaults to 0.1 halved seven times.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// Reference: `ode` (exact solution of the discretised system, clean
    /// order measurement) or `pde` (closed form of the continuous problem,
    /// keeps the spatial-error plateau).
    #[arg(long, default_value = "ode")]
    reference: String,
    /// Final time in s.
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    /// Output CSV path for the sweep data.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Network file to sweep over.
    #[arg(long)]
    network: PathBuf,
    /// Comma-separated scheme tokens (stepsize sweeps only).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeSpec>>,
    /// Comma-separated stepsizes in s.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// Run an iteration sweep with stage counts 1..=K over the h list.
    #[arg(long, value_name = "K", conflicts_with = "gitc")]
    iterations: Option<u32>,
    /// Run a fixed-budget sweep at this global iteration count.
    #[arg(long)]
    gitc: Option<u32>,
    /// Highest stage count of the fixed-budget sweep.
    #[arg(long, default_value_t = 7)]
    max_stages: u32,
    /// Final time in s.
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    /// Reference: `exact` or `oracle[:tol]`.
    #[arg(long, default_value = "exact")]
    reference: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Preset: `paper-table-1` (1000-cell lattice) or `paper-table-2`
    /// (5000-cell severely stiff lattice).
    #[arg(long, conflicts_with = "network")]
    preset: Option<String>,
    /// Custom network file instead of a preset.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Number of seeds; per-seed rows plus median summary rows are emitted.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First seed value.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Final time in s.
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Network file to analyse.
    #[arg(long)]
    network: PathBuf,
}

#[derive(Args)]
struct GenLatticeArgs {
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    ny: usize,
    /// Exponent range LO,HI: capacities and resistances are 10^U with U
    /// uniform on (LO, HI).
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [-1.0, 1.0], allow_negative_numbers = true)]
    exp_range: Vec<f64>,
    /// Initial temperature spec: `const:V` or `uniform:LO,HI` (K).
    #[arg(long, default_value = "uniform:0,1000")]
    u0: ValueSpec,
    /// Source spec: `const:V` or `uniform:LO,HI` (K/s).
    #[arg(long, default_value = "uniform:-500,500")]
    q: ValueSpec,
    #[arg(long)]
    seed: u64,
    /// Output network file path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    /// Argument, validation or configuration problems: exit 1.
    Usage(String),
    /// Numerical blow-up: exit 2.
    BlowUp(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::BlowUp(msg) => f.write_str(msg),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::Scheme(SchemeError::NonFiniteState { .. }) => {
                CliError::BlowUp(err.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are not failures
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::BlowUp(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(args) => solve(args),
        Command::VerifySine(args) => verify_sine(args),
        Command::Sweep(args) => sweep(args),
        Command::Bench(args) => bench(args),
        Command::Spectrum(args) => spectrum_cmd(args),
        Command::GenLattice(args) => gen_lattice(args),
    }
}

fn load_network(path: &PathBuf) -> Result<CellNetwork, CliError> {
    let network = CellNetwork::read_file(path).map_err(|e| CliError::Usage(e.to_string()))?;
    network
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(network)
}

fn positive(flag: &str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::Usage(format!(
            "{flag} must be positive and finite, got {value}"
        )))
    }
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    let network = load_network(&args.network)?;
    let h = positive("--h", args.h)?;
    let t_final = positive("--t-final", args.t_final)?;
    let coeffs = network
        .assemble()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let state = integrate(&coeffs, args.scheme, h, t_final, network.initial_state()).map_err(
        |err| match err {
            SchemeError::NonFiniteState { .. } => {
                let hint = spectrum(&network)
                    .map(|s| format!("; euler_max_step = {:.6e} s", euler_max_step(&s)))
                    .unwrap_or_default();
                CliError::BlowUp(format!("{err}{hint}"))
            }
            other => CliError::Usage(other.to_string()),
        },
    )?;
    std::fs::write(&args.out, temperatures_to_csv(&state))
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    println!(
        "wrote {} ({} cells at t = {} s, scheme {})",
        args.out.display(),
        state.len(),
        state.time(),
        args.scheme
    );
    Ok(())
}

fn verify_sine(args: VerifySineArgs) -> Result<(), CliError> {
    let t_final = positive("--t-final", args.t_final)?;
    let h_list = args
        .h_list
        .unwrap_or_else(|| (0..8).map(|i| 0.1 / 2f64.powi(i)).collect());
    for &h in &h_list {
        positive("--h-list", h)?;
    }
    let reference = match args.reference.as_str() {
        "ode" => ReferenceChoice::Exact,
        "pde" => ReferenceChoice::SineClosedForm,
        other => {
            return Err(CliError::Usage(format!(
                "--reference must be `ode` or `pde`, got `{other}`"
            )));
        }
    };
    let config = SweepConfig {
        problem: ProblemSpec::SineLine {
            n: args.n,
            pin_ends: true,
        },
        schemes: args.schemes.clone(),
        step_sizes: h_list,
        t_final,
        reference,
    };
    let reports = run_h_sweep(&config)?;
    for scheme in &args.schemes {
        let points: Vec<(f64, f64)> = reports
            .iter()
            .filter(|r| r.scheme == scheme.token() && r.max_d > 0.0)
            .map(|r| (r.h, r.max_d))
            .collect();
        match fit_order(&points) {
            Ok(slope) => println!("{scheme}: fitted order {slope:.3}"),
            Err(e) => println!("{scheme}: order fit unavailable ({e})"),
        }
    }
    if let Some(out) = args.out {
        write_reports_csv(&out, &config, "h", &reports)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn parse_reference(text: &str) -> Result<ReferenceChoice, CliError> {
    if text == "exact" {
        return Ok(ReferenceChoice::Exact);
    }
    if text == "oracle" {
        return Ok(ReferenceChoice::Oracle { tol: 1e-10 });
    }
    if let Some(tol) = text.strip_prefix("oracle:") {
        let tol: f64 = tol
            .parse()
            .map_err(|_| CliError::Usage(format!("bad oracle tolerance `{tol}`")))?;
        return Ok(ReferenceChoice::Oracle { tol });
    }
    Err(CliError::Usage(format!(
        "--reference must be `exact`, `oracle` or `oracle:TOL`, got `{text}`"
    )))
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    load_network(&args.network)?;
    let t_final = positive("--t-final", args.t_final)?;
    let reference = parse_reference(&args.reference)?;
    let config = SweepConfig {
        problem: ProblemSpec::NetworkFile(args.network.clone()),
        schemes: args.schemes.clone().unwrap_or_default(),
        step_sizes: args.h_list.clone().unwrap_or_default(),
        t_final,
        reference,
    };
    let (kind, reports) = if let Some(gitc) = args.gitc {
        ("gitc", run_gitc_sweep(&config, gitc, args.max_stages)?)
    } else if let Some(k_max) = args.iterations {
        if config.step_sizes.is_empty() {
            return Err(CliError::Usage(
                "--iterations needs --h-list".to_string(),
            ));
        }
        ("iteration", run_iteration_sweep(&config, k_max)?)
    } else {
        if config.schemes.is_empty() || config.step_sizes.is_empty() {
            return Err(CliError::Usage(
                "stepsize sweeps need --schemes and --h-list (or use --gitc / --iterations)"
                    .to_string(),
            ));
        }
        ("h", run_h_sweep(&config)?)
    };
    write_reports_csv(&args.out, &config, kind, &reports)?;
    println!("wrote {} ({} rows)", args.out.display(), reports.len());
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let t_final = positive("--t-final", args.t_final)?;
    let make_config = |seed: u64| -> Result<BenchConfig, CliError> {
        match (args.preset.as_deref(), &args.network) {
            (Some("paper-table-1"), _) => Ok(BenchConfig {
                t_final,
                ..BenchConfig::table1_analogue(seed)
            }),
            (Some("paper-table-2"), _) => Ok(BenchConfig {
                t_final,
                ..BenchConfig::table2_analogue(seed)
            }),
            (Some(other), _) => Err(CliError::Usage(format!(
                "unknown preset `{other}` (expected paper-table-1 or paper-table-2)"
            ))),
            (None, Some(path)) => Ok(BenchConfig {
                problem: ProblemSpec::NetworkFile(path.clone()),
                t_final,
                ..BenchConfig::table1_analogue(0)
            }),
            (None, None) => Err(CliError::Usage(
                "bench needs --preset or --network".to_string(),
            )),
        }
    };

    let mut lines = vec![format!("# bench t_final: {t_final}")];
    let mut all_rows: Vec<(u64, Vec<BenchRow>)> = Vec::new();
    for s in 0..args.seeds.max(1) {
        let seed = args.seed + s;
        let config = make_config(seed)?;
        if s == 0 {
            lines.push(format!("# problem: {}", config.problem.label()));
        }
        let rows = run_benchmark(&config)?;
        for row in &rows {
            eprintln!(
                "seed {seed}: {} wall {:.3}s cost {:.3e} max_d {:.4}",
                row.solver, row.wall_seconds, row.cost, row.max_d
            );
        }
        all_rows.push((seed, rows));
    }

    lines.push(format!("seed,{}", BenchRow::csv_header()));
    for (seed, rows) in &all_rows {
        for row in rows {
            lines.push(format!("{seed},{}", row.to_csv_row()));
        }
    }
    // median summary per solver position across seeds
    if all_rows.len() > 1 {
        let per_position = all_rows[0].1.len();
        for idx in 0..per_position {
            let template = &all_rows[0].1[idx];
            let mut maxd: Vec<f64> = all_rows.iter().map(|(_, r)| r[idx].max_d).collect();
            let mut sumd: Vec<f64> = all_rows.iter().map(|(_, r)| r[idx].sum_d).collect();
            let mut send: Vec<f64> = all_rows.iter().map(|(_, r)| r[idx].s_en_d).collect();
            let stable = all_rows.iter().filter(|(_, r)| r[idx].stable).count();
            lines.push(format!(
                "median,{},{},{},{},{}/{},{},{},{}",
                template.solver,
                template.h.map_or(String::from("adaptive"), |h| h.to_string()),
                template.stage_evaluations,
                template.cost,
                stable,
                all_rows.len(),
                median(&mut maxd),
                median(&mut sumd),
                median(&mut send),
            ));
        }
    }
    std::fs::write(&args.out, lines.join("\n") + "\n")
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn spectrum_cmd(args: SpectrumArgs) -> Result<(), CliError> {
    let network = load_network(&args.network)?;
    let spec = spectrum(&network).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("cells: {}", network.cell_count());
    println!("lambda_max_magnitude: {:.6e} 1/s", spec.lambda_max_magnitude());
    println!("lambda_min_nonzero: {:.6e} 1/s", spec.lambda_min_nonzero());
    println!("stiffness_ratio: {:.6e}", spec.stiffness_ratio());
    println!("euler_max_step: {:.6e} s", euler_max_step(&spec));
    Ok(())
}

fn gen_lattice(args: GenLatticeArgs) -> Result<(), CliError> {
    let range = (args.exp_range[0], args.exp_range[1]);
    if range.0 >= range.1 {
        return Err(CliError::Usage(format!(
            "--exp-range needs LO < HI, got {},{}",
            range.0, range.1
        )));
    }
    let network =
        cellheat::build_random_lattice(args.nx, args.ny, range, args.u0, args.q, args.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    network
        .write_file(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    println!(
        "wrote {} ({} cells, {} edges)",
        args.out.display(),
        network.cell_count(),
        network.edges().len()
    );
    Ok(())
}

/// Reports are re-exported for one-off inspection tools.
#[allow(dead_code)]
fn reports_preview(reports: &[ErrorReport]) -> String {
    reports_to_csv(&[], reports)
}
