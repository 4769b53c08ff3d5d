//! Experiment harness: stepsize sweeps, iteration sweeps, fixed-budget
//! (GITC) sweeps and solver comparison tables, all emitting plot-ready CSV.
//!
//! Every run compares integrator output at the final time against a
//! configurable reference (exact eigendecomposition solve, adaptive oracle,
//! or the sine closed form for the verification chain) and emits one
//! [`ErrorReport`] per (scheme, h) cell. Before any sweep result is emitted
//! the two independent references are cross-checked on the problem at hand;
//! disagreement aborts the sweep.
//!
//! Determinism contract: identical configurations (including seeds) produce
//! byte-identical CSV output, for any worker count. Sweep cells may run in
//! parallel; rows are always written in configuration order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{ErrorReport, MetricsError};
use crate::network::{
    CellNetwork, NetworkError, TemperatureState, ValueSpec, build_random_lattice, build_sine_line,
};
use crate::reference::{
    DENSE_GUARD, ReferenceError, analytic_sine_profile, exact_solve, ode_oracle,
    ode_oracle_with_stats, spectrum,
};
use crate::schemes::{
    SchemeError, SchemeSpec, euler_max_step, integrate, planned_steps,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "reference solvers disagree on this problem: max deviation {deviation:.3e} exceeds {bound:.3e}"
    )]
    ReferenceMismatch { deviation: f64, bound: f64 },
    #[error("malformed sweep CSV: {0}")]
    MalformedCsv(String),
}

/// Which problem a sweep runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// Sine-profile chain of `n` cells, optionally with pinned zero ends.
    SineLine { n: usize, pin_ends: bool },
    /// Random lattice with log-uniform parameters (see
    /// [`build_random_lattice`]).
    RandomLattice {
        nx: usize,
        ny: usize,
        exponent_range: (f64, f64),
        u0: ValueSpec,
        q: ValueSpec,
        seed: u64,
    },
    /// Network loaded from a document file.
    NetworkFile(PathBuf),
}

impl ProblemSpec {
    /// The standard random-lattice study: 50x20 cells, parameters log-uniform
    /// over one decade each side, random initial temperatures and sources.
    pub fn standard_lattice(seed: u64) -> Self {
        ProblemSpec::RandomLattice {
            nx: 50,
            ny: 20,
            exponent_range: (-1.0, 1.0),
            u0: ValueSpec::Uniform { lo: 0.0, hi: 1000.0 },
            q: ValueSpec::Uniform {
                lo: -500.0,
                hi: 500.0,
            },
            seed,
        }
    }

    /// The severely stiff lattice study: 250x20 cells, parameters spread over
    /// three decades each side, zero initial temperatures.
    pub fn stiff_lattice(seed: u64) -> Self {
        ProblemSpec::RandomLattice {
            nx: 250,
            ny: 20,
            exponent_range: (-3.0, 3.0),
            u0: ValueSpec::Constant(0.0),
            q: ValueSpec::Uniform {
                lo: -500.0,
                hi: 500.0,
            },
            seed,
        }
    }

    pub fn build(&self) -> Result<CellNetwork, ExperimentError> {
        match self {
            ProblemSpec::SineLine { n, pin_ends } => Ok(build_sine_line(*n, *pin_ends)?),
            ProblemSpec::RandomLattice {
                nx,
                ny,
                exponent_range,
                u0,
                q,
                seed,
            } => Ok(build_random_lattice(*nx, *ny, *exponent_range, *u0, *q, *seed)?),
            ProblemSpec::NetworkFile(path) => Ok(CellNetwork::read_file(path)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ProblemSpec::SineLine { n, pin_ends } => {
                format!("sine-line n={n} pin_ends={pin_ends}")
            }
            ProblemSpec::RandomLattice {
                nx,
                ny,
                exponent_range,
                u0,
                q,
                seed,
            } => format!(
                "lattice {nx}x{ny} exp=({},{}) u0={u0} q={q} seed={seed}",
                exponent_range.0, exponent_range.1
            ),
            ProblemSpec::NetworkFile(path) => format!("file {}", path.display()),
        }
    }
}

/// Reference solution used for the error measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceChoice {
    /// Exact solution of the assembled ODE system.
    Exact,
    /// Adaptive oracle at the given tolerance.
    Oracle { tol: f64 },
    /// Closed-form solution of the continuous sine problem, sampled at the
    /// cell centres. Only valid for sine-line problems; keeps the spatial
    /// discretisation error in the curves, so they plateau for small h.
    SineClosedForm,
}

impl ReferenceChoice {
    fn label(&self) -> String {
        match self {
            ReferenceChoice::Exact => "exact".to_string(),
            ReferenceChoice::Oracle { tol } => format!("oracle tol={tol:.1e}"),
            ReferenceChoice::SineClosedForm => "pde closed form".to_string(),
        }
    }
}

/// Configuration shared by the sweep runners.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub problem: ProblemSpec,
    pub schemes: Vec<SchemeSpec>,
    pub step_sizes: Vec<f64>,
    pub t_final: f64,
    pub reference: ReferenceChoice,
}

impl SweepConfig {
    fn metadata(&self, kind: &str) -> Vec<String> {
        let mut lines = vec![
            format!("sweep: {kind}"),
            format!("problem: {}", self.problem.label()),
            format!("t_final: {}", self.t_final),
            format!("reference: {}", self.reference.label()),
        ];
        if self.schemes.iter().any(|s| s.is_high_iteration()) {
            lines.push("note: stage counts above 7 exceed the useful iteration range".to_string());
        }
        lines
    }
}

/// Cross-checks the two independent reference solvers on this network before
/// any sweep output is trusted. Skipped (vacuously) when the network exceeds
/// the dense guard, where only the oracle is available anyway.
pub fn check_reference_consistency(
    network: &CellNetwork,
    t_final: f64,
) -> Result<(), ExperimentError> {
    if network.cell_count() > DENSE_GUARD {
        return Ok(());
    }
    let exact = exact_solve(network, t_final)?;
    let oracle = ode_oracle(network, t_final, 1e-8)?;
    let norm = exact
        .temperatures()
        .iter()
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    let bound = 1e-6 * (1.0 + norm);
    let deviation = crate::metrics::max_d(exact.temperatures(), oracle.temperatures())?;
    if deviation > bound {
        return Err(ExperimentError::ReferenceMismatch { deviation, bound });
    }
    Ok(())
}

fn reference_state(
    network: &CellNetwork,
    config: &SweepConfig,
) -> Result<Vec<f64>, ExperimentError> {
    match config.reference {
        ReferenceChoice::Exact => Ok(exact_solve(network, config.t_final)?.into_temperatures()),
        ReferenceChoice::Oracle { tol } => {
            Ok(ode_oracle(network, config.t_final, tol)?.into_temperatures())
        }
        ReferenceChoice::SineClosedForm => match config.problem {
            ProblemSpec::SineLine { n, .. } => Ok(analytic_sine_profile(n, config.t_final)),
            _ => Err(ExperimentError::Config(
                "the closed-form reference only applies to sine-line problems".to_string(),
            )),
        },
    }
}

fn run_cells(
    network: &CellNetwork,
    reference: &[f64],
    cells: &[(SchemeSpec, f64)],
    t_final: f64,
) -> Result<Vec<ErrorReport>, ExperimentError> {
    let coeffs = network.assemble()?;
    let capacities = network.capacities();
    let initial = network.initial_state();
    cells
        .par_iter()
        .map(|&(scheme, h)| {
            let state = integrate(&coeffs, scheme, h, t_final, initial.clone())?;
            Ok(ErrorReport::from_comparison(
                scheme,
                h,
                reference,
                state.temperatures(),
                &capacities,
            )?)
        })
        .collect()
}

/// Runs every configured scheme over every stepsize and reports the error at
/// the final time. The reference is computed once per problem.
pub fn run_h_sweep(config: &SweepConfig) -> Result<Vec<ErrorReport>, ExperimentError> {
    let network = config.problem.build()?;
    check_reference_consistency(&network, config.t_final)?;
    let reference = reference_state(&network, config)?;
    let cells: Vec<(SchemeSpec, f64)> = config
        .schemes
        .iter()
        .flat_map(|&s| config.step_sizes.iter().map(move |&h| (s, h)))
        .collect();
    run_cells(&network, &reference, &cells, config.t_final)
}

/// Errors as a function of the iteration count: both families at every stage
/// count `1..=k_max`, over the configured stepsizes. The configured scheme
/// list is ignored. Stage count one appears for both families and the two
/// rows are identical by construction.
pub fn run_iteration_sweep(
    config: &SweepConfig,
    k_max: u32,
) -> Result<Vec<ErrorReport>, ExperimentError> {
    let network = config.problem.build()?;
    check_reference_consistency(&network, config.t_final)?;
    let reference = reference_state(&network, config)?;
    let mut cells = Vec::new();
    for k in 1..=k_max {
        for &h in &config.step_sizes {
            cells.push((SchemeSpec::constant_neighbour(k)?, h));
        }
    }
    for k in 1..=k_max {
        for &h in &config.step_sizes {
            cells.push((SchemeSpec::linear_neighbour(k)?, h));
        }
    }
    run_cells(&network, &reference, &cells, config.t_final)
}

/// Fixed-budget sweep: the global iteration count (stages per step times
/// steps) is held at `gitc` while the stage count varies, so each linear
/// scheme runs at `h = t_final * k / gitc`. Requires `gitc` divisible by
/// every stage count; the classic choice 420 covers stage counts 1..=7.
pub fn run_gitc_sweep(
    config: &SweepConfig,
    gitc: u32,
    max_stages: u32,
) -> Result<Vec<ErrorReport>, ExperimentError> {
    for k in 1..=max_stages {
        if gitc % k != 0 {
            return Err(ExperimentError::Config(format!(
                "GITC {gitc} is not divisible by stage count {k}"
            )));
        }
    }
    let network = config.problem.build()?;
    check_reference_consistency(&network, config.t_final)?;
    let reference = reference_state(&network, config)?;
    let mut cells = Vec::new();
    for k in 1..=max_stages {
        let h = config.t_final * k as f64 / gitc as f64;
        cells.push((SchemeSpec::linear_neighbour(k)?, h));
    }
    run_cells(&network, &reference, &cells, config.t_final)
}

/// One entry of a solver comparison run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchEntry {
    /// A fixed-step scheme at the given stepsize.
    Scheme { scheme: SchemeSpec, h: f64 },
    /// Explicit Euler at the given fraction of its stability limit
    /// (the limit is computed from the spectrum at run time).
    EulerAtStabilityFraction(f64),
    /// The adaptive oracle at the given tolerance.
    Oracle { tol: f64 },
}

/// Configuration of a solver comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub problem: ProblemSpec,
    pub t_final: f64,
    pub reference: ReferenceChoice,
    pub entries: Vec<BenchEntry>,
}

impl BenchConfig {
    /// Solver comparison on the standard 1000-cell lattice: the two
    /// exponential schemes at their comparison stepsizes, Euler just below
    /// its stability limit and above it, and the adaptive oracle at a loose
    /// tolerance.
    pub fn table1_analogue(seed: u64) -> Self {
        BenchConfig {
            problem: ProblemSpec::standard_lattice(seed),
            t_final: 1.0,
            reference: ReferenceChoice::Exact,
            entries: vec![
                BenchEntry::Scheme {
                    scheme: SchemeSpec::constant_neighbour(2).unwrap(),
                    h: 0.02,
                },
                BenchEntry::Scheme {
                    scheme: SchemeSpec::linear_neighbour(3).unwrap(),
                    h: 0.05,
                },
                BenchEntry::Scheme {
                    scheme: SchemeSpec::linear_neighbour(3).unwrap(),
                    h: 0.01,
                },
                BenchEntry::Scheme {
                    scheme: SchemeSpec::euler(),
                    h: 0.02,
                },
                BenchEntry::EulerAtStabilityFraction(0.99),
                BenchEntry::Oracle { tol: 1e-6 },
            ],
        }
    }

    /// Solver comparison on the severely stiff 5000-cell lattice. The
    /// stepsizes span the accuracy range of the exponential schemes; Euler
    /// at any of them is far beyond its stability limit.
    pub fn table2_analogue(seed: u64) -> Self {
        let s = |token: &str, h: f64| BenchEntry::Scheme {
            scheme: token.parse().unwrap(),
            h,
        };
        BenchConfig {
            problem: ProblemSpec::stiff_lattice(seed),
            t_final: 1.0,
            reference: ReferenceChoice::Exact,
            entries: vec![
                s("cn2", 0.002),
                s("cn1", 0.0002),
                s("cn2", 0.0001),
                s("ln4", 0.0001),
                s("ln3", 0.00002),
                s("ln3", 0.00001),
                s("euler", 0.0002),
                BenchEntry::Oracle { tol: 1e-6 },
            ],
        }
    }
}

/// One row of a solver comparison: identity, machine-independent cost
/// (stage evaluations times cells) and the error measures. Wall-clock time
/// is informational only and excluded from the CSV serialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: String,
    pub h: Option<f64>,
    pub stage_evaluations: u64,
    /// stage evaluations times cell count
    pub cost: f64,
    pub wall_seconds: f64,
    pub stable: bool,
    pub max_d: f64,
    pub sum_d: f64,
    pub s_en_d: f64,
}

impl BenchRow {
    pub fn csv_header() -> &'static str {
        "solver,h,stage_evals,cost,stable,max_d,sum_d,s_en_d"
    }

    pub fn to_csv_row(&self) -> String {
        let h = self.h.map_or(String::from("adaptive"), |h| h.to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            self.solver,
            h,
            self.stage_evaluations,
            self.cost,
            self.stable,
            self.max_d,
            self.sum_d,
            self.s_en_d
        )
    }
}

/// Runs the configured solver list against the reference and tabulates error
/// and cost per solver. Blow-ups (Euler beyond its limit) are flagged rather
/// than propagated.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<BenchRow>, ExperimentError> {
    let network = config.problem.build()?;
    let coeffs = network.assemble()?;
    let capacities = network.capacities();
    let n = network.cell_count() as f64;
    let reference = reference_state(
        &network,
        &SweepConfig {
            problem: config.problem.clone(),
            schemes: Vec::new(),
            step_sizes: Vec::new(),
            t_final: config.t_final,
            reference: config.reference,
        },
    )?;

    let stability_limit = if config
        .entries
        .iter()
        .any(|e| matches!(e, BenchEntry::EulerAtStabilityFraction(_)))
    {
        Some(euler_max_step(&spectrum(&network)?))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(config.entries.len());
    for entry in &config.entries {
        let row = match *entry {
            BenchEntry::Scheme { scheme, h } => {
                bench_scheme(&network, &coeffs, &capacities, &reference, scheme, h, config.t_final, n, None)?
            }
            BenchEntry::EulerAtStabilityFraction(fraction) => {
                let h = fraction * stability_limit.expect("spectrum computed above");
                bench_scheme(
                    &network,
                    &coeffs,
                    &capacities,
                    &reference,
                    SchemeSpec::euler(),
                    h,
                    config.t_final,
                    n,
                    Some(format!("euler@{fraction}hmax")),
                )?
            }
            BenchEntry::Oracle { tol } => {
                let started = Instant::now();
                let (state, stats) = ode_oracle_with_stats(&network, config.t_final, tol)?;
                let wall = started.elapsed().as_secs_f64();
                BenchRow {
                    solver: format!("oracle tol={tol:.0e}"),
                    h: None,
                    stage_evaluations: stats.rhs_evaluations,
                    cost: stats.rhs_evaluations as f64 * n,
                    wall_seconds: wall,
                    stable: true,
                    max_d: crate::metrics::max_d(&reference, state.temperatures())?,
                    sum_d: crate::metrics::sum_d(&reference, state.temperatures())?,
                    s_en_d: crate::metrics::s_en_d(&reference, state.temperatures(), &capacities)?,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn bench_scheme(
    network: &CellNetwork,
    coeffs: &crate::network::CoefficientSet,
    capacities: &[f64],
    reference: &[f64],
    scheme: SchemeSpec,
    h: f64,
    t_final: f64,
    n: f64,
    label: Option<String>,
) -> Result<BenchRow, ExperimentError> {
    let steps = planned_steps(h, t_final) as u64;
    let evals = steps * scheme.stage_evaluations_per_step() as u64;
    let started = Instant::now();
    let outcome = integrate(coeffs, scheme, h, t_final, network.initial_state());
    let wall = started.elapsed().as_secs_f64();
    let solver = label.unwrap_or_else(|| scheme.token());
    match outcome {
        Ok(state) => Ok(BenchRow {
            solver,
            h: Some(h),
            stage_evaluations: evals,
            cost: evals as f64 * n,
            wall_seconds: wall,
            stable: true,
            max_d: crate::metrics::max_d(reference, state.temperatures())?,
            sum_d: crate::metrics::sum_d(reference, state.temperatures())?,
            s_en_d: crate::metrics::s_en_d(reference, state.temperatures(), capacities)?,
        }),
        Err(SchemeError::NonFiniteState { .. }) => Ok(BenchRow {
            solver,
            h: Some(h),
            stage_evaluations: evals,
            cost: evals as f64 * n,
            wall_seconds: wall,
            stable: false,
            max_d: f64::INFINITY,
            sum_d: f64::INFINITY,
            s_en_d: f64::INFINITY,
        }),
        Err(other) => Err(other.into()),
    }
}

/// Serialises reports as tidy CSV: one row per (scheme, k, h) in stable
/// column order, preceded by `#`-prefixed metadata lines. Lossless: parsing
/// the text recovers the reports exactly.
pub fn reports_to_csv(meta: &[String], reports: &[ErrorReport]) -> String {
    let mut out = String::new();
    for line in meta {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(ErrorReport::csv_header());
    out.push('\n');
    for report in reports {
        out.push_str(&report.to_csv_row());
        out.push('\n');
    }
    out
}

/// Reshapes sweep output into its plot-ready CSV form (no rendering).
pub fn plot_profile(reports: &[ErrorReport]) -> String {
    reports_to_csv(&[], reports)
}

/// Parses CSV produced by [`reports_to_csv`]; returns metadata lines (without
/// the `#` prefix) and the reports.
pub fn reports_from_csv(text: &str) -> Result<(Vec<String>, Vec<ErrorReport>), ExperimentError> {
    let mut meta = Vec::new();
    let mut reports = Vec::new();
    let mut seen_header = false;
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            meta.push(comment.trim_start().to_string());
            continue;
        }
        if !seen_header {
            if line != ErrorReport::csv_header() {
                return Err(ExperimentError::MalformedCsv(format!(
                    "unexpected header `{line}`"
                )));
            }
            seen_header = true;
            continue;
        }
        reports.push(ErrorReport::from_csv_row(line)?);
    }
    if !seen_header {
        return Err(ExperimentError::MalformedCsv("missing header".to_string()));
    }
    Ok((meta, reports))
}

/// Writes sweep output (with metadata describing the configuration) to disk.
pub fn write_reports_csv(
    path: &Path,
    config: &SweepConfig,
    kind: &str,
    reports: &[ErrorReport],
) -> Result<(), ExperimentError> {
    let text = reports_to_csv(&config.metadata(kind), reports);
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads sweep output back from disk.
pub fn read_reports_csv(path: &Path) -> Result<(Vec<String>, Vec<ErrorReport>), ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    reports_from_csv(&text)
}

/// Final-state CSV written by the solve workflow: one `cell,temperature` row
/// per cell, preceded by a `# t = ...` stamp.
pub fn temperatures_to_csv(state: &TemperatureState) -> String {
    let mut out = format!("# t = {}\ncell,temperature\n", state.time());
    for (i, u) in state.temperatures().iter().enumerate() {
        out.push_str(&format!("{i},{u}\n"));
    }
    out
}

/// Parses the solve-output CSV back into a state.
pub fn temperatures_from_csv(text: &str) -> Result<TemperatureState, ExperimentError> {
    let mut time = 0.0;
    let mut values = Vec::new();
    let mut seen_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(t) = comment.trim().strip_prefix("t =") {
                time = t
                    .trim()
                    .parse()
                    .map_err(|_| ExperimentError::MalformedCsv(line.to_string()))?;
            }
            continue;
        }
        if !seen_header {
            if line != "cell,temperature" {
                return Err(ExperimentError::MalformedCsv(format!(
                    "unexpected header `{line}`"
                )));
            }
            seen_header = true;
            continue;
        }
        let (idx, value) = line
            .split_once(',')
            .ok_or_else(|| ExperimentError::MalformedCsv(line.to_string()))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| ExperimentError::MalformedCsv(line.to_string()))?;
        if idx != values.len() {
            return Err(ExperimentError::MalformedCsv(format!(
                "cell ids must be consecutive, got {idx} at position {}",
                values.len()
            )));
        }
        values.push(
            value
                .parse()
                .map_err(|_| ExperimentError::MalformedCsv(line.to_string()))?,
        );
    }
    if !seen_header {
        return Err(ExperimentError::MalformedCsv("missing header".to_string()));
    }
    Ok(TemperatureState::new(values, time))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_config() -> SweepConfig {
        SweepConfig {
            problem: ProblemSpec::SineLine {
                n: 41,
                pin_ends: true,
            },
            schemes: vec!["cn1".parse().unwrap(), "ln2".parse().unwrap()],
            step_sizes: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            t_final: 1.0,
            reference: ReferenceChoice::Exact,
        }
    }

    #[test]
    fn empty_scheme_list_gives_empty_reports() {
        let config = SweepConfig {
            schemes: Vec::new(),
            ..sine_config()
        };
        assert!(run_h_sweep(&config).unwrap().is_empty());
    }

    #[test]
    fn h_sweep_shows_first_and_second_order_against_the_ode_reference() {
        let reports = run_h_sweep(&sine_config()).unwrap();
        assert_eq!(reports.len(), 10);
        let slope = |token: &str| {
            let pts: Vec<(f64, f64)> = reports
                .iter()
                .filter(|r| r.scheme == token)
                .map(|r| (r.h, r.max_d))
                .collect();
            crate::metrics::fit_order(&pts).unwrap()
        };
        let cn1 = slope("cn1");
        let ln2 = slope("ln2");
        assert!((0.8..=1.25).contains(&cn1), "cn1 slope {cn1}");
        assert!((1.75..=2.6).contains(&ln2), "ln2 slope {ln2}");
    }

    #[test]
    fn closed_form_reference_plateaus_at_the_spatial_error() {
        let config = SweepConfig {
            schemes: vec!["ln3".parse().unwrap()],
            step_sizes: vec![4e-3, 1e-3, 2.5e-4],
            reference: ReferenceChoice::SineClosedForm,
            ..sine_config()
        };
        let reports = run_h_sweep(&config).unwrap();
        // once time error is below the spatial error the curve flattens
        let last = reports.last().unwrap().max_d;
        let mid = reports[reports.len() - 2].max_d;
        assert!(last > 0.0);
        assert!((mid / last - 1.0).abs() < 0.2, "curve still falling: {mid} vs {last}");
    }

    #[test]
    fn closed_form_reference_requires_a_sine_problem() {
        let config = SweepConfig {
            problem: ProblemSpec::standard_lattice(1),
            reference: ReferenceChoice::SineClosedForm,
            ..sine_config()
        };
        assert!(matches!(
            run_h_sweep(&config),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn iteration_sweep_duplicates_stage_one_across_families() {
        let config = SweepConfig {
            step_sizes: vec![0.05],
            ..sine_config()
        };
        let reports = run_iteration_sweep(&config, 3).unwrap();
        assert_eq!(reports.len(), 6);
        let cn1 = reports.iter().find(|r| r.scheme == "cn1").unwrap();
        let ln1 = reports.iter().find(|r| r.scheme == "ln1").unwrap();
        assert_eq!(cn1.max_d, ln1.max_d);
    }

    #[test]
    fn gitc_sweep_scales_stepsize_with_stage_count() {
        let config = SweepConfig {
            step_sizes: Vec::new(),
            ..sine_config()
        };
        let reports = run_gitc_sweep(&config, 420, 3).unwrap();
        assert_eq!(reports.len(), 3);
        assert!((reports[0].h - 1.0 / 420.0).abs() < 1e-15);
        assert!((reports[1].h - 2.0 / 420.0).abs() < 1e-15);
        assert!((reports[2].h - 3.0 / 420.0).abs() < 1e-15);
        // fixed budget: stages-per-step times steps is constant
        for r in &reports {
            assert_eq!(r.stages as usize * planned_steps(r.h, 1.0), 420);
        }
    }

    #[test]
    fn gitc_rejects_non_divisible_budgets() {
        let config = sine_config();
        assert!(matches!(
            run_gitc_sweep(&config, 100, 3),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn sweep_output_is_byte_deterministic() {
        let config = SweepConfig {
            problem: ProblemSpec::RandomLattice {
                nx: 8,
                ny: 5,
                exponent_range: (-1.0, 1.0),
                u0: ValueSpec::Uniform { lo: 0.0, hi: 1000.0 },
                q: ValueSpec::Uniform {
                    lo: -500.0,
                    hi: 500.0,
                },
                seed: 31,
            },
            schemes: vec!["cn2".parse().unwrap(), "ln3".parse().unwrap()],
            step_sizes: vec![0.1, 0.01],
            t_final: 1.0,
            reference: ReferenceChoice::Exact,
        };
        let a = reports_to_csv(&config.metadata("h"), &run_h_sweep(&config).unwrap());
        let b = reports_to_csv(&config.metadata("h"), &run_h_sweep(&config).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn report_csv_round_trips_through_the_reader() {
        let reports = run_h_sweep(&sine_config()).unwrap();
        let meta = vec!["example".to_string()];
        let text = reports_to_csv(&meta, &reports);
        let (meta_back, back) = reports_from_csv(&text).unwrap();
        assert_eq!(meta_back, meta);
        assert_eq!(back, reports);
    }

    #[test]
    fn benchmark_flags_unstable_euler() {
        let config = BenchConfig {
            problem: ProblemSpec::standard_lattice(3),
            t_final: 1.0,
            reference: ReferenceChoice::Exact,
            entries: vec![
                BenchEntry::Scheme {
                    scheme: "ln3".parse().unwrap(),
                    h: 0.01,
                },
                BenchEntry::Scheme {
                    scheme: SchemeSpec::euler(),
                    h: 0.05,
                },
                BenchEntry::EulerAtStabilityFraction(0.99),
            ],
        };
        let rows = run_benchmark(&config).unwrap();
        assert!(rows[0].stable);
        assert!(rows[0].max_d.is_finite());
        assert!(!rows[1].stable, "euler far above its limit must blow up");
        assert!(rows[2].stable, "euler below its limit must survive");
        // cost bookkeeping: ln3 at h=0.01 is 3 stages x 100 steps x N
        assert_eq!(rows[0].stage_evaluations, 300);
        assert_eq!(rows[0].cost, 300.0 * 1000.0);
    }

    #[test]
    fn temperature_csv_round_trip() {
        let state = TemperatureState::new(vec![1.5, -2.25, 0.0], 0.75);
        let text = temperatures_to_csv(&state);
        let back = temperatures_from_csv(&text).unwrap();
        assert_eq!(back, state);
    }
}
