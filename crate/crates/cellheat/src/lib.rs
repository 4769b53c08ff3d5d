//! # cellheat
//!
//! Stable explicit time integration for heat conduction on arbitrary
//! resistance-capacitance cell networks.
//!
//! Spatially discretising the heat equation over lumped cells (heat capacity
//! C_i) joined by thermal resistances (R_ij) yields the linear ODE system
//! `du/dt = M u + Q`. Conventional explicit integrators are stepsize-limited
//! by the fastest cell; the constant-neighbour (CN) and linear-neighbour (LN)
//! schemes in this crate instead solve each cell analytically against frozen
//! or linearly moving neighbours. The stepsize then appears only inside
//! decaying exponentials, so source-free updates are convex combinations of
//! the step-start temperatures: the schemes are first/second order accurate
//! yet stable for arbitrarily large steps, no matter how stiff the network.
//!
//! ## Quick start
//!
//! ```
//! use cellheat::{SchemeSpec, integrate, two_cell_unit};
//!
//! let network = two_cell_unit(0.0, 1.0);
//! let coeffs = network.assemble()?;
//! let scheme: SchemeSpec = "ln3".parse()?;
//! let state = integrate(&coeffs, scheme, 0.01, 1.0, network.initial_state())?;
//! let exact = 0.5 - 0.5 * (-2.0f64).exp();
//! assert!((state.temperatures()[0] - exact).abs() < 1e-4);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! ## Layout
//!
//! * [`network`] — the problem model: cells, edges, validation, coefficient
//!   assembly, problem builders, and the versioned network file format.
//! * [`schemes`] — CN/LN exponential integrators, their iterated variants,
//!   the explicit-Euler baseline and the fixed-step driver.
//! * [`reference`] — ground truth: exact eigendecomposition solve, an
//!   independent adaptive oracle, the sine closed form and spectral
//!   (stiffness) analysis.
//! * [`metrics`] — MaxD/SumD/SEnD error measures and convergence-order fits.
//! * [`experiments`] — sweep and benchmark harness with reproducible CSV
//!   output.
//!
//! The `examples/` directory walks through each capability; the `cellheat`
//! binary wraps the same workflows behind a small CLI.

pub mod experiments;
pub mod metrics;
pub mod network;
pub mod reference;
pub mod schemes;

#[doc(hidden)]
pub mod testutil;

pub use experiments::{
    BenchConfig, BenchEntry, BenchRow, ExperimentError, ProblemSpec, ReferenceChoice, SweepConfig,
    check_reference_consistency, plot_profile, read_reports_csv, reports_from_csv, reports_to_csv,
    run_benchmark, run_gitc_sweep, run_h_sweep, run_iteration_sweep, temperatures_from_csv,
    temperatures_to_csv, write_reports_csv,
};
pub use metrics::{ErrorReport, MetricsError, fit_order, max_d, s_en_d, sum_d};
pub use network::{
    Cell, CellNetwork, CoefficientSet, Edge, NetworkError, TemperatureState, ValueSpec,
    build_random_lattice, build_sine_line, two_cell_unit,
};
pub use reference::{
    OracleStats, ReferenceError, Spectrum, analytic_sine, analytic_sine_profile, exact_solve,
    ode_oracle, ode_oracle_with_stats, spectrum,
};
pub use schemes::{
    SchemeError, SchemeFamily, SchemeSpec, StepPlan, cn_stage, euler_max_step, integrate,
    integrate_with, ln2_neighbour_coefficient, ln_stage, phi1, phi2, planned_steps, step,
};
