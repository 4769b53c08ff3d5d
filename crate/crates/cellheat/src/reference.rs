//! Ground-truth solvers and spectral analysis.
//!
//! Two independent references are provided for the assembled linear system
//! `du/dt = M u + Q`:
//!
//! * [`exact_solve`] evaluates the exact affine solution through a dense
//!   eigendecomposition. The system matrix satisfies `m_ij C_i = m_ji C_j`,
//!   so `S = D^{1/2} M D^{-1/2}` with `D = diag(C)` is symmetric and the
//!   singular source term is handled spectrally via `t phi1(lambda t)`
//!   factors with no matrix inversion.
//! * [`ode_oracle`] integrates the same system with an adaptive embedded
//!   Dormand-Prince 5(4) pair under a strict tolerance.
//!
//! The two routes share no numerics; their mutual agreement is the
//! correctness gate for both. [`spectrum`] exposes the eigenvalues, the
//! stiffness ratio and everything needed for the explicit-Euler stability
//! threshold, and [`analytic_sine`] is the closed-form solution of the
//! sine-profile verification problem.

use std::sync::Once;

use faer::{Mat, Par, Side};
use thiserror::Error;

use crate::network::{CellNetwork, NetworkError, TemperatureState};

/// Dense solvers and eigensolves are guarded to this many cells.
pub const DENSE_GUARD: usize = 6000;

/// Eigenvalues with magnitude at or below this fraction of |lambda_max| are
/// classified as zero modes when searching for the smallest nonzero one.
pub const ZERO_EIGENVALUE_CUTOFF: f64 = 1e-9;

const ORACLE_MIN_TOL: f64 = 1e-12;
const ORACLE_MAX_TOL: f64 = 1e-6;
const ORACLE_EVAL_BUDGET: u64 = 20_000_000;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("network has {0} cells; dense reference solvers are limited to {DENSE_GUARD}")]
    TooLarge(usize),
    #[error("network has no unpinned cells to solve for")]
    AllPinned,
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("oracle tolerance {0:.3e} outside [{ORACLE_MIN_TOL:.0e}, {ORACLE_MAX_TOL:.0e}]")]
    InvalidTolerance(f64),
    #[error(
        "oracle exceeded its budget of {budget} derivative evaluations \
         (stiffness ratio {stiffness:.3e}); the system is too stiff for the embedded pair"
    )]
    BudgetExceeded { budget: u64, stiffness: f64 },
    #[error("reference produced a non-finite value")]
    NonFinite,
    #[error("horizon must be finite and non-negative, got {0}")]
    InvalidHorizon(f64),
}

// faer would otherwise pick its own worker count; pinning it keeps reference
// outputs byte-stable no matter how the caller configures rayon.
fn sequential_eigen_backend() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// The symmetrised reduced system: unpinned cells only, with pinned
/// neighbours folded into an effective source.
struct Reduced {
    /// map from reduced index to network cell index
    cells: Vec<usize>,
    /// symmetric matrix S = D^{1/2} M D^{-1/2} on the unpinned block
    sym: Mat<f64>,
    /// sqrt of capacities, reduced indexing
    sqrt_c: Vec<f64>,
    /// effective source: Q_i plus pinned-neighbour inflow
    source: Vec<f64>,
    /// initial temperatures, reduced indexing
    initial: Vec<f64>,
}

fn reduce(network: &CellNetwork) -> Result<Reduced, ReferenceError> {
    network.validate()?;
    let n = network.cell_count();
    if n > DENSE_GUARD {
        return Err(ReferenceError::TooLarge(n));
    }
    let cells: Vec<usize> = (0..n).filter(|&i| network.cells()[i].pinned.is_none()).collect();
    if cells.is_empty() {
        return Err(ReferenceError::AllPinned);
    }
    let mut index_of = vec![usize::MAX; n];
    for (r, &i) in cells.iter().enumerate() {
        index_of[i] = r;
    }

    let m = cells.len();
    let mut sym = Mat::<f64>::zeros(m, m);
    let sqrt_c: Vec<f64> = cells
        .iter()
        .map(|&i| network.cells()[i].capacity.sqrt())
        .collect();
    let mut source: Vec<f64> = cells.iter().map(|&i| network.cells()[i].source).collect();

    for edge in network.edges() {
        let w = 1.0 / edge.resistance;
        for (a, b) in [(edge.i, edge.j), (edge.j, edge.i)] {
            let ra = index_of[a];
            if ra == usize::MAX {
                continue;
            }
            let ca = network.cells()[a].capacity;
            // every neighbour, pinned or not, contributes to the decay rate
            sym[(ra, ra)] -= w / ca;
            match network.cells()[b].pinned {
                None => {
                    let rb = index_of[b];
                    let cb = network.cells()[b].capacity;
                    sym[(ra, rb)] = w / (ca * cb).sqrt();
                }
                Some(held) => {
                    // constant inflow from the held neighbour
                    source[ra] += held * w / ca;
                }
            }
        }
    }

    let initial = cells
        .iter()
        .map(|&i| network.cells()[i].initial_temperature)
        .collect();
    Ok(Reduced {
        cells,
        sym,
        sqrt_c,
        source,
        initial,
    })
}

/// Composes the final full-length state from reduced values plus pins.
fn expand(network: &CellNetwork, reduced: &Reduced, values: &[f64], t: f64) -> TemperatureState {
    let mut u: Vec<f64> = network
        .cells()
        .iter()
        .map(|c| c.pinned.unwrap_or(0.0))
        .collect();
    for (r, &i) in reduced.cells.iter().enumerate() {
        u[i] = values[r];
    }
    TemperatureState::new(u, t)
}

// local phi1 kept separate from the scheme implementation on purpose: the
// reference must not share numerics with the code it checks
fn phi1_ref(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Exact solution of the assembled system at time `t`, starting from the
/// network's initial state.
///
/// Evaluates `u(t) = e^{Mt} u0 + t phi1(Mt) Q` through the symmetrised
/// eigendecomposition; the formulation handles singular `M` (closed
/// networks) without inverting anything. Pinned cells hold their fixed
/// value and act as constant sources on their neighbours.
pub fn exact_solve(network: &CellNetwork, t: f64) -> Result<TemperatureState, ReferenceError> {
    if !t.is_finite() || t < 0.0 {
        return Err(ReferenceError::InvalidHorizon(t));
    }
    let reduced = reduce(network)?;
    sequential_eigen_backend();
    let evd = reduced
        .sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| ReferenceError::Eigensolver(format!("{e:?}")))?;
    let m = reduced.cells.len();
    let eigenvalues = evd.S().column_vector();
    let basis = evd.U();

    // transform v = D^{1/2} u and q~ = D^{1/2} q into the eigenbasis
    let mut w0 = vec![0.0; m];
    let mut wq = vec![0.0; m];
    for k in 0..m {
        let mut acc0 = 0.0;
        let mut accq = 0.0;
        for r in 0..m {
            acc0 += basis[(r, k)] * reduced.sqrt_c[r] * reduced.initial[r];
            accq += basis[(r, k)] * reduced.sqrt_c[r] * reduced.source[r];
        }
        w0[k] = acc0;
        wq[k] = accq;
    }
    // propagate each mode: w(t) = e^{lambda t} w0 + t phi1(lambda t) wq
    for k in 0..m {
        let x = eigenvalues[k] * t;
        w0[k] = x.exp() * w0[k] + t * phi1_ref(x) * wq[k];
    }
    // back to temperatures: u = D^{-1/2} U w
    let mut values = vec![0.0; m];
    for r in 0..m {
        let mut acc = 0.0;
        for k in 0..m {
            acc += basis[(r, k)] * w0[k];
        }
        values[r] = acc / reduced.sqrt_c[r];
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ReferenceError::NonFinite);
    }
    Ok(expand(network, &reduced, &values, t))
}

/// Step and evaluation counts of one [`ode_oracle_with_stats`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
}

/// Adaptive high-order reference solution with estimated global error within
/// `tol * ||u||`. Accepts tolerances between 1e-12 and 1e-6.
///
/// Independent of [`exact_solve`]; the acceptance suite checks that the two
/// agree. Fails with a stiffness diagnostic when the embedded pair would need
/// more than its budget of derivative evaluations.
pub fn ode_oracle(
    network: &CellNetwork,
    t: f64,
    tol: f64,
) -> Result<TemperatureState, ReferenceError> {
    ode_oracle_with_stats(network, t, tol).map(|(state, _)| state)
}

/// [`ode_oracle`] variant that also reports work counters, for cost
/// accounting in benchmarks.
pub fn ode_oracle_with_stats(
    network: &CellNetwork,
    t: f64,
    tol: f64,
) -> Result<(TemperatureState, OracleStats), ReferenceError> {
    ode_oracle_budgeted(network, t, tol, ORACLE_EVAL_BUDGET)
}

pub(crate) fn ode_oracle_budgeted(
    network: &CellNetwork,
    t: f64,
    tol: f64,
    budget: u64,
) -> Result<(TemperatureState, OracleStats), ReferenceError> {
    if !(ORACLE_MIN_TOL..=ORACLE_MAX_TOL).contains(&tol) {
        return Err(ReferenceError::InvalidTolerance(tol));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(ReferenceError::InvalidHorizon(t));
    }
    let coeffs = network.assemble()?;
    let n = coeffs.cell_count();
    let mut u: Vec<f64> = network.initial_state().into_temperatures();
    let mut stats = OracleStats {
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evaluations: 0,
    };
    if t == 0.0 {
        return Ok((TemperatureState::new(u, 0.0), stats));
    }

    let u0_inf = u.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let atol = tol * (1.0 + u0_inf);
    let rtol = tol;

    // Dormand-Prince 5(4) tableau
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // difference between the 5th and embedded 4th order weights
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut u_new = vec![0.0; n];

    coeffs.rhs_into(&u, &mut k[0]);
    stats.rhs_evaluations += 1;

    // initial step from the scale of u'(0)
    let norm_f0 = k[0].iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut h = if norm_f0 > 0.0 {
        (0.01 * (atol / norm_f0)).min(t / 10.0).max(t * 1e-12)
    } else {
        t / 10.0
    };
    let mut time = 0.0f64;

    while time < t {
        if stats.rhs_evaluations > budget {
            let stiffness = spectrum(network).map(|s| s.stiffness_ratio()).unwrap_or(f64::NAN);
            return Err(ReferenceError::BudgetExceeded { budget, stiffness });
        }
        h = h.min(t - time);
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (s, k_s) in k.iter().enumerate().take(stage + 1) {
                    let a = A[stage][s];
                    if a != 0.0 {
                        acc += a * k_s[i];
                    }
                }
                y_stage[i] = u[i] + h * acc;
            }
            coeffs.rhs_into(&y_stage, &mut k[stage + 1]);
            stats.rhs_evaluations += 1;
        }
        // the 6th stage combination is already the 5th order solution (FSAL)
        u_new.copy_from_slice(&y_stage);

        let mut err_sq = 0.0f64;
        for i in 0..n {
            let mut e = 0.0;
            for (s, k_s) in k.iter().enumerate() {
                if E[s] != 0.0 {
                    e += E[s] * k_s[i];
                }
            }
            e *= h;
            let scale = atol + rtol * u[i].abs().max(u_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            h *= 0.25;
            stats.rejected_steps += 1;
            coeffs.rhs_into(&u, &mut k[0]);
            stats.rhs_evaluations += 1;
            continue;
        }
        if err <= 1.0 {
            time += h;
            std::mem::swap(&mut u, &mut u_new);
            stats.accepted_steps += 1;
            // FSAL: last stage derivative becomes the first of the next step
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
        } else {
            stats.rejected_steps += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(ReferenceError::NonFinite);
    }
    Ok((TemperatureState::new(u, t), stats))
}

/// Closed-form solution of the sine-profile verification problem:
/// `u(x, t) = 10 sin(x) e^{-t} + 77 sin(2x) e^{-4t}` on `[0, pi]` with zero
/// Dirichlet ends.
pub fn analytic_sine(x: f64, t: f64) -> f64 {
    10.0 * x.sin() * (-t).exp() + 77.0 * (2.0 * x).sin() * (-4.0 * t).exp()
}

/// [`analytic_sine`] sampled at the `n` cell centres of the sine-line chain.
pub fn analytic_sine_profile(n: usize, t: f64) -> Vec<f64> {
    let dx = std::f64::consts::PI / (n - 1) as f64;
    (0..n).map(|i| analytic_sine(i as f64 * dx, t)).collect()
}

/// Eigenvalue summary of the (reduced) system matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    lambda_max_magnitude: f64,
    lambda_min_nonzero: f64,
    stiffness_ratio: f64,
}

impl Spectrum {
    /// All eigenvalues, ascending. Real and non-positive up to rounding.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// |lambda| of the fastest mode (zero only for edgeless networks).
    pub fn lambda_max_magnitude(&self) -> f64 {
        self.lambda_max_magnitude
    }

    /// Smallest |lambda| above the zero cutoff; equals the max magnitude
    /// when only one nonzero eigenvalue exists.
    pub fn lambda_min_nonzero(&self) -> f64 {
        self.lambda_min_nonzero
    }

    /// Ratio of the largest to the smallest nonzero eigenvalue magnitude.
    pub fn stiffness_ratio(&self) -> f64 {
        self.stiffness_ratio
    }
}

/// Dense eigenvalue analysis of the assembled system (cells <= 6000).
///
/// Eigenvalues come from the symmetrised form, so they are exactly real;
/// magnitudes at or below `1e-9 |lambda_max|` count as zero modes.
pub fn spectrum(network: &CellNetwork) -> Result<Spectrum, ReferenceError> {
    let reduced = reduce(network)?;
    sequential_eigen_backend();
    let eigenvalues: Vec<f64> = reduced
        .sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| ReferenceError::Eigensolver(format!("{e:?}")))?;
    let lambda_max_magnitude = eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let cutoff = ZERO_EIGENVALUE_CUTOFF * lambda_max_magnitude;
    let lambda_min_nonzero = eigenvalues
        .iter()
        .map(|l| l.abs())
        .filter(|&m| m > cutoff)
        .fold(f64::INFINITY, f64::min);
    let (lambda_min_nonzero, stiffness_ratio) = if lambda_min_nonzero.is_finite() {
        (lambda_min_nonzero, lambda_max_magnitude / lambda_min_nonzero)
    } else {
        // no dynamics at all: every mode is a zero mode
        (0.0, 1.0)
    };
    Ok(Spectrum {
        eigenvalues,
        lambda_max_magnitude,
        lambda_min_nonzero,
        stiffness_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Cell, CellNetwork, Edge, ValueSpec, build_random_lattice, two_cell_unit};
    use crate::testutil::random_network;

    #[test]
    fn exact_two_cell_closed_form() {
        let state = exact_solve(&two_cell_unit(0.0, 1.0), 1.0).unwrap();
        let e2 = (-2.0f64).exp();
        assert!((state.temperatures()[0] - (0.5 - 0.5 * e2)).abs() < 1e-12);
        assert!((state.temperatures()[1] - (0.5 + 0.5 * e2)).abs() < 1e-12);
    }

    #[test]
    fn exact_at_zero_returns_the_initial_state() {
        let net = random_network(5, 10, 25.0);
        let state = exact_solve(&net, 0.0).unwrap();
        for (got, cell) in state.temperatures().iter().zip(net.cells()) {
            let want = cell.initial_temperature;
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn exact_isolated_cell_integrates_its_source() {
        let net = CellNetwork::new(
            vec![Cell {
                capacity: 1.0,
                source: 2.0,
                initial_temperature: 5.0,
                pinned: None,
            }],
            vec![],
        );
        let state = exact_solve(&net, 3.0).unwrap();
        assert!((state.temperatures()[0] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn exact_semigroup_property() {
        let net = random_network(77, 12, 0.0);
        let (t1, t2) = (0.37, 1.21);
        let direct = exact_solve(&net, t1 + t2).unwrap();
        let mid = exact_solve(&net, t1).unwrap();
        let restarted = net.with_initial_temperatures(mid.temperatures());
        let two_leg = exact_solve(&restarted, t2).unwrap();
        for (a, b) in direct.temperatures().iter().zip(two_leg.temperatures()) {
            let rel = (a - b).abs() / a.abs().max(1e-12);
            assert!(rel < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn exact_respects_max_min_without_sources() {
        for seed in [1u64, 2, 3, 4] {
            let net = random_network(seed, 15, 0.0);
            let u0: Vec<f64> = net.cells().iter().map(|c| c.initial_temperature).collect();
            let lo = u0.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = u0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let state = exact_solve(&net, 2.5).unwrap();
            for &u in state.temperatures() {
                assert!(u >= lo - 1e-9 * (hi - lo) && u <= hi + 1e-9 * (hi - lo));
            }
        }
    }

    #[test]
    fn exact_holds_pinned_cells() {
        let net = CellNetwork::new(
            vec![
                Cell {
                    pinned: Some(3.0),
                    ..Cell::at(3.0)
                },
                Cell::at(10.0),
            ],
            vec![Edge::new(0, 1, 2.0)],
        );
        let state = exact_solve(&net, 100.0).unwrap();
        assert_eq!(state.temperatures()[0], 3.0);
        // the free cell relaxes to the held value
        assert!((state.temperatures()[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn oracle_matches_exact_on_the_two_cell_problem() {
        let net = two_cell_unit(0.0, 1.0);
        let oracle = ode_oracle(&net, 1.0, 1e-10).unwrap();
        let exact = exact_solve(&net, 1.0).unwrap();
        for (a, b) in oracle.temperatures().iter().zip(exact.temperatures()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_keeps_uniform_source_free_states_constant() {
        let net = CellNetwork::new(
            vec![Cell::at(4.0), Cell::at(4.0), Cell::at(4.0)],
            vec![Edge::new(0, 1, 0.5), Edge::new(1, 2, 2.0)],
        );
        let state = ode_oracle(&net, 5.0, 1e-9).unwrap();
        for &u in state.temperatures() {
            assert!((u - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn oracle_rejects_out_of_range_tolerances() {
        let net = two_cell_unit(0.0, 1.0);
        assert!(matches!(
            ode_oracle(&net, 1.0, 1e-3),
            Err(ReferenceError::InvalidTolerance(_))
        ));
        assert!(matches!(
            ode_oracle(&net, 1.0, 1e-13),
            Err(ReferenceError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn oracle_reports_budget_exhaustion_with_stiffness() {
        let net = two_cell_unit(0.0, 1.0);
        let err = ode_oracle_budgeted(&net, 1.0, 1e-10, 20).unwrap_err();
        match err {
            ReferenceError::BudgetExceeded { budget, stiffness } => {
                assert_eq!(budget, 20);
                assert!((stiffness - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn dual_oracles_agree_on_random_networks() {
        for seed in [10u64, 11, 12] {
            let net = random_network(seed, 30, 25.0);
            let t = 1.5;
            let exact = exact_solve(&net, t).unwrap();
            let oracle = ode_oracle(&net, t, 1e-10).unwrap();
            let norm = exact
                .temperatures()
                .iter()
                .fold(0.0f64, |a, &x| a.max(x.abs()));
            let bound = 1e-8 * (1.0 + norm);
            for (a, b) in exact.temperatures().iter().zip(oracle.temperatures()) {
                assert!((a - b).abs() <= bound, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn analytic_sine_reference_points() {
        use std::f64::consts::PI;
        assert!((analytic_sine(PI / 2.0, 0.0) - 10.0).abs() < 1e-12);
        assert!(analytic_sine(0.0, 3.7).abs() < 1e-12);
        assert!(analytic_sine(PI, 0.4).abs() < 1e-12);
        let expected = 10.0 * (PI / 4.0).sin() * (-1.0f64).exp() + 77.0 * (-4.0f64).exp();
        assert!((analytic_sine(PI / 4.0, 1.0) - expected).abs() < 1e-12);
        assert!((expected - 4.0118).abs() < 1e-3);
    }

    #[test]
    fn spectrum_of_the_unit_pair() {
        let spec = spectrum(&two_cell_unit(0.0, 1.0)).unwrap();
        assert_eq!(spec.eigenvalues().len(), 2);
        assert!(spec.eigenvalues()[0].abs() + 2.0 < 2.0 + 1e-12);
        assert!((spec.eigenvalues()[0] + 2.0).abs() < 1e-12);
        assert!(spec.eigenvalues()[1].abs() < 1e-12);
        assert!((spec.lambda_max_magnitude() - 2.0).abs() < 1e-12);
        assert!((spec.stiffness_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_of_a_three_cell_chain() {
        let net = CellNetwork::new(
            vec![Cell::at(0.0), Cell::at(1.0), Cell::at(2.0)],
            vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)],
        );
        let spec = spectrum(&net).unwrap();
        let expected = [-3.0, -1.0, 0.0];
        for (got, want) in spec.eigenvalues().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((spec.stiffness_ratio() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_scaling_law() {
        let base = random_network(42, 12, 0.0);
        let scaled = CellNetwork::new(
            base.cells()
                .iter()
                .map(|c| Cell {
                    capacity: c.capacity * 10.0,
                    ..*c
                })
                .collect(),
            base.edges()
                .iter()
                .map(|e| Edge::new(e.i, e.j, e.resistance * 10.0))
                .collect(),
        );
        let s1 = spectrum(&base).unwrap();
        let s2 = spectrum(&scaled).unwrap();
        let ratio = s1.lambda_max_magnitude() / s2.lambda_max_magnitude();
        assert!((ratio - 100.0).abs() < 1e-9 * 100.0);
    }

    #[test]
    fn spectrum_eigenvalue_sum_matches_trace() {
        for seed in [5u64, 6, 7] {
            let net = random_network(seed, 20, 25.0);
            let coeffs = net.assemble().unwrap();
            let trace: f64 = (0..coeffs.cell_count()).map(|i| coeffs.diagonal(i)).sum();
            let spec = spectrum(&net).unwrap();
            let sum: f64 = spec.eigenvalues().iter().sum();
            let rel = (sum - trace).abs() / trace.abs().max(1e-30);
            assert!(rel < 1e-9, "seed {seed}: sum {sum} vs trace {trace}");
        }
    }

    #[test]
    fn spectrum_eigenvalues_are_non_positive() {
        let net = build_random_lattice(
            8,
            8,
            (-1.0, 1.0),
            ValueSpec::Uniform { lo: 0.0, hi: 1000.0 },
            ValueSpec::Constant(0.0),
            9,
        )
        .unwrap();
        let spec = spectrum(&net).unwrap();
        let eps = 1e-10 * spec.lambda_max_magnitude();
        for &l in spec.eigenvalues() {
            assert!(l <= eps, "eigenvalue {l} above tolerance {eps}");
        }
    }

    #[test]
    fn guard_rejects_oversized_networks() {
        let cells = vec![Cell::at(0.0); DENSE_GUARD + 1];
        let net = CellNetwork::new(cells, vec![]);
        assert!(matches!(
            exact_solve(&net, 1.0),
            Err(ReferenceError::TooLarge(_))
        ));
    }
}
