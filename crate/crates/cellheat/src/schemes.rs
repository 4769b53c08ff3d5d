//! Constant-neighbour and linear-neighbour time integrators.
//!
//! Both families advance the assembled ODE system cell by cell with an exact
//! per-cell solution, holding the neighbours of each cell either constant
//! (CN) or linearly varying (LN) over the step. Writing `z_i = m_ii h`, one
//! step of the predictor and corrector reads
//!
//! ```text
//! CN:  u_i' = u_i E_i + a_i(w) P1_i                 a_i(w) = sum_j m_ij w_j + Q_i
//! LN:  u_i' = u_i E_i + a_i(u^n) P1_i + s_i P2_i    s_i = sum_j m_ij (w_j - u_j^n) / h
//! ```
//!
//! with `E = e^z`, `P1 = h phi1(z)` and `P2 = h^2 phi2(z)`. The stepsize
//! enters only through decaying exponentials, so the update is a convex
//! combination of step-start temperatures whenever the sources vanish: the
//! iterates respect the max-min principle for any h, which is the
//! unconditional stability of these schemes. CN iterates its neighbour
//! estimate (CN2, CN3, ...); LN applies corrector passes after one CN
//! predictor (LN2, LN3, ...), and LN1 coincides with CN1 bit for bit.
//!
//! Every stage is a pure map over immutable snapshots (Jacobi style), so
//! stage evaluation parallelises without changing results: outputs are
//! bit-identical for any worker count.

use rayon::prelude::*;
use thiserror::Error;

use crate::network::{CoefficientSet, TemperatureState};
use crate::reference::Spectrum;

/// Largest accepted stage count. More iterations stop paying off well before
/// this; sweep outputs flag anything above [`RECOMMENDED_MAX_STAGES`].
pub const MAX_STAGES: u32 = 16;

/// Stage counts above this are accepted but marked in sweep metadata.
pub const RECOMMENDED_MAX_STAGES: u32 = 7;

/// Below this |z| the phi functions switch from the closed form to a Taylor
/// polynomial; the two branches agree to a relative jump under 1e-12 at the
/// switch point (covered by tests).
const PHI_TAYLOR_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("stepsize must be positive and finite, got {0}")]
    InvalidStepsize(f64),
    #[error("final time must be positive and finite, got {0}")]
    InvalidFinalTime(f64),
    #[error("stage count {0} outside 1..={MAX_STAGES}")]
    InvalidStageCount(u32),
    #[error("vector length {got} does not match the {expected}-cell coefficient set")]
    SizeMismatch { expected: usize, got: usize },
    #[error(
        "non-finite temperature after step {step} (t = {time:.6e}); explicit Euler diverges for h above 2/|lambda_max|"
    )]
    NonFiniteState { step: usize, time: f64 },
    #[error("unknown scheme token `{0}` (expected `euler`, `cnK` or `lnK` with K in 1..={MAX_STAGES})")]
    UnknownToken(String),
}

/// phi1(z) = (e^z - 1)/z, evaluated without cancellation for z <= 0.
///
/// phi1(0) = 1. Uses an eight-term Taylor polynomial below the switch
/// threshold and `exp_m1` above it; relative error stays under 1e-13 across
/// the domain.
pub fn phi1(z: f64) -> f64 {
    debug_assert!(z <= 0.0 && !z.is_nan(), "phi1 domain is z <= 0, got {z}");
    if z.abs() < PHI_TAYLOR_THRESHOLD {
        phi1_taylor(z)
    } else {
        phi1_direct(z)
    }
}

/// phi2(z) = (e^z - 1 - z)/z^2, with phi2(0) = 1/2; same evaluation strategy
/// as [`phi1`].
pub fn phi2(z: f64) -> f64 {
    debug_assert!(z <= 0.0 && !z.is_nan(), "phi2 domain is z <= 0, got {z}");
    if z.abs() < PHI_TAYLOR_THRESHOLD {
        phi2_taylor(z)
    } else {
        phi2_direct(z)
    }
}

// sum_{k=0..7} z^k/(k+1)!
pub(crate) fn phi1_taylor(z: f64) -> f64 {
    let c = [
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
    ];
    c.iter().rev().fold(0.0, |acc, &ck| acc * z + ck)
}

pub(crate) fn phi1_direct(z: f64) -> f64 {
    z.exp_m1() / z
}

// sum_{k=0..7} z^k/(k+2)!
pub(crate) fn phi2_taylor(z: f64) -> f64 {
    let c = [
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
    ];
    c.iter().rev().fold(0.0, |acc, &ck| acc * z + ck)
}

pub(crate) fn phi2_direct(z: f64) -> f64 {
    (z.exp_m1() - z) / (z * z)
}

/// Scheme family: the neighbour model used within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeFamily {
    ConstantNeighbour,
    LinearNeighbour,
    Euler,
}

/// A concrete integrator: family plus stage count.
///
/// `stages` counts per-step stage evaluations: CNk runs k constant-neighbour
/// stages, LNk one predictor plus k-1 corrector stages. Euler ignores the
/// stage count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeSpec {
    family: SchemeFamily,
    stages: u32,
}

impl SchemeSpec {
    pub fn constant_neighbour(stages: u32) -> Result<Self, SchemeError> {
        if !(1..=MAX_STAGES).contains(&stages) {
            return Err(SchemeError::InvalidStageCount(stages));
        }
        Ok(SchemeSpec {
            family: SchemeFamily::ConstantNeighbour,
            stages,
        })
    }

    pub fn linear_neighbour(stages: u32) -> Result<Self, SchemeError> {
        if !(1..=MAX_STAGES).contains(&stages) {
            return Err(SchemeError::InvalidStageCount(stages));
        }
        Ok(SchemeSpec {
            family: SchemeFamily::LinearNeighbour,
            stages,
        })
    }

    pub fn euler() -> Self {
        SchemeSpec {
            family: SchemeFamily::Euler,
            stages: 1,
        }
    }

    pub fn family(&self) -> SchemeFamily {
        self.family
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    /// Stage evaluations per step, the machine-independent cost unit.
    pub fn stage_evaluations_per_step(&self) -> u32 {
        match self.family {
            SchemeFamily::Euler => 1,
            _ => self.stages,
        }
    }

    /// True for stage counts beyond the range that still improves accuracy.
    pub fn is_high_iteration(&self) -> bool {
        self.family != SchemeFamily::Euler && self.stages > RECOMMENDED_MAX_STAGES
    }

    /// Token used in CLI flags and CSV output: `euler`, `cnK`, `lnK`.
    pub fn token(&self) -> String {
        match self.family {
            SchemeFamily::Euler => "euler".to_string(),
            SchemeFamily::ConstantNeighbour => format!("cn{}", self.stages),
            SchemeFamily::LinearNeighbour => format!("ln{}", self.stages),
        }
    }
}

impl std::fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.token())
    }
}

impl std::str::FromStr for SchemeSpec {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, SchemeError> {
        let token = s.trim().to_ascii_lowercase();
        if token == "euler" {
            return Ok(SchemeSpec::euler());
        }
        let bad = || SchemeError::UnknownToken(s.to_string());
        if let Some(k) = token.strip_prefix("cn") {
            let k: u32 = k.parse().map_err(|_| bad())?;
            return SchemeSpec::constant_neighbour(k);
        }
        if let Some(k) = token.strip_prefix("ln") {
            let k: u32 = k.parse().map_err(|_| bad())?;
            return SchemeSpec::linear_neighbour(k);
        }
        Err(bad())
    }
}

/// Per-cell exponential factors of a fixed stepsize: `E = e^{m_ii h}`,
/// `P1 = h phi1(m_ii h)`, `P2 = h^2 phi2(m_ii h)`.
///
/// For every cell `0 < E <= 1` (E = 1 only when isolated), `P1, P2 > 0`, and
/// `E + (-m_ii) P1 = 1` up to rounding, which is the weight identity that
/// makes source-free updates convex combinations. Isolated cells hit the
/// z = 0 limits exactly: E = 1, P1 = h, P2 = h^2/2.
#[derive(Debug, Clone)]
pub struct StepPlan {
    h: f64,
    decay: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl StepPlan {
    pub fn new(coeffs: &CoefficientSet, h: f64) -> Result<Self, SchemeError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(SchemeError::InvalidStepsize(h));
        }
        let n = coeffs.cell_count();
        let mut decay = Vec::with_capacity(n);
        let mut p1 = Vec::with_capacity(n);
        let mut p2 = Vec::with_capacity(n);
        for i in 0..n {
            let z = coeffs.diagonal(i) * h;
            decay.push(z.exp());
            p1.push(h * phi1(z));
            p2.push(h * h * phi2(z));
        }
        Ok(StepPlan { h, decay, p1, p2 })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn decay(&self, i: usize) -> f64 {
        self.decay[i]
    }

    pub fn p1(&self, i: usize) -> f64 {
        self.p1[i]
    }

    pub fn p2(&self, i: usize) -> f64 {
        self.p2[i]
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }
}

fn check_len(coeffs: &CoefficientSet, v: &[f64]) -> Result<(), SchemeError> {
    if v.len() != coeffs.cell_count() {
        return Err(SchemeError::SizeMismatch {
            expected: coeffs.cell_count(),
            got: v.len(),
        });
    }
    Ok(())
}

// Stage maps are chunked to keep rayon overhead negligible on small systems;
// each output element depends only on its own cell, so results are identical
// for any worker count.
const PAR_MIN_LEN: usize = 512;

/// One constant-neighbour stage: each unpinned cell decays from its step-start
/// value toward the aggregate of the neighbour estimates `w`.
///
/// `u_start` is always the step's initial vector; only `w` changes between
/// iterations (CN1 passes `w = u_start`, CN2 the previous stage's output).
/// Pinned cells are returned unchanged.
pub fn cn_stage(
    u_start: &[f64],
    w: &[f64],
    plan: &StepPlan,
    coeffs: &CoefficientSet,
) -> Result<Vec<f64>, SchemeError> {
    check_len(coeffs, u_start)?;
    check_len(coeffs, w)?;
    let out = (0..coeffs.cell_count())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| {
            if coeffs.is_pinned(i) {
                u_start[i]
            } else {
                u_start[i] * plan.decay[i] + coeffs.neighbour_aggregate(i, w) * plan.p1[i]
            }
        })
        .collect();
    Ok(out)
}

/// One linear-neighbour corrector stage: neighbours are modelled as moving
/// linearly from their step-start values toward the predicted end-of-step
/// values `w_pred`.
///
/// The slope term `s_i = sum_j m_ij (w_pred_j - u_start_j) / h` carries no
/// source contribution because the sources cancel in the difference. Pinned
/// cells are returned unchanged and, since their predicted value equals their
/// held value, contribute zero slope.
pub fn ln_stage(
    u_start: &[f64],
    w_pred: &[f64],
    plan: &StepPlan,
    coeffs: &CoefficientSet,
) -> Result<Vec<f64>, SchemeError> {
    check_len(coeffs, u_start)?;
    check_len(coeffs, w_pred)?;
    let h = plan.h;
    let out = (0..coeffs.cell_count())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| {
            if coeffs.is_pinned(i) {
                u_start[i]
            } else {
                let slope: f64 = coeffs
                    .row(i)
                    .map(|(j, m)| m * (w_pred[j] - u_start[j]))
                    .sum::<f64>()
                    / h;
                u_start[i] * plan.decay[i]
                    + coeffs.neighbour_aggregate(i, u_start) * plan.p1[i]
                    + slope * plan.p2[i]
            }
        })
        .collect();
    Ok(out)
}

fn euler_step(u: &[f64], h: f64, coeffs: &CoefficientSet) -> Vec<f64> {
    (0..coeffs.cell_count())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| {
            if coeffs.is_pinned(i) {
                u[i]
            } else {
                u[i] + h * (coeffs.neighbour_aggregate(i, u) + coeffs.diagonal(i) * u[i])
            }
        })
        .collect()
}

/// Advances the state by one step of the given scheme. The plan must have
/// been built for `coeffs` with the desired stepsize.
pub fn step(
    state: &TemperatureState,
    scheme: SchemeSpec,
    plan: &StepPlan,
    coeffs: &CoefficientSet,
) -> Result<TemperatureState, SchemeError> {
    let u = state.temperatures();
    check_len(coeffs, u)?;
    let next = match scheme.family {
        SchemeFamily::Euler => euler_step(u, plan.h, coeffs),
        SchemeFamily::ConstantNeighbour => {
            let mut w = u.to_vec();
            for _ in 0..scheme.stages {
                w = cn_stage(u, &w, plan, coeffs)?;
            }
            w
        }
        SchemeFamily::LinearNeighbour => {
            let mut p = cn_stage(u, u, plan, coeffs)?;
            for _ in 1..scheme.stages {
                p = ln_stage(u, &p, plan, coeffs)?;
            }
            p
        }
    };
    Ok(TemperatureState::new(next, state.time() + plan.h))
}

/// Number of steps [`integrate`] will take: full steps of `h` plus one
/// shrunk final step when `t_final` is not an integer multiple of `h`.
pub fn planned_steps(h: f64, t_final: f64) -> usize {
    let (full, partial) = split_steps(h, t_final);
    full + usize::from(partial > 0.0)
}

/// Splits the horizon into `n` full steps of `h` and a trailing partial step
/// (0.0 when the horizon divides evenly, within rounding).
fn split_steps(h: f64, t_final: f64) -> (usize, f64) {
    let full = ((t_final / h) * (1.0 + 1e-12)).floor() as usize;
    let rem = t_final - full as f64 * h;
    if rem > t_final * 1e-12 {
        (full, rem)
    } else {
        (full, 0.0)
    }
}

/// Integrates from the given state to exactly `t_final` with fixed stepsize
/// `h`, shrinking the final step (with its own plan) to land on the horizon.
///
/// Fails with [`SchemeError::NonFiniteState`] if a step produces a non-finite
/// temperature; among the provided schemes only Euler above its stability
/// limit can trigger this.
pub fn integrate(
    coeffs: &CoefficientSet,
    scheme: SchemeSpec,
    h: f64,
    t_final: f64,
    initial: TemperatureState,
) -> Result<TemperatureState, SchemeError> {
    integrate_with(coeffs, scheme, h, t_final, initial, |_| {})
}

/// [`integrate`] that hands every intermediate state to `observer`.
pub fn integrate_with<F: FnMut(&TemperatureState)>(
    coeffs: &CoefficientSet,
    scheme: SchemeSpec,
    h: f64,
    t_final: f64,
    initial: TemperatureState,
    mut observer: F,
) -> Result<TemperatureState, SchemeError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(SchemeError::InvalidStepsize(h));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(SchemeError::InvalidFinalTime(t_final));
    }
    check_len(coeffs, initial.temperatures())?;

    let (full_steps, partial) = split_steps(h, t_final);
    let start_time = initial.time();
    let mut state = initial;
    let mut steps_taken = 0usize;

    if full_steps > 0 {
        let plan = StepPlan::new(coeffs, h)?;
        for k in 0..full_steps {
            state = step(&state, scheme, &plan, coeffs)?;
            steps_taken += 1;
            // reconstruct the time multiplicatively so long runs do not drift
            state.set_time(start_time + (k + 1) as f64 * h);
            if !state.all_finite() {
                return Err(SchemeError::NonFiniteState {
                    step: steps_taken,
                    time: state.time(),
                });
            }
            observer(&state);
        }
    }
    if partial > 0.0 {
        let plan = StepPlan::new(coeffs, partial)?;
        state = step(&state, scheme, &plan, coeffs)?;
        steps_taken += 1;
        state.set_time(start_time + t_final);
        if !state.all_finite() {
            return Err(SchemeError::NonFiniteState {
                step: steps_taken,
                time: state.time(),
            });
        }
        observer(&state);
    }
    state.set_time(start_time + t_final);
    Ok(state)
}

/// Largest stable explicit-Euler stepsize, `2 / |lambda_max|`.
///
/// Above this threshold Euler necessarily diverges; the exponential schemes
/// have no such limit. Returns infinity for networks without edges.
pub fn euler_max_step(spectrum: &Spectrum) -> f64 {
    let lambda = spectrum.lambda_max_magnitude();
    if lambda == 0.0 {
        f64::INFINITY
    } else {
        2.0 / lambda
    }
}

/// Weight of a neighbour's step-start value inside one LN2 update, without
/// the nonnegative `m_ij/(-m_ii)` prefactor:
///
/// ```text
/// (1 - e^{z_self}) + (1 - e^{z_other}) (phi1(z_self) - 1)
/// ```
///
/// with `z_self = m_ii h < 0` and `z_other = m_jj h <= 0`. Nonnegativity of
/// this bracket over the whole domain is what keeps LN2 updates convex
/// combinations of step-start values.
pub fn ln2_neighbour_coefficient(z_self: f64, z_other: f64) -> f64 {
    debug_assert!(z_self < 0.0 && z_other <= 0.0);
    (-z_self.exp_m1()) + (-z_other.exp_m1()) * (phi1(z_self) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Cell, CellNetwork, Edge, two_cell_unit};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn unit_coeffs() -> CoefficientSet {
        two_cell_unit(0.0, 1.0).assemble().unwrap()
    }

    #[test]
    fn phi1_limit_and_reference_values() {
        assert_eq!(phi1(0.0), 1.0);
        // (e^{-ln 2} - 1)/(-ln 2) = 1/(2 ln 2)
        let expected = 1.0 / (2.0 * LN_2);
        assert!(((phi1(-LN_2) - expected) / expected).abs() < 1e-15);
        // near zero the two-term Taylor expansion is the oracle
        let z = -1e-10;
        let oracle = 1.0 + z / 2.0;
        assert!(((phi1(z) - oracle) / oracle).abs() < 1e-13);
    }

    #[test]
    fn phi2_limit_and_reference_values() {
        assert_eq!(phi2(0.0), 0.5);
        // (1/2 - 1 + ln 2)/(ln 2)^2
        let expected = (LN_2 - 0.5) / (LN_2 * LN_2);
        assert!(((phi2(-LN_2) - expected) / expected).abs() < 1e-14);
        let z = -1e-10;
        let oracle = 0.5 + z / 6.0;
        assert!(((phi2(z) - oracle) / oracle).abs() < 1e-13);
    }

    #[test]
    fn phi_branches_agree_at_the_switch_point() {
        let z = -PHI_TAYLOR_THRESHOLD;
        let rel1 = ((phi1_taylor(z) - phi1_direct(z)) / phi1_direct(z)).abs();
        let rel2 = ((phi2_taylor(z) - phi2_direct(z)) / phi2_direct(z)).abs();
        assert!(rel1 < 1e-12, "phi1 jump {rel1:.3e}");
        assert!(rel2 < 1e-12, "phi2 jump {rel2:.3e}");
    }

    #[test]
    fn plan_on_unit_pair_at_half_life() {
        let plan = StepPlan::new(&unit_coeffs(), LN_2).unwrap();
        assert!((plan.decay(0) - 0.5).abs() < 1e-16);
        assert!((plan.p1(0) - 0.5).abs() < 1e-15);
        assert!((plan.p2(0) - (LN_2 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn plan_isolated_cell_hits_exact_limits() {
        let net = CellNetwork::new(vec![Cell::at(5.0)], vec![]);
        let coeffs = net.assemble().unwrap();
        let h = 0.37;
        let plan = StepPlan::new(&coeffs, h).unwrap();
        assert_eq!(plan.decay(0), 1.0);
        assert_eq!(plan.p1(0), h);
        assert_eq!(plan.p2(0), h * h / 2.0);
    }

    #[test]
    fn plan_extreme_stiffness_saturates_at_tau() {
        let h = 1e6; // tau = 1 on the unit pair
        let plan = StepPlan::new(&unit_coeffs(), h).unwrap();
        assert!(plan.decay(0) < 1e-300);
        assert!((plan.p1(0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plan_rejects_non_positive_stepsize() {
        assert_eq!(
            StepPlan::new(&unit_coeffs(), 0.0).unwrap_err(),
            SchemeError::InvalidStepsize(0.0)
        );
        assert!(StepPlan::new(&unit_coeffs(), f64::NAN).is_err());
    }

    #[test]
    fn cn_stage_half_life_meets_in_the_middle() {
        let coeffs = unit_coeffs();
        let plan = StepPlan::new(&coeffs, LN_2).unwrap();
        let u = [0.0, 1.0];
        let out = cn_stage(&u, &u, &plan, &coeffs).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cn_stage_infinite_step_swaps_neighbour_values() {
        let coeffs = unit_coeffs();
        let plan = StepPlan::new(&coeffs, 1e9).unwrap();
        let u = [0.0, 1.0];
        let out = cn_stage(&u, &u, &plan, &coeffs).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-9);
        assert!(out[1].abs() < 1e-9);
    }

    #[test]
    fn cn_stage_isolated_cell_integrates_its_source() {
        let net = CellNetwork::new(
            vec![Cell {
                capacity: 1.0,
                source: 2.0,
                initial_temperature: 5.0,
                pinned: None,
            }],
            vec![],
        );
        let coeffs = net.assemble().unwrap();
        let h = 0.81;
        let plan = StepPlan::new(&coeffs, h).unwrap();
        let out = cn_stage(&[5.0], &[5.0], &plan, &coeffs).unwrap();
        assert_eq!(out[0], 5.0 + 2.0 * h);
    }

    #[test]
    fn ln_stage_corrects_toward_the_exact_value() {
        let coeffs = unit_coeffs();
        let plan = StepPlan::new(&coeffs, LN_2).unwrap();
        let u = [0.0, 1.0];
        let pred = cn_stage(&u, &u, &plan, &coeffs).unwrap();
        let out = ln_stage(&u, &pred, &plan, &coeffs).unwrap();
        // closed form: 0.25/ln 2 and its mirror; exact value at t = ln 2 is 0.375
        let expected = 0.25 / LN_2;
        assert!((out[0] - expected).abs() < 1e-14, "{}", out[0]);
        assert!((out[1] - (1.0 - expected)).abs() < 1e-14);
        let exact = 0.5 - 0.5 * (-2.0 * LN_2).exp();
        assert!((out[0] - exact).abs() < 0.015);
        assert!((pred[0] - exact).abs() > 0.12, "CN error should dominate");
    }

    #[test]
    fn ln_stage_with_zero_slope_equals_cn_stage() {
        let coeffs = unit_coeffs();
        let plan = StepPlan::new(&coeffs, 0.3).unwrap();
        let u = [4.0, -2.0];
        let cn = cn_stage(&u, &u, &plan, &coeffs).unwrap();
        let ln = ln_stage(&u, &u, &plan, &coeffs).unwrap();
        assert_eq!(cn, ln);
    }

    #[test]
    fn stage_size_mismatch_is_reported() {
        let coeffs = unit_coeffs();
        let plan = StepPlan::new(&coeffs, 1.0).unwrap();
        let err = cn_stage(&[0.0], &[0.0, 1.0], &plan, &coeffs).unwrap_err();
        assert_eq!(
            err,
            SchemeError::SizeMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn scheme_tokens_round_trip() {
        for token in ["euler", "cn1", "cn16", "ln2", "ln7"] {
            let spec: SchemeSpec = token.parse().unwrap();
            assert_eq!(spec.token(), token);
        }
        assert!("cn0".parse::<SchemeSpec>().is_err());
        assert!("ln17".parse::<SchemeSpec>().is_err());
        assert!("rk4".parse::<SchemeSpec>().is_err());
    }

    #[test]
    fn ln1_equals_cn1_bit_for_bit() {
        let net = crate::network::build_random_lattice(
            6,
            5,
            (-1.0, 1.0),
            crate::network::ValueSpec::Uniform { lo: 0.0, hi: 1000.0 },
            crate::network::ValueSpec::Uniform {
                lo: -500.0,
                hi: 500.0,
            },
            11,
        )
        .unwrap();
        let coeffs = net.assemble().unwrap();
        let plan = StepPlan::new(&coeffs, 0.05).unwrap();
        let state = net.initial_state();
        let cn = step(&state, SchemeSpec::constant_neighbour(1).unwrap(), &plan, &coeffs).unwrap();
        let ln = step(&state, SchemeSpec::linear_neighbour(1).unwrap(), &plan, &coeffs).unwrap();
        assert_eq!(cn.temperatures(), ln.temperatures());
    }

    #[test]
    fn uniform_state_is_a_fixed_point_for_every_scheme() {
        let net = CellNetwork::new(
            vec![Cell::at(3.25); 4],
            vec![
                Edge::new(0, 1, 0.7),
                Edge::new(1, 2, 1.3),
                Edge::new(2, 3, 0.2),
                Edge::new(0, 3, 2.0),
            ],
        );
        let coeffs = net.assemble().unwrap();
        for scheme in [
            SchemeSpec::euler(),
            SchemeSpec::constant_neighbour(1).unwrap(),
            SchemeSpec::constant_neighbour(4).unwrap(),
            SchemeSpec::linear_neighbour(2).unwrap(),
            SchemeSpec::linear_neighbour(5).unwrap(),
        ] {
            for h in [1e-3, 1.0, 1e4] {
                let plan = StepPlan::new(&coeffs, h).unwrap();
                let out = step(&net.initial_state(), scheme, &plan, &coeffs).unwrap();
                for &u in out.temperatures() {
                    assert!(
                        (u - 3.25).abs() < 1e-12 * 3.25,
                        "{scheme} at h={h}: {u}"
                    );
                }
            }
        }
    }

    #[test]
    fn euler_amplifies_the_difference_mode_beyond_the_limit() {
        let coeffs = unit_coeffs();
        let h = 1.5; // eigenvalues of I + hM are 1 and 1 - 2h = -2
        let plan = StepPlan::new(&coeffs, h).unwrap();
        let mut state = TemperatureState::new(vec![0.0, 1.0], 0.0);
        let mut diff = 1.0;
        for _ in 0..5 {
            state = step(&state, SchemeSpec::euler(), &plan, &coeffs).unwrap();
            diff *= -2.0;
            let got = state.temperatures()[1] - state.temperatures()[0];
            assert!((got - diff).abs() < 1e-9 * diff.abs());
        }
    }

    #[test]
    fn integrate_shrinks_the_final_step() {
        let coeffs = unit_coeffs();
        let mut times = Vec::new();
        let state = integrate_with(
            &coeffs,
            SchemeSpec::constant_neighbour(1).unwrap(),
            0.3,
            1.0,
            TemperatureState::new(vec![0.0, 1.0], 0.0),
            |s| times.push(s.time()),
        )
        .unwrap();
        assert_eq!(times.len(), 4);
        assert!((times[0] - 0.3).abs() < 1e-15);
        assert!((times[2] - 0.9).abs() < 1e-15);
        assert_eq!(state.time(), 1.0);
    }

    #[test]
    fn integrate_clamps_oversized_steps() {
        let coeffs = unit_coeffs();
        let mut count = 0;
        let state = integrate_with(
            &coeffs,
            SchemeSpec::linear_neighbour(2).unwrap(),
            2.0,
            1.0,
            TemperatureState::new(vec![0.0, 1.0], 0.0),
            |_| count += 1,
        )
        .unwrap();
        assert_eq!(count, 1);
        assert_eq!(state.time(), 1.0);
    }

    #[test]
    fn integrate_exact_multiple_takes_no_partial_step() {
        assert_eq!(planned_steps(0.1, 1.0), 10);
        assert_eq!(planned_steps(0.3, 1.0), 4);
        assert_eq!(planned_steps(2.0, 1.0), 1);
        assert_eq!(planned_steps(0.1, 0.3), 3);
    }

    #[test]
    fn integrate_matches_two_cell_closed_form() {
        let coeffs = unit_coeffs();
        let state = integrate(
            &coeffs,
            SchemeSpec::linear_neighbour(3).unwrap(),
            0.01,
            1.0,
            TemperatureState::new(vec![0.0, 1.0], 0.0),
        )
        .unwrap();
        let exact0 = 0.5 - 0.5 * (-2.0f64).exp();
        let exact1 = 0.5 + 0.5 * (-2.0f64).exp();
        assert!((state.temperatures()[0] - exact0).abs() < 1e-4);
        assert!((state.temperatures()[1] - exact1).abs() < 1e-4);
    }

    #[test]
    fn integrate_reports_euler_blowup() {
        let coeffs = unit_coeffs();
        let err = integrate(
            &coeffs,
            SchemeSpec::euler(),
            1.5,
            3000.0,
            TemperatureState::new(vec![0.0, 1.0], 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, SchemeError::NonFiniteState { .. }));
    }

    #[test]
    fn pinned_cells_never_move() {
        let net = CellNetwork::new(
            vec![
                Cell {
                    pinned: Some(0.0),
                    ..Cell::at(0.0)
                },
                Cell::at(100.0),
                Cell::at(50.0),
            ],
            vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)],
        );
        let coeffs = net.assemble().unwrap();
        for scheme in [
            SchemeSpec::euler(),
            SchemeSpec::constant_neighbour(3).unwrap(),
            SchemeSpec::linear_neighbour(3).unwrap(),
        ] {
            let state = integrate(&coeffs, scheme, 0.1, 5.0, net.initial_state()).unwrap();
            assert_eq!(state.temperatures()[0], 0.0, "{scheme}");
            // heat drains through the pinned end
            assert!(state.temperatures()[1] < 100.0);
        }
    }

    #[test]
    fn stage_results_do_not_depend_on_worker_count() {
        let net = crate::network::build_random_lattice(
            40,
            30,
            (-1.0, 1.0),
            crate::network::ValueSpec::Uniform { lo: 0.0, hi: 1000.0 },
            crate::network::ValueSpec::Uniform {
                lo: -500.0,
                hi: 500.0,
            },
            3,
        )
        .unwrap();
        let coeffs = net.assemble().unwrap();
        let plan = StepPlan::new(&coeffs, 0.02).unwrap();
        let u: Vec<f64> = net.initial_state().into_temperatures();
        let w: Vec<f64> = u.iter().map(|x| x * 0.9 + 1.0).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                (
                    cn_stage(&u, &w, &plan, &coeffs).unwrap(),
                    ln_stage(&u, &w, &plan, &coeffs).unwrap(),
                )
            })
        };
        let (cn1, ln1) = run(1);
        let (cn4, ln4) = run(4);
        assert_eq!(cn1, cn4);
        assert_eq!(ln1, ln4);
    }

    #[test]
    fn ln2_coefficient_stays_nonnegative_on_a_coarse_grid() {
        let mags = [1e-8, 1e-4, 1e-1, 1.0, 1e2, 1e6, 1e8];
        for &a in &mags {
            for &b in &mags {
                let c = ln2_neighbour_coefficient(-a, -b);
                assert!(c >= -1e-12, "z1=-{a}, zj=-{b}: {c}");
            }
            let c = ln2_neighbour_coefficient(-a, 0.0);
            assert!(c >= -1e-12);
        }
    }

    proptest! {
        // convexity: E + (-m_ii) P1 = 1 up to rounding
        #[test]
        fn plan_weight_identity(log_rate in -8.0f64..8.0, log_h in -8.0f64..8.0) {
            let rate = 10f64.powf(log_rate);
            let net = CellNetwork::new(
                vec![Cell::at(0.0), Cell::at(1.0)],
                vec![Edge::new(0, 1, 1.0 / rate)],
            );
            let coeffs = net.assemble().unwrap();
            let plan = StepPlan::new(&coeffs, 10f64.powf(log_h)).unwrap();
            for i in 0..2 {
                prop_assert!(plan.decay(i) > 0.0 && plan.decay(i) <= 1.0);
                prop_assert!(plan.p1(i) > 0.0);
                prop_assert!(plan.p2(i) > 0.0);
                let identity = plan.decay(i) + (-coeffs.diagonal(i)) * plan.p1(i);
                prop_assert!((identity - 1.0).abs() < 1e-13);
            }
        }

        // max-min principle on small random source-free networks
        #[test]
        fn source_free_iterates_stay_in_the_initial_range(
            seed in 0u64..5000,
            stages in 1u32..6,
            linear in proptest::bool::ANY,
            log_h in -6.0f64..6.0,
            steps in 1usize..12,
        ) {
            let net = crate::testutil::random_network(seed, 8, 0.0);
            let coeffs = net.assemble().unwrap();
            let scheme = if linear {
                SchemeSpec::linear_neighbour(stages.max(2)).unwrap()
            } else {
                SchemeSpec::constant_neighbour(stages).unwrap()
            };
            let u0 = net.initial_state();
            let lo = u0.temperatures().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = u0.temperatures().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-10 * (hi - lo).max(1e-30);
            let plan = StepPlan::new(&coeffs, 10f64.powf(log_h)).unwrap();
            let mut state = u0;
            for _ in 0..steps {
                state = step(&state, scheme, &plan, &coeffs).unwrap();
                for &u in state.temperatures() {
                    prop_assert!(u >= lo - slack && u <= hi + slack,
                        "{u} outside [{lo}, {hi}]");
                }
            }
        }
    }
}
