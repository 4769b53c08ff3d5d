//! Error measures and convergence-order estimation.
//!
//! Three deviation measures compare a numerical temperature vector against a
//! reference: the worst cell ([`max_d`]), the summed deviation ([`sum_d`])
//! and the capacity-weighted sum ([`s_en_d`], the deviation in energy terms).
//! The summed measures grow with cell count, so reports also carry them
//! divided by sqrt(N). [`fit_order`] turns an (h, error) curve into an
//! empirical convergence order via a log-log least-squares slope.

use thiserror::Error;

use crate::schemes::SchemeSpec;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("vector lengths differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("order fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("order fit needs strictly decreasing stepsizes")]
    StepsNotDecreasing,
    #[error(
        "non-positive error {error:.3e} at h = {h:.3e}; trim plateau-contaminated points before fitting"
    )]
    NonPositiveError { h: f64, error: f64 },
    #[error("malformed report row `{0}`")]
    MalformedRow(String),
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Largest absolute componentwise deviation.
pub fn max_d(u_ref: &[f64], u_num: &[f64]) -> Result<f64, MetricsError> {
    check_len(u_ref, u_num)?;
    Ok(u_ref
        .iter()
        .zip(u_num)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())))
}

/// Sum of absolute deviations over all cells.
pub fn sum_d(u_ref: &[f64], u_num: &[f64]) -> Result<f64, MetricsError> {
    check_len(u_ref, u_num)?;
    Ok(u_ref.iter().zip(u_num).map(|(a, b)| (a - b).abs()).sum())
}

/// Capacity-weighted sum of absolute deviations: the error in energy terms,
/// where a deviation in a large cell weighs more than in a tiny one.
pub fn s_en_d(u_ref: &[f64], u_num: &[f64], capacities: &[f64]) -> Result<f64, MetricsError> {
    check_len(u_ref, u_num)?;
    check_len(u_ref, capacities)?;
    Ok(u_ref
        .iter()
        .zip(u_num)
        .zip(capacities)
        .map(|((a, b), c)| c * (a - b).abs())
        .sum())
}

/// One comparison between a scheme run and its reference.
///
/// `sum_dn` and `s_en_dn` are the sqrt(N)-normalised forms, computed exactly
/// once when the report is built.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Scheme token (`euler`, `cnK`, `lnK`).
    pub scheme: String,
    /// Stage count per step.
    pub stages: u32,
    pub h: f64,
    pub cells: usize,
    pub max_d: f64,
    pub sum_d: f64,
    pub s_en_d: f64,
    pub sum_dn: f64,
    pub s_en_dn: f64,
}

impl ErrorReport {
    /// Compares a numerical result against a reference and fills every
    /// measure, including the normalised ones.
    pub fn from_comparison(
        scheme: SchemeSpec,
        h: f64,
        u_ref: &[f64],
        u_num: &[f64],
        capacities: &[f64],
    ) -> Result<Self, MetricsError> {
        let report = ErrorReport {
            scheme: scheme.token(),
            stages: scheme.stage_evaluations_per_step(),
            h,
            cells: u_ref.len(),
            max_d: max_d(u_ref, u_num)?,
            sum_d: sum_d(u_ref, u_num)?,
            s_en_d: s_en_d(u_ref, u_num, capacities)?,
            sum_dn: 0.0,
            s_en_dn: 0.0,
        };
        Ok(report.normalize())
    }

    /// Fills the normalised fields by dividing the summed measures by
    /// sqrt(N). [`ErrorReport::from_comparison`] already applies this; the
    /// division is never applied to the raw fields themselves, so the raw and
    /// normalised values always coexist.
    pub fn normalize(mut self) -> Self {
        let root = (self.cells as f64).sqrt();
        self.sum_dn = self.sum_d / root;
        self.s_en_dn = self.s_en_d / root;
        self
    }

    /// Column order of the CSV serialisation.
    pub fn csv_header() -> &'static str {
        "scheme,k,h,N,max_d,sum_d,s_en_d,sum_dn,s_en_dn"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.stages,
            self.h,
            self.cells,
            self.max_d,
            self.sum_d,
            self.s_en_d,
            self.sum_dn,
            self.s_en_dn
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self, MetricsError> {
        let bad = || MetricsError::MalformedRow(row.to_string());
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(ErrorReport {
            scheme: fields[0].to_string(),
            stages: fields[1].parse().map_err(|_| bad())?,
            h: num(fields[2])?,
            cells: fields[3].parse().map_err(|_| bad())?,
            max_d: num(fields[4])?,
            sum_d: num(fields[5])?,
            s_en_d: num(fields[6])?,
            sum_dn: num(fields[7])?,
            s_en_dn: num(fields[8])?,
        })
    }
}

/// Least-squares slope of log(error) against log(h).
///
/// Expects at least three points with strictly decreasing `h` and positive
/// errors. A non-positive error signals that the curve has hit a plateau
/// (or an exact cancellation); the caller must trim such points first.
pub fn fit_order(points: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    for pair in points.windows(2) {
        if pair[1].0 >= pair[0].0 {
            return Err(MetricsError::StepsNotDecreasing);
        }
    }
    for &(h, error) in points {
        if !(error > 0.0) {
            return Err(MetricsError::NonPositiveError { h, error });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(h, _)| h.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - x_mean) * (y - y_mean);
        var += (x - x_mean) * (x - x_mean);
    }
    Ok(cov / var)
}
