//! Goodness-of-fit and moment statistics for comparing circuits with the oracle.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::oracle::WalkTrace;

/// Bins with smaller expected counts are merged into their neighbours.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("expected {expected} bins, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected count {0} in bin {1} is not positive")]
    NonPositiveExpected(f64, usize),
    #[error("all observed counts are zero")]
    AllZero,
    #[error("no traces")]
    Empty,
    #[error("regression needs at least two points with positive values")]
    TooFewPoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

impl GofResult {
    fn from_statistic(statistic: f64, degrees_of_freedom: usize) -> Self {
        // gamma_ur rejects x = 0
        let p_value = if degrees_of_freedom == 0 || statistic <= 0.0 {
            1.0
        } else {
            gamma_ur(degrees_of_freedom as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
        };
        Self { statistic, degrees_of_freedom, p_value }
    }
}

/// Upper-tail chi-square probability.
pub fn chi_square_sf(statistic: f64, degrees_of_freedom: usize) -> f64 {
    GofResult::from_statistic(statistic, degrees_of_freedom).p_value
}

/// Sum of `(o - e)^2 / e` over bins, with no merging.
pub fn pearson_statistic(observed: &[u64], expected: &[f64]) -> Result<f64, StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::LengthMismatch { expected: expected.len(), got: observed.len() });
    }
    observed
        .iter()
        .zip(expected)
        .enumerate()
        .map(|(i, (&o, &e))| {
            if e > 0.0 {
                Ok((o as f64 - e).powi(2) / e)
            } else {
                Err(StatsError::NonPositiveExpected(e, i))
            }
        })
        .sum()
}

/// Groups consecutive bins until each group's weight reaches [`MIN_EXPECTED`];
/// a light tail joins the last group. Returns group boundaries as bin ranges.
fn merge_groups(weights: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let (mut start, mut acc) = (0, 0.0);
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc >= MIN_EXPECTED {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match groups.last_mut() {
            Some(last) => last.end = weights.len(),
            None => groups.push(start..weights.len()),
        }
    }
    groups
}

/// Pearson goodness of fit of `observed` against fixed `expected` counts.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<GofResult, StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::LengthMismatch { expected: expected.len(), got: observed.len() });
    }
    if let Some((i, &e)) = expected.iter().enumerate().find(|(_, &e)| e <= 0.0 || e.is_nan()) {
        return Err(StatsError::NonPositiveExpected(e, i));
    }
    if observed.iter().all(|&o| o == 0) {
        return Err(StatsError::AllZero);
    }
    let groups = merge_groups(expected);
    let statistic = groups
        .iter()
        .map(|g| {
            let o: u64 = observed[g.clone()].iter().sum();
            let e: f64 = expected[g.clone()].iter().sum();
            (o as f64 - e).powi(2) / e
        })
        .sum();
    Ok(GofResult::from_statistic(statistic, groups.len().saturating_sub(1)))
}

/// Two-sample chi-square test that `a` and `b` are draws from the same
/// categorical distribution (2 x k contingency table). Bins empty in both
/// samples are dropped; sparse bins are merged on their pooled expected count.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<GofResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(StatsError::AllZero);
    }
    let bins: Vec<(u64, u64)> = a.iter().zip(b).map(|(&x, &y)| (x, y)).filter(|&(x, y)| x + y > 0).collect();
    let total = na + nb;
    let smaller = na.min(nb);
    // expected count of the smaller sample in each bin
    let weights: Vec<f64> = bins.iter().map(|&(x, y)| (x + y) as f64 * smaller / total).collect();
    let groups = merge_groups(&weights);
    let statistic = groups
        .iter()
        .map(|g| {
            let (x, y) = bins[g.clone()].iter().fold((0u64, 0u64), |(sx, sy), &(x, y)| (sx + x, sy + y));
            let col = (x + y) as f64;
            let (ea, eb) = (col * na / total, col * nb / total);
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum();
    Ok(GofResult::from_statistic(statistic, groups.len().saturating_sub(1)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementStats {
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
    /// `sqrt(variance / K)`.
    pub stderr: Vec<f64>,
}

/// Per-dimension moments of final minus initial position.
pub fn displacement_stats(traces: &[WalkTrace]) -> Result<DisplacementStats, StatsError> {
    let first = traces.first().ok_or(StatsError::Empty)?;
    let dims = first.final_position().len();
    let k = traces.len() as f64;
    let disp: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            let start = t.positions.first().map_or(&[][..], Vec::as_slice);
            (0..dims)
                .map(|d| (t.final_position()[d] - start.get(d).copied().unwrap_or(0)) as f64)
                .collect()
        })
        .collect();
    let mean: Vec<f64> = (0..dims).map(|d| disp.iter().map(|x| x[d]).sum::<f64>() / k).collect();
    let variance: Vec<f64> = (0..dims)
        .map(|d| {
            if traces.len() < 2 {
                0.0
            } else {
                disp.iter().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / (k - 1.0)
            }
        })
        .collect();
    let stderr = variance.iter().map(|v| (v / k).sqrt()).collect();
    Ok(DisplacementStats { mean, variance, stderr })
}

/// Ordinary least-squares `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewPoints);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::TooFewPoints);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(StatsError::TooFewPoints);
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).map(|(slope, _)| slope)
}
