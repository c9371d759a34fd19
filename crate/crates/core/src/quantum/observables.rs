//! Ensemble reductions over trajectory records.

use serde::Serialize;

use super::TrajectoryRecord;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::single_atom::{RatePair, ThreeLevelAtom};

/// Per-site trajectory average with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleAverage {
    pub times: Vec<f64>,
    /// `mean[k][i]`
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_traj: usize,
}

/// Mean and standard error of the chain concentration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

fn check_grids(records: &[TrajectoryRecord]) -> Result<&TrajectoryRecord> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no trajectory records".into()))?;
    if records
        .iter()
        .any(|r| r.times != first.times || r.samples.len() != first.samples.len())
    {
        return Err(Error::InvalidArgument("records do not share an output grid".into()));
    }
    Ok(first)
}

/// Running mean and variance, accumulated in record order.
fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    let se = if n > 1.0 {
        (m2 / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

pub fn ensemble_average(records: &[TrajectoryRecord]) -> Result<EnsembleAverage> {
    let first = check_grids(records)?;
    let n_sites = first.samples.first().map_or(0, Vec::len);
    let mut mean = Vec::with_capacity(first.times.len());
    let mut stderr = Vec::with_capacity(first.times.len());
    for k in 0..first.samples.len() {
        let (m, s): (Vec<f64>, Vec<f64>) = (0..n_sites)
            .map(|i| mean_stderr(records.iter().map(|r| r.samples[k][i])))
            .unzip();
        mean.push(m);
        stderr.push(s);
    }
    Ok(EnsembleAverage {
        times: first.times.clone(),
        mean,
        stderr,
        n_traj: records.len(),
    })
}

/// `r(t) = (1/N) sum_i R_i(t)`.
pub fn concentration(per_site: &[Vec<f64>]) -> Vec<f64> {
    per_site
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                row.iter().sum::<f64>() / row.len() as f64
            }
        })
        .collect()
}

/// Concentration with its standard error taken over per-trajectory
/// concentrations, which accounts for correlations between sites.
pub fn concentration_average(records: &[TrajectoryRecord]) -> Result<ConcentrationSeries> {
    let first = check_grids(records)?;
    let per_traj: Vec<Vec<f64>> = records.iter().map(|r| concentration(&r.samples)).collect();
    let (mean, stderr) = (0..first.samples.len())
        .map(|k| mean_stderr(per_traj.iter().map(|c| c[k])))
        .unzip();
    Ok(ConcentrationSeries {
        times: first.times.clone(),
        mean,
        stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrightDarkStatistics {
    pub rates: RatePair,
    pub stderr_up: f64,
    pub stderr_down: f64,
    pub mean_bright: f64,
    pub mean_dark: f64,
    pub n_bright: usize,
    pub n_dark: usize,
}

/// Rates from the mean lengths of dark and bright periods.
///
/// Dark periods are inter-emission intervals during which the Rydberg
/// population crossed the threshold. A bright period is a run of
/// consecutive non-dark intervals that starts at the beginning of the run or
/// right after a dark period, and ends where the next dark period starts.
pub fn bright_dark_statistics(records: &[TrajectoryRecord]) -> Result<BrightDarkStatistics> {
    let mut dark = Vec::new();
    let mut bright = Vec::new();
    for rec in records {
        for periods in &rec.periods {
            let mut run_start = Some(0.0);
            for p in periods {
                if p.dark {
                    dark.push(p.length());
                    if let Some(s) = run_start {
                        if p.start > s {
                            bright.push(p.start - s);
                        }
                    }
                    run_start = Some(p.end);
                }
            }
        }
    }
    if dark.is_empty() || bright.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} dark and {} bright periods completed",
            dark.len(),
            bright.len()
        )));
    }
    let (md, sd) = mean_stderr(dark.iter().copied());
    let (mb, sb) = mean_stderr(bright.iter().copied());
    Ok(BrightDarkStatistics {
        rates: RatePair {
            gamma_up: 1.0 / mb,
            gamma_down: 1.0 / md,
        },
        stderr_up: sb / (mb * mb),
        stderr_down: sd / (md * md),
        mean_bright: mb,
        mean_dark: md,
        n_bright: bright.len(),
        n_dark: dark.len(),
    })
}

/// Linear-in-time estimates of the excess and deficit concentration caused
/// by off-resonant creation on non-facilitated sites and off-resonant
/// destruction of isolated defects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excess {
    pub delta_r: f64,
    pub delta_r_prime: f64,
}

pub fn excess_concentration_estimate(
    cfg: &SystemConfig,
    n_nonfacilitated: usize,
    n_defects: usize,
    t: f64,
) -> Result<Excess> {
    let atom = ThreeLevelAtom {
        omega_e: cfg.omega_e,
        omega_r: cfg.omega_r,
        gamma_e: cfg.gamma_e,
    };
    let n = cfg.n_sites as f64;
    Ok(Excess {
        delta_r: n_nonfacilitated as f64 * atom.rate_up(cfg.delta_r)? * t / n,
        delta_r_prime: n_defects as f64 * atom.rate_down(cfg.delta_r)? * t / n,
    })
}
