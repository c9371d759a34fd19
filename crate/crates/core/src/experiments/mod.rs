//! Scenario runners, disorder averaging, species-resolved rate analysis and
//! the CSV/manifest plumbing shared by the command line tool.

pub mod io;
pub mod runs;

use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::quantum::{
    build_hamiltonian, concentration, concentration_average, ensemble_average, ConcentrationSeries,
    EnsembleAverage, McwfOptions, Mode, StateVector, TrajectoryPropagator, TrajectoryRecord,
};
use crate::regime::Species;
use crate::rng::{stream_rng, REALIZATION_STREAM};
use crate::single_atom::ThreeLevelAtom;

pub use io::{format_f64, read_csv, write_csv, RunManifest};
pub use runs::{
    run_cluster, run_evolve_mcwf, run_evolve_me, run_figure, run_kcm, run_rates, KcmRun, FIGURE_PRESETS,
};

/// I.i.d. uniform detunings on `[-A, A]` drawn from the stream reserved for
/// realization 0.
pub fn sample_detunings(n_sites: usize, amplitude: f64, seed: u64) -> Result<Vec<f64>> {
    realization_detunings(n_sites, amplitude, seed, 0)
}

/// Detunings of realization `j`, from stream `(seed, j)`.
pub fn realization_detunings(n_sites: usize, amplitude: f64, seed: u64, realization: u32) -> Result<Vec<f64>> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!("disorder amplitude {amplitude} must be >= 0")));
    }
    if amplitude == 0.0 {
        return Ok(vec![0.0; n_sites]);
    }
    let mut rng = stream_rng(seed, realization, REALIZATION_STREAM);
    let dist = Uniform::new_inclusive(-amplitude, amplitude)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..n_sites).map(|_| dist.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisorderPlan {
    pub amplitude: f64,
    pub n_rnd: usize,
    pub n_traj: usize,
    pub base_seed: u64,
}

impl DisorderPlan {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            amplitude: cfg.disorder_amplitude,
            n_rnd: cfg.n_rnd.max(1),
            n_traj: cfg.n_traj,
            base_seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationSummary {
    pub realization: u32,
    pub detunings: Vec<f64>,
    /// Concentration averaged over this realization's trajectories.
    pub concentration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderAverage {
    pub pooled: EnsembleAverage,
    pub pooled_concentration: ConcentrationSeries,
    pub realizations: Vec<RealizationSummary>,
    /// Standard deviation of the realization-mean concentrations at each
    /// time, zero for a single realization.
    pub spread: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

/// Runs `n_traj` trajectories for each of `n_rnd` detuning vectors and pools
/// them. With zero amplitude every realization uses the configured static
/// detunings. Records are kept in (realization, trajectory) order.
pub fn disorder_average(
    cfg: &SystemConfig,
    plan: &DisorderPlan,
    opts: McwfOptions,
    t_grid: &[f64],
) -> Result<DisorderAverage> {
    if plan.n_rnd == 0 || plan.n_traj == 0 {
        return Err(Error::InvalidArgument("n_rnd and n_traj must be positive".into()));
    }
    let mut records = Vec::with_capacity(plan.n_rnd * plan.n_traj);
    let mut realizations = Vec::with_capacity(plan.n_rnd);
    for j in 0..plan.n_rnd as u32 {
        let mut c = cfg.clone();
        if plan.amplitude > 0.0 {
            c.random_detunings = Some(realization_detunings(cfg.n_sites, plan.amplitude, plan.base_seed, j)?);
        }
        let detunings = c.random_detunings.clone().unwrap_or_else(|| vec![0.0; c.n_sites]);
        let h = build_hamiltonian(&c, Mode::ThreeLevel)?;
        let psi0 = StateVector::from_occupations(h.basis, &c.initial_occupations())?;
        let prop = TrajectoryPropagator::new(&h, opts)?;
        let batch = run_batch(&prop, &psi0, t_grid, plan.base_seed, j, plan.n_traj)?;
        let conc = concentration_average(&batch)?.mean;
        realizations.push(RealizationSummary {
            realization: j,
            detunings,
            concentration: conc,
        });
        records.extend(batch);
    }
    let pooled = ensemble_average(&records)?;
    let pooled_concentration = ConcentrationSeries {
        times: pooled.times.clone(),
        mean: concentration(&pooled.mean),
        stderr: concentration_average(&records)?.stderr,
    };
    let spread = (0..pooled.times.len())
        .map(|k| {
            let vals: Vec<f64> = realizations.iter().map(|r| r.concentration[k]).collect();
            if vals.len() < 2 {
                return 0.0;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        })
        .collect();
    Ok(DisorderAverage {
        pooled,
        pooled_concentration,
        realizations,
        spread,
        records,
    })
}

fn run_batch(
    prop: &TrajectoryPropagator,
    psi0: &StateVector,
    t_grid: &[f64],
    seed: u64,
    realization: u32,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let one = |k: usize| crate::quantum::run_trajectory(prop, psi0, t_grid, seed, realization, k as u32);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_traj).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_traj).map(one).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateEffect {
    SpeedUp,
    SlowDown,
    Unchanged,
}

impl std::fmt::Display for RateEffect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateEffect::SpeedUp => "speed_up",
            RateEffect::SlowDown => "slow_down",
            RateEffect::Unchanged => "unchanged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateShift {
    pub species: Species,
    /// `+1` for `Delta* + |Delta'|`, `-1` for `Delta* - |Delta'|`.
    pub sign: i8,
    pub delta_star: f64,
    /// True when the relevant rate is destruction (`1 -> 0`).
    pub destruction: bool,
    pub base_rate: f64,
    pub shifted_rate: f64,
    pub effect: RateEffect,
}

/// Relative rate change below which a shift counts as unchanged.
pub const SHIFT_TIE_TOLERANCE: f64 = 1e-9;

/// Effect of a static detuning of size `A` on each species' relevant rate,
/// in the order facilitated, defect, non-facilitated, blocked and, within
/// each, `+|Delta'|` before `-|Delta'|`.
pub fn rate_shift_classification(
    amplitude: f64,
    delta_r: f64,
    omega_e: f64,
    omega_r: f64,
) -> Result<Vec<RateShift>> {
    if !(amplitude > 0.0 && amplitude < delta_r.abs()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < A < |Delta_r|, got A = {amplitude}, Delta_r = {delta_r}"
        )));
    }
    let atom = ThreeLevelAtom::new(omega_e, omega_r);
    let cases = [
        (Species::Facilitated, 0.0, false),
        (Species::Defect, delta_r, true),
        (Species::NonFacilitated, delta_r, false),
        (Species::Blocked, -delta_r, false),
    ];
    let mut out = Vec::with_capacity(8);
    for (species, delta_star, destruction) in cases {
        let rate = |d: f64| {
            if destruction {
                atom.rate_down(d)
            } else {
                atom.rate_up(d)
            }
        };
        let base = rate(delta_star)?;
        for sign in [1i8, -1] {
            let shifted = rate(delta_star + f64::from(sign) * amplitude)?;
            let rel = (shifted - base) / base;
            let effect = if rel.abs() < SHIFT_TIE_TOLERANCE {
                RateEffect::Unchanged
            } else if rel > 0.0 {
                RateEffect::SpeedUp
            } else {
                RateEffect::SlowDown
            };
            out.push(RateShift {
                species,
                sign,
                delta_star,
                destruction,
                base_rate: base,
                shifted_rate: shifted,
                effect,
            });
        }
    }
    Ok(out)
}

/// First grid time after which `r(t)` stays within 10% of its plateau, the
/// plateau being the mean over the final 10% of the grid.
pub fn relaxation_time(times: &[f64], r: &[f64]) -> Result<f64> {
    if times.len() != r.len() || times.len() < 10 {
        return Err(Error::InsufficientData("need at least ten samples".into()));
    }
    let tail = (r.len() / 10).max(1);
    let plateau = r[r.len() - tail..].iter().sum::<f64>() / tail as f64;
    let band = 0.1 * plateau.abs();
    let last_outside = r.iter().rposition(|&x| (x - plateau).abs() > band);
    Ok(match last_outside {
        None => times[0],
        Some(k) => times[(k + 1).min(times.len() - 1)],
    })
}

/// Bright-period emission rate times the dark-state probability, and the
/// decay rate of the long-lived eigenvalue.
pub fn perturbative_rates(atom: &ThreeLevelAtom, delta: f64) -> Result<(f64, f64)> {
    let (g, oe) = (atom.gamma_e, atom.omega_e);
    let emission = g * oe * oe / (g * g + 2.0 * oe * oe);
    let up = emission * atom.dark_probability(delta)?;
    let down = -2.0 * atom.perturbative_lambda3(delta).im;
    Ok((up, down))
}
