//! Monte-Carlo wavefunction trajectories.
//!
//! Each step of length `dt` propagates with the non-Hermitian effective
//! Hamiltonian using a symmetric split: half a step of the diagonal
//! interaction, exact single-site propagators (drive, detuning and decay),
//! then the other half of the interaction. The norm lost during the step is
//! the jump probability. On a jump the propagated state is projected with
//! `|g><e|_i` on a site drawn in proportion to its excited population.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

use super::{site_populations, ManyBodyHamiltonian, StateVector};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McwfOptions {
    pub dt: f64,
    pub gamma_e: f64,
    /// Largest admissible jump probability per step.
    pub max_jump_probability: f64,
    /// Rydberg populations are inspected for dark-period detection every
    /// this many steps.
    pub monitor_stride: usize,
    /// An inter-emission interval is dark once a site's Rydberg population
    /// exceeds this. Crossing a low threshold does not commit the atom: the
    /// residual bright amplitude still emits with probability about
    /// `1 - threshold`, which cuts the interval short.
    pub dark_threshold: f64,
}

impl Default for McwfOptions {
    fn default() -> Self {
        McwfOptions {
            dt: 0.01,
            gamma_e: 1.0,
            max_jump_probability: 0.1,
            monitor_stride: 10,
            dark_threshold: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub site: usize,
}

/// Interval between two consecutive photon emissions of one site (the
/// start of the run counts as an emission).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Period {
    pub start: f64,
    pub end: f64,
    /// The Rydberg population of the site exceeded the threshold.
    pub dark: bool,
}

impl Period {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub realization: u32,
    pub trajectory: u32,
    pub times: Vec<f64>,
    /// `samples[k][i]`: Rydberg population of site `i` at `times[k]`.
    pub samples: Vec<Vec<f64>>,
    pub jumps: Vec<JumpEvent>,
    /// Completed inter-emission periods per site.
    pub periods: Vec<Vec<Period>>,
}

/// Precomputed split-step propagator for a fixed Hamiltonian and `dt`.
#[derive(Debug, Clone)]
pub struct TrajectoryPropagator<'a> {
    h: &'a ManyBodyHamiltonian,
    opts: McwfOptions,
    half_phase: Vec<C64>,
    local: Vec<Vec<C64>>,
    strides: Vec<usize>,
}

impl<'a> TrajectoryPropagator<'a> {
    pub fn new(h: &'a ManyBodyHamiltonian, opts: McwfOptions) -> Result<Self> {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step {} must be positive", opts.dt)));
        }
        if opts.dt * opts.gamma_e > 0.05 {
            return Err(Error::InvalidArgument(format!(
                "dt * gamma_e = {} exceeds 0.05",
                opts.dt * opts.gamma_e
            )));
        }
        let l = h.basis.levels();
        let half_phase = h
            .interaction
            .iter()
            .map(|&w| C64::new(0.0, -w * opts.dt / 2.0).exp())
            .collect();
        let mut local = Vec::with_capacity(h.n_sites());
        for i in 0..h.n_sites() {
            let hl = h.local_hamiltonian(i);
            let mut m = DMatrix::from_row_slice(l, l, &hl);
            if let Some(e) = h.mode().excited() {
                m[(e, e)] -= C64::new(0.0, opts.gamma_e / 2.0);
            }
            let u = (m * C64::new(0.0, -opts.dt)).exp();
            let mut row_major = Vec::with_capacity(l * l);
            for r in 0..l {
                for c in 0..l {
                    row_major.push(u[(r, c)]);
                }
            }
            local.push(row_major);
        }
        let strides = (0..h.n_sites()).map(|i| h.basis.stride(i)).collect();
        Ok(TrajectoryPropagator {
            h,
            opts,
            half_phase,
            local,
            strides,
        })
    }

    pub fn options(&self) -> &McwfOptions {
        &self.opts
    }

    /// One no-jump step, in place and without renormalisation.
    pub fn propagate(&self, psi: &mut [C64]) {
        for (z, p) in psi.iter_mut().zip(&self.half_phase) {
            *z *= p;
        }
        let l = self.h.basis.levels();
        for (u, &s) in self.local.iter().zip(&self.strides) {
            match l {
                3 => apply_local3(psi, s, u),
                _ => apply_local2(psi, s, u),
            }
        }
        for (z, p) in psi.iter_mut().zip(&self.half_phase) {
            *z *= p;
        }
    }
}

fn apply_local3(psi: &mut [C64], s: usize, u: &[C64]) {
    let block = 3 * s;
    for base in (0..psi.len()).step_by(block) {
        for off in base..base + s {
            let (a, b, c) = (psi[off], psi[off + s], psi[off + 2 * s]);
            psi[off] = u[0] * a + u[1] * b + u[2] * c;
            psi[off + s] = u[3] * a + u[4] * b + u[5] * c;
            psi[off + 2 * s] = u[6] * a + u[7] * b + u[8] * c;
        }
    }
}

fn apply_local2(psi: &mut [C64], s: usize, u: &[C64]) {
    let block = 2 * s;
    for base in (0..psi.len()).step_by(block) {
        for off in base..base + s {
            let (a, b) = (psi[off], psi[off + s]);
            psi[off] = u[0] * a + u[1] * b;
            psi[off + s] = u[2] * a + u[3] * b;
        }
    }
}

/// Output grid of `n_samples` points on `[0, t_max]`, each rounded to a
/// multiple of `dt`.
pub fn sampling_grid(t_max: f64, n_samples: usize, dt: f64) -> Vec<f64> {
    let n = n_samples.max(2);
    let mut out: Vec<f64> = (0..n)
        .map(|k| ((k as f64 * t_max / (n - 1) as f64) / dt).round() * dt)
        .collect();
    out.dedup();
    out
}

fn grid_steps(t_grid: &[f64], dt: f64) -> Result<Vec<u64>> {
    let mut steps = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = (t / dt).round();
        if t < 0.0 || (k * dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "output time {t} is not a non-negative multiple of dt = {dt}"
            )));
        }
        steps.push(k as u64);
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("output grid must be ascending".into()));
    }
    Ok(steps)
}

/// Runs one trajectory with random stream `(seed, realization, trajectory)`.
pub fn run_trajectory(
    prop: &TrajectoryPropagator,
    psi0: &StateVector,
    t_grid: &[f64],
    seed: u64,
    realization: u32,
    trajectory: u32,
) -> Result<TrajectoryRecord> {
    let h = prop.h;
    let opts = prop.opts;
    if psi0.basis != h.basis {
        return Err(Error::InvalidArgument("initial state basis differs from Hamiltonian".into()));
    }
    if (psi0.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("initial state is not normalised".into()));
    }
    let steps = grid_steps(t_grid, opts.dt)?;
    let n = h.n_sites();
    let ryd = h.mode().rydberg();
    let exc = h.mode().excited();
    let mut rng = stream_rng(seed, realization, trajectory);

    let mut psi = psi0.amplitudes.clone();
    let mut scratch = psi.clone();
    let mut record = TrajectoryRecord {
        seed,
        realization,
        trajectory,
        times: t_grid.to_vec(),
        samples: Vec::with_capacity(t_grid.len()),
        jumps: Vec::new(),
        periods: vec![Vec::new(); n],
    };
    let mut last_jump = vec![0.0f64; n];
    let mut max_r = site_populations(&h.basis, &psi, ryd);

    let total = steps.last().copied().unwrap_or(0);
    let mut next_out = 0usize;
    let mut step: u64 = 0;
    loop {
        while next_out < steps.len() && steps[next_out] == step {
            record.samples.push(site_populations(&h.basis, &psi, ryd));
            next_out += 1;
        }
        if step >= total {
            break;
        }
        prop.propagate(&mut psi);
        step += 1;
        let t = step as f64 * opts.dt;
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let p = 1.0 - norm2;
        if p > opts.max_jump_probability {
            return Err(Error::StepSize {
                p_total: p,
                limit: opts.max_jump_probability,
            });
        }
        let jumped = match exc {
            Some(e) if rng.random::<f64>() < p => {
                // the post-step state always has excited weight, unlike a
                // pre-step state that has just been reset to |g>
                scratch.copy_from_slice(&psi);
                let weights = site_populations(&h.basis, &scratch, e);
                let sum: f64 = weights.iter().sum();
                let mut x = rng.random::<f64>() * sum;
                let mut site = n - 1;
                for (i, &w) in weights.iter().enumerate() {
                    if x < w {
                        site = i;
                        break;
                    }
                    x -= w;
                }
                apply_jump(&h.basis, &scratch, &mut psi, site, e);
                Some(site)
            }
            _ => None,
        };
        let norm2 = if jumped.is_some() {
            psi.iter().map(|z| z.norm_sqr()).sum()
        } else {
            norm2
        };
        if !(norm2 > 1e-300) {
            return Err(Error::Numerical(format!("state norm underflow at t = {t}")));
        }
        let scale = 1.0 / norm2.sqrt();
        psi.iter_mut().for_each(|z| *z *= scale);

        if let Some(site) = jumped {
            record.jumps.push(JumpEvent { time: t, site });
            record.periods[site].push(Period {
                start: last_jump[site],
                end: t,
                dark: max_r[site] > opts.dark_threshold,
            });
            last_jump[site] = t;
            max_r[site] = 0.0;
        }
        if step % opts.monitor_stride.max(1) as u64 == 0 || jumped.is_some() {
            let r = site_populations(&h.basis, &psi, ryd);
            for (m, v) in max_r.iter_mut().zip(r) {
                *m = m.max(v);
            }
        }
    }
    Ok(record)
}

fn apply_jump(basis: &super::Basis, from: &[C64], to: &mut [C64], site: usize, e: usize) {
    let s = basis.stride(site);
    let l = basis.levels();
    to.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for base in (0..from.len()).step_by(s * l) {
        let src = base + e * s;
        to[base..base + s].copy_from_slice(&from[src..src + s]);
    }
}

/// Runs `n_traj` trajectories of one realization. Records come back in
/// trajectory order whatever the thread count.
pub fn run_ensemble(
    h: &ManyBodyHamiltonian,
    opts: McwfOptions,
    psi0: &StateVector,
    t_grid: &[f64],
    seed: u64,
    realization: u32,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let prop = TrajectoryPropagator::new(h, opts)?;
    let one = |k: usize| run_trajectory(&prop, psi0, t_grid, seed, realization, k as u32);
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
