//! Classical one-spin facilitated model: Glauber rates, event-driven
//! sampling and an exact master-equation solver for short chains.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Boundary;
use crate::error::{Error, Result};
use crate::regime::nearest_neighbors;
use crate::rng::stream_rng;

/// Largest chain handled by [`exact_rate_equation`].
pub const EXACT_MAX_SITES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Unconstrained,
    OneSfm,
}

impl std::str::FromStr for Constraint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" | "fa0" => Ok(Self::Unconstrained),
            "one_sfm" | "1sfm" | "one-sfm" => Ok(Self::OneSfm),
            _ => Err(Error::InvalidArgument(format!("unknown constraint `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpinConfig {
    pub bits: Vec<u8>,
    pub boundary: Boundary,
}

impl SpinConfig {
    pub fn new(bits: Vec<u8>, boundary: Boundary) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("spins must be 0 or 1".into()));
        }
        Ok(Self { bits, boundary })
    }

    pub fn zeros(n: usize, boundary: Boundary) -> Self {
        Self {
            bits: vec![0; n],
            boundary,
        }
    }

    /// Parses a pattern such as `0010000`.
    pub fn parse(pattern: &str, boundary: Boundary) -> Result<Self> {
        let bits = pattern
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidArgument(format!("bad spin `{c}` in pattern"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { bits, boundary })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn defects(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn density(&self) -> f64 {
        self.defects() as f64 / self.len().max(1) as f64
    }

    /// Index into the `2^N` state vector, site 0 being the most significant bit.
    pub fn index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn from_index(index: usize, n: usize, boundary: Boundary) -> Self {
        let bits = (0..n).map(|i| ((index >> (n - 1 - i)) & 1) as u8).collect();
        Self { bits, boundary }
    }

    fn neighbor_defects(&self, site: usize) -> u8 {
        nearest_neighbors(site, self.len(), self.boundary)
            .iter()
            .flatten()
            .map(|&j| self.bits[j])
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KcmParams {
    pub d_eq: f64,
    pub constraint: Constraint,
}

impl KcmParams {
    pub fn new(d_eq: f64, constraint: Constraint) -> Result<Self> {
        if !(d_eq > 0.0 && d_eq < 1.0) {
            return Err(Error::InvalidArgument(format!("d_eq = {d_eq} outside (0, 1)")));
        }
        Ok(Self { d_eq, constraint })
    }

    pub fn from_temperature(beta: f64, k: f64, constraint: Constraint) -> Result<Self> {
        Self::new(equilibrium_concentration(beta, k), constraint)
    }

    /// Boltzmann weight of a configuration with `defects` up spins.
    pub fn weight(&self, defects: usize, n: usize) -> f64 {
        self.d_eq.powi(defects as i32) * (1.0 - self.d_eq).powi((n - defects) as i32)
    }
}

/// `E = K sum_i n_i`.
pub fn energy(config: &SpinConfig, k: f64) -> f64 {
    k * config.defects() as f64
}

/// `1 / (1 + exp(beta K))`.
pub fn equilibrium_concentration(beta: f64, k: f64) -> f64 {
    let x = beta * k;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Equilibrium defect density of the driven chain, `gamma^2 / (2 (gamma^2 + Omega_e^2))`.
pub fn driven_deq(omega_e: f64, gamma_e: f64) -> f64 {
    let g2 = gamma_e * gamma_e;
    if omega_e.is_infinite() {
        return 0.0;
    }
    g2 / (2.0 * (g2 + omega_e * omega_e))
}

fn rate_unchecked(config: &SpinConfig, site: usize, params: &KcmParams) -> f64 {
    let base = if config.bits[site] == 1 {
        1.0 - params.d_eq
    } else {
        params.d_eq
    };
    match params.constraint {
        Constraint::Unconstrained => base,
        Constraint::OneSfm => base * f64::from(config.neighbor_defects(site)),
    }
}

pub fn flip_rate(config: &SpinConfig, site: usize, params: &KcmParams) -> Result<f64> {
    if site >= config.len() {
        return Err(Error::IndexOutOfRange {
            index: site,
            len: config.len(),
        });
    }
    Ok(rate_unchecked(config, site, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlipEvent {
    pub time: f64,
    pub site: usize,
    /// Spin value after the flip.
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtmcTrajectory {
    pub initial: SpinConfig,
    pub events: Vec<FlipEvent>,
    pub t_max: f64,
    /// True when the run stopped early in a state with no allowed flips.
    pub absorbed: bool,
}

impl CtmcTrajectory {
    pub fn final_state(&self) -> SpinConfig {
        self.state_at(f64::INFINITY)
    }

    pub fn state_at(&self, t: f64) -> SpinConfig {
        let mut s = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            s.bits[e.site] = e.value;
        }
        s
    }

    /// Configurations at each grid time, replayed in one pass.
    pub fn states_on_grid(&self, grid: &[f64]) -> Vec<SpinConfig> {
        let mut s = self.initial.clone();
        let mut next = 0;
        grid.iter()
            .map(|&t| {
                while next < self.events.len() && self.events[next].time <= t {
                    let e = self.events[next];
                    s.bits[e.site] = e.value;
                    next += 1;
                }
                s.clone()
            })
            .collect()
    }

    pub fn density_series(&self, grid: &[f64]) -> Vec<f64> {
        self.states_on_grid(grid).iter().map(SpinConfig::density).collect()
    }

    /// Time-weighted mean defect density over `[0, t_max]`.
    pub fn time_averaged_density(&self) -> f64 {
        let n = self.initial.len().max(1) as f64;
        let mut count = self.initial.defects() as f64;
        let mut last = 0.0;
        let mut acc = 0.0;
        for e in &self.events {
            acc += count * (e.time - last);
            count += if e.value == 1 { 1.0 } else { -1.0 };
            last = e.time;
        }
        acc += count * (self.t_max - last);
        acc / (n * self.t_max)
    }

    /// Displacement of the defect centre of mass, unwrapped across the
    /// periodic boundary by minimal-image steps at every event.
    pub fn displacement_series(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let n = self.initial.len();
        let periodic = self.initial.boundary == Boundary::Periodic;
        let mut s = self.initial.clone();
        let centre_near = |s: &SpinConfig, reference: f64| -> Option<f64> {
            let (mut sum, mut k) = (0.0, 0.0);
            for (i, &b) in s.bits.iter().enumerate() {
                if b == 1 {
                    let mut d = i as f64 - reference;
                    if periodic {
                        d -= n as f64 * (d / n as f64).round();
                    }
                    sum += d;
                    k += 1.0;
                }
            }
            (k > 0.0).then(|| reference + sum / k)
        };
        let first = s.bits.iter().position(|&b| b == 1).ok_or_else(|| Error::InsufficientData("displacement needs at least one defect".into()))? as f64;
        let origin = centre_near(&s, first).expect("has a defect");
        let mut centre = origin;
        let mut next = 0;
        let mut out = Vec::with_capacity(grid.len());
        for &t in grid {
            while next < self.events.len() && self.events[next].time <= t {
                let e = self.events[next];
                s.bits[e.site] = e.value;
                if let Some(c) = centre_near(&s, centre) {
                    centre = c;
                }
                next += 1;
            }
            out.push(centre - origin);
        }
        Ok(out)
    }
}

/// Event-driven sampling of the spin dynamics up to `t_max`.
pub fn simulate_ctmc(initial: &SpinConfig, params: &KcmParams, t_max: f64, seed: u64) -> CtmcTrajectory {
    simulate_with_rng(initial, params, t_max, &mut stream_rng(seed, 0, 0))
}

pub fn simulate_with_rng(
    initial: &SpinConfig,
    params: &KcmParams,
    t_max: f64,
    rng: &mut ChaCha8Rng,
) -> CtmcTrajectory {
    let n = initial.len();
    let mut s = initial.clone();
    let mut rates: Vec<f64> = (0..n).map(|i| rate_unchecked(&s, i, params)).collect();
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut absorbed = false;
    loop {
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            absorbed = true;
            break;
        }
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / total;
        if t > t_max {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut site = n - 1;
        for (i, &r) in rates.iter().enumerate() {
            if target < r {
                site = i;
                break;
            }
            target -= r;
        }
        // Guard against rounding picking a zero-rate tail site.
        while rates[site] == 0.0 {
            site -= 1;
        }
        s.bits[site] ^= 1;
        events.push(FlipEvent {
            time: t,
            site,
            value: s.bits[site],
        });
        rates[site] = rate_unchecked(&s, site, params);
        for j in nearest_neighbors(site, n, s.boundary).into_iter().flatten() {
            rates[j] = rate_unchecked(&s, j, params);
        }
    }
    CtmcTrajectory {
        initial: initial.clone(),
        events,
        t_max,
        absorbed,
    }
}

/// Independent runs on streams `(seed, 0, k)`, returned in run order.
pub fn run_ctmc_ensemble(
    initial: &SpinConfig,
    params: &KcmParams,
    t_max: f64,
    seed: u64,
    n_runs: usize,
) -> Vec<CtmcTrajectory> {
    let run = |k: usize| simulate_with_rng(initial, params, t_max, &mut stream_rng(seed, 0, k as u32));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_runs).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_runs).map(run).collect()
    }
}

/// Transitions `(from, to, rate)` of the classical generator.
fn transitions(n: usize, boundary: Boundary, params: &KcmParams) -> Vec<Vec<(usize, f64)>> {
    (0..1usize << n)
        .map(|m| {
            let s = SpinConfig::from_index(m, n, boundary);
            (0..n)
                .filter_map(|i| {
                    let r = rate_unchecked(&s, i, params);
                    (r > 0.0).then(|| (m ^ (1 << (n - 1 - i)), r))
                })
                .collect()
        })
        .collect()
}

/// Largest `|Gamma(m->n) pi(m) - Gamma(n->m) pi(n)|` over all single flips,
/// with `pi` the normalized Boltzmann weights.
pub fn detailed_balance_residual(n: usize, boundary: Boundary, params: &KcmParams) -> Result<f64> {
    if n > EXACT_MAX_SITES {
        return Err(Error::DimensionCap {
            dim: 1 << n,
            cap: 1 << EXACT_MAX_SITES,
        });
    }
    let mut worst = 0.0f64;
    for m in 0..1usize << n {
        let s = SpinConfig::from_index(m, n, boundary);
        let pm = params.weight(s.defects(), n);
        for i in 0..n {
            let mut t = s.clone();
            t.bits[i] ^= 1;
            let pn = params.weight(t.defects(), n);
            let fwd = rate_unchecked(&s, i, params) * pm;
            let bwd = rate_unchecked(&t, i, params) * pn;
            worst = worst.max((fwd - bwd).abs());
        }
    }
    Ok(worst)
}

/// `dp/dt` for a probability vector over the `2^N` states.
pub fn apply_generator(p: &[f64], n: usize, boundary: Boundary, params: &KcmParams) -> Vec<f64> {
    let trans = transitions(n, boundary, params);
    let mut out = vec![0.0; p.len()];
    for (m, list) in trans.iter().enumerate() {
        for &(to, r) in list {
            out[m] -= r * p[m];
            out[to] += r * p[m];
        }
    }
    out
}

/// Boltzmann distribution on the states reachable from `initial`.
pub fn sector_equilibrium(initial: &SpinConfig, params: &KcmParams) -> Result<Vec<f64>> {
    let n = initial.len();
    if n > EXACT_MAX_SITES {
        return Err(Error::DimensionCap {
            dim: 1 << n,
            cap: 1 << EXACT_MAX_SITES,
        });
    }
    let trans = transitions(n, initial.boundary, params);
    let mut seen = vec![false; 1 << n];
    let mut stack = vec![initial.index()];
    seen[initial.index()] = true;
    while let Some(m) = stack.pop() {
        for &(to, _) in &trans[m] {
            if !seen[to] {
                seen[to] = true;
                stack.push(to);
            }
        }
    }
    let mut pi: Vec<f64> = (0..1usize << n)
        .map(|m| {
            if seen[m] {
                params.weight(m.count_ones() as usize, n)
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    Ok(pi)
}

/// Solves the classical master equation by uniformization, returning the
/// distribution at every grid time.
pub fn exact_rate_equation(
    initial: &[f64],
    n: usize,
    boundary: Boundary,
    params: &KcmParams,
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if n > EXACT_MAX_SITES {
        return Err(Error::DimensionCap {
            dim: 1 << n,
            cap: 1 << EXACT_MAX_SITES,
        });
    }
    let dim = 1usize << n;
    if initial.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries, expected {dim}",
            initial.len()
        )));
    }
    if initial.iter().any(|&p| p < 0.0) || (initial.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("initial vector is not a distribution".into()));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be non-negative and sorted".into()));
    }
    let trans = transitions(n, boundary, params);
    let exit: Vec<f64> = trans.iter().map(|l| l.iter().map(|x| x.1).sum()).collect();
    let lambda = exit.iter().copied().fold(0.0, f64::max);
    let mut p = initial.to_vec();
    let mut out = Vec::with_capacity(t_grid.len());
    let mut now = 0.0;
    if lambda == 0.0 {
        return Ok(vec![p; t_grid.len()]);
    }
    // Uniformized jump chain P = I + Q / lambda.
    let jump = |v: &[f64]| {
        let mut w: Vec<f64> = v.iter().zip(&exit).map(|(&x, &e)| x * (1.0 - e / lambda)).collect();
        for (m, list) in trans.iter().enumerate() {
            for &(to, r) in list {
                w[to] += v[m] * r / lambda;
            }
        }
        w
    };
    for &t in t_grid {
        let mut remaining = t - now;
        while remaining > 0.0 {
            // Chunks keep exp(-lambda h) well away from underflow.
            let h = remaining.min(30.0 / lambda);
            let a = lambda * h;
            let mut weight = (-a).exp();
            let mut term = p.clone();
            let mut acc: Vec<f64> = term.iter().map(|&x| x * weight).collect();
            let mut mass = weight;
            let mut k = 0usize;
            // Past the mode the Poisson weights fall monotonically.
            while !(k as f64 > a && weight < 1e-17 * mass) && k < 10_000 {
                k += 1;
                term = jump(&term);
                weight *= a / k as f64;
                mass += weight;
                for (s, &x) in acc.iter_mut().zip(&term) {
                    *s += weight * x;
                }
            }
            let z: f64 = acc.iter().sum();
            p = acc.into_iter().map(|x| x.max(0.0) / z).collect();
            remaining -= h;
        }
        now = t;
        out.push(p.clone());
    }
    Ok(out)
}

/// Point mass on a single configuration.
pub fn point_distribution(config: &SpinConfig) -> Result<Vec<f64>> {
    if config.len() > EXACT_MAX_SITES {
        return Err(Error::DimensionCap {
            dim: 1 << config.len(),
            cap: 1 << EXACT_MAX_SITES,
        });
    }
    let mut p = vec![0.0; 1 << config.len()];
    p[config.index()] = 1.0;
    Ok(p)
}
