//! Coherent two-level limit: the subspace with a fixed number of Rydberg
//! clusters, its hopping Hamiltonian, spectrum, dark states and dynamics.
//!
//! Bit strings follow the product-basis convention: site `i` is bit
//! `N - 1 - i`, so the string reads left to right as sites `0..N`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::config::{Boundary, SystemConfig};
use crate::error::{Error, Result};
use crate::quantum::{build_hamiltonian, Mode};

/// Largest chain length for the reduced model.
pub const MAX_SITES: usize = 63;
/// Chains up to this length are enumerated by filtering all `2^N` strings.
pub const FILTER_LIMIT: usize = 20;
/// Eigenvalues below this magnitude count as dark.
pub const DARK_TOLERANCE: f64 = 1e-10;

pub fn bit(state: u64, site: usize, n: usize) -> bool {
    (state >> (n - 1 - site)) & 1 == 1
}

pub fn bits_from_occupations(occ: &[bool]) -> u64 {
    occ.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

pub fn format_bits(state: u64, n: usize) -> String {
    (0..n).map(|i| if bit(state, i, n) { '1' } else { '0' }).collect()
}

/// Number of maximal runs of ones.
pub fn cluster_count(state: u64, n: usize, boundary: Boundary) -> usize {
    let mut runs = 0;
    for i in 0..n {
        let prev = if i == 0 {
            match boundary {
                Boundary::Open => false,
                Boundary::Periodic => bit(state, n - 1, n),
            }
        } else {
            bit(state, i - 1, n)
        };
        if bit(state, i, n) && !prev {
            runs += 1;
        }
    }
    if runs == 0 && boundary == Boundary::Periodic && n > 0 && state.count_ones() as usize == n {
        1
    } else {
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedBasis {
    pub n_sites: usize,
    pub boundary: Boundary,
    pub cluster_count: usize,
    /// Ascending bit strings.
    pub states: Vec<u64>,
    #[serde(skip)]
    pub index_of: HashMap<u64, usize>,
    /// Single-flip hopping graph is connected.
    pub connected: bool,
}

impl ReducedBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Pairs of basis indices whose strings differ on exactly one site.
    pub fn hops(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, &s) in self.states.iter().enumerate() {
            for i in 0..self.n_sites {
                let t = s ^ (1u64 << i);
                if let Some(&b) = self.index_of.get(&t) {
                    if a < b {
                        out.push((a, b));
                    }
                }
            }
        }
        out
    }
}

fn constructive(n: usize, k: usize, boundary: Boundary) -> Vec<u64> {
    // open-chain strings with exactly k runs, built site by site
    fn rec(pos: usize, n: usize, runs: usize, k: usize, prev: bool, acc: u64, out: &mut Vec<u64>) {
        if runs > k {
            return;
        }
        if pos == n {
            if runs == k {
                out.push(acc);
            }
            return;
        }
        rec(pos + 1, n, runs, k, false, acc << 1, out);
        rec(pos + 1, n, runs + usize::from(!prev), k, true, (acc << 1) | 1, out);
    }
    let mut out = Vec::new();
    match boundary {
        Boundary::Open => rec(0, n, 0, k, false, 0, &mut out),
        Boundary::Periodic => {
            // a ring has k runs iff the open string has k runs, or k + 1
            // runs with both ends occupied
            let mut cand = Vec::new();
            rec(0, n, 0, k, false, 0, &mut cand);
            rec(0, n, 0, k + 1, false, 0, &mut cand);
            out = cand
                .into_iter()
                .filter(|&s| cluster_count(s, n, boundary) == k)
                .collect();
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Every string with the same number of clusters as `initial`.
pub fn enumerate_subspace(initial: &[bool], boundary: Boundary) -> Result<ReducedBasis> {
    let n = initial.len();
    if n == 0 || n > MAX_SITES {
        return Err(Error::InvalidArgument(format!("chain length {n} outside 1..={MAX_SITES}")));
    }
    let init = bits_from_occupations(initial);
    let k = cluster_count(init, n, boundary);
    if k == 0 {
        return Err(Error::EmptyCluster);
    }
    let states: Vec<u64> = if n <= FILTER_LIMIT {
        (0..(1u64 << n))
            .filter(|&s| cluster_count(s, n, boundary) == k)
            .collect()
    } else {
        constructive(n, k, boundary)
    };
    let index_of: HashMap<u64, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut basis = ReducedBasis {
        n_sites: n,
        boundary,
        cluster_count: k,
        states,
        index_of,
        connected: false,
    };
    basis.connected = connected(&basis);
    Ok(basis)
}

fn connected(basis: &ReducedBasis) -> bool {
    let len = basis.len();
    if len == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); len];
    for (a, b) in basis.hops() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; len];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(a) = queue.pop_front() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                count += 1;
                queue.push_back(b);
            }
        }
    }
    count == len
}

#[derive(Debug, Clone)]
pub struct ReducedHamiltonian {
    pub basis: ReducedBasis,
    pub matrix: DMatrix<f64>,
    /// Hopping amplitude `Omega_r / 2`.
    pub coupling: f64,
    pub diagonal_offset: f64,
}

pub fn build_reduced_hamiltonian(
    basis: &ReducedBasis,
    omega_r: f64,
    diagonal_offset: f64,
) -> ReducedHamiltonian {
    let len = basis.len();
    let j = omega_r / 2.0;
    let mut m = DMatrix::from_diagonal_element(len, len, diagonal_offset);
    for (a, b) in basis.hops() {
        m[(a, b)] = j;
        m[(b, a)] = j;
    }
    ReducedHamiltonian {
        basis: basis.clone(),
        matrix: m,
        coupling: j,
        diagonal_offset,
    }
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Ascending eigenvalues.
pub fn spectrum(h: &ReducedHamiltonian) -> Vec<f64> {
    sorted_eigen(&h.matrix).0
}

#[derive(Debug, Clone)]
pub struct DarkStates {
    pub count: usize,
    /// Orthonormal kernel basis, one column per state.
    pub vectors: DMatrix<f64>,
}

/// Zero-energy eigenvectors measured from the diagonal offset.
pub fn dark_states(h: &ReducedHamiltonian) -> DarkStates {
    let (values, vectors) = sorted_eigen(&h.matrix);
    let keep: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &e)| (e - h.diagonal_offset).abs() < DARK_TOLERANCE)
        .map(|(i, _)| i)
        .collect();
    let v = DMatrix::from_fn(h.matrix.nrows(), keep.len(), |r, c| vectors[(r, keep[c])]);
    DarkStates {
        count: keep.len(),
        vectors: v,
    }
}

/// Expected number of dark states of a single open cluster.
pub fn dark_state_count_law(n: usize) -> usize {
    if n % 2 == 1 {
        (n + 1) / 2
    } else {
        n / 2
    }
}

/// Square-lattice tight-binding energy `-2J (cos(2 pi m1/N) + cos(2 pi m2/N))`.
pub fn tight_binding_dispersion(m1: f64, m2: f64, n_sites: usize, j: f64) -> f64 {
    let k = 2.0 * std::f64::consts::PI / n_sites as f64;
    -2.0 * j * ((k * m1).cos() + (k * m2).cos())
}

fn weights_to_concentration(states: &[u64], n: usize, amp: &[C64]) -> f64 {
    states
        .iter()
        .zip(amp)
        .map(|(&s, z)| z.norm_sqr() * s.count_ones() as f64)
        .sum::<f64>()
        / n as f64
}

/// Exact propagation of a real symmetric Hamiltonian through its
/// eigendecomposition.
struct EigenPropagator {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenPropagator {
    fn new(m: &DMatrix<f64>) -> Self {
        let (values, vectors) = sorted_eigen(m);
        EigenPropagator { values, vectors }
    }

    fn evolve(&self, coeffs: &DVector<C64>, t: f64) -> Vec<C64> {
        let dim = self.values.len();
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for (k, &e) in self.values.iter().enumerate() {
            let c = coeffs[k] * C64::new(0.0, -e * t).exp();
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (a, o) in out.iter_mut().enumerate() {
                *o += c * self.vectors[(a, k)];
            }
        }
        out
    }

    fn coefficients(&self, psi0: &[C64]) -> DVector<C64> {
        let dim = self.values.len();
        DVector::from_fn(dim, |k, _| {
            (0..dim).map(|a| psi0[a] * self.vectors[(a, k)]).sum()
        })
    }
}

/// Concentration `r(t)` under the reduced Hamiltonian from a basis string.
pub fn evolve_reduced(h: &ReducedHamiltonian, initial: &[bool], t_grid: &[f64]) -> Result<Vec<f64>> {
    let s0 = bits_from_occupations(initial);
    if initial.len() != h.basis.n_sites {
        return Err(Error::UnsupportedState);
    }
    let idx = *h.basis.index_of.get(&s0).ok_or(Error::UnsupportedState)?;
    let mut psi0 = vec![C64::new(0.0, 0.0); h.basis.len()];
    psi0[idx] = C64::new(1.0, 0.0);
    evolve_reduced_state(h, &psi0, t_grid)
}

/// Concentration `r(t)` from an arbitrary amplitude vector on the basis.
pub fn evolve_reduced_state(h: &ReducedHamiltonian, psi0: &[C64], t_grid: &[f64]) -> Result<Vec<f64>> {
    if psi0.len() != h.basis.len() {
        return Err(Error::UnsupportedState);
    }
    let prop = EigenPropagator::new(&h.matrix);
    let coeffs = prop.coefficients(psi0);
    Ok(t_grid
        .iter()
        .map(|&t| weights_to_concentration(&h.basis.states, h.basis.n_sites, &prop.evolve(&coeffs, t)))
        .collect())
}

/// Coherent evolution of the full two-level chain.
#[derive(Debug, Clone, Serialize)]
pub struct FullEvolution {
    pub times: Vec<f64>,
    pub concentration: Vec<f64>,
    /// Probability outside the reference subspace, when one is given.
    pub leaked: Vec<f64>,
}

/// Largest chain evolved by dense diagonalisation in [`evolve_full`].
pub const FULL_DENSE_MAX_SITES: usize = 12;

pub fn evolve_full(
    cfg: &SystemConfig,
    initial: &[bool],
    t_grid: &[f64],
    subspace: Option<&ReducedBasis>,
) -> Result<FullEvolution> {
    if cfg.n_sites > FULL_DENSE_MAX_SITES {
        return Err(Error::DimensionCap {
            dim: 1 << cfg.n_sites,
            cap: 1 << FULL_DENSE_MAX_SITES,
        });
    }
    if initial.len() != cfg.n_sites {
        return Err(Error::UnsupportedState);
    }
    let h = build_hamiltonian(cfg, Mode::TwoLevelCoherent)?;
    let dense = h.matrix.to_dense().map(|z| z.re);
    let prop = EigenPropagator::new(&dense);
    let dim = dense.nrows();
    let mut psi0 = vec![C64::new(0.0, 0.0); dim];
    psi0[bits_from_occupations(initial) as usize] = C64::new(1.0, 0.0);
    let coeffs = prop.coefficients(&psi0);
    let states: Vec<u64> = (0..dim as u64).collect();
    let mut out = FullEvolution {
        times: t_grid.to_vec(),
        concentration: Vec::with_capacity(t_grid.len()),
        leaked: Vec::with_capacity(t_grid.len()),
    };
    for &t in t_grid {
        let amp = prop.evolve(&coeffs, t);
        out.concentration
            .push(weights_to_concentration(&states, cfg.n_sites, &amp));
        let leaked = match subspace {
            Some(b) => amp
                .iter()
                .enumerate()
                .filter(|(s, _)| !b.index_of.contains_key(&(*s as u64)))
                .map(|(_, z)| z.norm_sqr())
                .sum(),
            None => 0.0,
        };
        out.leaked.push(leaked);
    }
    Ok(out)
}

/// Times of strict local maxima of a sampled series.
pub fn peak_times(times: &[f64], values: &[f64]) -> Vec<f64> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .map(|k| times[k])
        .collect()
}

/// Period of the strongest oscillation of a sampled series, from the
/// periodogram of the mean-subtracted samples scanned over
/// `[min_period, max_period]` and refined by golden-section search.
pub fn dominant_period(times: &[f64], values: &[f64], min_period: f64, max_period: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::InsufficientData("need at least four samples".into()));
    }
    if !(0.0 < min_period && min_period < max_period) {
        return Err(Error::InvalidArgument("period range must be positive and ordered".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in times.iter().zip(values) {
            let (s, c) = (w * t).sin_cos();
            re += (v - mean) * c;
            im += (v - mean) * s;
        }
        re * re + im * im
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let (w_lo, w_hi) = (two_pi / max_period, two_pi / min_period);
    let span = times[times.len() - 1] - times[0];
    let n_scan = (((w_hi - w_lo) * span / two_pi) * 8.0).ceil().max(64.0) as usize;
    let dw = (w_hi - w_lo) / n_scan as f64;
    let best = (0..=n_scan)
        .map(|k| w_lo + k as f64 * dw)
        .max_by(|&a, &b| power(a).total_cmp(&power(b)))
        .expect("non-empty scan");
    let (mut a, mut b) = ((best - dw).max(w_lo), (best + dw).min(w_hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if power(c) > power(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(two_pi / (0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    fn chain(n: usize) -> ReducedBasis {
        let mut o = vec![false; n];
        o[n / 2] = true;
        enumerate_subspace(&o, Boundary::Open).unwrap()
    }

    #[test]
    fn three_site_subspace() {
        let b = enumerate_subspace(&occ("010"), Boundary::Open).unwrap();
        let names: Vec<String> = b.states.iter().map(|&s| format_bits(s, 3)).collect();
        assert_eq!(names, ["001", "010", "011", "100", "110", "111"]);
        assert!(b.connected);
        let b = enumerate_subspace(&occ("11"), Boundary::Open).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.cluster_count, 1);
        assert_eq!(chain(9).len(), 45);
        assert!(matches!(
            enumerate_subspace(&occ("000"), Boundary::Open),
            Err(Error::EmptyCluster)
        ));
    }

    #[test]
    fn constructive_matches_filter() {
        for n in 1..=12 {
            for k in 1..=3 {
                for bc in [Boundary::Open, Boundary::Periodic] {
                    let filt: Vec<u64> = (0..(1u64 << n))
                        .filter(|&s| cluster_count(s, n, bc) == k)
                        .collect();
                    assert_eq!(constructive(n, k, bc), filt, "n={n} k={k} {bc:?}");
                }
            }
        }
        let mut o = vec![false; 30];
        o[0] = true;
        let long = enumerate_subspace(&o, Boundary::Open).unwrap();
        assert_eq!(long.len(), 30 * 31 / 2);
    }

    #[test]
    fn three_site_spectrum() {
        let b = enumerate_subspace(&occ("010"), Boundary::Open).unwrap();
        let h = build_reduced_hamiltonian(&b, 1.0, 0.0);
        let s5 = 5f64.sqrt() / 2.0;
        let expect = [-s5, -0.5, 0.0, 0.0, 0.5, s5];
        for (e, x) in spectrum(&h).iter().zip(expect) {
            assert!((e - x).abs() < 1e-12);
        }
        let d = dark_states(&h);
        assert_eq!(d.count, 2);
        // rrr - grg and rgg - grg + ggr lie in the kernel
        let idx = |s: &str| b.index_of[&bits_from_occupations(&occ(s))];
        for v in [[("111", 1.0), ("010", -1.0), ("000", 0.0)], [("100", 1.0), ("010", -1.0), ("001", 1.0)]] {
            let mut x = DVector::zeros(b.len());
            for (s, c) in v {
                if s != "000" {
                    x[idx(s)] = c;
                }
            }
            let proj = &d.vectors * (d.vectors.transpose() * &x);
            assert!((proj - &x).norm() < 1e-10);
        }
    }

    #[test]
    fn two_site_spectrum() {
        let b = enumerate_subspace(&occ("11"), Boundary::Open).unwrap();
        let h = build_reduced_hamiltonian(&b, 0.03, 0.0);
        let e = spectrum(&h);
        let x = 0.03 / 2f64.sqrt();
        assert!((e[0] + x).abs() < 1e-14 && e[1].abs() < 1e-14 && (e[2] - x).abs() < 1e-14);
        let z = build_reduced_hamiltonian(&b, 0.0, 0.0);
        assert_eq!(z.matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn periodogram_finds_sine_period() {
        let t: Vec<f64> = (0..2000).map(|k| k as f64 * 0.7).collect();
        let v: Vec<f64> = t.iter().map(|&x| 0.3 + (x * 0.05).sin() + 0.2 * (x * 0.31).cos()).collect();
        let p = dominant_period(&t, &v, 10.0, 500.0).unwrap();
        assert!((p - 2.0 * std::f64::consts::PI / 0.05).abs() < 1e-3 * p);
        assert_eq!(peak_times(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 1.0, 3.0]), vec![1.0]);
    }

    #[test]
    fn dispersion_examples() {
        let j = 0.015;
        assert!((tight_binding_dispersion(0.0, 0.0, 10, j) + 4.0 * j).abs() < 1e-15);
        assert!((tight_binding_dispersion(5.0, 5.0, 10, j) - 4.0 * j).abs() < 1e-15);
        assert_eq!(
            tight_binding_dispersion(2.0, -2.0, 10, j),
            tight_binding_dispersion(2.0, 2.0, 10, j)
        );
    }

    #[test]
    fn dark_state_is_stationary() {
        let b = chain(5);
        let h = build_reduced_hamiltonian(&b, 0.03, 0.0);
        let d = dark_states(&h);
        let psi: Vec<C64> = d.vectors.column(0).iter().map(|&x| C64::from(x)).collect();
        let r = evolve_reduced_state(&h, &psi, &[0.0, 50.0, 500.0]).unwrap();
        assert!((r[0] - r[1]).abs() < 1e-12 && (r[0] - r[2]).abs() < 1e-12);
        assert!(matches!(
            evolve_reduced(&h, &occ("10101"), &[0.0]),
            Err(Error::UnsupportedState)
        ));
    }

    #[test]
    fn alternating_single_excitation_is_dark() {
        for n in 2..=9 {
            let b = chain(n);
            let h = build_reduced_hamiltonian(&b, 1.0, 0.0);
            let mut x = DVector::zeros(b.len());
            for i in 0..n {
                let mut o = vec![false; n];
                o[i] = true;
                x[b.index_of[&bits_from_occupations(&o)]] = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            assert!((&h.matrix * x).norm() < 1e-12, "n={n}");
        }
    }
}
