//! Many-body Hamiltonian, Lindblad master equation and quantum trajectories
//! on the product basis of a chain of atoms.

mod master;
mod observables;
mod trajectory;

pub use master::{evolve_master_equation, MeOptions, MeSeries};
pub use observables::{
    bright_dark_statistics, concentration, concentration_average, ensemble_average,
    excess_concentration_estimate, BrightDarkStatistics, ConcentrationSeries, EnsembleAverage, Excess,
};
pub use trajectory::{
    run_ensemble, run_trajectory, sampling_grid, JumpEvent, McwfOptions, Period, TrajectoryPropagator,
    TrajectoryRecord,
};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::config::{Boundary, SystemConfig};
use crate::error::{Error, Result};

/// Largest three-level dimension accepted by [`build_hamiltonian`].
pub const THREE_LEVEL_DIM_CAP: usize = 531_441; // 3^12
/// Largest two-level dimension accepted by [`build_hamiltonian`].
pub const TWO_LEVEL_DIM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Levels g, e, r with decay from e.
    ThreeLevel,
    /// Levels g, r only, no dissipation.
    TwoLevelCoherent,
}

impl Mode {
    pub fn levels(self) -> usize {
        match self {
            Mode::ThreeLevel => 3,
            Mode::TwoLevelCoherent => 2,
        }
    }

    /// Local index of the Rydberg level.
    pub fn rydberg(self) -> usize {
        self.levels() - 1
    }

    /// Local index of the decaying level, if any.
    pub fn excited(self) -> Option<usize> {
        match self {
            Mode::ThreeLevel => Some(1),
            Mode::TwoLevelCoherent => None,
        }
    }

    pub fn dim_cap(self) -> usize {
        match self {
            Mode::ThreeLevel => THREE_LEVEL_DIM_CAP,
            Mode::TwoLevelCoherent => TWO_LEVEL_DIM_CAP,
        }
    }
}

/// Site-major product basis: site 0 is the slowest digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub n_sites: usize,
    pub mode: Mode,
}

impl Basis {
    pub fn new(n_sites: usize, mode: Mode) -> Result<Self> {
        let cap = mode.dim_cap();
        let mut dim = 1usize;
        for _ in 0..n_sites {
            dim = dim.saturating_mul(mode.levels());
        }
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(Basis { n_sites, mode })
    }

    pub fn levels(&self) -> usize {
        self.mode.levels()
    }

    pub fn dim(&self) -> usize {
        self.levels().pow(self.n_sites as u32)
    }

    /// Index step of one unit of `site`'s local level.
    pub fn stride(&self, site: usize) -> usize {
        self.levels().pow((self.n_sites - 1 - site) as u32)
    }

    pub fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.stride(site)) % self.levels()
    }

    /// Index of the product state with the given local levels.
    pub fn index_of(&self, levels: &[usize]) -> usize {
        levels.iter().fold(0, |acc, &d| acc * self.levels() + d)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<C64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        self.indices[range.clone()]
            .iter()
            .zip(&self.values[range])
            .filter(|(&c, _)| c == col)
            .map(|(_, &v)| v)
            .sum()
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[C64], out: &mut [C64]) {
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for row in 0..self.dim {
            for k in self.indptr[row]..self.indptr[row + 1] {
                m[(row, self.indices[k])] += self.values[k];
            }
        }
        m
    }

    /// Largest `|H - H^dagger|` entry.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in 0..self.dim {
            for k in self.indptr[row]..self.indptr[row + 1] {
                let col = self.indices[k];
                worst = worst.max((self.values[k] - self.get(col, row).conj()).norm());
            }
        }
        worst
    }
}

/// Pairwise interaction bonds `(i, j, V_ij)` of a chain. Under periodic
/// boundaries every site `i` is paired with `(i + x) mod N` for each
/// `1 <= x <= cutoff`, so a ring of two sites carries two bonds.
pub fn interaction_bonds(cfg: &SystemConfig) -> Vec<(usize, usize, f64)> {
    let n = cfg.n_sites;
    let mut bonds = Vec::new();
    for x in 1..=cfg.potential_cutoff() {
        let v = cfg.potential.at_distance(cfg.interaction_strength, x);
        for i in 0..n {
            let j = match cfg.boundary {
                Boundary::Open if i + x < n => i + x,
                Boundary::Open => continue,
                Boundary::Periodic => (i + x) % n,
            };
            if j != i {
                bonds.push((i, j, v));
            }
        }
    }
    bonds
}

/// Hamiltonian of the chain in the product basis.
#[derive(Debug, Clone)]
pub struct ManyBodyHamiltonian {
    pub basis: Basis,
    pub omega_e: f64,
    pub omega_r: f64,
    /// Full detuning `Delta_r + Delta'_i` of each site.
    pub site_detunings: Vec<f64>,
    /// Diagonal interaction energy of every basis state.
    pub interaction: Vec<f64>,
    /// Complete Hamiltonian including the diagonal.
    pub matrix: SparseMatrix,
}

impl ManyBodyHamiltonian {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites
    }

    pub fn mode(&self) -> Mode {
        self.basis.mode
    }

    /// Single-site Hamiltonian (without decay) in the local level basis,
    /// row-major `levels x levels`.
    pub fn local_hamiltonian(&self, site: usize) -> Vec<C64> {
        let l = self.basis.levels();
        let mut h = vec![C64::new(0.0, 0.0); l * l];
        let r = self.mode().rydberg();
        h[r * l] = C64::from(self.omega_r / 2.0);
        h[r] = C64::from(self.omega_r / 2.0);
        if let Some(e) = self.mode().excited() {
            h[e * l] = C64::from(self.omega_e / 2.0);
            h[e] = C64::from(self.omega_e / 2.0);
        }
        h[r * l + r] = C64::from(-self.site_detunings[site]);
        h
    }
}

/// Builds the chain Hamiltonian for `cfg` in the requested level mode.
pub fn build_hamiltonian(cfg: &SystemConfig, mode: Mode) -> Result<ManyBodyHamiltonian> {
    cfg.validate()?;
    let basis = Basis::new(cfg.n_sites, mode)?;
    let n = cfg.n_sites;
    let dim = basis.dim();
    let levels = basis.levels();
    let ryd = mode.rydberg();
    let detunings: Vec<f64> = cfg
        .site_detunings()
        .iter()
        .map(|d| cfg.delta_r + d)
        .collect();
    let bonds = interaction_bonds(cfg);
    let strides: Vec<usize> = (0..n).map(|i| basis.stride(i)).collect();

    let mut interaction = vec![0.0; dim];
    let mut indptr = Vec::with_capacity(dim + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    let mut row: Vec<(usize, C64)> = Vec::with_capacity(2 * n + 1);
    for a in 0..dim {
        row.clear();
        let digits: Vec<usize> = (0..n).map(|i| (a / strides[i]) % levels).collect();
        let mut diag = 0.0;
        for i in 0..n {
            if digits[i] == ryd {
                diag -= detunings[i];
            }
        }
        let mut w = 0.0;
        for &(i, j, v) in &bonds {
            if digits[i] == ryd && digits[j] == ryd {
                w += v;
            }
        }
        interaction[a] = w;
        diag += w;
        for i in 0..n {
            let s = strides[i];
            match (mode, digits[i]) {
                (Mode::ThreeLevel, 0) => {
                    row.push((a + s, C64::from(cfg.omega_e / 2.0)));
                    row.push((a + 2 * s, C64::from(cfg.omega_r / 2.0)));
                }
                (Mode::ThreeLevel, 1) => row.push((a - s, C64::from(cfg.omega_e / 2.0))),
                (Mode::ThreeLevel, _) => row.push((a - 2 * s, C64::from(cfg.omega_r / 2.0))),
                (Mode::TwoLevelCoherent, 0) => row.push((a + s, C64::from(cfg.omega_r / 2.0))),
                (Mode::TwoLevelCoherent, _) => row.push((a - s, C64::from(cfg.omega_r / 2.0))),
            }
        }
        row.push((a, C64::from(diag)));
        row.sort_by_key(|&(c, _)| c);
        for &(c, v) in &row {
            if v.norm() != 0.0 {
                indices.push(c);
                values.push(v);
            }
        }
        indptr.push(indices.len());
    }
    Ok(ManyBodyHamiltonian {
        basis,
        omega_e: cfg.omega_e,
        omega_r: cfg.omega_r,
        site_detunings: detunings,
        interaction,
        matrix: SparseMatrix {
            dim,
            indptr,
            indices,
            values,
        },
    })
}

/// Pure state on the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub basis: Basis,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    /// Product state with the given local level on each site.
    pub fn product(basis: Basis, levels: &[usize]) -> Result<Self> {
        if levels.len() != basis.n_sites {
            return Err(Error::InvalidArgument(format!(
                "{} levels for {} sites",
                levels.len(),
                basis.n_sites
            )));
        }
        if let Some(&bad) = levels.iter().find(|&&d| d >= basis.levels()) {
            return Err(Error::InvalidArgument(format!("level {bad} not in {:?}", basis.mode)));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
        amplitudes[basis.index_of(levels)] = C64::new(1.0, 0.0);
        Ok(StateVector { basis, amplitudes })
    }

    /// Ground state with Rydberg excitations on the flagged sites.
    pub fn from_occupations(basis: Basis, rydberg: &[bool]) -> Result<Self> {
        let ryd = basis.mode.rydberg();
        let levels: Vec<usize> = rydberg.iter().map(|&b| if b { ryd } else { 0 }).collect();
        Self::product(basis, &levels)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_sqr();
        if !(n2 > 1e-300) || !n2.is_finite() {
            return Err(Error::Numerical(format!("state norm {n2:e} cannot be normalised")));
        }
        let s = 1.0 / n2.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// `<P_level,site>` without normalisation.
    pub fn population(&self, site: usize, level: usize) -> f64 {
        site_populations(&self.basis, &self.amplitudes, level)[site]
    }
}

/// `sum_a |psi_a|^2 [digit_i(a) == level]` for every site at once.
pub(crate) fn site_populations(basis: &Basis, psi: &[C64], level: usize) -> Vec<f64> {
    let weights: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    site_sums(basis, &weights, level)
}

/// `sum_a w_a [digit_i(a) == level]` for every site.
pub(crate) fn site_sums(basis: &Basis, weights: &[f64], level: usize) -> Vec<f64> {
    let l = basis.levels();
    (0..basis.n_sites)
        .map(|i| {
            let s = basis.stride(i);
            (0..weights.len())
                .step_by(s * l)
                .map(|base| weights[base + level * s..base + (level + 1) * s].iter().sum::<f64>())
                .sum()
        })
        .collect()
}

/// Density matrix on the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub basis: Basis,
    pub data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn pure(state: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(&state.amplitudes);
        DensityMatrix {
            basis: state.basis,
            data: &v * v.adjoint(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.data - self.data.adjoint()).camax()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.data + self.data.adjoint()) * C64::from(0.5);
        herm.symmetric_eigenvalues().min()
    }

    /// `Tr(rho P_level,i)` for every site.
    pub fn site_populations(&self, level: usize) -> Vec<f64> {
        let diag: Vec<f64> = (0..self.data.nrows()).map(|a| self.data[(a, a)].re).collect();
        site_sums(&self.basis, &diag, level)
    }
}
