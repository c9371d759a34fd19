//! Lindblad master equation with decay `|g><e|_i` on every site, integrated
//! with an adaptive Dormand-Prince 5(4) scheme.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use super::{DensityMatrix, ManyBodyHamiltonian, Mode};
use crate::error::{Error, Result};

/// Site count limits for the dense density matrix.
pub const ME_MAX_SITES_THREE_LEVEL: usize = 5;
pub const ME_MAX_SITES_TWO_LEVEL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Tolerance on trace, Hermiticity and negative eigenvalues.
    pub invariant_tol: f64,
    /// Check positivity at every `positivity_stride`-th output point.
    pub positivity_stride: usize,
    pub max_steps: usize,
}

impl Default for MeOptions {
    fn default() -> Self {
        MeOptions {
            rtol: 1e-8,
            atol: 1e-11,
            invariant_tol: 1e-8,
            positivity_stride: 1,
            max_steps: 50_000_000,
        }
    }
}

/// Observables of a master-equation run on the output grid.
#[derive(Debug, Clone, Serialize)]
pub struct MeSeries {
    pub times: Vec<f64>,
    /// `rydberg[k][i]`: Rydberg population of site `i` at `times[k]`.
    pub rydberg: Vec<Vec<f64>>,
    pub excited: Vec<Vec<f64>>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
    #[serde(skip)]
    pub final_state: Option<DensityMatrix>,
}

impl MeSeries {
    /// Rydberg population of one site over time.
    pub fn site_series(&self, site: usize) -> Vec<f64> {
        self.rydberg.iter().map(|row| row[site]).collect()
    }
}

struct Liouvillian<'a> {
    h: &'a ManyBodyHamiltonian,
    dim: usize,
    /// `-gamma/2 * n_e(a)` added to the Hamiltonian diagonal.
    damping: Vec<f64>,
    /// For each site, the basis indices whose digit is `e`, and the stride.
    jumps: Vec<(usize, Vec<usize>)>,
    gamma: f64,
}

impl<'a> Liouvillian<'a> {
    fn new(h: &'a ManyBodyHamiltonian, gamma: f64) -> Self {
        let basis = h.basis;
        let dim = basis.dim();
        let mut damping = vec![0.0; dim];
        let mut jumps = Vec::new();
        if let Some(e) = basis.mode.excited() {
            for i in 0..basis.n_sites {
                let idx: Vec<usize> = (0..dim).filter(|&a| basis.digit(a, i) == e).collect();
                for &a in &idx {
                    damping[a] -= gamma / 2.0;
                }
                jumps.push((basis.stride(i), idx));
            }
        }
        Liouvillian {
            h,
            dim,
            damping,
            jumps,
            gamma,
        }
    }

    /// `out = L(rho)` for column-major `rho`.
    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let m = &self.h.matrix;
        // A = H_eff rho, column by column
        let mut a = vec![C64::new(0.0, 0.0); d * d];
        for c in 0..d {
            let col = &rho[c * d..(c + 1) * d];
            let dst = &mut a[c * d..(c + 1) * d];
            m.mul_vec(col, dst);
            for r in 0..d {
                dst[r] += C64::new(0.0, self.damping[r]) * col[r];
            }
        }
        // -i (A - A^dagger)
        for c in 0..d {
            for r in 0..d {
                let v = a[c * d + r] - a[r * d + c].conj();
                out[c * d + r] = C64::new(v.im, -v.re);
            }
        }
        for (s, idx) in &self.jumps {
            for &cb in idx {
                for &ra in idx {
                    out[(cb - s) * d + (ra - s)] += self.gamma * rho[cb * d + ra];
                }
            }
        }
    }
}

// Dormand-Prince 5(4) tableau; the generator is time independent so the
// nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
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
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Propagates `rho0` under the Lindblad generator and samples site
/// populations at `t_grid` (ascending, starting at or after 0).
///
/// In two-level mode there is no dissipator and the evolution is unitary.
pub fn evolve_master_equation(
    h: &ManyBodyHamiltonian,
    gamma_e: f64,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &MeOptions,
) -> Result<MeSeries> {
    let n = h.n_sites();
    let cap = match h.mode() {
        Mode::ThreeLevel => ME_MAX_SITES_THREE_LEVEL,
        Mode::TwoLevelCoherent => ME_MAX_SITES_TWO_LEVEL,
    };
    if n > cap {
        return Err(Error::DimensionCap {
            dim: h.dim() * h.dim(),
            cap: h.mode().levels().pow(2 * cap as u32),
        });
    }
    if rho0.basis != h.basis {
        return Err(Error::InvalidArgument("initial state basis differs from Hamiltonian".into()));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be ascending and non-negative".into()));
    }
    let tol = opts.invariant_tol;
    if (rho0.trace() - C64::from(1.0)).norm() > tol || rho0.hermiticity_residual() > tol {
        return Err(Error::InvalidArgument("initial density matrix is not normalised and Hermitian".into()));
    }

    let liou = Liouvillian::new(h, gamma_e);
    let d = h.dim();
    let len = d * d;
    let mut y: Vec<C64> = rho0.data.as_slice().to_vec();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); len]; 7];
    let mut stage = vec![C64::new(0.0, 0.0); len];
    let mut y_new = vec![C64::new(0.0, 0.0); len];
    liou.apply(&y, &mut k[0]);

    let ryd = h.mode().rydberg();
    let exc = h.mode().excited();
    let mut out = MeSeries {
        times: Vec::with_capacity(t_grid.len()),
        rydberg: Vec::with_capacity(t_grid.len()),
        excited: Vec::with_capacity(t_grid.len()),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        steps: 0,
        final_state: None,
    };

    let mut t = 0.0;
    let mut dt = 1e-3_f64;
    for (idx, &target) in t_grid.iter().enumerate() {
        while t < target {
            if out.steps >= opts.max_steps {
                return Err(Error::Integrator {
                    time: t,
                    msg: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let h_step = dt.min(target - t);
            for s in 1..7 {
                stage.copy_from_slice(&y);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j] * h_step;
                    if a != 0.0 {
                        for (st, kv) in stage.iter_mut().zip(kj) {
                            *st += a * kv;
                        }
                    }
                }
                liou.apply(&stage, &mut k[s]);
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
            }
            // y_new is the 5th-order solution (row 6 of A); k[6] = f(y_new)
            let mut err = 0.0f64;
            for i in 0..len {
                let mut e = C64::new(0.0, 0.0);
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += E[j] * kj[i];
                    }
                }
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err = err.max((e * h_step).norm() / scale);
            }
            if !err.is_finite() {
                return Err(Error::Integrator {
                    time: t,
                    msg: "non-finite error estimate".into(),
                });
            }
            if err <= 1.0 {
                t = if h_step == target - t { target } else { t + h_step };
                std::mem::swap(&mut y, &mut y_new);
                let last = k.pop().expect("seven stages");
                k.insert(0, last);
                out.steps += 1;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposal = h_step * factor;
            dt = if err <= 1.0 && h_step < dt {
                dt.max(proposal)
            } else {
                proposal
            };
            if dt < 1e-14 * (1.0 + t) {
                return Err(Error::Integrator {
                    time: t,
                    msg: format!("step size underflow ({dt:e})"),
                });
            }
        }

        let rho = DensityMatrix {
            basis: h.basis,
            data: DMatrix::from_column_slice(d, d, &y),
        };
        let trace_err = (rho.trace() - C64::from(1.0)).norm();
        let herm_err = rho.hermiticity_residual();
        out.max_trace_error = out.max_trace_error.max(trace_err);
        out.max_hermiticity_error = out.max_hermiticity_error.max(herm_err);
        if idx % opts.positivity_stride.max(1) == 0 || idx + 1 == t_grid.len() {
            out.min_eigenvalue = out.min_eigenvalue.min(rho.min_eigenvalue());
        }
        if trace_err > tol || herm_err > tol || out.min_eigenvalue < -tol {
            return Err(Error::Integrator {
                time: t,
                msg: format!(
                    "invariant violated: trace error {trace_err:e}, hermiticity {herm_err:e}, min eigenvalue {:e}",
                    out.min_eigenvalue
                ),
            });
        }
        out.times.push(target);
        out.rydberg.push(rho.site_populations(ryd));
        out.excited.push(match exc {
            Some(e) => rho.site_populations(e),
            None => vec![0.0; n],
        });
        if idx + 1 == t_grid.len() {
            out.final_state = Some(rho);
        }
    }
    Ok(out)
}
