//! Closed-form and small-matrix analytics for one V-shaped three-level atom:
//! effective non-Hermitian Hamiltonian, its eigensystem, bright/dark
//! switching rates, the photon delay function and the Bloch steady state.

use nalgebra::{DMatrix, Matrix3, Vector3, SVD};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::regime::AtomLevel;

const I: C64 = C64::new(0.0, 1.0);

/// Drive and decay parameters of a single atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeLevelAtom {
    pub omega_e: f64,
    pub omega_r: f64,
    pub gamma_e: f64,
}

/// Bright-to-dark and dark-to-bright switching rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePair {
    pub gamma_up: f64,
    pub gamma_down: f64,
}

impl ThreeLevelAtom {
    /// Atom in natural units (`gamma_e = 1`).
    pub fn new(omega_e: f64, omega_r: f64) -> Self {
        ThreeLevelAtom {
            omega_e,
            omega_r,
            gamma_e: 1.0,
        }
    }

    /// `H - (i gamma_e / 2)|e><e|` in the g, e, r ordering.
    pub fn effective_hamiltonian(&self, delta_r: f64) -> Matrix3<C64> {
        let he = C64::from(self.omega_e / 2.0);
        let hr = C64::from(self.omega_r / 2.0);
        let z = C64::from(0.0);
        Matrix3::new(
            z,
            he,
            hr,
            he,
            C64::new(0.0, -self.gamma_e / 2.0),
            z,
            hr,
            z,
            C64::from(-delta_r),
        )
    }

    fn denominator(&self, delta: f64) -> Result<f64> {
        let d2 = delta * delta;
        let oe2 = self.omega_e * self.omega_e;
        let g2 = self.gamma_e * self.gamma_e;
        let den = 16.0 * d2 * d2 + 4.0 * d2 * (g2 - 2.0 * oe2) + oe2 * oe2;
        if den <= 0.0 || !den.is_finite() {
            return Err(Error::SingularRate(format!(
                "denominator {den:e} at Delta = {delta}, Omega_e = {}",
                self.omega_e
            )));
        }
        Ok(den)
    }

    /// Rate of leaving a bright period (bright -> dark).
    pub fn rate_up(&self, delta: f64) -> Result<f64> {
        let den = self.denominator(delta)?;
        let (g, oe, or) = (self.gamma_e, self.omega_e, self.omega_r);
        Ok(g * oe * oe * or * or * (g * g + 4.0 * delta * delta)
            / ((g * g + 2.0 * oe * oe) * den))
    }

    /// Rate of leaving a dark period (dark -> bright).
    pub fn rate_down(&self, delta: f64) -> Result<f64> {
        let den = self.denominator(delta)?;
        let (g, oe, or) = (self.gamma_e, self.omega_e, self.omega_r);
        Ok(g * oe * oe * or * or / den)
    }

    pub fn rates(&self, delta: f64) -> Result<RatePair> {
        Ok(RatePair {
            gamma_up: self.rate_up(delta)?,
            gamma_down: self.rate_down(delta)?,
        })
    }

    /// Probability of starting a dark period after a photon count,
    /// `|c_3|^2` to second order in `Omega_r`.
    pub fn dark_probability(&self, delta: f64) -> Result<f64> {
        let den = self.denominator(delta)?;
        let (g, or) = (self.gamma_e, self.omega_r);
        Ok(or * or * (g * g + 4.0 * delta * delta) / den)
    }

    /// Second-order Brillouin-Wigner estimate of the long-lived eigenvalue.
    ///
    /// The sign of the correction is the one that makes `-2 Im` equal the
    /// dark-to-bright rate; see [`Self::lambda3_as_printed`].
    pub fn perturbative_lambda3(&self, delta: f64) -> C64 {
        let (g, oe, or) = (self.gamma_e, self.omega_e, self.omega_r);
        let num = (I * g - 2.0 * delta) * (or * or);
        let den = C64::from(8.0 * delta * delta - 2.0 * oe * oe) - 4.0 * I * g * delta;
        C64::from(-delta) + num / den
    }

    /// The closed form with the opposite sign of the second-order term. Its
    /// imaginary part has the wrong sign for a decaying mode while its
    /// magnitude is correct; kept only so tests can document the difference.
    pub fn lambda3_as_printed(&self, delta: f64) -> C64 {
        let (g, oe, or) = (self.gamma_e, self.omega_e, self.omega_r);
        let num = (I * g - 2.0 * delta) * (or * or);
        let den = C64::from(8.0 * delta * delta - 2.0 * oe * oe) - 4.0 * I * g * delta;
        C64::from(-delta) - num / den
    }

    /// First-order perturbed long-lived eigenvector, `|r>` plus admixtures.
    pub fn perturbative_u3(&self, delta: f64) -> Vector3<C64> {
        let (g, oe, or) = (self.gamma_e, self.omega_e, self.omega_r);
        let den = 2.0 * I * g * delta - 4.0 * delta * delta + oe * oe;
        Vector3::new(
            -(or * (I * g - 2.0 * delta)) / den,
            -C64::from(oe * or) / den,
            C64::from(1.0),
        )
    }

    pub fn eigensystem(&self, delta: f64, initial: AtomLevel) -> Result<EffectiveEigensystem> {
        EffectiveEigensystem::compute(self, delta, initial)
    }
}

/// Free-function forms in natural units (`gamma_e = 1`).
pub fn effective_hamiltonian(omega_e: f64, omega_r: f64, delta_r: f64) -> Matrix3<C64> {
    ThreeLevelAtom::new(omega_e, omega_r).effective_hamiltonian(delta_r)
}

pub fn rate_up(delta_star: f64, omega_e: f64, omega_r: f64) -> Result<f64> {
    ThreeLevelAtom::new(omega_e, omega_r).rate_up(delta_star)
}

pub fn rate_down(delta_star: f64, omega_e: f64, omega_r: f64) -> Result<f64> {
    ThreeLevelAtom::new(omega_e, omega_r).rate_down(delta_star)
}

pub fn bw_eigensystem(
    omega_e: f64,
    omega_r: f64,
    delta_r: f64,
    initial: AtomLevel,
) -> Result<EffectiveEigensystem> {
    ThreeLevelAtom::new(omega_e, omega_r).eigensystem(delta_r, initial)
}

/// Eigen-decomposition of the single-atom effective Hamiltonian together
/// with the expansion of an initial state in its (non-orthogonal)
/// eigenvectors.
#[derive(Debug, Clone)]
pub struct EffectiveEigensystem {
    pub eigenvalues: [C64; 3],
    /// Unit-norm right eigenvectors, one per column.
    pub vectors: Matrix3<C64>,
    /// Expansion coefficients of the initial state.
    pub coefficients: [C64; 3],
    /// Index of the long-lived (mostly `|r>`) eigenpair.
    pub dark_index: usize,
    pub p_dark: f64,
    /// Two eigenvalues closer than `1e-12`.
    pub degenerate: bool,
    /// Second-order estimate of the long-lived eigenvalue; `None` when the
    /// spectrum is degenerate.
    pub perturbative_lambda3: Option<C64>,
}

fn det3(m: &Matrix3<C64>) -> C64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Roots of the characteristic polynomial by Durand-Kerner, polished with
/// Newton steps on the determinant itself.
fn eigenvalues3(m: &Matrix3<C64>) -> [C64; 3] {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = det3(m);
    // p(x) = x^3 - tr x^2 + minors x - det
    let p = |x: C64| ((x - tr) * x + minors) * x - det;
    let dp = |x: C64| (3.0 * x - 2.0 * tr) * x + minors;
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let seed = C64::new(0.4, 0.9) * scale;
    let mut roots = [seed, seed * seed / scale, seed * seed * seed / (scale * scale)];
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for k in 0..3 {
            let mut den = C64::from(1.0);
            for j in 0..3 {
                if j != k {
                    den *= roots[k] - roots[j];
                }
            }
            let step = p(roots[k]) / den;
            roots[k] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 * scale {
            break;
        }
    }
    for root in roots.iter_mut() {
        for _ in 0..3 {
            let d = dp(*root);
            if d.norm() == 0.0 {
                break;
            }
            let shifted = m - Matrix3::from_diagonal_element(*root);
            let step = det3(&shifted) / d;
            if !step.is_finite() {
                break;
            }
            *root -= step;
        }
    }
    roots
}

fn cross(a: Vector3<C64>, b: Vector3<C64>) -> Vector3<C64> {
    Vector3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

/// Right null vector of a rank-2 3x3 matrix: the best-conditioned cross
/// product of two rows.
fn null_vector(m: &Matrix3<C64>) -> Vector3<C64> {
    let rows: Vec<Vector3<C64>> = (0..3).map(|i| m.row(i).transpose()).collect();
    let candidates = [
        cross(rows[0], rows[1]),
        cross(rows[0], rows[2]),
        cross(rows[1], rows[2]),
    ];
    let best = candidates
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("three candidates");
    if best.norm() > 0.0 {
        best / C64::from(best.norm())
    } else {
        // rank <= 1: any vector orthogonal (bilinearly) to the nonzero row
        let row = rows
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("three rows");
        let trial = if row[0].norm() > 0.0 || row[1].norm() > 0.0 {
            Vector3::new(-row[1], row[0], C64::from(0.0))
        } else {
            Vector3::new(C64::from(1.0), C64::from(0.0), C64::from(0.0))
        };
        trial / C64::from(trial.norm())
    }
}

impl EffectiveEigensystem {
    fn compute(atom: &ThreeLevelAtom, delta: f64, initial: AtomLevel) -> Result<Self> {
        let h = atom.effective_hamiltonian(delta);
        if h.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameters".into()));
        }
        let mut eigenvalues = eigenvalues3(&h);
        eigenvalues.sort_by(|a, b| a.im.total_cmp(&b.im));
        let degenerate = (0..3).any(|i| {
            (i + 1..3).any(|j| (eigenvalues[i] - eigenvalues[j]).norm() < 1e-12)
        });

        let mut vectors = Matrix3::<C64>::zeros();
        for (k, &lambda) in eigenvalues.iter().enumerate() {
            let twins: Vec<usize> = (0..3)
                .filter(|&j| (eigenvalues[j] - lambda).norm() < 1e-12)
                .collect();
            if twins.len() == 1 {
                let v = null_vector(&(h - Matrix3::from_diagonal_element(lambda)));
                vectors.set_column(k, &v);
            } else if twins[0] == k {
                // repeated eigenvalue: one SVD for the whole group, distinct
                // right singular vectors of the smallest singular values
                let mean = twins.iter().map(|&j| eigenvalues[j]).sum::<C64>() / twins.len() as f64;
                let svd = (h - Matrix3::from_diagonal_element(mean)).svd(false, true);
                let v_t = svd.v_t.expect("requested V^H");
                let mut order: Vec<usize> = (0..3).collect();
                order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
                for (slot, &j) in twins.iter().enumerate() {
                    vectors.set_column(j, &v_t.row(order[slot]).adjoint());
                }
            }
        }
        let dark_index = (0..3)
            .max_by(|&a, &b| vectors[(2, a)].norm().total_cmp(&vectors[(2, b)].norm()))
            .expect("three columns");

        let mut psi0 = Vector3::<C64>::zeros();
        psi0[initial.index()] = C64::from(1.0);
        let coeffs = vectors
            .lu()
            .solve(&psi0)
            .ok_or_else(|| Error::Numerical("eigenvectors are linearly dependent".into()))?;
        let coefficients = [coeffs[0], coeffs[1], coeffs[2]];
        let p_dark = coefficients[dark_index].norm_sqr();
        let perturbative_lambda3 = (!degenerate).then(|| atom.perturbative_lambda3(delta));
        Ok(EffectiveEigensystem {
            eigenvalues,
            vectors,
            coefficients,
            dark_index,
            p_dark,
            degenerate,
            perturbative_lambda3,
        })
    }

    pub fn lambda3(&self) -> C64 {
        self.eigenvalues[self.dark_index]
    }

    /// Dark-to-bright rate from the exact long-lived eigenvalue.
    pub fn dark_decay_rate(&self) -> f64 {
        (2.0 * self.lambda3().im).abs()
    }

    /// Relative difference of `|Im lambda_3|` between the exact and the
    /// second-order eigenvalue.
    pub fn perturbative_mismatch(&self) -> Option<f64> {
        self.perturbative_lambda3.map(|pt| {
            let exact = self.lambda3().im.abs();
            (pt.im.abs() - exact).abs() / exact.max(f64::MIN_POSITIVE)
        })
    }
}

/// Probability that no photon is emitted during `[0, t]` after a count at
/// `t = 0`: the exact squared norm of `sum_n c_n e^{-i lambda_n t} |u_n>`.
pub fn delay_function(t: f64, eig: &EffectiveEigensystem) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("delay time {t} must be >= 0")));
    }
    let mut psi = Vector3::<C64>::zeros();
    for n in 0..3 {
        let phase = (-I * eig.eigenvalues[n] * t).exp();
        psi += eig.vectors.column(n) * (eig.coefficients[n] * phase);
    }
    Ok(psi.norm_squared())
}

/// Diagonal approximation `sum_n |c_n|^2 e^{2 t Im lambda_n}`, which drops the
/// interference between the non-orthogonal eigenvectors. Agrees with
/// [`delay_function`] at long times.
pub fn delay_function_diagonal(t: f64, eig: &EffectiveEigensystem) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("delay time {t} must be >= 0")));
    }
    Ok((0..3)
        .map(|n| eig.coefficients[n].norm_sqr() * (2.0 * t * eig.eigenvalues[n].im).exp())
        .sum())
}

/// Ordering of the density-matrix elements in the Bloch vector:
/// `(eg, ge, ee, gg, rg, gr, rr, er, re)` as (row, column) level pairs.
pub const BLOCH_ORDER: [(usize, usize); 9] = [
    (1, 0),
    (0, 1),
    (1, 1),
    (0, 0),
    (2, 0),
    (0, 2),
    (2, 2),
    (1, 2),
    (2, 1),
];

/// 9x9 generator of the single-atom optical Bloch equations in
/// [`BLOCH_ORDER`].
pub fn bloch_generator(atom: &ThreeLevelAtom, delta_r: f64) -> DMatrix<C64> {
    let heff = atom.effective_hamiltonian(delta_r);
    let g = atom.gamma_e;
    // element (a,b) of d(rho)/dt as a linear function of rho
    let pos = |a: usize, b: usize| {
        BLOCH_ORDER
            .iter()
            .position(|&p| p == (a, b))
            .expect("all pairs present")
    };
    let mut l = DMatrix::<C64>::zeros(9, 9);
    for (row, &(a, b)) in BLOCH_ORDER.iter().enumerate() {
        // -i (Heff rho - rho Heff^dagger)
        for k in 0..3 {
            l[(row, pos(k, b))] += -I * heff[(a, k)];
            l[(row, pos(a, k))] += I * heff[(b, k)].conj();
        }
        // jump |g><e| rho |e><g|
        if a == 0 && b == 0 {
            l[(row, pos(1, 1))] += C64::from(g);
        }
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochSteadyState {
    /// Closed-form steady-state Rydberg population.
    pub rho_rr: f64,
    /// The same population read from the numerical kernel.
    pub rho_rr_kernel: f64,
    /// `|L x|` for the normalised kernel vector.
    pub residual: f64,
}

/// Steady-state Rydberg population of a resonantly driven atom.
pub fn bloch_closed_form(omega_e: f64, omega_r: f64, gamma_e: f64) -> f64 {
    let g2 = gamma_e * gamma_e;
    let or2 = omega_r * omega_r;
    (g2 + or2) / (2.0 * (g2 + omega_e * omega_e + or2))
}

/// Null-space threshold on singular values of the Bloch generator.
pub const KERNEL_TOLERANCE: f64 = 1e-12;

pub fn bloch_steady_state_for(atom: &ThreeLevelAtom) -> Result<BlochSteadyState> {
    let l = bloch_generator(atom, 0.0);
    let svd = SVD::new(l.clone(), false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return V^H".into()))?;
    let scale = svd.singular_values.max().max(1.0);
    let null: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < KERNEL_TOLERANCE * scale)
        .map(|(i, _)| i)
        .collect();
    if null.len() != 1 {
        return Err(Error::DegenerateKernel(null.len()));
    }
    let mut x: Vec<C64> = v_t.row(null[0]).iter().map(|z| z.conj()).collect();
    let trace = x[2] + x[3] + x[6];
    if trace.norm() < 1e-300 {
        return Err(Error::Numerical("kernel vector has zero trace".into()));
    }
    for z in x.iter_mut() {
        *z /= trace;
    }
    let xv = nalgebra::DVector::from_vec(x.clone());
    let residual = (&l * &xv).norm();
    Ok(BlochSteadyState {
        rho_rr: bloch_closed_form(atom.omega_e, atom.omega_r, atom.gamma_e),
        rho_rr_kernel: x[6].re,
        residual,
    })
}

pub fn bloch_steady_state(omega_e: f64, omega_r: f64) -> Result<BlochSteadyState> {
    bloch_steady_state_for(&ThreeLevelAtom::new(omega_e, omega_r))
}

/// Short-time window, in units of `1/gamma_e`, used to read rates off
/// `rho_rr(t)`. It starts after the coherent transient of a few `1/gamma_e`
/// and ends well before `1/Gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeWindow {
    pub start: f64,
    pub end: f64,
}

impl Default for SlopeWindow {
    fn default() -> Self {
        SlopeWindow {
            start: 20.0,
            end: 200.0,
        }
    }
}

/// Initial Rydberg population of a slope estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialPopulation {
    Ground,
    Rydberg,
}

/// Rate from the linear coefficient of a quadratic least-squares fit of
/// `rho_rr(t)` over `window`. Positive for the physical sign: growth from
/// `rho_rr(0) = 0`, decay from `rho_rr(0) = 1`.
pub fn estimate_rates_from_slope(
    times: &[f64],
    rho_rr: &[f64],
    initial: InitialPopulation,
    window: SlopeWindow,
) -> Result<f64> {
    if times.len() != rho_rr.len() {
        return Err(Error::InvalidArgument("times and series differ in length".into()));
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(rho_rr)
        .filter(|(&t, _)| t >= window.start && t <= window.end)
        .map(|(&t, &y)| (t, y))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} samples inside [{}, {}]",
            pts.len(),
            window.start,
            window.end
        )));
    }
    // fit y = a + b t + c t^2 in the variable s = t / end for conditioning
    let scale = window.end;
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for &(t, y) in &pts {
        let s = t / scale;
        let row = nalgebra::Vector3::new(1.0, s, s * s);
        ata += row * row.transpose();
        aty += row * y;
    }
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::Numerical("degenerate slope fit".into()))?;
    let slope = coef[1] / scale;
    Ok(match initial {
        InitialPopulation::Ground => slope,
        InitialPopulation::Rydberg => -slope,
    })
}
