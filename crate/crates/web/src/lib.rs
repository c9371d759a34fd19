//! Browser bindings: single-atom rate curves, cluster spectra and the
//! single-atom Rydberg population from the master equation.

use rydkcm::cluster::{build_reduced_hamiltonian, dark_states, enumerate_subspace, spectrum};
use rydkcm::quantum::{build_hamiltonian, evolve_master_equation, DensityMatrix, MeOptions, Mode, StateVector};
use rydkcm::single_atom::ThreeLevelAtom;
use rydkcm::{Boundary, SystemConfig};
use wasm_bindgen::prelude::*;

/// Largest chain offered by the spectrum view.
pub const MAX_CLUSTER_SITES: usize = 40;

/// Rows `[delta, rate_up, rate_down]` flattened; singular points are skipped.
pub fn rate_curves_inner(
    omega_e: f64,
    omega_r: f64,
    delta_min: f64,
    delta_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if points < 2 || !(delta_max > delta_min) {
        return Err("need at least two points on an increasing range".into());
    }
    let atom = ThreeLevelAtom::new(omega_e, omega_r);
    let mut out = Vec::with_capacity(3 * points);
    for k in 0..points {
        let d = delta_min + (delta_max - delta_min) * k as f64 / (points - 1) as f64;
        if let (Ok(up), Ok(down)) = (atom.rate_up(d), atom.rate_down(d)) {
            out.extend([d, up, down]);
        }
    }
    Ok(out)
}

/// Reduced-model spectrum of one open cluster seeded at the chain centre,
/// followed by the subspace dimension and the dark-state count.
pub fn cluster_spectrum_inner(n_sites: usize, omega_r: f64) -> Result<Vec<f64>, String> {
    if !(2..=MAX_CLUSTER_SITES).contains(&n_sites) {
        return Err(format!("chain length must be in 2..={MAX_CLUSTER_SITES}"));
    }
    let mut occ = vec![false; n_sites];
    occ[n_sites / 2] = true;
    let basis = enumerate_subspace(&occ, Boundary::Open).map_err(|e| e.to_string())?;
    let h = build_reduced_hamiltonian(&basis, omega_r, 0.0);
    let mut out = spectrum(&h);
    out.push(basis.len() as f64);
    out.push(dark_states(&h).count as f64);
    Ok(out)
}

/// `rho_rr(t)` of one atom on `points` uniform times in `[0, t_max]`.
pub fn single_atom_population_inner(
    omega_e: f64,
    omega_r: f64,
    delta: f64,
    t_max: f64,
    points: usize,
    from_rydberg: bool,
) -> Result<Vec<f64>, String> {
    if points < 2 || !(t_max > 0.0) {
        return Err("need t_max > 0 and at least two points".into());
    }
    let cfg = SystemConfig {
        n_sites: 1,
        omega_e,
        omega_r,
        delta_r: delta,
        initial_rydberg: if from_rydberg { vec![0] } else { vec![] },
        ..SystemConfig::default()
    };
    let h = build_hamiltonian(&cfg, Mode::ThreeLevel).map_err(|e| e.to_string())?;
    let psi = StateVector::from_occupations(h.basis, &cfg.initial_occupations()).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect();
    let series = evolve_master_equation(&h, 1.0, &DensityMatrix::pure(&psi), &grid, &MeOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(series.site_series(0))
}

#[wasm_bindgen]
pub fn rate_curves(omega_e: f64, omega_r: f64, delta_min: f64, delta_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    rate_curves_inner(omega_e, omega_r, delta_min, delta_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cluster_spectrum(n_sites: usize, omega_r: f64) -> Result<Vec<f64>, JsError> {
    cluster_spectrum_inner(n_sites, omega_r).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn single_atom_population(
    omega_e: f64,
    omega_r: f64,
    delta: f64,
    t_max: f64,
    points: usize,
    from_rydberg: bool,
) -> Result<Vec<f64>, JsError> {
    single_atom_population_inner(omega_e, omega_r, delta, t_max, points, from_rydberg).map_err(|e| JsError::new(&e))
}
