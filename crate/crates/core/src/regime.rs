//! Level conventions, regime checks and the anti-blockade species logic.

use std::fmt;

use serde::Serialize;

use crate::config::{Boundary, SystemConfig};
use crate::error::{Error, Result};

/// Single-atom levels. The discriminant is the basis index used by every
/// matrix builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AtomLevel {
    Ground = 0,
    Excited = 1,
    Rydberg = 2,
}

impl AtomLevel {
    pub const ALL: [AtomLevel; 3] = [AtomLevel::Ground, AtomLevel::Excited, AtomLevel::Rydberg];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    Defect,
    Facilitated,
    NonFacilitated,
    Blocked,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::Defect => "defect",
            Species::Facilitated => "facilitated",
            Species::NonFacilitated => "non_facilitated",
            Species::Blocked => "blocked",
        })
    }
}

/// Factor used to turn "much less than" into a checkable inequality.
pub const REGIME_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeCondition {
    /// Rydberg decay negligible against stimulated processes.
    RydbergDecay,
    /// Well-defined quantum jumps.
    QuantumJumps,
    /// `Omega_r << Omega_e^2 / gamma_e`.
    WeakRydbergDrive,
    /// `Delta_r >> Omega_e, Omega_r, gamma_e`.
    LargeDetuning,
    /// `V = Delta_r`.
    AntiBlockade,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeWarning {
    pub condition: RegimeCondition,
    pub message: String,
}

/// Right-hand side of the Rydberg-decay condition.
pub fn rydberg_decay_bound(omega_e: f64, omega_r: f64, delta_r: f64, gamma_e: f64) -> f64 {
    let d2 = delta_r * delta_r;
    let oe2 = omega_e * omega_e;
    oe2 * omega_r * omega_r * gamma_e
        / (4.0 * d2 * gamma_e * gamma_e + (oe2 - 4.0 * d2).powi(2))
}

/// Right-hand side of the quantum-jump condition on `Omega_r^2`.
pub fn quantum_jump_bound(omega_e: f64, delta_r: f64, gamma_e: f64) -> f64 {
    let d2 = delta_r * delta_r;
    let oe2 = omega_e * omega_e;
    (4.0 * d2 * gamma_e * gamma_e + (oe2 - 4.0 * d2).powi(2)) / (gamma_e * gamma_e + 4.0 * d2)
}

/// Checks the working assumptions of the rate picture. Never fails; every
/// violated inequality produces one advisory warning.
pub fn validate_regime(cfg: &SystemConfig) -> Vec<RegimeWarning> {
    let (oe, or, dr, v, ge, gr) = (
        cfg.omega_e,
        cfg.omega_r,
        cfg.delta_r,
        cfg.interaction_strength,
        cfg.gamma_e,
        cfg.gamma_r,
    );
    let mut out = Vec::new();
    let mut warn = |condition, message: String| out.push(RegimeWarning { condition, message });

    let decay = rydberg_decay_bound(oe, or, dr, ge);
    if REGIME_MARGIN * gr > decay {
        warn(
            RegimeCondition::RydbergDecay,
            format!("gamma_r = {gr} is not << {decay:.3e}"),
        );
    }
    let jumps = quantum_jump_bound(oe, dr, ge);
    if REGIME_MARGIN * or * or > jumps {
        warn(
            RegimeCondition::QuantumJumps,
            format!("Omega_r^2 = {:.3e} is not << {jumps:.3e}", or * or),
        );
    }
    if REGIME_MARGIN * or > oe * oe / ge {
        warn(
            RegimeCondition::WeakRydbergDrive,
            format!("Omega_r = {or} is not << Omega_e^2/gamma_e = {:.3e}", oe * oe / ge),
        );
    }
    let largest = oe.abs().max(or.abs()).max(ge);
    if dr.abs() < REGIME_MARGIN * largest {
        warn(
            RegimeCondition::LargeDetuning,
            format!("|Delta_r| = {} is not >> max(Omega_e, Omega_r, gamma_e) = {largest}", dr.abs()),
        );
    }
    if (v - dr).abs() > 1e-9 * dr.abs().max(1.0) {
        warn(
            RegimeCondition::AntiBlockade,
            format!("V = {v} differs from Delta_r = {dr}"),
        );
    }
    out
}

/// Detuning seen by an atom with `ell` Rydberg neighbours: `Delta_r - ell V`.
pub fn effective_detuning(ell: u8, delta_r: f64, v: f64) -> Result<f64> {
    if ell > 2 {
        return Err(Error::InvalidArgument(format!(
            "neighbour count {ell} outside 0..=2"
        )));
    }
    Ok(delta_r - f64::from(ell) * v)
}

/// Indices of the (up to two) nearest neighbours of `site`. Sites are never
/// their own neighbour, and on a two-site ring both neighbours coincide.
pub fn nearest_neighbors(site: usize, n: usize, boundary: Boundary) -> [Option<usize>; 2] {
    match boundary {
        Boundary::Open => [
            site.checked_sub(1),
            if site + 1 < n { Some(site + 1) } else { None },
        ],
        Boundary::Periodic => {
            if n < 2 {
                return [None, None];
            }
            [Some((site + n - 1) % n), Some((site + 1) % n)]
        }
    }
}

/// Number of Rydberg nearest neighbours of `site`.
pub fn rydberg_neighbor_count(occupations: &[bool], site: usize, boundary: Boundary) -> u8 {
    nearest_neighbors(site, occupations.len(), boundary)
        .iter()
        .flatten()
        .filter(|&&j| occupations[j])
        .count() as u8
}

pub fn classify_species(occupations: &[bool], site: usize, boundary: Boundary) -> Result<Species> {
    if site >= occupations.len() {
        return Err(Error::IndexOutOfRange {
            index: site,
            len: occupations.len(),
        });
    }
    if occupations[site] {
        return Ok(Species::Defect);
    }
    Ok(match rydberg_neighbor_count(occupations, site, boundary) {
        0 => Species::NonFacilitated,
        1 => Species::Facilitated,
        _ => Species::Blocked,
    })
}

/// Species of every site.
pub fn classify_all(occupations: &[bool], boundary: Boundary) -> Vec<Species> {
    (0..occupations.len())
        .map(|i| classify_species(occupations, i, boundary).expect("index in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn effective_detuning_values() {
        assert_eq!(effective_detuning(0, 3.0, 3.0).unwrap(), 3.0);
        assert_eq!(effective_detuning(1, 3.0, 3.0).unwrap(), 0.0);
        assert_eq!(effective_detuning(2, 3.0, 3.0).unwrap(), -3.0);
        assert!(effective_detuning(3, 3.0, 3.0).is_err());
    }

    #[test]
    fn species_examples() {
        let b = Boundary::Open;
        assert_eq!(classify_species(&bits("100"), 1, b).unwrap(), Species::Facilitated);
        assert_eq!(classify_species(&bits("000"), 1, b).unwrap(), Species::NonFacilitated);
        assert_eq!(classify_species(&bits("101"), 1, b).unwrap(), Species::Blocked);
        assert_eq!(classify_species(&bits("101"), 0, b).unwrap(), Species::Defect);
        assert!(classify_species(&bits("101"), 3, b).is_err());
    }

    #[test]
    fn open_edges_have_one_neighbor() {
        let occ = bits("0001");
        assert_eq!(classify_species(&occ, 0, Boundary::Open).unwrap(), Species::NonFacilitated);
        assert_eq!(classify_species(&occ, 0, Boundary::Periodic).unwrap(), Species::Facilitated);
    }

    #[test]
    fn fig3_initial_species() {
        // defects at 0 and 5 on a ten-site ring
        let mut occ = vec![false; 10];
        occ[0] = true;
        occ[5] = true;
        let s = classify_all(&occ, Boundary::Periodic);
        let count = |sp| s.iter().filter(|&&x| x == sp).count();
        assert_eq!(count(Species::Defect), 2);
        assert_eq!(count(Species::Facilitated), 4);
        assert_eq!(count(Species::NonFacilitated), 4);
        assert_eq!(count(Species::Blocked), 0);
    }

    #[test]
    fn regime_examples() {
        let mut cfg = SystemConfig {
            omega_e: 1.0,
            omega_r: 0.03,
            delta_r: 3.0,
            interaction_strength: 3.0,
            gamma_r: 0.0,
            ..SystemConfig::default()
        };
        let w = validate_regime(&cfg);
        let conds: Vec<_> = w.iter().map(|w| w.condition).collect();
        assert_eq!(conds, vec![RegimeCondition::LargeDetuning]);

        cfg.omega_r = 0.0;
        let conds: Vec<_> = validate_regime(&cfg).iter().map(|w| w.condition).collect();
        assert!(!conds.contains(&RegimeCondition::QuantumJumps));
        assert!(!conds.contains(&RegimeCondition::WeakRydbergDrive));
        assert!(!conds.contains(&RegimeCondition::RydbergDecay));

        cfg.interaction_strength = 0.0;
        let conds: Vec<_> = validate_regime(&cfg).iter().map(|w| w.condition).collect();
        assert!(conds.contains(&RegimeCondition::AntiBlockade));
    }

    #[test]
    fn rydberg_decay_flagged_when_large() {
        let cfg = SystemConfig {
            delta_r: 30.0,
            interaction_strength: 30.0,
            gamma_r: 1e-6,
            ..SystemConfig::default()
        };
        let conds: Vec<_> = validate_regime(&cfg).iter().map(|w| w.condition).collect();
        assert_eq!(conds, vec![RegimeCondition::RydbergDecay]);
    }

    #[test]
    fn anti_blockade_detuning_matches_species() {
        let (dr, v) = (3.0, 3.0);
        for pattern in ["000", "100", "101", "010", "110"] {
            let occ = bits(pattern);
            let sp = classify_species(&occ, 1, Boundary::Open).unwrap();
            let ell = rydberg_neighbor_count(&occ, 1, Boundary::Open);
            let d = effective_detuning(ell, dr, v).unwrap();
            match sp {
                Species::Facilitated => assert_eq!(d, 0.0),
                Species::NonFacilitated => assert_eq!(d, dr),
                Species::Blocked => assert_eq!(d, -dr),
                Species::Defect => assert_eq!(d.abs() == dr || d == 0.0, true),
            }
        }
    }

    proptest! {
        #[test]
        fn detuning_steps_by_v(dr in -50.0f64..50.0, v in -50.0f64..50.0) {
            let d0 = effective_detuning(0, dr, v).unwrap();
            let d1 = effective_detuning(1, dr, v).unwrap();
            let d2 = effective_detuning(2, dr, v).unwrap();
            prop_assert!(((d0 - d1) - v).abs() < 1e-12);
            prop_assert!(((d1 - d2) - v).abs() < 1e-12);
        }

        #[test]
        fn species_is_local(
            occ in proptest::collection::vec(any::<bool>(), 5..20),
            site_frac in 0.0f64..1.0,
            flips in proptest::collection::vec(any::<bool>(), 20),
            periodic in any::<bool>(),
        ) {
            let n = occ.len();
            let site = ((site_frac * n as f64) as usize).min(n - 1);
            let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
            let before = classify_species(&occ, site, boundary).unwrap();
            let mut perturbed = occ.clone();
            for j in 0..n {
                let dist = site.abs_diff(j);
                let dist = if periodic { dist.min(n - dist) } else { dist };
                if dist > 1 && flips[j] {
                    perturbed[j] = !perturbed[j];
                }
            }
            prop_assert_eq!(before, classify_species(&perturbed, site, boundary).unwrap());
        }
    }
}
