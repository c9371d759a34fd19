//! Randomized checks of the library invariants.

use proptest::prelude::*;
use rydkcm::cluster::{build_reduced_hamiltonian, enumerate_subspace, spectrum};
use rydkcm::experiments::{format_f64, realization_detunings};
use rydkcm::kcm::{
    detailed_balance_residual, exact_rate_equation, flip_rate, point_distribution, simulate_ctmc, Constraint,
    KcmParams, SpinConfig,
};
use rydkcm::quantum::{
    build_hamiltonian, ensemble_average, evolve_master_equation, run_trajectory, DensityMatrix, McwfOptions,
    MeOptions, Mode, StateVector, TrajectoryPropagator,
};
use rydkcm::single_atom::{rate_down, rate_up, ThreeLevelAtom};
use rydkcm::{Boundary, Potential, SystemConfig};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Open), Just(Boundary::Periodic)]
}

fn constraint() -> impl Strategy<Value = Constraint> {
    prop_oneof![Just(Constraint::Unconstrained), Just(Constraint::OneSfm)]
}

fn config() -> impl Strategy<Value = SystemConfig> {
    (
        2usize..8,
        0.1f64..5.0,
        0.001f64..0.1,
        -10.0f64..10.0,
        0.0f64..1.0,
        boundary(),
        prop_oneof![
            Just(Potential::NearestNeighbor),
            Just(Potential::VanDerWaals),
            Just(Potential::Dipolar)
        ],
        any::<u64>(),
        proptest::collection::vec(any::<bool>(), 8),
    )
        .prop_map(|(n, oe, or, dr, a, b, pot, seed, occ)| SystemConfig {
            n_sites: n,
            omega_e: oe,
            omega_r: or,
            delta_r: dr,
            interaction_strength: dr,
            boundary: b,
            potential: pot,
            disorder_amplitude: a,
            seed,
            initial_rydberg: (0..n).filter(|&i| occ[i]).collect(),
            ..Default::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(cfg in config()) {
        let back = SystemConfig::parse(&cfg.to_config_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn floats_survive_formatting(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn rates_are_even_and_obey_ratio_law(
        delta in -20.0f64..20.0,
        oe in 0.3f64..3.0,
        or in 0.001f64..0.05,
    ) {
        let up = rate_up(delta, oe, or).unwrap();
        let down = rate_down(delta, oe, or).unwrap();
        prop_assert!(up > 0.0 && down > 0.0);
        prop_assert!((up - rate_up(-delta, oe, or).unwrap()).abs() <= 1e-12 * up);
        prop_assert!((down - rate_down(-delta, oe, or).unwrap()).abs() <= 1e-12 * down);
        let law = (1.0 + 4.0 * delta * delta) / (1.0 + 2.0 * oe * oe);
        prop_assert!((up / down / law - 1.0).abs() < 1e-9);
    }

    #[test]
    fn effective_eigenvalues_never_grow(
        delta in -20.0f64..20.0,
        oe in 0.3f64..3.0,
        or in 0.001f64..0.05,
    ) {
        let atom = ThreeLevelAtom::new(oe, or);
        let eig = atom.eigensystem(delta, rydkcm::AtomLevel::Ground).unwrap();
        for l in eig.eigenvalues.iter() {
            prop_assert!(l.im <= 1e-12);
        }
    }

    #[test]
    fn detunings_stay_in_range(n in 1usize..30, a in 0.0f64..5.0, seed in any::<u64>(), j in 0u32..100) {
        let d = realization_detunings(n, a, seed, j).unwrap();
        prop_assert_eq!(d.len(), n);
        prop_assert!(d.iter().all(|x| x.abs() <= a));
        prop_assert_eq!(d, realization_detunings(n, a, seed, j).unwrap());
    }

    #[test]
    fn kcm_detailed_balance(n in 2usize..9, d in 0.01f64..0.99, b in boundary(), c in constraint()) {
        let p = KcmParams::new(d, c).unwrap();
        prop_assert!(detailed_balance_residual(n, b, &p).unwrap() < 1e-14);
    }

    #[test]
    fn kcm_exact_solution_stays_a_distribution(
        bits in proptest::collection::vec(0u8..2, 2..7),
        d in 0.05f64..0.95,
        b in boundary(),
        c in constraint(),
    ) {
        let cfg = SpinConfig::new(bits, b).unwrap();
        let p = KcmParams::new(d, c).unwrap();
        let p0 = point_distribution(&cfg).unwrap();
        let ps = exact_rate_equation(&p0, cfg.len(), b, &p, &[0.0, 0.5, 3.0, 20.0]).unwrap();
        for dist in ps {
            prop_assert!(dist.iter().all(|&x| x >= -1e-14));
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn one_sfm_never_leaves_all_zero(n in 2usize..12, d in 0.05f64..0.95, seed in any::<u64>()) {
        let p = KcmParams::new(d, Constraint::OneSfm).unwrap();
        let zero = SpinConfig::zeros(n, Boundary::Periodic);
        for i in 0..n {
            prop_assert_eq!(flip_rate(&zero, i, &p).unwrap(), 0.0);
        }
        let traj = simulate_ctmc(&zero, &p, 100.0, seed);
        prop_assert!(traj.events.is_empty());
    }

    #[test]
    fn ctmc_events_are_time_ordered(
        bits in proptest::collection::vec(0u8..2, 3..12),
        d in 0.05f64..0.95,
        c in constraint(),
        seed in any::<u64>(),
    ) {
        let cfg = SpinConfig::new(bits, Boundary::Periodic).unwrap();
        let p = KcmParams::new(d, c).unwrap();
        let traj = simulate_ctmc(&cfg, &p, 50.0, seed);
        prop_assert!(traj.events.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(traj.events.iter().all(|e| e.time <= 50.0));
    }

    #[test]
    fn reduced_spectrum_is_symmetric(occ in proptest::collection::vec(any::<bool>(), 2..10), b in boundary()) {
        prop_assume!(occ.iter().any(|&x| x));
        let basis = enumerate_subspace(&occ, b).unwrap();
        let h = build_reduced_hamiltonian(&basis, 0.03, 0.0);
        let e = spectrum(&h);
        let mut neg: Vec<f64> = e.iter().map(|x| -x).collect();
        neg.reverse();
        for (x, y) in e.iter().zip(&neg) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn single_cluster_dimension(n in 1usize..15) {
        let mut occ = vec![false; n];
        occ[n / 2] = true;
        let basis = enumerate_subspace(&occ, Boundary::Open).unwrap();
        prop_assert_eq!(basis.len(), n * (n + 1) / 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hamiltonian_is_hermitian(cfg in config()) {
        let n = cfg.n_sites.min(5);
        let cfg = SystemConfig { n_sites: n, initial_rydberg: vec![], ..cfg };
        let h = build_hamiltonian(&cfg, Mode::ThreeLevel).unwrap();
        prop_assert!(h.matrix.hermiticity_residual() < 1e-14);
    }

    #[test]
    fn master_equation_keeps_density_matrix_physical(
        n in 1usize..3,
        oe in 0.3f64..2.0,
        dr in -4.0f64..4.0,
        occ in proptest::collection::vec(any::<bool>(), 2),
    ) {
        let cfg = SystemConfig {
            n_sites: n,
            omega_e: oe,
            omega_r: 0.3,
            delta_r: dr,
            interaction_strength: dr,
            initial_rydberg: (0..n).filter(|&i| occ[i]).collect(),
            ..Default::default()
        };
        let h = build_hamiltonian(&cfg, Mode::ThreeLevel).unwrap();
        let psi = StateVector::from_occupations(h.basis, &cfg.initial_occupations()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let s = evolve_master_equation(&h, 1.0, &DensityMatrix::pure(&psi), &grid, &MeOptions::default()).unwrap();
        prop_assert!(s.max_trace_error < 1e-8);
        prop_assert!(s.max_hermiticity_error < 1e-8);
        prop_assert!(s.min_eigenvalue > -1e-8);
    }

    #[test]
    fn trajectories_are_well_formed(seed in any::<u64>(), dr in -4.0f64..4.0, n in 1usize..3) {
        let cfg = SystemConfig {
            n_sites: n,
            omega_r: 0.3,
            delta_r: dr,
            interaction_strength: dr,
            initial_rydberg: vec![0],
            ..Default::default()
        };
        let h = build_hamiltonian(&cfg, Mode::ThreeLevel).unwrap();
        let psi = StateVector::from_occupations(h.basis, &cfg.initial_occupations()).unwrap();
        let prop = TrajectoryPropagator::new(&h, McwfOptions::default()).unwrap();
        let grid: Vec<f64> = (0..=50).map(|k| k as f64).collect();
        let rec = run_trajectory(&prop, &psi, &grid, seed, 0, 0).unwrap();
        prop_assert!(rec.jumps.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(rec.samples.iter().flatten().all(|&x| (0.0..=1.0 + 1e-10).contains(&x)));
        let again = run_trajectory(&prop, &psi, &grid, seed, 0, 0).unwrap();
        prop_assert_eq!(&rec, &again);
        let avg = ensemble_average(std::slice::from_ref(&rec)).unwrap();
        prop_assert_eq!(&avg.mean, &rec.samples);
    }
}
