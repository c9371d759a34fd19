//! File-producing runs behind the command line subcommands and the figure
//! presets. Every run writes its CSV tables plus `manifest.json` into one
//! output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use super::io::{format_f64 as f, write_csv, RunManifest};
use super::{
    disorder_average, perturbative_rates, rate_shift_classification, realization_detunings,
    relaxation_time, DisorderPlan,
};
use crate::cluster::{
    build_reduced_hamiltonian, dark_state_count_law, dark_states, dominant_period, enumerate_subspace,
    evolve_full, evolve_reduced, format_bits, spectrum, FULL_DENSE_MAX_SITES,
};
use crate::config::{Boundary, Potential, SystemConfig};
use crate::error::{Error, Result};
use crate::kcm::{
    exact_rate_equation, point_distribution, run_ctmc_ensemble, KcmParams, SpinConfig,
};
use crate::quantum::{
    bright_dark_statistics, build_hamiltonian, concentration, concentration_average,
    evolve_master_equation, excess_concentration_estimate, run_ensemble, sampling_grid, DensityMatrix,
    McwfOptions, MeOptions, Mode, StateVector, TrajectoryRecord,
};
use crate::regime::{classify_all, Species};
use crate::single_atom::{estimate_rates_from_slope, InitialPopulation, SlopeWindow, ThreeLevelAtom};

/// Names accepted by [`run_figure`].
pub const FIGURE_PRESETS: &[&str] = &[
    "table1", "table2", "tableA1", "fig2", "fig3", "fsize", "fig4a", "fig4b", "fig6", "fig7", "fig8",
    "fig9",
];

struct RunContext {
    out: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl RunContext {
    fn new(out: &Path, command: &str, cfg: &SystemConfig) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest::new(command, cfg),
            start: Instant::now(),
        })
    }

    fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        write_csv(&self.out.join(name), header, rows)?;
        self.manifest.outputs.push(name.to_owned());
        Ok(())
    }

    fn residual(&mut self, key: impl Into<String>, value: f64) {
        self.manifest.residuals.insert(key.into(), value);
    }

    fn finish(mut self) -> Result<RunManifest> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.write(&self.out)?;
        Ok(self.manifest)
    }
}

fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

fn mcwf_options(cfg: &SystemConfig) -> McwfOptions {
    McwfOptions {
        dt: cfg.time_step,
        gamma_e: cfg.gamma_e,
        ..McwfOptions::default()
    }
}

fn atom(cfg: &SystemConfig) -> ThreeLevelAtom {
    ThreeLevelAtom {
        omega_e: cfg.omega_e,
        omega_r: cfg.omega_r,
        gamma_e: cfg.gamma_e,
    }
}

/// Single-atom `rho_rr(t)` from the master equation.
fn single_atom_me(cfg: &SystemConfig, delta: f64, from_rydberg: bool, grid: &[f64]) -> Result<Vec<f64>> {
    let c = SystemConfig {
        n_sites: 1,
        delta_r: delta,
        random_detunings: None,
        disorder_amplitude: 0.0,
        initial_rydberg: if from_rydberg { vec![0] } else { vec![] },
        ..cfg.clone()
    };
    let h = build_hamiltonian(&c, Mode::ThreeLevel)?;
    let psi = StateVector::from_occupations(h.basis, &c.initial_occupations())?;
    let series = evolve_master_equation(&h, c.gamma_e, &DensityMatrix::pure(&psi), grid, &MeOptions::default())?;
    Ok(series.site_series(0))
}

fn rate_rows(delta: f64, up: f64, down: f64, method: &str) -> Vec<String> {
    vec![f(delta), f(up), f(down), method.to_owned()]
}

const RATE_HEADER: [&str; 4] = ["delta_star", "rate_up", "rate_down", "method"];

/// Closed-form and perturbative rates at the tabulated effective detunings.
fn table1_rows(cfg: &SystemConfig) -> Result<Vec<Vec<String>>> {
    let a = atom(cfg);
    let mut rows = Vec::new();
    for d in [0.0, 3.0, -3.0, 10.0, -10.0] {
        let d = d * cfg.gamma_e;
        rows.push(rate_rows(d, a.rate_up(d)?, a.rate_down(d)?, "closed_form"));
    }
    for d in [0.0, 3.0, -3.0, 10.0, -10.0] {
        let d = d * cfg.gamma_e;
        let (up, down) = perturbative_rates(&a, d)?;
        rows.push(rate_rows(d, up, down, "perturbative"));
    }
    Ok(rows)
}

/// Resonant rates from the master-equation slope and from bright and dark period lengths of single-atom trajectories.
fn table_a1_rows(ctx: &mut RunContext, cfg: &SystemConfig) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    let slope_grid: Vec<f64> = (0..=400).map(|k| k as f64 * 0.5).collect();
    let window = SlopeWindow::default();
    let from_g = single_atom_me(cfg, 0.0, false, &slope_grid)?;
    let from_r = single_atom_me(cfg, 0.0, true, &slope_grid)?;
    let up = estimate_rates_from_slope(&slope_grid, &from_g, InitialPopulation::Ground, window)?;
    let down = estimate_rates_from_slope(&slope_grid, &from_r, InitialPopulation::Rydberg, window)?;
    rows.push(rate_rows(0.0, up, down, "me_slope"));
    if cfg.n_traj > 0 {
        let c = SystemConfig {
            n_sites: 1,
            delta_r: 0.0,
            random_detunings: None,
            initial_rydberg: vec![],
            ..cfg.clone()
        };
        let h = build_hamiltonian(&c, Mode::ThreeLevel)?;
        let psi = StateVector::from_occupations(h.basis, &c.initial_occupations())?;
        let grid = sampling_grid(c.t_max, 2, c.time_step);
        let records = run_ensemble(&h, mcwf_options(&c), &psi, &grid, c.seed, 0, c.n_traj)?;
        let stats = bright_dark_statistics(&records)?;
        rows.push(rate_rows(0.0, stats.rates.gamma_up, stats.rates.gamma_down, "trajectory"));
        ctx.residual("trajectory_stderr_up", stats.stderr_up);
        ctx.residual("trajectory_stderr_down", stats.stderr_down);
        ctx.residual("trajectory_bright_periods", stats.n_bright as f64);
        ctx.residual("trajectory_dark_periods", stats.n_dark as f64);
    }
    Ok(rows)
}

/// `rates`: closed-form, perturbative, master-equation and trajectory rates.
pub fn run_rates(cfg: &SystemConfig, out: &Path) -> Result<RunManifest> {
    let mut ctx = RunContext::new(out, "rates", cfg)?;
    let mut rows = table1_rows(cfg)?;
    rows.extend(table_a1_rows(&mut ctx, cfg)?);
    ctx.csv("rates.csv", &RATE_HEADER, rows)?;
    ctx.finish()
}

/// Detuning vectors for each realization of a run.
fn realization_list(cfg: &SystemConfig) -> Result<Vec<Option<Vec<f64>>>> {
    if cfg.disorder_amplitude > 0.0 {
        (0..cfg.n_rnd.max(1) as u32)
            .map(|j| realization_detunings(cfg.n_sites, cfg.disorder_amplitude, cfg.seed, j).map(Some))
            .collect()
    } else {
        Ok(vec![cfg.random_detunings.clone()])
    }
}

fn population_rows(times: &[f64], mean: &[Vec<f64>], stderr: Option<&[Vec<f64>]>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        for (i, &m) in mean[k].iter().enumerate() {
            let se = stderr.map_or(0.0, |s| s[k][i]);
            rows.push(vec![f(t), i.to_string(), f(m), f(se)]);
        }
    }
    rows
}

fn series_rows(times: &[f64], mean: &[f64], stderr: Option<&[f64]>) -> Vec<Vec<String>> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| vec![f(t), f(mean[k]), f(stderr.map_or(0.0, |s| s[k]))])
        .collect()
}

const POP_HEADER: [&str; 4] = ["time", "site", "r_i", "stderr"];
const CONC_HEADER: [&str; 3] = ["time", "r", "stderr"];

/// `evolve-me`: exact master-equation populations, averaged over disorder
/// realizations when an amplitude is set.
pub fn run_evolve_me(cfg: &SystemConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut ctx = RunContext::new(out, "evolve-me", cfg)?;
    let grid = uniform_grid(cfg.t_max, cfg.n_samples);
    let mut runs = Vec::new();
    for detunings in realization_list(cfg)? {
        let c = SystemConfig {
            random_detunings: detunings,
            ..cfg.clone()
        };
        let h = build_hamiltonian(&c, Mode::ThreeLevel)?;
        let psi = StateVector::from_occupations(h.basis, &c.initial_occupations())?;
        let s = evolve_master_equation(&h, c.gamma_e, &DensityMatrix::pure(&psi), &grid, &MeOptions::default())?;
        let tr = ctx.manifest.residuals.get("max_trace_error").copied().unwrap_or(0.0);
        ctx.residual("max_trace_error", tr.max(s.max_trace_error));
        let he = ctx.manifest.residuals.get("max_hermiticity_error").copied().unwrap_or(0.0);
        ctx.residual("max_hermiticity_error", he.max(s.max_hermiticity_error));
        let me = ctx.manifest.residuals.get("min_eigenvalue").copied().unwrap_or(0.0);
        ctx.residual("min_eigenvalue", me.min(s.min_eigenvalue));
        runs.push(s.rydberg);
    }
    let n_runs = runs.len() as f64;
    let mean: Vec<Vec<f64>> = (0..grid.len())
        .map(|k| {
            (0..cfg.n_sites)
                .map(|i| runs.iter().map(|r| r[k][i]).sum::<f64>() / n_runs)
                .collect()
        })
        .collect();
    let stderr: Vec<Vec<f64>> = (0..grid.len())
        .map(|k| {
            (0..cfg.n_sites)
                .map(|i| {
                    if runs.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = runs.iter().map(|r| (r[k][i] - mean[k][i]).powi(2)).sum();
                    (ss / (n_runs - 1.0) / n_runs).sqrt()
                })
                .collect()
        })
        .collect();
    let per_run_conc: Vec<Vec<f64>> = runs.iter().map(|r| concentration(r)).collect();
    let conc = concentration(&mean);
    let conc_se: Vec<f64> = (0..grid.len())
        .map(|k| {
            if runs.len() < 2 {
                return 0.0;
            }
            let ss: f64 = per_run_conc.iter().map(|c| (c[k] - conc[k]).powi(2)).sum();
            (ss / (n_runs - 1.0) / n_runs).sqrt()
        })
        .collect();
    ctx.csv("populations.csv", &POP_HEADER, population_rows(&grid, &mean, Some(&stderr)))?;
    ctx.csv("concentration.csv", &CONC_HEADER, series_rows(&grid, &conc, Some(&conc_se)))?;
    ctx.finish()
}

/// Pooled MCWF run with all per-trajectory artefacts written under `prefix`.
fn mcwf_outputs(ctx: &mut RunContext, prefix: &str, cfg: &SystemConfig) -> Result<Vec<TrajectoryRecord>> {
    let grid = sampling_grid(cfg.t_max, cfg.n_samples, cfg.time_step);
    let plan = DisorderPlan::from_config(cfg);
    let avg = disorder_average(cfg, &plan, mcwf_options(cfg), &grid)?;
    ctx.csv(
        &format!("{prefix}populations.csv"),
        &POP_HEADER,
        population_rows(&avg.pooled.times, &avg.pooled.mean, Some(&avg.pooled.stderr)),
    )?;
    let pc = &avg.pooled_concentration;
    ctx.csv(
        &format!("{prefix}concentration.csv"),
        &CONC_HEADER,
        series_rows(&pc.times, &pc.mean, Some(&pc.stderr)),
    )?;
    let jumps = avg.records.iter().flat_map(|r| {
        r.jumps.iter().map(move |j| {
            vec![r.realization.to_string(), r.trajectory.to_string(), f(j.time), j.site.to_string()]
        })
    });
    ctx.csv(
        &format!("{prefix}jumps.csv"),
        &["realization", "trajectory", "time", "site"],
        jumps,
    )?;
    if avg.realizations.len() > 1 || plan.amplitude > 0.0 {
        let rows = avg.realizations.iter().flat_map(|r| {
            pc.times
                .iter()
                .zip(&r.concentration)
                .map(|(&t, &c)| vec![r.realization.to_string(), f(t), f(c)])
                .collect::<Vec<_>>()
        });
        ctx.csv(&format!("{prefix}realizations.csv"), &["realization", "time", "r"], rows)?;
        let rows = avg.realizations.iter().flat_map(|r| {
            r.detunings
                .iter()
                .enumerate()
                .map(|(i, &d)| vec![r.realization.to_string(), i.to_string(), f(d)])
                .collect::<Vec<_>>()
        });
        ctx.csv(&format!("{prefix}detunings.csv"), &["realization", "site", "detuning"], rows)?;
    }
    let n_jumps: usize = avg.records.iter().map(|r| r.jumps.len()).sum();
    ctx.residual(format!("{prefix}total_jumps"), n_jumps as f64);
    if let Ok(t) = relaxation_time(&pc.times, &pc.mean) {
        ctx.residual(format!("{prefix}relaxation_time"), t);
    }
    Ok(avg.records)
}

/// `evolve-mcwf`: trajectory-averaged populations, pooled over disorder.
pub fn run_evolve_mcwf(cfg: &SystemConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut ctx = RunContext::new(out, "evolve-mcwf", cfg)?;
    mcwf_outputs(&mut ctx, "", cfg)?;
    ctx.finish()
}

/// `cluster`: reduced-model spectrum, dark states and coherent evolution,
/// with the full two-level evolution alongside for chains small enough to
/// diagonalise densely.
pub fn run_cluster(cfg: &SystemConfig, out: &Path) -> Result<RunManifest> {
    let mut ctx = RunContext::new(out, "cluster", cfg)?;
    let occ = cfg.initial_occupations();
    let basis = enumerate_subspace(&occ, cfg.boundary)?;
    let h = build_reduced_hamiltonian(&basis, cfg.omega_r, 0.0);
    let energies = spectrum(&h);
    ctx.csv(
        "spectrum.csv",
        &["index", "energy"],
        energies.iter().enumerate().map(|(k, &e)| vec![k.to_string(), f(e)]),
    )?;
    let dark = dark_states(&h);
    let mut rows = Vec::new();
    for c in 0..dark.count {
        for (b, &state) in basis.states.iter().enumerate() {
            rows.push(vec![
                c.to_string(),
                b.to_string(),
                format_bits(state, cfg.n_sites),
                f(dark.vectors[(b, c)]),
            ]);
        }
    }
    ctx.csv("dark_states.csv", &["dark_index", "basis_index", "state", "amplitude"], rows)?;
    let grid = uniform_grid(cfg.t_max, cfg.n_samples);
    let r = evolve_reduced(&h, &occ, &grid)?;
    ctx.csv("reduced_evolution.csv", &["time", "r"], grid.iter().zip(&r).map(|(&t, &x)| vec![f(t), f(x)]))?;
    ctx.residual("subspace_dimension", basis.len() as f64);
    ctx.residual("dark_state_count", dark.count as f64);
    if let Ok(p) = dominant_period(&grid, &r, 4.0 * (grid[1] - grid[0]), cfg.t_max) {
        ctx.residual("dominant_period", p);
    }
    if cfg.n_sites <= FULL_DENSE_MAX_SITES {
        let full = evolve_full(cfg, &occ, &grid, Some(&basis))?;
        let rows = (0..grid.len()).map(|k| vec![f(grid[k]), f(full.concentration[k]), f(full.leaked[k])]);
        ctx.csv("full_evolution.csv", &["time", "r", "leaked"], rows)?;
        let diff = full
            .concentration
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ctx.residual("max_full_reduced_difference", diff);
        ctx.residual("max_leakage", full.leaked.iter().copied().fold(0.0, f64::max));
    }
    ctx.finish()
}

/// Parameters of a `kcm` run that the system config does not hold.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KcmRun {
    pub pattern: String,
    pub params: KcmParams,
}

/// `kcm`: `n_traj` event-driven runs of the spin model, with the exact
/// master-equation density alongside for short chains.
pub fn run_kcm(cfg: &SystemConfig, run: &KcmRun, out: &Path) -> Result<RunManifest> {
    let initial = SpinConfig::parse(&run.pattern, cfg.boundary)?;
    if initial.is_empty() {
        return Err(Error::InvalidArgument("empty spin pattern".into()));
    }
    let mut echo = cfg.clone();
    echo.n_sites = initial.len();
    echo.initial_rydberg = (0..initial.len()).filter(|&i| initial.bits[i] == 1).collect();
    let mut ctx = RunContext::new(out, "kcm", &echo)?;
    ctx.manifest.parameters = serde_json::to_value(run)?;
    let trajs = run_ctmc_ensemble(&initial, &run.params, cfg.t_max, cfg.seed, cfg.n_traj.max(1));
    let events = trajs.iter().enumerate().flat_map(|(k, t)| {
        t.events
            .iter()
            .map(move |e| vec![k.to_string(), f(e.time), e.site.to_string(), e.value.to_string()])
    });
    ctx.csv("events.csv", &["run", "time", "site", "value"], events)?;
    let grid = uniform_grid(cfg.t_max, cfg.n_samples);
    let series: Vec<Vec<f64>> = trajs.iter().map(|t| t.density_series(&grid)).collect();
    let m = series.len() as f64;
    let rows = (0..grid.len()).map(|k| {
        let mean = series.iter().map(|s| s[k]).sum::<f64>() / m;
        let se = if series.len() > 1 {
            (series.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        vec![f(grid[k]), f(mean), f(se)]
    });
    ctx.csv("density.csv", &["time", "density", "stderr"], rows)?;
    if initial.len() <= 12 {
        let n = initial.len();
        let dist = exact_rate_equation(&point_distribution(&initial)?, n, cfg.boundary, &run.params, &grid)?;
        let rows = grid.iter().zip(&dist).map(|(&t, p)| {
            let d: f64 = p
                .iter()
                .enumerate()
                .map(|(s, &w)| w * s.count_ones() as f64)
                .sum::<f64>()
                / n as f64;
            vec![f(t), f(d)]
        });
        ctx.csv("exact_density.csv", &["time", "density"], rows)?;
    }
    ctx.residual("absorbed_runs", trajs.iter().filter(|t| t.absorbed).count() as f64);
    ctx.finish()
}

fn species_name(s: Species) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Runs a named preset with the caption parameters, then `overrides` (in
/// config file syntax) applied on top. Keys swept by a preset keep the
/// swept values.
pub fn run_figure(id: &str, overrides: &str, out: &Path) -> Result<RunManifest> {
    if !FIGURE_PRESETS.contains(&id) {
        return Err(Error::UnknownPreset(id.to_owned()));
    }
    let mut cfg = preset_config(id);
    cfg.apply_text(overrides)?;
    cfg.validate()?;
    let mut ctx = RunContext::new(out, &format!("figure {id}"), &cfg)?;
    ctx.manifest.parameters = json!({ "preset": id });
    match id {
        "table1" => {
            let rows = table1_rows(&cfg)?;
            ctx.csv("rates.csv", &RATE_HEADER, rows)?;
        }
        "tableA1" => {
            let mut rows: Vec<Vec<String>> = table1_rows(&cfg)?.into_iter().filter(|r| r[0] == "0.0").collect();
            rows.extend(table_a1_rows(&mut ctx, &cfg)?);
            ctx.csv("rates.csv", &RATE_HEADER, rows)?;
        }
        "table2" => {
            let shifts =
                rate_shift_classification(cfg.disorder_amplitude, cfg.delta_r, cfg.omega_e, cfg.omega_r)?;
            let rows = shifts.iter().map(|s| {
                vec![
                    species_name(s.species),
                    (if s.sign > 0 { "+" } else { "-" }).to_owned(),
                    f(s.delta_star),
                    (if s.destruction { "rate_down" } else { "rate_up" }).to_owned(),
                    f(s.base_rate),
                    f(s.shifted_rate),
                    s.effect.to_string(),
                ]
            });
            ctx.csv(
                "classification.csv",
                &["species", "sign", "delta_star", "rate", "base_rate", "shifted_rate", "effect"],
                rows,
            )?;
        }
        "fig2" => {
            for (prefix, v) in [("unconstrained_", 0.0), ("facilitated_", 10.0)] {
                let c = SystemConfig {
                    delta_r: v,
                    interaction_strength: v,
                    ..cfg.clone()
                };
                let records = mcwf_outputs(&mut ctx, prefix, &c)?;
                let rec = &records[0];
                let rows = population_rows(&rec.times, &rec.samples, None);
                ctx.csv(&format!("{prefix}trajectory.csv"), &POP_HEADER, rows)?;
            }
        }
        "fig3" => {
            mcwf_outputs(&mut ctx, "", &cfg)?;
            let grid = uniform_grid(cfg.t_max, cfg.n_samples);
            let res_g = single_atom_me(&cfg, 0.0, false, &grid)?;
            let res_r = single_atom_me(&cfg, 0.0, true, &grid)?;
            let off_g = single_atom_me(&cfg, cfg.delta_r, false, &grid)?;
            let rows = (0..grid.len()).map(|k| vec![f(grid[k]), f(res_g[k]), f(res_r[k]), f(off_g[k])]);
            ctx.csv(
                "single_atom.csv",
                &["time", "resonant_from_ground", "resonant_from_rydberg", "off_resonant_from_ground"],
                rows,
            )?;
            let species = classify_all(&cfg.initial_occupations(), cfg.boundary);
            let rows = species.iter().enumerate().map(|(i, &s)| vec![i.to_string(), species_name(s)]);
            ctx.csv("species.csv", &["site", "species"], rows)?;
        }
        "fsize" => {
            let mut excess = Vec::new();
            for n in [6usize, 8, 10] {
                for v in [3.0, 10.0, 20.0] {
                    let c = SystemConfig {
                        n_sites: n,
                        delta_r: v,
                        interaction_strength: v,
                        initial_rydberg: vec![0, n / 2],
                        ..cfg.clone()
                    };
                    mcwf_outputs(&mut ctx, &format!("n{n}_v{v}_"), &c)?;
                    excess.push(excess_row(&c)?);
                }
            }
            ctx.csv("excess.csv", &EXCESS_HEADER, excess)?;
        }
        "fig4a" => {
            let mut excess = Vec::new();
            for (label, init) in [("r0_0.5_", vec![0, 1, 4, 6, 7]), ("r0_0.2_", vec![0, 4]), ("r0_0.1_", vec![0])] {
                let c = SystemConfig {
                    initial_rydberg: init,
                    ..cfg.clone()
                };
                mcwf_outputs(&mut ctx, label, &c)?;
                excess.push(excess_row(&c)?);
            }
            ctx.csv("excess.csv", &EXCESS_HEADER, excess)?;
        }
        "fig4b" => {
            for (label, p) in [
                ("nn_", Potential::NearestNeighbor),
                ("vdw_", Potential::VanDerWaals),
                ("dip_", Potential::Dipolar),
            ] {
                let c = SystemConfig {
                    potential: p,
                    potential_cutoff: None,
                    ..cfg.clone()
                };
                mcwf_outputs(&mut ctx, label, &c)?;
            }
        }
        "fig6" => {
            let occ = cfg.initial_occupations();
            let basis = enumerate_subspace(&occ, cfg.boundary)?;
            let h = build_reduced_hamiltonian(&basis, cfg.omega_r, 0.0);
            let grid = uniform_grid(cfg.t_max, cfg.n_samples);
            let r = evolve_reduced(&h, &occ, &grid)?;
            ctx.csv("reduced.csv", &["time", "r"], grid.iter().zip(&r).map(|(&t, &x)| vec![f(t), f(x)]))?;
            if cfg.n_sites <= FULL_DENSE_MAX_SITES {
                let full = evolve_full(&cfg, &occ, &grid, Some(&basis))?;
                let rows = (0..grid.len()).map(|k| vec![f(grid[k]), f(full.concentration[k]), f(full.leaked[k])]);
                ctx.csv("full.csv", &["time", "r", "leaked"], rows)?;
            }
            for oe in [0.03, 0.1, 1.0] {
                let c = SystemConfig {
                    omega_e: oe,
                    ..cfg.clone()
                };
                mcwf_outputs(&mut ctx, &format!("omega_e_{oe}_"), &c)?;
            }
        }
        "fig7" => {
            let mut spec_rows = Vec::new();
            let mut count_rows = Vec::new();
            for n in 2..=14usize {
                let mut occ = vec![false; n];
                occ[n / 2] = true;
                let basis = enumerate_subspace(&occ, Boundary::Open)?;
                let h = build_reduced_hamiltonian(&basis, cfg.omega_r, 0.0);
                for (k, e) in spectrum(&h).into_iter().enumerate() {
                    spec_rows.push(vec![n.to_string(), k.to_string(), f(e)]);
                }
                count_rows.push(vec![
                    n.to_string(),
                    basis.len().to_string(),
                    dark_states(&h).count.to_string(),
                    dark_state_count_law(n).to_string(),
                ]);
            }
            ctx.csv("spectrum.csv", &["n_sites", "index", "energy"], spec_rows)?;
            ctx.csv("dark_counts.csv", &["n_sites", "subspace_dimension", "dark_states", "expected"], count_rows)?;
        }
        "fig8" => {
            let grid = sampling_grid(cfg.t_max, cfg.n_samples, cfg.time_step);
            let n_rnd_max = cfg.n_rnd.max(1);
            let clean = SystemConfig {
                disorder_amplitude: 0.0,
                n_rnd: 1,
                ..cfg.clone()
            };
            let zero = disorder_average(&clean, &DisorderPlan::from_config(&clean), mcwf_options(&cfg), &grid)?;
            let disordered = disorder_average(&cfg, &DisorderPlan::from_config(&cfg), mcwf_options(&cfg), &grid)?;
            let mut relax = Vec::new();
            let zc = &zero.pooled_concentration;
            ctx.csv("concentration_a0.csv", &CONC_HEADER, series_rows(&zc.times, &zc.mean, Some(&zc.stderr)))?;
            relax.push(vec!["0".to_owned(), f(0.0), f(relaxation_time(&zc.times, &zc.mean)?)]);
            let mut counts = vec![1usize, 5, 10, 20, n_rnd_max];
            counts.retain(|&k| k <= n_rnd_max);
            counts.dedup();
            for k in counts {
                let subset = &disordered.records[..k * cfg.n_traj];
                let c = concentration_average(subset)?;
                ctx.csv(
                    &format!("concentration_nrnd_{k}.csv"),
                    &CONC_HEADER,
                    series_rows(&c.times, &c.mean, Some(&c.stderr)),
                )?;
                relax.push(vec![k.to_string(), f(cfg.disorder_amplitude), f(relaxation_time(&c.times, &c.mean)?)]);
            }
            ctx.csv("relaxation.csv", &["n_rnd", "amplitude", "relaxation_time"], relax)?;
            let a = atom(&cfg);
            let rows = (0..=600).filter_map(|k| {
                let d = -6.0 + 0.02 * k as f64;
                Some(vec![f(d), f(a.rate_up(d).ok()?), f(a.rate_down(d).ok()?)])
            });
            ctx.csv("rates_vs_delta.csv", &["delta", "rate_up", "rate_down"], rows)?;
        }
        "fig9" => {
            let grid = sampling_grid(cfg.t_max, cfg.n_samples, cfg.time_step);
            let h = build_hamiltonian(&cfg, Mode::ThreeLevel)?;
            let psi = StateVector::from_occupations(h.basis, &cfg.initial_occupations())?;
            let me = evolve_master_equation(&h, cfg.gamma_e, &DensityMatrix::pure(&psi), &grid, &MeOptions::default())?;
            ctx.csv("me_populations.csv", &POP_HEADER, population_rows(&grid, &me.rydberg, None))?;
            let records = run_ensemble(&h, mcwf_options(&cfg), &psi, &grid, cfg.seed, 0, cfg.n_traj)?;
            let mut counts = vec![10usize, 100, cfg.n_traj];
            counts.retain(|&k| k <= cfg.n_traj);
            counts.dedup();
            for k in counts {
                let avg = crate::quantum::ensemble_average(&records[..k])?;
                ctx.csv(
                    &format!("mcwf_ntraj_{k}.csv"),
                    &POP_HEADER,
                    population_rows(&avg.times, &avg.mean, Some(&avg.stderr)),
                )?;
            }
        }
        _ => unreachable!("preset list checked above"),
    }
    ctx.finish()
}

const EXCESS_HEADER: [&str; 5] = ["n_sites", "v", "t_max", "delta_r", "delta_r_prime"];

fn excess_row(cfg: &SystemConfig) -> Result<Vec<String>> {
    let species = classify_all(&cfg.initial_occupations(), cfg.boundary);
    let nf = species.iter().filter(|&&s| s == Species::NonFacilitated).count();
    let nd = species.iter().filter(|&&s| s == Species::Defect).count();
    let e = excess_concentration_estimate(cfg, nf, nd, cfg.t_max)?;
    Ok(vec![
        cfg.n_sites.to_string(),
        f(cfg.interaction_strength),
        f(cfg.t_max),
        f(e.delta_r),
        f(e.delta_r_prime),
    ])
}

/// Caption parameters of each preset on top of the default chain.
fn preset_config(id: &str) -> SystemConfig {
    let base = SystemConfig::default();
    match id {
        "tableA1" => SystemConfig {
            n_traj: 200,
            t_max: 1e5,
            ..base
        },
        "table2" => SystemConfig {
            disorder_amplitude: 0.5,
            ..base
        },
        "fig2" => SystemConfig {
            n_traj: 1,
            ..base
        },
        "fig3" | "fig4a" | "fsize" => SystemConfig {
            n_traj: 500,
            ..base
        },
        "fig4b" => SystemConfig {
            n_traj: 500,
            initial_rydberg: vec![0, 4],
            ..base
        },
        "fig6" => SystemConfig {
            n_sites: 9,
            boundary: Boundary::Open,
            initial_rydberg: vec![4],
            n_traj: 500,
            t_max: 2000.0,
            n_samples: 1001,
            ..base
        },
        "fig8" => SystemConfig {
            disorder_amplitude: 0.5,
            n_rnd: 20,
            n_traj: 100,
            ..base
        },
        "fig9" => SystemConfig {
            n_sites: 1,
            delta_r: 0.0,
            initial_rydberg: vec![],
            n_traj: 1000,
            t_max: 3000.0,
            n_samples: 301,
            ..base
        },
        _ => base,
    }
}
