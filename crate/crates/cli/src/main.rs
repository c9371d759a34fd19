use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rydkcm::experiments::{self, KcmRun, RunManifest};
use rydkcm::kcm::{Constraint, KcmParams};
use rydkcm::SystemConfig;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "RYDKCM_THREADS";

#[derive(Parser)]
#[command(name = "rydkcm", version, about = "Rydberg chain and facilitated spin model simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n_traj=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn out(&self) -> Result<PathBuf> {
        self.out.clone().context("--out <DIR> is required")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single-atom creation and destruction rates by every method.
    Rates(Common),
    /// Exact master-equation evolution of the chain.
    EvolveMe(Common),
    /// Quantum-trajectory evolution, pooled over disorder realizations.
    EvolveMcwf(Common),
    /// Reduced cluster model: spectrum, dark states and coherent dynamics.
    Cluster(Common),
    /// Classical facilitated spin model.
    Kcm {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "one_sfm")]
        constraint: String,
        /// Equilibrium defect density; alternative to --beta.
        #[arg(long, conflicts_with = "beta")]
        d_eq: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Energy per defect used with --beta.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Initial spins, e.g. `0001000000`.
        #[arg(long)]
        pattern: String,
    },
    /// Named preset reproducing a figure or table.
    Figure {
        /// One of the preset names, see `--list`.
        id: Option<String>,
        #[command(flatten)]
        common: Common,
        /// Print the preset names and exit.
        #[arg(long)]
        list: bool,
    },
}

/// Config file text followed by the `--set` assignments.
fn override_text(common: &Common) -> Result<String> {
    let mut text = match &common.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    text.push('\n');
    for kv in &common.set {
        if !kv.contains('=') {
            bail!("--set expects KEY=VALUE, got `{kv}`");
        }
        text.push_str(kv);
        text.push('\n');
    }
    Ok(text)
}

fn load_config(common: &Common) -> Result<SystemConfig> {
    Ok(SystemConfig::parse(&override_text(common)?)?)
}

/// The spin pattern fixes the initial state, so its excited sites replace
/// `initial_rydberg` before validation.
fn load_kcm_config(common: &Common, pattern: &str) -> Result<SystemConfig> {
    let sites: Vec<String> = pattern
        .char_indices()
        .filter(|&(_, c)| c == '1')
        .map(|(i, _)| i.to_string())
        .collect();
    let mut text = override_text(common)?;
    text.push_str(&format!("initial_rydberg = {}\n", sites.join(",")));
    Ok(SystemConfig::parse(&text)?)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn report(out: &Path, m: &RunManifest) {
    println!("{} finished in {:.2} s", m.command, m.wall_clock_seconds);
    for f in m.outputs.iter().map(String::as_str).chain(["manifest.json"]) {
        println!("  {}", out.join(f).display());
    }
    for (k, v) in &m.residuals {
        println!("  {k} = {v:e}");
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    configure_threads()?;
    let (out, manifest) = match cli.command {
        Command::Rates(c) => {
            let out = c.out()?;
            let m = experiments::run_rates(&load_config(&c)?, &out)?;
            (out, m)
        }
        Command::EvolveMe(c) => {
            let out = c.out()?;
            let m = experiments::run_evolve_me(&load_config(&c)?, &out)?;
            (out, m)
        }
        Command::EvolveMcwf(c) => {
            let out = c.out()?;
            let m = experiments::run_evolve_mcwf(&load_config(&c)?, &out)?;
            (out, m)
        }
        Command::Cluster(c) => {
            let out = c.out()?;
            let m = experiments::run_cluster(&load_config(&c)?, &out)?;
            (out, m)
        }
        Command::Kcm {
            common,
            constraint,
            d_eq,
            beta,
            k,
            pattern,
        } => {
            let constraint: Constraint = constraint.parse()?;
            let params = match (d_eq, beta) {
                (Some(d), _) => KcmParams::new(d, constraint)?,
                (None, Some(b)) => KcmParams::from_temperature(b, k, constraint)?,
                (None, None) => bail!("kcm needs --d-eq or --beta"),
            };
            let cfg = load_kcm_config(&common, &pattern)?;
            let run = KcmRun { pattern, params };
            let out = common.out()?;
            let m = experiments::run_kcm(&cfg, &run, &out)?;
            (out, m)
        }
        Command::Figure { id, common, list } => {
            if list {
                for p in experiments::FIGURE_PRESETS {
                    println!("{p}");
                }
                return Ok(());
            }
            let Some(id) = id else {
                bail!("figure needs a preset name; try --list");
            };
            let text = override_text(&common)?;
            let out = common.out()?;
            let m = experiments::run_figure(&id, &text, &out)?;
            (out, m)
        }
    };
    report(&out, &manifest);
    Ok(())
}
