//! Run configuration and its `key = value` file format.
//!
//! All frequencies are in units of the intermediate-state decay rate
//! `gamma_e`, all times in units of `1/gamma_e`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    NearestNeighbor,
    VanDerWaals,
    Dipolar,
}

impl Potential {
    /// Interaction at integer distance `x >= 1`, normalised so that `V(1) = v`.
    pub fn at_distance(self, v: f64, x: usize) -> f64 {
        let x = x as f64;
        match self {
            Potential::NearestNeighbor => {
                if x == 1.0 {
                    v
                } else {
                    0.0
                }
            }
            Potential::VanDerWaals => v / x.powi(6),
            Potential::Dipolar => v / x.powi(3),
        }
    }

    pub fn default_cutoff(self) -> usize {
        match self {
            Potential::NearestNeighbor => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        })
    }
}

impl FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" | "pbc" => Ok(Boundary::Periodic),
            "open" | "obc" => Ok(Boundary::Open),
            other => Err(format!("unknown boundary `{other}`")),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Potential::NearestNeighbor => "nearest_neighbor",
            Potential::VanDerWaals => "van_der_waals",
            Potential::Dipolar => "dipolar",
        })
    }
}

impl FromStr for Potential {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nearest_neighbor" | "nn" => Ok(Potential::NearestNeighbor),
            "van_der_waals" | "vdw" => Ok(Potential::VanDerWaals),
            "dipolar" | "dip" => Ok(Potential::Dipolar),
            other => Err(format!("unknown potential `{other}`")),
        }
    }
}

/// Every physical and numerical parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub n_sites: usize,
    pub omega_e: f64,
    pub omega_r: f64,
    pub delta_r: f64,
    pub interaction_strength: f64,
    pub gamma_e: f64,
    pub gamma_r: f64,
    pub boundary: Boundary,
    pub potential: Potential,
    /// `None` means the potential's default range.
    pub potential_cutoff: Option<usize>,
    pub disorder_amplitude: f64,
    pub random_detunings: Option<Vec<f64>>,
    pub time_step: f64,
    pub t_max: f64,
    pub n_traj: usize,
    pub n_rnd: usize,
    pub seed: u64,
    /// Number of points on the uniform output grid.
    pub n_samples: usize,
    /// Sites prepared in `|r>` at t = 0; every other site starts in `|g>`.
    pub initial_rydberg: Vec<usize>,
}

impl Default for SystemConfig {
    /// Chain of ten atoms with two far defects, anti-blockade at `3 gamma_e`.
    fn default() -> Self {
        SystemConfig {
            n_sites: 10,
            omega_e: 1.0,
            omega_r: 0.03,
            delta_r: 3.0,
            interaction_strength: 3.0,
            gamma_e: 1.0,
            gamma_r: 0.0,
            boundary: Boundary::Periodic,
            potential: Potential::NearestNeighbor,
            potential_cutoff: None,
            disorder_amplitude: 0.0,
            random_detunings: None,
            time_step: 0.01,
            t_max: 1.7e4,
            n_traj: 100,
            n_rnd: 1,
            seed: 1,
            n_samples: 1000,
            initial_rydberg: vec![0, 5],
        }
    }
}

const KEYS: &[&str] = &[
    "n_sites",
    "omega_e",
    "omega_r",
    "delta_r",
    "interaction_strength",
    "gamma_e",
    "gamma_r",
    "boundary",
    "potential",
    "potential_cutoff",
    "disorder_amplitude",
    "random_detunings",
    "time_step",
    "t_max",
    "n_traj",
    "n_rnd",
    "seed",
    "n_samples",
    "initial_rydberg",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_num(key, item.trim()))
        .collect()
}

impl SystemConfig {
    pub fn potential_cutoff(&self) -> usize {
        self.potential_cutoff
            .unwrap_or_else(|| self.potential.default_cutoff())
    }

    /// Per-site detuning offsets, zero when none are configured.
    pub fn site_detunings(&self) -> Vec<f64> {
        self.random_detunings
            .clone()
            .unwrap_or_else(|| vec![0.0; self.n_sites])
    }

    /// Initial Rydberg occupations as a bit vector.
    pub fn initial_occupations(&self) -> Vec<bool> {
        let mut occ = vec![false; self.n_sites];
        for &i in &self.initial_rydberg {
            if i < self.n_sites {
                occ[i] = true;
            }
        }
        occ
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_sites == 0 {
            return bad("n_sites must be at least 1".into());
        }
        let freqs = [
            ("omega_e", self.omega_e),
            ("omega_r", self.omega_r),
            ("delta_r", self.delta_r),
            ("interaction_strength", self.interaction_strength),
            ("gamma_e", self.gamma_e),
            ("gamma_r", self.gamma_r),
            ("disorder_amplitude", self.disorder_amplitude),
        ];
        for (name, value) in freqs {
            if !value.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.gamma_e <= 0.0 {
            return bad("gamma_e must be positive".into());
        }
        if self.gamma_r < 0.0 {
            return bad("gamma_r must be non-negative".into());
        }
        if self.disorder_amplitude < 0.0 {
            return bad("disorder_amplitude must be non-negative".into());
        }
        if let Some(d) = &self.random_detunings {
            if d.len() != self.n_sites {
                return bad(format!(
                    "random_detunings has {} entries for {} sites",
                    d.len(),
                    self.n_sites
                ));
            }
            if d.iter().any(|x| !x.is_finite()) {
                return bad("random_detunings must be finite".into());
            }
        }
        if let Some(c) = self.potential_cutoff {
            if c == 0 {
                return bad("potential_cutoff must be at least 1".into());
            }
            if self.potential == Potential::NearestNeighbor && c != 1 {
                return bad("nearest_neighbor potential requires potential_cutoff = 1".into());
            }
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("time_step must be positive".into());
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be non-negative".into());
        }
        if self.n_traj == 0 || self.n_rnd == 0 {
            return bad("n_traj and n_rnd must be positive".into());
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2".into());
        }
        if let Some(&i) = self.initial_rydberg.iter().find(|&&i| i >= self.n_sites) {
            return bad(format!("initial_rydberg site {i} out of range"));
        }
        Ok(())
    }

    /// Applies a single `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "n_sites" => self.n_sites = parse_num(key, value)?,
            "omega_e" => self.omega_e = parse_num(key, value)?,
            "omega_r" => self.omega_r = parse_num(key, value)?,
            "delta_r" => self.delta_r = parse_num(key, value)?,
            "interaction_strength" | "v" => self.interaction_strength = parse_num(key, value)?,
            "gamma_e" => self.gamma_e = parse_num(key, value)?,
            "gamma_r" => self.gamma_r = parse_num(key, value)?,
            "boundary" => self.boundary = value.parse()?,
            "potential" => self.potential = value.parse()?,
            "potential_cutoff" => self.potential_cutoff = Some(parse_num(key, value)?),
            "disorder_amplitude" => self.disorder_amplitude = parse_num(key, value)?,
            "random_detunings" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.random_detunings = if v.is_empty() { None } else { Some(v) };
            }
            "time_step" => self.time_step = parse_num(key, value)?,
            "t_max" => self.t_max = parse_num(key, value)?,
            "n_traj" => self.n_traj = parse_num(key, value)?,
            "n_rnd" => self.n_rnd = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "n_samples" => self.n_samples = parse_num(key, value)?,
            "initial_rydberg" => self.initial_rydberg = parse_list(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults. Keys not present keep their
    /// default value. The result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if !line.is_ascii() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "non-ASCII input".into(),
                });
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|msg| Error::Parse {
                line: lineno + 1,
                msg,
            })?;
        }
        Ok(())
    }

    /// Serialises to the `key = value` format; `parse` of the output
    /// reproduces `self` exactly.
    pub fn to_config_string(&self) -> String {
        fn list<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "n_sites = {}", self.n_sites);
        let _ = writeln!(s, "omega_e = {}", self.omega_e);
        let _ = writeln!(s, "omega_r = {}", self.omega_r);
        let _ = writeln!(s, "delta_r = {}", self.delta_r);
        let _ = writeln!(s, "interaction_strength = {}", self.interaction_strength);
        let _ = writeln!(s, "gamma_e = {}", self.gamma_e);
        let _ = writeln!(s, "gamma_r = {}", self.gamma_r);
        let _ = writeln!(s, "boundary = {}", self.boundary);
        let _ = writeln!(s, "potential = {}", self.potential);
        if let Some(c) = self.potential_cutoff {
            let _ = writeln!(s, "potential_cutoff = {c}");
        }
        let _ = writeln!(s, "disorder_amplitude = {}", self.disorder_amplitude);
        if let Some(d) = &self.random_detunings {
            let _ = writeln!(s, "random_detunings = {}", list(d));
        }
        let _ = writeln!(s, "time_step = {}", self.time_step);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "n_traj = {}", self.n_traj);
        let _ = writeln!(s, "n_rnd = {}", self.n_rnd);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "initial_rydberg = {}", list(&self.initial_rydberg));
        s
    }

    pub fn known_keys() -> &'static [&'static str] {
        KEYS
    }
}
