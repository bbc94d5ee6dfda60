//! Flat `key = value` run configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected so that typos never silently fall back to a default.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pulseforge::dynamics::{ModelVariant, SystemParams, Tolerances};
use pulseforge::gatelab::{self, LabeledState};
use pulseforge::optimizer::{Nsga2Settings, SelectionPolicy, OPT_FAR_POINTS, OPT_NEAR_POINTS};
use pulseforge::presets::{PresetLibrary, Variant};
use pulseforge::pulsegen::{EnvelopeClock, GateSpec, PchCoefficients};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Preset gate name. Ignored when all three raw angles are given.
    pub gate: String,
    pub gamma_pi: Option<f64>,
    pub phi_pi: Option<f64>,
    pub theta_pi: Option<f64>,

    /// Preset variant used when no explicit coefficients are given.
    pub preset: String,
    /// Path to a file holding a1..a8 separated by whitespace or commas.
    pub coefficients_file: Option<PathBuf>,
    pub coefficients: Option<Vec<f64>>,

    pub v_mhz: f64,
    pub tau_us: f64,
    pub delta_khz: f64,
    pub gamma1_hz: f64,
    pub gamma2_hz: f64,
    pub gamma3_hz: f64,
    pub model: ModelVariant,
    pub ee_detuning: bool,
    pub amplitude_cap_mhz: f64,

    pub rel_tol: f64,
    pub abs_tol: f64,
    pub compensation: bool,
    pub clock: EnvelopeClock,

    pub inputs: Vec<String>,
    pub waveform_points: usize,
    pub detuning_start_khz: f64,
    pub detuning_stop_khz: f64,
    pub detuning_points: usize,
    pub offres_start_mhz: f64,
    pub offres_stop_mhz: f64,
    pub offres_points: usize,
    pub v_grid_mhz: Vec<f64>,
    pub n_random: usize,

    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// CSV destination; "-" is standard output.
    pub output: String,

    pub pop: usize,
    pub generations: usize,
    pub policy: String,
    pub archive: PathBuf,
    pub opt_near_points: usize,
    pub opt_far_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = SystemParams::default();
        let tol = Tolerances::default();
        Self {
            gate: "CNOT".into(),
            gamma_pi: None,
            phi_pi: None,
            theta_pi: None,
            preset: "optimized".into(),
            coefficients_file: None,
            coefficients: None,
            v_mhz: p.v_mhz,
            tau_us: p.tau_us,
            delta_khz: p.delta_khz,
            gamma1_hz: p.gamma1_hz,
            gamma2_hz: p.gamma2_hz,
            gamma3_hz: p.gamma3_hz,
            model: p.model,
            ee_detuning: p.ee_detuning,
            amplitude_cap_mhz: p.amplitude_cap_mhz,
            rel_tol: tol.rel,
            abs_tol: tol.abs,
            compensation: true,
            clock: EnvelopeClock::Pair,
            inputs: vec!["01".into(), "11".into()],
            waveform_points: 2048,
            detuning_start_khz: -gatelab::NEAR_RANGE_KHZ,
            detuning_stop_khz: gatelab::NEAR_RANGE_KHZ,
            detuning_points: gatelab::REPORT_NEAR_POINTS,
            offres_start_mhz: gatelab::FAR_RANGE_MHZ.0,
            offres_stop_mhz: gatelab::FAR_RANGE_MHZ.1,
            offres_points: gatelab::REPORT_FAR_POINTS,
            v_grid_mhz: vec![12.5, 25.0, 50.0, 100.0, 200.0],
            n_random: 1000,
            seed: 2024,
            workers: 0,
            output: "-".into(),
            pop: 24,
            generations: 30,
            policy: "knee".into(),
            archive: PathBuf::from("pareto.jsonl"),
            opt_near_points: OPT_NEAR_POINTS,
            opt_far_points: OPT_FAR_POINTS,
        }
    }
}

/// Parses `text` as a config file, then applies `key=value` overrides. Override
/// values are read as TOML values, falling back to a bare string.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("override {item:?} has an empty key")));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        table.insert(key.to_string(), value);
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Range checks that do not need the preset library.
    fn check(&self) -> Result<(), CliError> {
        self.params()?;
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(bad("rel_tol and abs_tol must be positive"));
        }
        if self.coefficients.is_some() && self.coefficients_file.is_some() {
            return Err(bad("give at most one of coefficients and coefficients_file"));
        }
        let raw = [self.gamma_pi, self.phi_pi, self.theta_pi];
        let given = raw.iter().filter(|a| a.is_some()).count();
        if given != 0 && given != 3 {
            return Err(bad("raw gate angles need all of gamma_pi, phi_pi, theta_pi"));
        }
        if raw.iter().flatten().any(|a| !a.is_finite()) {
            return Err(bad("gate angles must be finite"));
        }
        self.preset.parse::<Variant>().map_err(bad)?;
        self.policy.parse::<SelectionPolicy>().map_err(bad)?;
        self.labeled_inputs()?;
        if self.waveform_points < 8 {
            return Err(bad("waveform_points must be at least 8"));
        }
        for (name, n) in [
            ("detuning_points", self.detuning_points),
            ("offres_points", self.offres_points),
            ("n_random", self.n_random),
            ("opt_near_points", self.opt_near_points),
            ("opt_far_points", self.opt_far_points),
        ] {
            if n == 0 {
                return Err(bad(format!("{name} must be at least 1")));
            }
        }
        let finite = [
            self.detuning_start_khz,
            self.detuning_stop_khz,
            self.offres_start_mhz,
            self.offres_stop_mhz,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(bad("sweep bounds must be finite"));
        }
        if self.v_grid_mhz.is_empty() || self.v_grid_mhz.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(bad("v_grid_mhz must be a non-empty list of positive values"));
        }
        Nsga2Settings::new(self.pop, self.generations, self.seed)
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams, CliError> {
        let p = SystemParams {
            v_mhz: self.v_mhz,
            tau_us: self.tau_us,
            delta_khz: self.delta_khz,
            gamma1_hz: self.gamma1_hz,
            gamma2_hz: self.gamma2_hz,
            gamma3_hz: self.gamma3_hz,
            model: self.model,
            ee_detuning: self.ee_detuning,
            amplitude_cap_mhz: self.amplitude_cap_mhz,
        };
        p.validate().map_err(|e| bad(e.to_string()))?;
        Ok(p)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rel_tol, self.abs_tol)
    }

    pub fn variant(&self) -> Variant {
        self.preset.parse().expect("checked at parse time")
    }

    pub fn policy(&self) -> SelectionPolicy {
        self.policy.parse().expect("checked at parse time")
    }

    pub fn labeled_inputs(&self) -> Result<Vec<LabeledState>, CliError> {
        if self.inputs.is_empty() {
            return Err(bad("inputs must not be empty"));
        }
        self.inputs
            .iter()
            .map(|s| LabeledState::parse(s).map_err(|e| bad(e.to_string())))
            .collect()
    }

    pub fn gate(&self, lib: &PresetLibrary) -> Result<GateSpec, CliError> {
        match (self.gamma_pi, self.phi_pi, self.theta_pi) {
            (Some(g), Some(p), Some(t)) => Ok(GateSpec::new(g * PI, p * PI, t * PI)),
            _ => Ok(lib.gate(&self.gate)?),
        }
    }

    pub fn coefficients(&self, lib: &PresetLibrary) -> Result<PchCoefficients, CliError> {
        let flat: Vec<f64> = if let Some(c) = &self.coefficients {
            c.clone()
        } else if let Some(path) = &self.coefficients_file {
            let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
            parse_coefficient_list(&text)?
        } else {
            return Ok(lib.coefficients(&self.gate, self.variant())?);
        };
        let arr: [f64; 8] = flat
            .as_slice()
            .try_into()
            .map_err(|_| bad(format!("expected 8 coefficients, got {}", flat.len())))?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(bad("coefficients must be finite"));
        }
        Ok(PchCoefficients::from_flat(arr))
    }

    pub fn detuning_grid(&self) -> Vec<f64> {
        gatelab::uniform_grid(self.detuning_start_khz, self.detuning_stop_khz, self.detuning_points)
    }

    pub fn offres_grid(&self) -> Vec<f64> {
        gatelab::uniform_grid(self.offres_start_mhz, self.offres_stop_mhz, self.offres_points)
    }
}

/// Numbers separated by commas and/or whitespace; `#` starts a comment.
pub fn parse_coefficient_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad coefficient {t:?}"))))
        .collect()
}
