//! Named gates and coefficient sets, stored as TOML.
//!
//! The built-in library is compiled in; a different file can be supplied at
//! run time through [`PRESETS_ENV`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::pulsegen::{GateSpec, PchCoefficients};

pub const PRESETS_ENV: &str = "PULSEFORGE_PRESETS";

const BUILTIN: &str = include_str!("../presets/gates.toml");

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("preset syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("preset file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gate {0:?}: angles must be finite")]
    BadAngle(String),
    #[error("coefficients for {0:?} must be 8 finite numbers")]
    BadCoefficients(String),
    #[error("duplicate gate name {0:?} (names are case-insensitive)")]
    Duplicate(String),
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("no {variant} coefficients for gate {gate:?}")]
    MissingVariant { gate: String, variant: Variant },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Constraint-consistent published values.
    Optimized,
    /// Values exactly as printed; identical to `Optimized` unless a
    /// separate entry is present.
    Verbatim,
    /// The gate-independent reference set.
    Baseline,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimized => "optimized",
            Self::Verbatim => "verbatim",
            Self::Baseline => "baseline",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimized" => Ok(Self::Optimized),
            "verbatim" => Ok(Self::Verbatim),
            "baseline" => Ok(Self::Baseline),
            other => Err(format!(
                "unknown preset variant {other:?} (expected optimized, verbatim or baseline)"
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    gamma_pi: f64,
    phi_pi: f64,
    theta_pi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    optimized: Option<Vec<f64>>,
    verbatim: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBaseline {
    coefficients: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLibrary {
    #[serde(default)]
    gate: BTreeMap<String, RawGate>,
    #[serde(default)]
    coefficients: BTreeMap<String, RawCoefficients>,
    baseline: Option<RawBaseline>,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    gate: Option<GateSpec>,
    optimized: Option<PchCoefficients>,
    verbatim: Option<PchCoefficients>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetLibrary {
    /// Keyed by upper-case name.
    entries: BTreeMap<String, Entry>,
    baseline: Option<PchCoefficients>,
}

fn key(name: &str) -> String {
    let k = name.trim().to_ascii_uppercase();
    if k == "CX" {
        "CNOT".into()
    } else {
        k
    }
}

fn coeffs(name: &str, v: &[f64]) -> Result<PchCoefficients, PresetError> {
    let arr: [f64; 8] = v
        .try_into()
        .map_err(|_| PresetError::BadCoefficients(name.to_string()))?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err(PresetError::BadCoefficients(name.to_string()));
    }
    Ok(PchCoefficients::from_flat(arr))
}

impl PresetLibrary {
    pub fn parse(text: &str) -> Result<Self, PresetError> {
        let raw: RawLibrary = toml::from_str(text)?;
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (name, g) in &raw.gate {
            let k = key(name);
            if entries.contains_key(&k) {
                return Err(PresetError::Duplicate(name.clone()));
            }
            if ![g.gamma_pi, g.phi_pi, g.theta_pi].iter().all(|x| x.is_finite()) {
                return Err(PresetError::BadAngle(name.clone()));
            }
            let spec = GateSpec::new(g.gamma_pi * PI, g.phi_pi * PI, g.theta_pi * PI).named(k.clone());
            entries.insert(
                k,
                Entry {
                    gate: Some(spec),
                    optimized: None,
                    verbatim: None,
                },
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, c) in &raw.coefficients {
            let k = key(name);
            if !seen.insert(k.clone()) {
                return Err(PresetError::Duplicate(name.clone()));
            }
            let optimized = c.optimized.as_deref().map(|v| coeffs(name, v)).transpose()?;
            let verbatim = c.verbatim.as_deref().map(|v| coeffs(name, v)).transpose()?;
            let e = entries.entry(k).or_insert(Entry {
                gate: None,
                optimized: None,
                verbatim: None,
            });
            e.optimized = optimized;
            e.verbatim = verbatim;
        }
        let baseline = raw.baseline.map(|b| coeffs("baseline", &b.coefficients)).transpose()?;
        Ok(Self { entries, baseline })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in preset file is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PresetError> {
        let text = std::fs::read_to_string(path).map_err(|source| PresetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The file named by `PULSEFORGE_PRESETS` if set, else the built-in set.
    pub fn from_env() -> Result<Self, PresetError> {
        match std::env::var_os(PRESETS_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::builtin()),
        }
    }

    pub fn gate_names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.gate.is_some())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn gate(&self, name: &str) -> Result<GateSpec, PresetError> {
        self.entries
            .get(&key(name))
            .and_then(|e| e.gate.clone())
            .ok_or_else(|| PresetError::UnknownGate(name.to_string()))
    }

    pub fn baseline(&self) -> Option<&PchCoefficients> {
        self.baseline.as_ref()
    }

    pub fn coefficients(&self, gate: &str, variant: Variant) -> Result<PchCoefficients, PresetError> {
        let missing = || PresetError::MissingVariant {
            gate: gate.to_string(),
            variant,
        };
        if variant == Variant::Baseline {
            return self.baseline.clone().ok_or_else(missing);
        }
        let e = self
            .entries
            .get(&key(gate))
            .ok_or_else(|| PresetError::UnknownGate(gate.to_string()))?;
        match variant {
            Variant::Optimized => e.optimized.clone(),
            _ => e.verbatim.clone().or_else(|| e.optimized.clone()),
        }
        .ok_or_else(missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsegen::validate_coefficients;

    #[test]
    fn builtin_gates_match_named_constructors() {
        let lib = PresetLibrary::builtin();
        for (name, spec) in [
            ("CNOT", GateSpec::cnot()),
            ("CH", GateSpec::ch()),
            ("CZ", GateSpec::cz()),
            ("CS", GateSpec::cs()),
            ("CT", GateSpec::ct()),
        ] {
            let g = lib.gate(name).unwrap();
            assert!((g.gamma - spec.gamma).abs() < 1e-15, "{name}");
            assert!((g.theta - spec.theta).abs() < 1e-15, "{name}");
            assert!((g.phi - spec.phi).abs() < 1e-15, "{name}");
        }
        assert_eq!(lib.gate("cx").unwrap().gamma, lib.gate("CNOT").unwrap().gamma);
    }

    #[test]
    fn optimized_sets_satisfy_constraints_except_verbatim_cnot() {
        let lib = PresetLibrary::builtin();
        for name in ["CNOT", "CS", "CH", "CZ", "CT"] {
            let c = lib.coefficients(name, Variant::Optimized).unwrap();
            assert!(validate_coefficients(&c, 0.5).is_valid(), "{name}");
        }
        let v = lib.coefficients("CNOT", Variant::Verbatim).unwrap();
        let report = validate_coefficients(&v, 0.5);
        assert!(!report.is_valid());
        assert!((report.blocks[0].even_residual + 0.648).abs() < 1e-12);
        // Gates with a single published row fall back to it.
        assert_eq!(
            lib.coefficients("CS", Variant::Verbatim).unwrap(),
            lib.coefficients("CS", Variant::Optimized).unwrap()
        );
        let b = lib.coefficients("CZ", Variant::Baseline).unwrap();
        assert!(validate_coefficients(&b, 0.5).is_valid());
        assert_eq!(b.flat()[0], 0.45);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(matches!(
            PresetLibrary::parse("[gate.X]\ngamma_pi = 1\n"),
            Err(PresetError::Syntax(_))
        ));
        assert!(matches!(
            PresetLibrary::parse("[coefficients.X]\noptimized = [1.0, 2.0]\n"),
            Err(PresetError::BadCoefficients(_))
        ));
        assert!(matches!(
            PresetLibrary::parse("[gate.X]\ngamma_pi = 1.0\nphi_pi = 0.0\ntheta_pi = 0.0\nextra = 1\n"),
            Err(PresetError::Syntax(_))
        ));
        assert!(matches!(
            PresetLibrary::parse(
                "[gate.ab]\ngamma_pi = 1.0\nphi_pi = 0.0\ntheta_pi = 0.0\n[gate.AB]\ngamma_pi = 1.0\nphi_pi = 0.0\ntheta_pi = 0.0\n"
            ),
            Err(PresetError::Duplicate(_))
        ));
        assert!(matches!(
            PresetLibrary::parse("[gate.X]\ngamma_pi = nan\nphi_pi = 0.0\ntheta_pi = 0.0\n"),
            Err(PresetError::BadAngle(_))
        ));
    }

    #[test]
    fn missing_entries() {
        let lib = PresetLibrary::parse("[gate.X]\ngamma_pi = 1.0\nphi_pi = 0.0\ntheta_pi = 0.0\n").unwrap();
        assert!(matches!(
            lib.coefficients("X", Variant::Optimized),
            Err(PresetError::MissingVariant { .. })
        ));
        assert!(matches!(
            lib.coefficients("X", Variant::Baseline),
            Err(PresetError::MissingVariant { .. })
        ));
        assert!(matches!(lib.gate("Y"), Err(PresetError::UnknownGate(_))));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Optimized, Variant::Verbatim, Variant::Baseline] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("best".parse::<Variant>().is_err());
    }
}
