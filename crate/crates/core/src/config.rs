//! Flat key-value run configuration.
//!
//! Config files are plain text, one `section.key = value` per line, with `#`
//! comments. Every key has a default; unknown keys and type mismatches are
//! rejected with the offending key path. A run's manifest is this same
//! format with every key resolved, so a manifest is itself a valid config
//! reproducing the run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: expected {expected}, got `{got}`")]
    TypeMismatch {
        key: String,
        expected: String,
        got: String,
    },
    #[error("bad config line {line}: `{text}` (expected `key = value`)")]
    BadLine { line: usize, text: String },
    #[error("config lists {a} and {b} must have equal length (or length 1)")]
    LengthMismatch { a: &'static str, b: &'static str },
    #[error("`{0}` must be set for tabulated spectra")]
    MissingTablePath(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    U64,
    Usize,
    F64,
    Bool,
    Str,
    Choice(&'static [&'static str]),
    F64List,
}

/// Known keys with their type and default. The manifest lists exactly these.
const KEYS: &[(&str, Kind, &str)] = &[
    ("run.seed", Kind::U64, "1"),
    ("run.workers", Kind::Usize, "0"),
    (
        "run.subcommand",
        Kind::Choice(&["simulate", "correlate", "ere", "validate", "sweep", "none"]),
        "none",
    ),
    ("output.dir", Kind::Str, "out"),
    ("output.n_points", Kind::Usize, "200"),
    ("spectrum.shape", Kind::Choice(&["lorentzian", "tabulated"]), "lorentzian"),
    ("spectrum.gamma", Kind::F64, "1"),
    ("spectrum.delta", Kind::F64, "0"),
    ("spectrum.r0", Kind::F64, "0.1"),
    ("spectrum.omega21", Kind::F64, "0"),
    ("spectrum.table_path", Kind::Str, ""),
    (
        "field.backend",
        Kind::Choice(&["mode_sum", "colored_noise"]),
        "colored_noise",
    ),
    ("field.n_modes", Kind::Usize, "2048"),
    (
        "field.geometry",
        Kind::Choice(&["phase_only", "explicit3d"]),
        "phase_only",
    ),
    ("field.span_gammas", Kind::F64, "40"),
    ("field.jitter", Kind::Bool, "true"),
    (
        "field.amplitude_dist",
        Kind::Choice(&["deterministic", "gaussian"]),
        "deterministic",
    ),
    ("bloch.dt", Kind::F64, "0"),
    ("bloch.form", Kind::Choice(&["population", "inversion"]), "inversion"),
    ("bloch.tolerance", Kind::F64, "1e-7"),
    ("bloch.n0", Kind::F64, "-1"),
    ("bloch.rho21_re0", Kind::F64, "0"),
    ("bloch.rho21_im0", Kind::F64, "0"),
    ("ensemble.n_atoms", Kind::U64, "1000"),
    ("ensemble.t_end", Kind::F64, "10"),
    ("correlate.t_ref", Kind::F64, "8"),
    ("correlate.max_lag", Kind::F64, "3"),
    ("correlate.n_lags", Kind::Usize, "13"),
    ("correlate.with_inversion", Kind::Bool, "false"),
    ("correlate.max_stderr", Kind::F64, "0"),
    ("ere.a", Kind::F64, "1"),
    ("ere.r", Kind::F64, "1"),
    ("ere.n0", Kind::F64, "-1"),
    ("ere.t_end", Kind::F64, "10"),
    ("ere.mu_debye", Kind::F64, "1"),
    ("ere.omega21_si", Kind::F64, "2.5e15"),
    ("ere.a_si", Kind::F64, "0"),
    ("validity.gammas", Kind::F64List, "3,3,3,2.5,1.5,1.2"),
    ("validity.deltas", Kind::F64List, "0"),
    ("validity.r0s", Kind::F64List, "0.06,0.15,0.36,0.75,1.5,1.8"),
    ("validity.p_max", Kind::Usize, "6"),
    ("validity.n_atoms", Kind::U64, "2000"),
    ("validity.t_end", Kind::F64, "14"),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, ..)| *k == key).map(|&(_, kind, _)| kind)
}

fn check_value(key: &str, kind: Kind, value: &str) -> Result<(), ConfigError> {
    let mismatch = |expected: &str| ConfigError::TypeMismatch {
        key: key.to_string(),
        expected: expected.to_string(),
        got: value.to_string(),
    };
    match kind {
        Kind::U64 => value.parse::<u64>().map(|_| ()).map_err(|_| mismatch("an unsigned integer")),
        Kind::Usize => value
            .parse::<usize>()
            .map(|_| ())
            .map_err(|_| mismatch("an unsigned integer")),
        Kind::F64 => value.parse::<f64>().map(|_| ()).map_err(|_| mismatch("a number")),
        Kind::Bool => value.parse::<bool>().map(|_| ()).map_err(|_| mismatch("true or false")),
        Kind::Str => Ok(()),
        Kind::Choice(options) => {
            if options.contains(&value) {
                Ok(())
            } else {
                Err(mismatch(&format!("one of {}", options.join("|"))))
            }
        }
        Kind::F64List => {
            if value.split(',').all(|tok| tok.trim().parse::<f64>().is_ok()) {
                Ok(())
            } else {
                Err(mismatch("a comma-separated list of numbers"))
            }
        }
    }
}

/// A fully resolved run configuration: every known key has a value.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|&(k, _, d)| (k.to_string(), d.to_string()))
            .collect();
        Self {
            values,
            explicit: BTreeSet::new(),
        }
    }
}

impl RunConfig {
    /// Parse a config file body on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: i + 1,
                text: raw.trim().to_string(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Set one key, validating both the key path and the value type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let kind = kind_of(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        check_value(key, kind, value)?;
        self.values.insert(key.to_string(), value.to_string());
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Whether the key was set explicitly (file or override) rather than
    /// defaulted.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn get_str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unknown key `{key}` queried"))
    }

    pub fn get_u64(&self, key: &str) -> u64 {
        self.get_str(key).parse().expect("validated at set time")
    }

    pub fn get_usize(&self, key: &str) -> usize {
        self.get_str(key).parse().expect("validated at set time")
    }

    pub fn get_f64(&self, key: &str) -> f64 {
        self.get_str(key).parse().expect("validated at set time")
    }

    pub fn get_bool(&self, key: &str) -> bool {
        self.get_str(key).parse().expect("validated at set time")
    }

    pub fn get_f64_list(&self, key: &str) -> Vec<f64> {
        self.get_str(key)
            .split(',')
            .map(|tok| tok.trim().parse().expect("validated at set time"))
            .collect()
    }

    /// The fully resolved config as manifest text. Parsing it back
    /// reproduces this configuration exactly.
    pub fn manifest(&self) -> String {
        let mut out = String::from("# resolved run configuration\n");
        for (k, v) in &self.values {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }
}

/// Broadcast the three validity lists to a common point count.
pub fn broadcast_points(
    gammas: &[f64],
    deltas: &[f64],
    r0s: &[f64],
) -> Result<Vec<(f64, f64, f64)>, ConfigError> {
    let len = gammas.len().max(deltas.len()).max(r0s.len());
    let pick = |list: &[f64], name: &'static str, i: usize| -> Result<f64, ConfigError> {
        if list.len() == 1 {
            Ok(list[0])
        } else if list.len() == len {
            Ok(list[i])
        } else {
            Err(ConfigError::LengthMismatch {
                a: "validity.gammas",
                b: name,
            })
        }
    };
    (0..len)
        .map(|i| {
            Ok((
                pick(gammas, "validity.gammas", i)?,
                pick(deltas, "validity.deltas", i)?,
                pick(r0s, "validity.r0s", i)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_manifest() {
        let cfg = RunConfig::default();
        let manifest = cfg.manifest();
        let reparsed = RunConfig::from_text(&manifest).unwrap();
        assert_eq!(reparsed.manifest(), manifest);
        // the documented rate-equation defaults
        assert_eq!(cfg.get_f64("ere.a"), 1.0);
        assert_eq!(cfg.get_f64("ere.r"), 1.0);
        assert_eq!(cfg.get_f64("ere.n0"), -1.0);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = RunConfig::from_text("feild.backend = mode_sum\n").unwrap_err();
        match err {
            ConfigError::UnknownKey(k) => assert_eq!(k, "feild.backend"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let err = RunConfig::from_text("ensemble.n_atoms = many\n").unwrap_err();
        match err {
            ConfigError::TypeMismatch { key, .. } => assert_eq!(key, "ensemble.n_atoms"),
            other => panic!("unexpected {other}"),
        }
        assert!(RunConfig::from_text("field.backend = laser\n").is_err());
        assert!(RunConfig::from_text("field.jitter = maybe\n").is_err());
        assert!(RunConfig::from_text("validity.gammas = 1,x\n").is_err());
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let text = "# a comment\n\nspectrum.gamma = 2.5 # inline\nspectrum.gamma = 3.5\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.get_f64("spectrum.gamma"), 3.5);
        assert!(cfg.is_explicit("spectrum.gamma"));
        assert!(!cfg.is_explicit("run.seed"));
    }

    #[test]
    fn bad_line_reports_position() {
        let err = RunConfig::from_text("spectrum.gamma 2.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadLine { line: 1, .. }));
    }

    #[test]
    fn list_broadcasting() {
        let pts = broadcast_points(&[1.0, 2.0], &[0.0], &[0.1, 0.2]).unwrap();
        assert_eq!(pts, vec![(1.0, 0.0, 0.1), (2.0, 0.0, 0.2)]);
        assert!(broadcast_points(&[1.0, 2.0], &[0.0, 1.0, 2.0], &[0.1]).is_err());
    }
}
