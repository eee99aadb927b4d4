//! Run configuration: JSON config files merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coeff_file::{key_line, FileError};
use crate::coeffs::GaugeParameter;
use crate::linalg::c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Convert,
    Check,
    Hp,
    Add,
    Flow,
    Simulate,
    Wz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// `E₁₁ = 0`: damped qubit with `K = σ₋`, `H = σ_z`.
    Diffusion,
    /// Pure gauge `E₁₁ = π/2`, `d = 1`.
    EdVsSd,
}

/// Configuration as written in a file; every field optional except `task`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub task: Option<Task>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub kappa: Option<[f64; 2]>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub lambda_list: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub t_end: Option<f64>,
    pub experiment: Option<Experiment>,
}

impl RawConfig {
    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RawConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(task, kappa, out, tol, dt_list, lambda_list, seed, seeds, t_end, experiment);
        if !over.inputs.is_empty() {
            self.inputs = over.inputs;
        }
        self
    }
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub inputs: Vec<PathBuf>,
    /// `None` means: use the gauge stored in the input file.
    pub kappa: Option<GaugeParameter>,
    pub out: PathBuf,
    /// `None` means: module default tolerances.
    pub tol: Option<f64>,
    pub dt_list: Vec<f64>,
    pub lambda_list: Vec<f64>,
    pub seed: u64,
    pub seeds: usize,
    pub t_end: f64,
    pub experiment: Option<Experiment>,
}

pub const DEFAULT_DT_LIST: [f64; 4] = [0.01, 0.005, 0.0025, 0.00125];
pub const DEFAULT_LAMBDA_LIST: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_SEEDS: usize = 32;

fn decreasing_positive(xs: &[f64]) -> bool {
    !xs.is_empty() && xs.iter().all(|x| x.is_finite() && *x > 0.0) && xs.windows(2).all(|w| w[1] < w[0])
}

impl RunConfig {
    /// Checks every field; `source` supplies line numbers when the values
    /// came from a config file.
    pub fn from_raw(raw: RawConfig, source: Option<&str>) -> Result<Self, Vec<String>> {
        let mut errors = Vec::new();
        let mut err = |key: &str, msg: String| {
            let line = source.and_then(|s| key_line(s, key));
            errors.push(match line {
                Some(n) => format!("line {n}: {key}: {msg}"),
                None => format!("{key}: {msg}"),
            });
        };
        let task = raw.task.unwrap_or_else(|| {
            err("task", "missing (one of convert, check, hp, add, flow, simulate, wz)".into());
            Task::Check
        });
        let kappa = raw.kappa.and_then(|[re, im]| match GaugeParameter::new(c(re, im)) {
            Ok(k) => Some(k),
            Err(_) => {
                err("kappa", format!("violates Re κ = 1/2 (got {re}, {im})"));
                None
            }
        });
        if let Some(t) = raw.tol {
            if !(t > 0.0) || !t.is_finite() {
                err("tol", format!("must be a positive number, got {t}"));
            }
        }
        let dt_list = raw.dt_list.unwrap_or_else(|| DEFAULT_DT_LIST.to_vec());
        if !decreasing_positive(&dt_list) || dt_list.len() < 2 {
            err("dt_list", "must hold at least two positive, strictly decreasing steps".into());
        }
        let lambda_list = raw.lambda_list.unwrap_or_else(|| DEFAULT_LAMBDA_LIST.to_vec());
        if !decreasing_positive(&lambda_list) {
            err("lambda_list", "must hold positive, strictly decreasing values".into());
        }
        let seeds = raw.seeds.unwrap_or(DEFAULT_SEEDS);
        if seeds == 0 {
            err("seeds", "must be at least 1".into());
        }
        let t_end = raw.t_end.unwrap_or(1.0);
        if !(t_end > 0.0) || !t_end.is_finite() {
            err("t_end", format!("must be positive, got {t_end}"));
        }
        let needs_input = match task {
            Task::Convert | Task::Check | Task::Hp | Task::Add | Task::Flow => true,
            Task::Simulate => raw.experiment.is_none(),
            Task::Wz => false,
        };
        if needs_input && raw.inputs.is_empty() {
            err("inputs", format!("task {task:?} needs at least one coefficient file").to_lowercase());
        }
        if matches!(task, Task::Convert | Task::Hp | Task::Flow | Task::Simulate | Task::Wz) && raw.inputs.len() > 1 {
            err("inputs", format!("task {task:?} takes a single coefficient file").to_lowercase());
        }
        if raw.experiment.is_some() && task != Task::Simulate {
            err("experiment", "only applies to the simulate task".into());
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Self {
            task,
            inputs: raw.inputs,
            kappa,
            out: raw.out.unwrap_or_else(|| PathBuf::from("qstoch_out")),
            tol: raw.tol,
            dt_list,
            lambda_list,
            seed: raw.seed.unwrap_or(0),
            seeds,
            t_end,
            experiment: raw.experiment,
        })
    }
}

/// Reads a config file without validating it, keeping its text for line context.
pub fn read_config(path: &Path) -> Result<(RawConfig, String), FileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw = serde_json::from_str(&text).map_err(|e| FileError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok((raw, text))
}

pub fn validate_config(path: &Path) -> Result<RunConfig, FileError> {
    let (raw, text) = read_config(path)?;
    RunConfig::from_raw(raw, Some(&text)).map_err(|errors| FileError::schema(path, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn validate(text: &str) -> Result<RunConfig, Vec<String>> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
        RunConfig::from_raw(raw, Some(text))
    }

    #[test]
    fn minimal_convert_config() {
        let cfg = validate(r#"{"task": "convert", "inputs": ["e.json"]}"#).unwrap();
        assert_eq!(cfg.task, Task::Convert);
        assert_eq!(cfg.kappa, None);
        assert_eq!(cfg.dt_list, DEFAULT_DT_LIST.to_vec());
    }

    #[test]
    fn kappa_off_the_critical_line() {
        let errs = validate("{\n \"task\": \"convert\",\n \"inputs\": [\"e.json\"],\n \"kappa\": [0.3, 1.0]\n}").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].starts_with("line 4: kappa") && errs[0].contains("Re κ = 1/2"), "{}", errs[0]);
    }

    #[test]
    fn unknown_keys_and_bad_lists() {
        assert!(validate(r#"{"task": "check", "inputs": ["a"], "bogus": 1}"#).is_err());
        let errs = validate(r#"{"task": "simulate", "experiment": "diffusion", "dt_list": [0.01, 0.02]}"#).unwrap_err();
        assert!(errs[0].contains("dt_list"));
        let errs = validate(r#"{"task": "flow"}"#).unwrap_err();
        assert!(errs[0].contains("inputs"));
    }

    #[test]
    fn overlay_prefers_later_values() {
        let base = RawConfig {
            task: Some(Task::Wz),
            seeds: Some(4),
            ..Default::default()
        };
        let over = RawConfig {
            seeds: Some(8),
            ..Default::default()
        };
        let merged = base.overlay(over);
        assert_eq!(merged.task, Some(Task::Wz));
        assert_eq!(merged.seeds, Some(8));
    }
}
