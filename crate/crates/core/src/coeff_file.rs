//! JSON coefficient files.
//!
//! ```json
//! { "d": 1, "channels": 1, "kappa": [0.5, 0.0],
//!   "blocks": { "E11": [[[2.0, 0.0]]] } }
//! ```
//!
//! Keys start with `G` (Itô) or `E` (Stratonovich) followed by the index
//! pair: `G01` when there is one channel, `G1_2` otherwise. Missing blocks
//! are zero. Matrices are row-major arrays of `[re, im]` pairs. With
//! `"super": true` every block is a `d²×d²` superoperator matrix.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::coeffs::{index_label, CoeffError, CoefficientBlock, GaugeParameter};
use crate::itoalg::{ItoAlgError, SuperGenerator};
use crate::linalg::{c, Mat};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema errors:\n{}", .errors.join("\n"))]
    Schema { path: PathBuf, errors: Vec<String> },
}

impl FileError {
    pub fn schema(path: &Path, errors: Vec<String>) -> Self {
        Self::Schema {
            path: path.to_path_buf(),
            errors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Ito,
    Stratonovich,
}

impl Representation {
    pub fn prefix(self) -> char {
        match self {
            Self::Ito => 'G',
            Self::Stratonovich => 'E',
        }
    }

    fn from_prefix(ch: char) -> Option<Self> {
        match ch {
            'G' => Some(Self::Ito),
            'E' => Some(Self::Stratonovich),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::Ito => Self::Stratonovich,
            Self::Stratonovich => Self::Ito,
        }
    }
}

/// Parsed contents of a coefficient file.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFile {
    pub representation: Representation,
    pub kappa: GaugeParameter,
    /// System dimension `d`; block size is `d²` for superoperator files.
    pub d: usize,
    pub is_super: bool,
    pub coefficients: CoefficientBlock,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    d: usize,
    channels: usize,
    #[serde(default)]
    kappa: Option<[f64; 2]>,
    blocks: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(default, rename = "super")]
    is_super: bool,
}

/// 1-based line of the first occurrence of `"key"` in `text`.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn at_line(text: &str, key: &str, msg: String) -> String {
    match key_line(text, key) {
        Some(n) => format!("line {n}: {msg}"),
        None => msg,
    }
}

fn parse_key(key: &str, channels: usize) -> Option<(char, usize, usize)> {
    let mut chars = key.chars();
    let prefix = chars.next()?;
    let rest = chars.as_str();
    let (a, b) = if let Some((a, b)) = rest.split_once('_') {
        (a.parse().ok()?, b.parse().ok()?)
    } else if channels == 1 && rest.len() == 2 {
        (rest[..1].parse().ok()?, rest[1..].parse().ok()?)
    } else {
        return None;
    };
    Some((prefix, a, b))
}

impl CoeffFile {
    pub fn new(representation: Representation, kappa: GaugeParameter, coefficients: CoefficientBlock) -> Self {
        Self {
            representation,
            kappa,
            d: coefficients.dim(),
            is_super: false,
            coefficients,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, FileError> {
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_at(&text, path)
    }

    /// Parses `text`; `path` only labels diagnostics.
    pub fn from_str_at(text: &str, path: &Path) -> Result<Self, FileError> {
        let raw: RawFile = serde_json::from_str(text).map_err(|e| FileError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut errors = Vec::new();
        if raw.d == 0 {
            errors.push(at_line(text, "d", "d must be at least 1".into()));
        }
        if raw.channels == 0 {
            errors.push(at_line(text, "channels", "channels must be at least 1".into()));
        }
        let kappa = match raw.kappa {
            None => GaugeParameter::symmetric(),
            Some([re, im]) => match GaugeParameter::new(c(re, im)) {
                Ok(k) => k,
                Err(_) => {
                    errors.push(at_line(
                        text,
                        "kappa",
                        format!("kappa must satisfy Re κ = 1/2, got Re κ = {re}"),
                    ));
                    GaugeParameter::symmetric()
                }
            },
        };
        if raw.blocks.is_empty() {
            errors.push(at_line(text, "blocks", "blocks must name at least one entry".into()));
        }
        if !errors.is_empty() {
            return Err(FileError::schema(path, errors));
        }

        let n = raw.channels + 1;
        let size = if raw.is_super { raw.d * raw.d } else { raw.d };
        let mut representation = None;
        let mut seen = BTreeMap::new();
        let mut blocks = vec![Mat::zeros(size, size); n * n];
        for (key, rows) in &raw.blocks {
            let Some((prefix, a, b)) = parse_key(key, raw.channels) else {
                errors.push(at_line(
                    text,
                    key,
                    format!("block {key}: expected G<α><β> or E<α><β> (underscore-separated when channels > 1)"),
                ));
                continue;
            };
            let Some(rep) = Representation::from_prefix(prefix) else {
                errors.push(at_line(text, key, format!("block {key}: prefix must be G or E")));
                continue;
            };
            match representation {
                None => representation = Some(rep),
                Some(r) if r != rep => {
                    errors.push(at_line(text, key, format!("block {key}: mixes G and E blocks in one file")));
                    continue;
                }
                _ => {}
            }
            if a >= n || b >= n {
                errors.push(at_line(
                    text,
                    key,
                    format!("block {key}: index out of range for {} channel(s)", raw.channels),
                ));
                continue;
            }
            if let Some(prev) = seen.insert((a, b), key.clone()) {
                errors.push(at_line(text, key, format!("block {key}: duplicates {prev}")));
                continue;
            }
            let shape_ok = rows.len() == size && rows.iter().all(|r| r.len() == size);
            if !shape_ok {
                let got_cols = rows.first().map_or(0, |r| r.len());
                errors.push(at_line(
                    text,
                    key,
                    format!("block {key}: expected {size}x{size}, got {}x{got_cols}", rows.len()),
                ));
                continue;
            }
            if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
                errors.push(at_line(text, key, format!("block {key}: non-finite entry")));
                continue;
            }
            blocks[a * n + b] = Mat::from_fn(size, size, |i, j| c(rows[i][j][0], rows[i][j][1]));
        }
        if !errors.is_empty() {
            return Err(FileError::schema(path, errors));
        }
        let coefficients = CoefficientBlock::from_blocks(size, raw.channels, blocks)
            .map_err(|e| FileError::schema(path, vec![e.to_string()]))?;
        Ok(Self {
            representation: representation.expect("at least one block"),
            kappa,
            d: raw.d,
            is_super: raw.is_super,
            coefficients,
        })
    }

    pub fn to_json(&self) -> Value {
        let channels = self.coefficients.channels();
        let mut blocks = serde_json::Map::new();
        for ((a, b), m) in self.coefficients.blocks() {
            let key = format!("{}{}", self.representation.prefix(), index_label(a, b, channels));
            blocks.insert(key, matrix_to_json(m));
        }
        let k = self.kappa.value();
        let mut doc = serde_json::json!({
            "d": self.d,
            "channels": channels,
            "kappa": [k.re, k.im],
            "blocks": blocks,
        });
        if self.is_super {
            doc["super"] = Value::Bool(true);
        }
        doc
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values always serialize") + "\n"
    }

    pub fn into_super_generator(self) -> Result<SuperGenerator, ItoAlgError> {
        if !self.is_super {
            return Err(ItoAlgError::Coeff(CoeffError::NotApplicable(
                "file does not hold superoperator blocks".into(),
            )));
        }
        SuperGenerator::from_blocks(self.d, self.coefficients)
    }

    pub fn from_super_generator(representation: Representation, kappa: GaugeParameter, g: &SuperGenerator) -> Self {
        Self {
            representation,
            kappa,
            d: g.dim(),
            is_super: true,
            coefficients: g.as_blocks().clone(),
        }
    }
}

/// Row-major nested `[re, im]` arrays.
pub fn matrix_to_json(m: &Mat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array(
                    (0..m.ncols())
                        .map(|j| serde_json::json!([m[(i, j)].re, m[(i, j)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}
