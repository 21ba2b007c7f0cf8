//! Plain-text system descriptions.
//!
//! One directive per line; `#` starts a comment.
//!
//! ```text
//! # three explicit modes, one input, one output
//! inputs 1
//! outputs 1
//! mode lambda=0 b=1 c=1
//! mode lambda=-1+2i b=1 c=0.5
//! mode lambda=-1-2i b=1 c=0.5
//! feedthrough 0.1
//! exponents 0.25 0.25
//! gram 1 0 0
//! gram 0 1 0
//! gram 0 0 1
//! ```
//!
//! Alternatively `catalog heat-neumann-1d` selects a built-in system and
//! excludes every other directive except `name`. Complex numbers use the
//! `a+bi` form. `b` and `c` take comma-separated lists with one entry per
//! input and output channel. `feedthrough` lists the `p×m` matrix row by
//! row, `gram` adds one row of the Gram matrix.

use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::heat;
use crate::spectral::{CMatrix, GrowthExponents, Mode, SpectralSystem};

/// Names accepted by the `catalog` directive.
pub const CATALOG: &[&str] = &[heat::CATALOG_NAME];

/// Built-in system by name.
pub fn catalog(name: &str) -> Result<SpectralSystem> {
    match name {
        heat::CATALOG_NAME => Ok(heat::heat_spectral_system()),
        _ => Err(Error::Validation(format!(
            "unknown catalog system '{name}' (known: {})",
            CATALOG.join(", ")
        ))),
    }
}

fn complex(s: &str) -> std::result::Result<Complex64, String> {
    Complex64::from_str(s).map_err(|_| format!("bad complex number '{s}'"))
}

fn complex_list(s: &str) -> std::result::Result<Vec<Complex64>, String> {
    s.split(',').map(complex).collect()
}

fn count(s: Option<&str>, what: &str) -> std::result::Result<usize, String> {
    s.and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .ok_or_else(|| format!("'{what}' needs a positive integer"))
}

/// Parses a system description.
pub fn parse_system(text: &str) -> std::result::Result<SpectralSystem, String> {
    let mut name = None;
    let mut catalog_name = None;
    let mut inputs = None;
    let mut outputs = None;
    let mut modes = Vec::new();
    let mut feedthrough = None;
    let mut exponents = None;
    let mut gram_rows: Vec<Vec<Complex64>> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| format!("line {}: {msg}", lineno + 1);
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        match keyword {
            "name" => name = Some(words.collect::<Vec<_>>().join(" ")),
            "catalog" => catalog_name = words.next().map(str::to_string),
            "inputs" => inputs = Some(count(words.next(), "inputs").map_err(at)?),
            "outputs" => outputs = Some(count(words.next(), "outputs").map_err(at)?),
            "mode" => {
                let (mut lambda, mut b, mut c) = (None, None, None);
                for field in words {
                    let (key, value) = field
                        .split_once('=')
                        .ok_or_else(|| at(format!("expected key=value, got '{field}'")))?;
                    match key {
                        "lambda" => lambda = Some(complex(value).map_err(at)?),
                        "b" => b = Some(complex_list(value).map_err(at)?),
                        "c" => c = Some(complex_list(value).map_err(at)?),
                        _ => return Err(at(format!("unknown mode field '{key}'"))),
                    }
                }
                match (lambda, b, c) {
                    (Some(lambda), Some(b), Some(c)) => modes.push(Mode::new(lambda, b, c)),
                    _ => return Err(at("mode needs lambda, b and c".into())),
                }
            }
            "feedthrough" => {
                let entries: std::result::Result<Vec<_>, _> = words.map(complex).collect();
                feedthrough = Some(entries.map_err(at)?);
            }
            "exponents" => {
                let vals: Vec<f64> = words.filter_map(|w| w.parse().ok()).collect();
                if vals.len() != 2 {
                    return Err(at("exponents needs two numbers".into()));
                }
                exponents =
                    Some(GrowthExponents::new(vals[0], vals[1]).map_err(|e| at(e.to_string()))?);
            }
            "gram" => {
                let row: std::result::Result<Vec<_>, _> = words.map(complex).collect();
                gram_rows.push(row.map_err(at)?);
            }
            other => return Err(at(format!("unknown directive '{other}'"))),
        }
    }

    if let Some(cat) = catalog_name {
        if inputs.is_some()
            || outputs.is_some()
            || !modes.is_empty()
            || feedthrough.is_some()
            || !gram_rows.is_empty()
            || exponents.is_some()
        {
            return Err("'catalog' cannot be combined with explicit system data".into());
        }
        let sys = catalog(&cat).map_err(|e| e.to_string())?;
        return Ok(match name {
            Some(n) => sys.named(n),
            None => sys,
        });
    }

    let inputs = inputs.ok_or("missing 'inputs'")?;
    let outputs = outputs.ok_or("missing 'outputs'")?;
    let mut sys = SpectralSystem::finite(modes, inputs, outputs).map_err(|e| e.to_string())?;
    if let Some(entries) = feedthrough {
        if entries.len() != inputs * outputs {
            return Err(format!(
                "feedthrough needs {} entries, got {}",
                inputs * outputs,
                entries.len()
            ));
        }
        let d = CMatrix::from_row_slice(outputs, inputs, &entries);
        sys = sys.with_feedthrough(d).map_err(|e| e.to_string())?;
    }
    if let Some(e) = exponents {
        sys = sys.with_exponents(e);
    }
    if !gram_rows.is_empty() {
        let n = gram_rows.len();
        if gram_rows.iter().any(|r| r.len() != n) {
            return Err(format!(
                "gram must be square, got {n} rows of unequal length"
            ));
        }
        let flat: Vec<Complex64> = gram_rows.concat();
        sys = sys
            .with_gram(CMatrix::from_row_slice(n, n, &flat))
            .map_err(|e| e.to_string())?;
    }
    Ok(match name {
        Some(n) => sys.named(n),
        None => sys,
    })
}

/// Reads a system description from disk.
pub fn read_system(path: &Path) -> Result<SpectralSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_system(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}
