//! Text checkpoints of network parameters.
//!
//! ```text
//! DEPMAX1
//! <tensor count>
//! <name> <rows> <cols>
//! <rows * cols values, space separated>
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use depmax_core::net::{NamedTensor, NetworkParams};

use crate::csvio::{fmt_f64, write_text};
use crate::error::{CliError, Result};

pub const MAGIC: &str = "DEPMAX1";

pub fn to_string(params: &NetworkParams) -> String {
    let tensors = params.tensors();
    let mut out = format!("{MAGIC}\n{}\n", tensors.len());
    for t in tensors {
        let _ = writeln!(out, "{} {} {}", t.name, t.rows, t.cols);
        let values: Vec<String> = t.values.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out
}

pub fn save(path: &Path, params: &NetworkParams) -> Result<()> {
    write_text(path, &to_string(params))
}

fn bad(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn parse(path: &Path, text: &str) -> Result<NetworkParams> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(path, format!("missing `{MAGIC}` header")));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| bad(path, "missing tensor count"))?;
    let mut tensors = Vec::with_capacity(count);
    for k in 0..count {
        let head = lines.next().ok_or_else(|| bad(path, format!("tensor {k}: missing header")))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(bad(path, format!("tensor {k}: expected `name rows cols`, got `{head}`")));
        };
        let dim = |s: &str| s.parse::<usize>().map_err(|_| bad(path, format!("tensor {name}: bad size `{s}`")));
        let (rows, cols) = (dim(rows)?, dim(cols)?);
        let body = lines.next().ok_or_else(|| bad(path, format!("tensor {name}: missing values")))?;
        let values = body
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(path, format!("tensor {name}: {e}")))?;
        if values.len() != rows * cols {
            return Err(bad(
                path,
                format!("tensor {name}: expected {} values, found {}", rows * cols, values.len()),
            ));
        }
        tensors.push(NamedTensor {
            name: name.to_string(),
            rows,
            cols,
            values,
        });
    }
    NetworkParams::from_tensors(&tensors).map_err(|e| bad(path, e.to_string()))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse(path, &text)
}
