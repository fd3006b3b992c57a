//! Text model format:
//!
//! ```text
//! format_version 1
//! config {"n_history":3,...}
//! conv0.weight 16 3 3 3 3
//! 0.0123 -0.04 ...
//! ```
//!
//! One header line and one value line per tensor, values in shortest
//! round-trip decimal form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::model::TapModel;
use super::TapConfig;
use crate::error::TapError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn model_to_string(model: &TapModel) -> String {
    let mut out = format!(
        "format_version {MODEL_FORMAT_VERSION}\nconfig {}\n",
        serde_json::to_string(&model.config).expect("config serializes")
    );
    for (name, shape, values) in model.tensors() {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{name} {}", dims.join(" "));
        let vals: Vec<String> = values.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> TapError {
    TapError::ModelFormat {
        line,
        message: message.into(),
    }
}

pub fn model_from_str(text: &str) -> Result<TapModel, TapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| format_err(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("format_version")?;
    let version = header
        .strip_prefix("format_version ")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| format_err(ln, "expected `format_version <n>`"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(TapError::Version(version));
    }

    let (ln, config_line) = next("config")?;
    let json = config_line
        .strip_prefix("config ")
        .ok_or_else(|| format_err(ln, "expected `config <json>`"))?;
    let config: TapConfig = serde_json::from_str(json).map_err(|e| format_err(ln, format!("bad config: {e}")))?;
    let mut model = TapModel::zeros(&config)?;

    let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    let mut parsed = Vec::with_capacity(expected.len());
    for (name, shape) in &expected {
        let (ln, head) = next(name)?;
        let mut parts = head.split_whitespace();
        let found = parts.next().unwrap_or_default();
        if found != name {
            return Err(format_err(ln, format!("expected tensor `{name}`, found `{found}`")));
        }
        let dims: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| format_err(ln, format!("bad dimension `{p}`"))))
            .collect::<Result<_, _>>()?;
        if &dims != shape {
            return Err(TapError::shape(name.clone(), format!("config implies {shape:?}, file has {dims:?}")));
        }
        let (ln, data) = next(name)?;
        let values: Vec<f64> = data
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| format_err(ln, format!("bad number `{v}`"))))
            .collect::<Result<_, _>>()?;
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(format_err(ln, format!("`{name}` needs {len} values, found {}", values.len())));
        }
        parsed.push(values);
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(format_err(ln, format!("unexpected trailing content `{extra}`")));
    }
    for (dst, src) in model.tensors_mut().into_iter().zip(parsed) {
        dst.copy_from_slice(&src);
    }
    Ok(model)
}

pub fn save_model(model: &TapModel, path: &Path) -> Result<(), TapError> {
    fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TapModel, TapError> {
    model_from_str(&fs::read_to_string(path)?)
}
