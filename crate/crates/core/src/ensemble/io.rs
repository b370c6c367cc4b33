//! CSV dumps.
//!
//! Activations: header `sample_id,group_id,true_class,model_id,p_0,…`,
//! `M` consecutive rows per sample ordered by `model_id`, plus a JSON
//! sidecar (`<stem>.json`) holding `{M, C, class_names}`.
//!
//! Features: header `sample_id,group_id,true_class,x_0,…`, one row per
//! sample.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is the identity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::world::FeatureSample;
use super::LabeledSample;
use crate::descriptor::SoftmaxMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    #[serde(rename = "M")]
    pub models: usize,
    #[serde(rename = "C")]
    pub classes: usize,
    pub class_names: Vec<String>,
}

impl Sidecar {
    pub fn new(models: usize, classes: usize) -> Self {
        Self {
            models,
            classes,
            class_names: (0..classes).map(|c| format!("class_{c}")).collect(),
        }
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the activation CSV and its sidecar.
pub fn save_samples(path: &Path, samples: &[LabeledSample], sidecar: &Sidecar) -> Result<()> {
    let mut out = String::from("sample_id,group_id,true_class,model_id");
    for c in 0..sidecar.classes {
        write!(out, ",p_{c}").unwrap();
    }
    out.push('\n');
    for s in samples {
        if s.activations.models() != sidecar.models || s.activations.classes() != sidecar.classes {
            return Err(Error::Shape(format!(
                "sample {} does not match the sidecar shape",
                s.sample_id
            )));
        }
        check_field(&s.sample_id)?;
        let group = s.group_id.as_deref().unwrap_or("");
        check_field(group)?;
        for (m, row) in s.activations.rows().enumerate() {
            write!(out, "{},{},{},{}", s.sample_id, group, s.true_class, m).unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    write_file(path, &out)?;
    write_file(&sidecar_path(path), &serde_json::to_string_pretty(sidecar)?)
}

fn check_field(v: &str) -> Result<()> {
    if v.contains([',', '\n', '"']) {
        return Err(Error::InvalidArgument(format!(
            "identifier {v:?} cannot be written to CSV"
        )));
    }
    Ok(())
}

/// Reads an activation CSV. The sidecar is required.
pub fn load_samples(path: &Path) -> Result<(Vec<LabeledSample>, Sidecar)> {
    let side_path = sidecar_path(path);
    let side_text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&side_text)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let header_cols = 4 + sidecar.classes;
    match lines.next() {
        Some((_, h))
            if h.split(',').count() == header_cols && h.starts_with("sample_id,group_id,true_class,model_id") => {}
        Some(_) => return Err(parse_err(path, 1, format!("header must have {header_cols} columns"))),
        None => return Err(parse_err(path, 1, "missing header")),
    }

    let mut samples = Vec::new();
    let mut pending: Vec<f64> = Vec::with_capacity(sidecar.models * sidecar.classes);
    let mut current: Option<(String, Option<String>, usize, usize)> = None;

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header_cols {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {header_cols} columns, found {}", fields.len()),
            ));
        }
        let true_class: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad true_class"))?;
        let model: usize = fields[3].parse().map_err(|_| parse_err(path, lineno, "bad model_id"))?;
        if true_class >= sidecar.classes {
            return Err(parse_err(path, lineno, "true_class out of range"));
        }
        let row = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| parse_err(path, lineno, "bad probability"))?;
        if let Err(e) = SoftmaxMatrix::new(1, sidecar.classes, row.clone()) {
            return Err(parse_err(path, lineno, e.to_string()));
        }
        if model == 0 {
            if current.is_some() {
                return Err(parse_err(path, lineno, "previous sample has too few model rows"));
            }
            let group = (!fields[1].is_empty()).then(|| fields[1].to_string());
            current = Some((fields[0].to_string(), group, true_class, lineno));
        }
        let Some((id, _, truth, _)) = &current else {
            return Err(parse_err(path, lineno, "model rows must start at model_id 0"));
        };
        if fields[0] != id || true_class != *truth || model != pending.len() / sidecar.classes {
            return Err(parse_err(path, lineno, "model rows out of order"));
        }
        pending.extend_from_slice(&row);
        if model + 1 == sidecar.models {
            let (id, group, truth, start) = current.take().expect("sample in progress");
            let activations = SoftmaxMatrix::new(sidecar.models, sidecar.classes, std::mem::take(&mut pending))
                .map_err(|e| parse_err(path, start, e.to_string()))?;
            samples.push(LabeledSample {
                sample_id: id,
                activations,
                true_class: truth,
                group_id: group,
            });
        }
    }
    if let Some((_, _, _, start)) = current {
        return Err(parse_err(path, start, "truncated sample at end of file"));
    }
    Ok((samples, sidecar))
}

pub fn save_features(path: &Path, samples: &[FeatureSample], features: usize) -> Result<()> {
    let mut out = String::from("sample_id,group_id,true_class");
    for j in 0..features {
        write!(out, ",x_{j}").unwrap();
    }
    out.push('\n');
    for s in samples {
        if s.features.len() != features {
            return Err(Error::Shape(format!(
                "sample {} has the wrong feature count",
                s.sample_id
            )));
        }
        check_field(&s.sample_id)?;
        let group = s.group_id.as_deref().unwrap_or("");
        check_field(group)?;
        write!(out, "{},{},{}", s.sample_id, group, s.true_class).unwrap();
        for v in &s.features {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let cols = match lines.next() {
        Some((_, h)) if h.starts_with("sample_id,group_id,true_class") => h.split(',').count(),
        _ => return Err(parse_err(path, 1, "missing feature header")),
    };
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {cols} columns, found {}", fields.len()),
            ));
        }
        let true_class = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad true_class"))?;
        let features = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| parse_err(path, lineno, "bad feature value"))?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, lineno, "non-finite feature"));
        }
        out.push(FeatureSample {
            sample_id: fields[0].to_string(),
            features,
            true_class,
            group_id: (!fields[1].is_empty()).then(|| fields[1].to_string()),
        });
    }
    Ok(out)
}
