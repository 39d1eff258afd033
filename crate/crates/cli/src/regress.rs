//! Frozen reference values. Each `*.toml` in the baseline directory holds an
//! experiment config and the report fields to compare, addressed by JSON
//! pointers into the canonical report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::run::run;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub checks: Vec<FieldCheck>,
    pub config: ExperimentConfig,
}

/// Passes when `|got - value| <= abs_tol + rel_tol |value|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldCheck {
    pub field: String,
    pub pointer: String,
    pub value: f64,
    #[serde(default)]
    pub rel_tol: f64,
    #[serde(default)]
    pub abs_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldOutcome {
    pub baseline: String,
    pub field: String,
    pub expected: f64,
    pub got: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressReport {
    pub fields: Vec<FieldOutcome>,
    pub pass: bool,
}

impl RegressReport {
    pub fn failing(&self) -> Vec<String> {
        self.fields
            .iter()
            .filter(|f| !f.pass)
            .map(|f| format!("{}.{}", f.baseline, f.field))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.fields {
            out.push_str(&format!(
                "{} {}.{} = {} (baseline {}, band +-{:e})\n",
                if f.pass { "PASS" } else { "FAIL" },
                f.baseline,
                f.field,
                f.got,
                f.expected,
                f.band
            ));
        }
        if self.pass {
            out.push_str(&format!("regress: all {} fields within bands\n", self.fields.len()));
        } else {
            out.push_str(&format!("regress: FAIL in {}\n", self.failing().join(", ")));
        }
        out
    }
}

fn baseline_err(file: &Path, message: impl Into<String>) -> CliError {
    CliError::Baseline {
        file: file.display().to_string(),
        message: message.into(),
    }
}

/// Baseline files in `dir`, sorted by name.
pub fn baseline_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| baseline_err(dir, format!("cannot read baseline directory: {e}")))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(baseline_err(dir, "no *.toml baselines found"));
    }
    Ok(files)
}

pub fn load_baseline(path: &Path) -> Result<Baseline, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| baseline_err(path, e.to_string()))?;
    let de = toml::Deserializer::parse(&text).map_err(|e| baseline_err(path, e.to_string()))?;
    let b: Baseline =
        serde_path_to_error::deserialize(de).map_err(|e| baseline_err(path, format!("at `{}`: {}", e.path(), e.inner())))?;
    b.config.validate().map_err(|e| baseline_err(path, e.to_string()))?;
    Ok(b)
}

/// Runs the baseline's experiment and reads each checked field.
pub fn measure(b: &Baseline, file: &Path) -> Result<Vec<f64>, CliError> {
    let report = run(&b.config)?;
    let json = serde_json::to_value(&report).map_err(|e| CliError::Serialize(e.to_string()))?;
    b.checks
        .iter()
        .map(|c| {
            json.pointer(&c.pointer)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| baseline_err(file, format!("field `{}`: no number at {}", c.field, c.pointer)))
        })
        .collect()
}

pub fn regress(dir: &Path) -> Result<RegressReport, CliError> {
    let mut fields = Vec::new();
    for file in baseline_files(dir)? {
        let b = load_baseline(&file)?;
        let got = measure(&b, &file)?;
        for (c, g) in b.checks.iter().zip(got) {
            let band = c.abs_tol + c.rel_tol * c.value.abs();
            fields.push(FieldOutcome {
                baseline: b.name.clone(),
                field: c.field.clone(),
                expected: c.value,
                got: g,
                band,
                pass: (g - c.value).abs() <= band,
            });
        }
    }
    let pass = fields.iter().all(|f| f.pass);
    Ok(RegressReport { fields, pass })
}

/// Reruns every baseline and rewrites its frozen values. Configs and bands
/// are kept.
pub fn regenerate(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let files = baseline_files(dir)?;
    for file in &files {
        let mut b = load_baseline(file)?;
        let got = measure(&b, file)?;
        for (c, g) in b.checks.iter_mut().zip(got) {
            c.value = g;
        }
        let text = toml::to_string(&b).map_err(|e| CliError::Serialize(e.to_string()))?;
        std::fs::write(file, text).map_err(|e| baseline_err(file, e.to_string()))?;
    }
    Ok(files)
}
