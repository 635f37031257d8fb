//! Numeric comparison of two runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::manifest::{Manifest, MANIFEST_NAME};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDiff {
    pub path: String,
    pub identical: bool,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Non-numeric cells that differ.
    pub text_mismatches: usize,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub tolerance: Tolerance,
    pub same_seed: bool,
    pub same_config: bool,
    pub files: Vec<FileDiff>,
}

impl DiffReport {
    pub fn identical(&self) -> bool {
        self.files.iter().all(|f| f.identical)
    }

    pub fn within_tolerance(&self) -> bool {
        self.files.iter().all(|f| f.within_tolerance)
    }
}

fn run_dir(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.to_path_buf()
    } else {
        p.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

#[derive(Default)]
struct Acc {
    max_abs: f64,
    max_rel: f64,
    text: usize,
}

impl Acc {
    fn number(&mut self, a: f64, b: f64) {
        if a == b || (a.is_nan() && b.is_nan()) {
            return;
        }
        let d = (a - b).abs();
        let d = if d.is_nan() { f64::INFINITY } else { d };
        self.max_abs = self.max_abs.max(d);
        let scale = a.abs().max(b.abs());
        if scale > 0.0 {
            self.max_rel = self.max_rel.max(d / scale);
        }
    }

    fn cell(&mut self, a: &str, b: &str) {
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => self.number(x, y),
            _ if a == b => {}
            _ => self.text += 1,
        }
    }

    fn json(&mut self, a: &Value, b: &Value, at: &str) -> Result<(), CliError> {
        match (a, b) {
            (Value::Number(x), Value::Number(y)) => {
                self.number(x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            }
            (Value::Array(x), Value::Array(y)) => {
                if x.len() != y.len() {
                    return Err(CliError::Schema(format!("{at}: array lengths {} and {}", x.len(), y.len())));
                }
                for (i, (u, v)) in x.iter().zip(y).enumerate() {
                    self.json(u, v, &format!("{at}[{i}]"))?;
                }
            }
            (Value::Object(x), Value::Object(y)) => {
                if x.len() != y.len() || x.keys().any(|k| !y.contains_key(k)) {
                    return Err(CliError::Schema(format!("{at}: objects have different keys")));
                }
                for (k, u) in x {
                    self.json(u, &y[k], &format!("{at}.{k}"))?;
                }
            }
            (x, y) if x == y => {}
            // a non-finite float serialises as null
            (Value::Null, Value::Number(_)) | (Value::Number(_), Value::Null) => self.number(f64::NAN, 0.0),
            (Value::String(_), Value::String(_)) | (Value::Bool(_), Value::Bool(_)) => self.text += 1,
            _ => return Err(CliError::Schema(format!("{at}: value types differ"))),
        }
        Ok(())
    }
}

fn compare_file(name: &str, a: &[u8], b: &[u8]) -> Result<Acc, CliError> {
    let mut acc = Acc::default();
    let ta = String::from_utf8_lossy(a);
    let tb = String::from_utf8_lossy(b);
    if name.ends_with(".json") {
        let va: Value = serde_json::from_str(&ta)?;
        let vb: Value = serde_json::from_str(&tb)?;
        acc.json(&va, &vb, name)?;
    } else {
        let la: Vec<&str> = ta.lines().collect();
        let lb: Vec<&str> = tb.lines().collect();
        if la.len() != lb.len() {
            return Err(CliError::Schema(format!("{name}: {} rows vs {} rows", la.len(), lb.len())));
        }
        if la.first() != lb.first() {
            return Err(CliError::Schema(format!("{name}: headers differ")));
        }
        for (r, (x, y)) in la.iter().zip(&lb).enumerate().skip(1) {
            let cx: Vec<&str> = x.split(',').collect();
            let cy: Vec<&str> = y.split(',').collect();
            if cx.len() != cy.len() {
                return Err(CliError::Schema(format!("{name}: row {r} has {} vs {} cells", cx.len(), cy.len())));
            }
            for (u, v) in cx.iter().zip(&cy) {
                acc.cell(u, v);
            }
        }
    }
    Ok(acc)
}

/// Compares every file listed in two manifests. The file sets must agree.
pub fn diff_runs(a: &Path, b: &Path, tol: Tolerance) -> Result<DiffReport, CliError> {
    let ma = Manifest::load(a)?;
    let mb = Manifest::load(b)?;
    if ma.experiment != mb.experiment {
        return Err(CliError::Schema(format!("experiments differ: {} vs {}", ma.experiment, mb.experiment)));
    }
    let mut names_a: Vec<&str> = ma.files.iter().map(|f| f.path.as_str()).collect();
    let mut names_b: Vec<&str> = mb.files.iter().map(|f| f.path.as_str()).collect();
    names_a.sort_unstable();
    names_b.sort_unstable();
    if names_a != names_b {
        return Err(CliError::Schema("the runs list different output files".into()));
    }
    let (da, db) = (run_dir(a), run_dir(b));
    let mut files = Vec::new();
    for fa in &ma.files {
        let read = |dir: &Path| {
            let p = dir.join(&fa.path);
            fs::read(&p).map_err(|_| CliError::Schema(format!("{} is listed in {MANIFEST_NAME} but missing", p.display())))
        };
        let (ba, bb) = (read(&da)?, read(&db)?);
        if ba == bb {
            files.push(FileDiff {
                path: fa.path.clone(),
                identical: true,
                max_abs: 0.0,
                max_rel: 0.0,
                text_mismatches: 0,
                within_tolerance: true,
            });
            continue;
        }
        let acc = compare_file(&fa.path, &ba, &bb)?;
        let within = acc.text == 0 && (acc.max_abs <= tol.abs || acc.max_rel <= tol.rel);
        files.push(FileDiff {
            path: fa.path.clone(),
            identical: false,
            max_abs: acc.max_abs,
            max_rel: acc.max_rel,
            text_mismatches: acc.text,
            within_tolerance: within,
        });
    }
    Ok(DiffReport {
        tolerance: tol,
        same_seed: ma.seed == mb.seed,
        same_config: ma.config_sha256 == mb.config_sha256,
        files,
    })
}
