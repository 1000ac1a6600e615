//! JSON model and environment files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::model::{PatchModel, PeriodicMatrixFunction};
use crate::stochastic::{EnvironmentState, MarkovEnvironment};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    growth: GrowthFile,
    migration: MigrationFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrowthFile {
    breaks: Vec<f64>,
    diagonals: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MigrationFile {
    breaks: Vec<f64>,
    matrices: Vec<Vec<Vec<f64>>>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Schema(format!("{what} must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses a model document.
pub fn model_from_json(text: &str) -> Result<PatchModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: v,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
    }
    let file: ModelFile = serde_json::from_str(text).map_err(parse_error)?;
    let n = file.n;
    if n < 2 {
        return Err(Error::Schema("n ≥ 2 required".into()));
    }
    if file.growth.breaks.len() != file.growth.diagonals.len() {
        return Err(Error::Schema(
            "growth.breaks and growth.diagonals differ in length".into(),
        ));
    }
    if file.migration.breaks.len() != file.migration.matrices.len() {
        return Err(Error::Schema(
            "migration.breaks and migration.matrices differ in length".into(),
        ));
    }
    let mut growth = Vec::new();
    for (b, d) in file.growth.breaks.iter().zip(&file.growth.diagonals) {
        if d.len() != n {
            return Err(Error::Schema(format!("growth diagonal must have {n} entries")));
        }
        growth.push((*b, DMatrix::from_diagonal(&DVector::from_column_slice(d))));
    }
    let mut migration = Vec::new();
    for (b, rows) in file.migration.breaks.iter().zip(&file.migration.matrices) {
        migration.push((*b, matrix_from_rows(rows, n, "migration matrix")?));
    }
    let model = PatchModel::new(
        PeriodicMatrixFunction::piecewise_constant(growth)?,
        PeriodicMatrixFunction::piecewise_constant(migration)?,
    )?;
    Ok(match file.name {
        Some(name) => model.with_name(name),
        None => model,
    })
}

/// Serializes a piecewise-constant model.
pub fn model_to_json(model: &PatchModel) -> Result<String> {
    let (PeriodicMatrixFunction::PiecewiseConstant { segments: g, .. }, PeriodicMatrixFunction::PiecewiseConstant { segments: l, .. }) =
        (&model.growth, &model.migration)
    else {
        return Err(Error::Schema(
            "piecewise-smooth models cannot be serialized".into(),
        ));
    };
    let file = ModelFile {
        version: MODEL_SCHEMA_VERSION,
        name: model.name.clone(),
        n: model.n(),
        growth: GrowthFile {
            breaks: g.iter().map(|s| s.0).collect(),
            diagonals: g.iter().map(|s| s.1.diagonal().iter().copied().collect()).collect(),
        },
        migration: MigrationFile {
            breaks: l.iter().map(|s| s.0).collect(),
            matrices: l.iter().map(|s| rows_of(&s.1)).collect(),
        },
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Io(e.to_string()))
}

pub fn load(path: impl AsRef<Path>) -> Result<PatchModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn save(model: &PatchModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)? + "\n")?;
    Ok(())
}

/// A built-in name (with optional arguments) or a path to a model file.
pub fn resolve_model(spec: &str) -> Result<PatchModel> {
    let catalog = Catalog::standard();
    if catalog.contains(spec) {
        return catalog.get(spec);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::UnknownModel(spec.to_string()));
    }
    load(path)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    states: Vec<EnvStateFile>,
    #[serde(rename = "Q")]
    generator: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvStateFile {
    #[serde(rename = "R")]
    growth: Vec<f64>,
    #[serde(rename = "L")]
    migration: Vec<Vec<f64>>,
}

pub fn environment_from_json(text: &str) -> Result<MarkovEnvironment> {
    let file: EnvFile = serde_json::from_str(text).map_err(parse_error)?;
    let k = file.states.len();
    if k == 0 {
        return Err(Error::Schema("at least one state required".into()));
    }
    let n = file.states[0].growth.len();
    let mut states = Vec::with_capacity(k);
    for s in &file.states {
        if s.growth.len() != n {
            return Err(Error::WrongDimension {
                expected: n,
                found: s.growth.len(),
            });
        }
        states.push(EnvironmentState {
            growth: DVector::from_column_slice(&s.growth),
            migration: matrix_from_rows(&s.migration, n, "L")?,
        });
    }
    let q = matrix_from_rows(&file.generator, k, "Q")?;
    MarkovEnvironment::new(states, q)
}

pub fn environment_to_json(env: &MarkovEnvironment) -> Result<String> {
    let file = EnvFile {
        states: env
            .states
            .iter()
            .map(|s| EnvStateFile {
                growth: s.growth.iter().copied().collect(),
                migration: rows_of(&s.migration),
            })
            .collect(),
        generator: rows_of(&env.generator),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Io(e.to_string()))
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<MarkovEnvironment> {
    environment_from_json(&std::fs::read_to_string(path)?)
}
