//! JSON documents for systems, schedules and results. Matrices are written
//! as arrays of rows.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input_design::InputSchedule;
use crate::system::SystemModel;

/// `DMatrix` as a list of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows, None).map_err(serde::de::Error::custom)
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Builds a matrix from rows. `cols` fixes the width of an empty matrix.
pub fn from_rows(
    rows: &[Vec<f64>],
    cols: Option<usize>,
) -> std::result::Result<DMatrix<f64>, String> {
    let width = rows.first().map(Vec::len).or(cols).unwrap_or(0);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(format!("row {i} has {} entries, expected {width}", r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn matrix(name: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let m = from_rows(rows, Some(shape.1)).map_err(|e| Error::Config(format!("{name}: {e}")))?;
    if m.shape() != shape {
        return Err(Error::Config(format!(
            "{name} must be {}x{}, got {}x{}",
            shape.0,
            shape.1,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

/// Serialized [`SystemModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "SigmaA")]
    pub sigma_a: Vec<Vec<f64>>,
    #[serde(rename = "SigmaB")]
    pub sigma_b: Vec<Vec<f64>>,
}

impl SystemDoc {
    pub fn from_model(model: &SystemModel) -> Self {
        SystemDoc {
            n: model.n(),
            m: model.m(),
            a: to_rows(model.a()),
            b: to_rows(model.b()),
            sigma_a: to_rows(model.sigma_a()),
            sigma_b: to_rows(model.sigma_b()),
        }
    }

    pub fn to_model(&self) -> Result<SystemModel> {
        let (n, m) = (self.n, self.m);
        SystemModel::new(
            matrix("A", &self.a, (n, n))?,
            matrix("B", &self.b, (n, m))?,
            matrix("SigmaA", &self.sigma_a, (n * n, n * n))?,
            matrix("SigmaB", &self.sigma_b, (n * m, n * m))?,
        )
    }
}

/// Serialized [`InputSchedule`]: means `nu[t]` and covariances `ubar[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDoc {
    #[serde(default)]
    pub seed: u64,
    pub nu: Vec<Vec<f64>>,
    pub ubar: Vec<Vec<Vec<f64>>>,
}

impl ScheduleDoc {
    pub fn from_schedule(s: &InputSchedule) -> Self {
        ScheduleDoc {
            seed: s.seed(),
            nu: s
                .nus()
                .iter()
                .map(|v| v.iter().cloned().collect())
                .collect(),
            ubar: s.ubars().iter().map(to_rows).collect(),
        }
    }

    pub fn to_schedule(&self) -> Result<InputSchedule> {
        let m = self.nu.first().map_or(0, Vec::len);
        let nus = self
            .nu
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect();
        let ubars = self
            .ubar
            .iter()
            .enumerate()
            .map(|(t, u)| matrix(&format!("ubar[{t}]"), u, (m, m)))
            .collect::<Result<Vec<_>>>()?;
        InputSchedule::from_parts(nus, ubars, self.seed)
    }
}

/// Parses a JSON document, naming the file in errors.
pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Parse {
        path: origin.to_string(),
        source,
    })
}

/// Reads and parses an input document. An unreadable file is a
/// configuration error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    from_json_str(&text, &path.display().to_string())
}

pub fn load_system(path: &Path) -> Result<SystemModel> {
    read_json::<SystemDoc>(path)?.to_model()
}

pub fn save_system(model: &SystemModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&SystemDoc::from_model(model))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_schedule(path: &Path) -> Result<InputSchedule> {
    read_json::<ScheduleDoc>(path)?.to_schedule()
}

pub fn save_schedule(schedule: &InputSchedule, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ScheduleDoc::from_schedule(schedule))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
