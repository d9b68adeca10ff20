//! JSON input/report formats and CSV curve/trace writers.
//!
//! Matrices are stored row-major as nested arrays with explicit dimensions.
//! Writers emit pretty-printed JSON with a trailing newline; since every
//! field is serialized in declaration order and floats use shortest
//! round-trip formatting, write -> read -> write is byte-identical.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compensator::{BankSide, BankTemplate, CompensatorBank, LoopShapeConstraints};
use crate::eigassign::EigTarget;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::linalg::Mat;
use crate::lti::{FrequencyGrid, PlantSet, StateSpacePlant};
use crate::synthesis::SynthesisOptions;
use crate::vgap::PoleCounting;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

impl MatrixRecord {
    pub fn from_mat(m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_mat(&self, name: &str) -> Result<Mat> {
        check_rows(name, &self.data, self.rows, self.cols)
    }
}

fn check_rows(name: &str, data: &[Vec<f64>], rows: usize, cols: usize) -> Result<Mat> {
    if data.len() != rows {
        return Err(Error::Parse(format!(
            "{name}: {} rows, expected {rows}",
            data.len()
        )));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Parse(format!(
                "{name}: row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse(format!(
                "{name}: row {i} entry {j} is not finite"
            )));
        }
    }
    Ok(Mat::from_fn(rows, cols, |i, j| data[i][j]))
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
    /// Free-form operating-point metadata, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<serde_json::Value>,
}

impl PlantRecord {
    pub fn from_plant(p: &StateSpacePlant) -> Self {
        Self {
            label: p.label.clone(),
            n: p.states(),
            m: p.inputs(),
            r: p.outputs(),
            a: to_rows(&p.a),
            b: to_rows(&p.b),
            c: to_rows(&p.c),
            d: p.d.iter().any(|&x| x != 0.0).then(|| to_rows(&p.d)),
            trim: None,
        }
    }

    pub fn to_plant(&self) -> Result<StateSpacePlant> {
        let l = &self.label;
        let a = check_rows(&format!("plant '{l}' A"), &self.a, self.n, self.n)?;
        let b = check_rows(&format!("plant '{l}' B"), &self.b, self.n, self.m)?;
        let c = check_rows(&format!("plant '{l}' C"), &self.c, self.r, self.n)?;
        let d = match &self.d {
            Some(d) => check_rows(&format!("plant '{l}' D"), d, self.r, self.m)?,
            None => Mat::zeros(self.r, self.m),
        };
        Ok(StateSpacePlant::new(a, b, c, d)?.with_label(l.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSetFile {
    pub schema_version: u32,
    pub plants: Vec<PlantRecord>,
}

impl PlantSetFile {
    pub fn from_set(set: &PlantSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            plants: set.plants().iter().map(PlantRecord::from_plant).collect(),
        }
    }

    pub fn to_set(&self) -> Result<PlantSet> {
        check_schema(self.schema_version)?;
        PlantSet::new(
            self.plants
                .iter()
                .map(PlantRecord::to_plant)
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported schema version {v}")));
    }
    Ok(())
}

/// Static gain plus the two compensator banks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerFile {
    pub schema_version: u32,
    pub gain: MatrixRecord,
    pub w_in: CompensatorBank,
    pub w_out: CompensatorBank,
}

impl ControllerFile {
    pub fn new(gain: &Mat, w_in: CompensatorBank, w_out: CompensatorBank) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            gain: MatrixRecord::from_mat(gain),
            w_in,
            w_out,
        }
    }

    /// Gain and banks checked against the plant dimensions.
    pub fn parts(
        &self,
        inputs: usize,
        outputs: usize,
    ) -> Result<(Mat, CompensatorBank, CompensatorBank)> {
        check_schema(self.schema_version)?;
        let k = self.gain.to_mat("gain")?;
        if k.shape() != (inputs, outputs) {
            return Err(Error::DimensionMismatch(format!(
                "gain is {}x{}, plants need {inputs}x{outputs}",
                k.nrows(),
                k.ncols()
            )));
        }
        if self.w_in.len() != inputs || self.w_in.side() != BankSide::Input {
            return Err(Error::DimensionMismatch(format!(
                "w_in must be an input bank with {inputs} sections"
            )));
        }
        if self.w_out.len() != outputs || self.w_out.side() != BankSide::Output {
            return Err(Error::DimensionMismatch(format!(
                "w_out must be an output bank with {outputs} sections"
            )));
        }
        Ok((k, self.w_in.clone(), self.w_out.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub refine_depth: usize,
    pub rel_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 1e5,
            points: 400,
            refine_depth: 40,
            rel_tol: 1e-4,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        Ok(FrequencyGrid::logspace(self.lo, self.hi, self.points)?
            .with_refinement(self.refine_depth, self.rel_tol))
    }
}

/// Everything a command may need besides the plant set. Only `grid` is
/// used by every command; synthesis additionally needs the templates,
/// target and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub pole_counting: PoleCounting,
    #[serde(default)]
    pub constraints: LoopShapeConstraints,
    #[serde(default)]
    pub input_bank: Option<BankTemplate>,
    #[serde(default)]
    pub output_bank: Option<BankTemplate>,
    #[serde(default)]
    pub target: Option<EigTarget>,
    #[serde(default)]
    pub outer: GaConfig,
    #[serde(default)]
    pub inner: GaConfig,
    #[serde(default)]
    pub options: SynthesisOptions,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

/// CSV with one header row; non-finite values are written as `inf`,
/// `-inf` or `nan`.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::Section;

    #[test]
    fn plant_set_round_trip_is_byte_identical() {
        let p = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 2.5e-7, -4.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap()
        .with_label("p1");
        let set = PlantSet::new(vec![p]).unwrap();
        let first = to_canonical_json(&PlantSetFile::from_set(&set)).unwrap();
        let back: PlantSetFile = serde_json::from_str(&first).unwrap();
        let second = to_canonical_json(&PlantSetFile::from_set(&back.to_set().unwrap())).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn malformed_row_is_named() {
        let text = r#"{"schema_version":1,"plants":[{"label":"bad","n":2,"m":1,"r":1,
            "a":[[0,1],[0]],"b":[[0],[1]],"c":[[1,0]]}]}"#;
        let f: PlantSetFile = serde_json::from_str(text).unwrap();
        let err = f.to_set().unwrap_err().to_string();
        assert!(err.contains("'bad' A") && err.contains("row 1"), "{err}");
    }

    #[test]
    fn controller_dimension_checks() {
        let c = ControllerFile::new(
            &Mat::zeros(1, 2),
            CompensatorBank::identity(BankSide::Input, 1),
            CompensatorBank::new(BankSide::Output, vec![Section::Static { gain: 1.0 }; 2]).unwrap(),
        );
        assert!(c.parts(1, 2).is_ok());
        assert!(matches!(c.parts(2, 1), Err(Error::DimensionMismatch(_))));
    }
}
