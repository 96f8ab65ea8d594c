//! Dataset directory layout: `train.csv`, `test.csv` and a `dataset.json`
//! sidecar. CSV headers carry the parameter vector of each column (`;`
//! between dimensions); rows are time samples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Family, Normalization, ParamSet, StairParams, TimeGrid};
use crate::error::{Error, Result};
use crate::io::{read_matrix_csv, write_atomic, write_matrix_csv};
use crate::linalg::Matrix;

pub const DATASET_FORMAT: &str = "rrae-dataset/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    family: Family,
    grid: TimeGrid,
    stair: StairParams,
    params: ParamSet,
    norm: Normalization,
}

fn header(params: &[Vec<f64>]) -> Vec<String> {
    params
        .iter()
        .map(|p| p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";"))
        .collect()
}

fn parse_header(h: &[String]) -> Result<Vec<Vec<f64>>> {
    h.iter()
        .map(|cell| {
            cell.split(';')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad parameter `{s}`: {e}"))))
                .collect()
        })
        .collect()
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("train.csv"), &header(&ds.params.train), &ds.train)?;
    write_matrix_csv(&dir.join("test.csv"), &header(&ds.params.test), &ds.test)?;
    let side = Sidecar {
        format: DATASET_FORMAT.to_string(),
        family: ds.family,
        grid: ds.grid,
        stair: ds.stair,
        params: ds.params.clone(),
        norm: ds.norm.clone(),
    };
    write_atomic(&dir.join("dataset.json"), &serde_json::to_vec_pretty(&side)?)
}

fn check_split(name: &str, declared: &[Vec<f64>], header: &[String], m: &Matrix, rows: usize) -> Result<()> {
    let from_header = parse_header(header)?;
    if from_header.len() != declared.len() || m.cols() != declared.len() {
        return Err(Error::Format(format!(
            "{name}.csv has {} columns, sidecar lists {} parameters",
            m.cols(),
            declared.len()
        )));
    }
    if from_header != declared {
        return Err(Error::Format(format!("{name}.csv header does not match sidecar parameters")));
    }
    if m.cols() > 0 && m.rows() != rows {
        return Err(Error::Format(format!("{name}.csv has {} rows, expected {rows}", m.rows())));
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let side: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("dataset.json"))?)?;
    let found = side.get("format").and_then(|v| v.as_str()).unwrap_or("<missing>").to_string();
    if found != DATASET_FORMAT {
        return Err(Error::Version { found, expected: DATASET_FORMAT.to_string() });
    }
    let side: Sidecar = serde_json::from_value(side)?;
    let (h_train, train) = read_matrix_csv(&dir.join("train.csv"))?;
    let (h_test, test) = read_matrix_csv(&dir.join("test.csv"))?;
    let rows = side.norm.rows();
    check_split("train", &side.params.train, &h_train, &train, rows)?;
    check_split("test", &side.params.test, &h_test, &test, rows)?;
    let test = if test.cols() == 0 { Matrix::zeros(rows, 0) } else { test };
    Ok(Dataset {
        family: side.family,
        grid: side.grid,
        stair: side.stair,
        params: side.params,
        train,
        test,
        norm: side.norm,
    })
}
