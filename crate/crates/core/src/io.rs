//! File formats.
//!
//! Matrices: a text form (`rows cols modulus` header, then one row of
//! residues per line) and a binary form (`FLEXMAT1` magic, little-endian
//! `u64` rows, cols, modulus, then row-major `u64` residues). Readers detect
//! the form from the first bytes.
//!
//! Plans, shares, task results and reports are pretty-printed JSON documents
//! carrying a `schema` field. A plan stores only its defining parameters and
//! is rebuilt (and thereby re-validated) on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::construct::{build_plan, RecoveryProfile, SchemePlan, ServerShare, TaskResult};
use crate::epcode::PartitionParams;
use crate::error::{Error, Result};
use crate::gf::{FieldMatrix, PrimeField};

pub const BINARY_MAGIC: &[u8; 8] = b"FLEXMAT1";
pub const PLAN_SCHEMA: &str = "flexmm.plan/v1";
pub const SHARE_SCHEMA: &str = "flexmm.share/v1";
pub const RESULTS_SCHEMA: &str = "flexmm.results/v1";
pub const REPORT_SCHEMA: &str = "flexmm.report/v1";

pub fn matrix_to_text(m: &FieldMatrix) -> String {
    let mut out = format!("{} {} {}\n", m.rows(), m.cols(), m.field().modulus());
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| m.get(r, c).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_to_binary(m: &FieldMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * m.as_slice().len());
    out.extend_from_slice(BINARY_MAGIC);
    for v in [m.rows() as u64, m.cols() as u64, m.field().modulus()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_text(text: &str) -> Result<FieldMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty matrix file".into()))?;
    let head: Vec<u64> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Format(format!("bad header token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let [rows, cols, modulus] = head[..] else {
        return Err(Error::Format(format!(
            "header must be `rows cols modulus`, got {header:?}"
        )));
    };
    let (rows, cols) = (rows as usize, cols as usize);
    let field = PrimeField::new(modulus)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for t in line.split_whitespace() {
            let v: u64 = t
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad entry {t:?}", i + 1)))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!(
                "row {} has {} entries, expected {cols}",
                i + 1,
                data.len() - before
            )));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::Format(format!(
            "found {seen_rows} rows, expected {rows}"
        )));
    }
    checked_matrix(field, rows, cols, data)
}

fn parse_binary(bytes: &[u8]) -> Result<FieldMatrix> {
    let word = |i: usize| -> Result<u64> {
        bytes
            .get(8 + 8 * i..16 + 8 * i)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| Error::Format("truncated binary matrix".into()))
    };
    let (rows, cols) = (word(0)? as usize, word(1)? as usize);
    let field = PrimeField::new(word(2)?)?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    if bytes.len() != 32 + 8 * count {
        return Err(Error::Format(format!(
            "binary matrix has {} bytes, expected {}",
            bytes.len(),
            32 + 8 * count
        )));
    }
    let data = (0..count)
        .map(|i| word(3 + i))
        .collect::<Result<Vec<_>>>()?;
    checked_matrix(field, rows, cols, data)
}

fn checked_matrix(
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
) -> Result<FieldMatrix> {
    if let Some(&v) = data.iter().find(|&&v| v >= field.modulus()) {
        return Err(Error::Format(format!(
            "entry {v} is not a residue modulo {}",
            field.modulus()
        )));
    }
    FieldMatrix::new(field, rows, cols, data)
}

/// Parses either matrix form.
pub fn matrix_from_bytes(bytes: &[u8]) -> Result<FieldMatrix> {
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("matrix file is neither text nor binary".into()))?;
        parse_text(text)
    }
}

pub fn read_matrix(path: &Path) -> Result<FieldMatrix> {
    matrix_from_bytes(&fs::read(path)?)
}

pub fn write_matrix(path: &Path, m: &FieldMatrix, binary: bool) -> Result<()> {
    let bytes = if binary {
        matrix_to_binary(m)
    } else {
        matrix_to_text(m).into_bytes()
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Defining parameters of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema: String,
    pub n_servers: usize,
    pub profile: RecoveryProfile,
    pub partitions: Vec<PartitionParams>,
    /// `[rows of A, shared dimension, cols of B]`.
    pub dims: [usize; 3],
    pub modulus: u64,
}

impl From<&SchemePlan> for PlanDocument {
    fn from(plan: &SchemePlan) -> Self {
        Self {
            schema: PLAN_SCHEMA.into(),
            n_servers: plan.n_servers,
            profile: plan.profile.clone(),
            partitions: plan.layers.iter().map(|l| l.partition).collect(),
            dims: [plan.dims.0, plan.dims.1, plan.dims.2],
            modulus: plan.field.modulus(),
        }
    }
}

impl PlanDocument {
    pub fn build(&self) -> Result<SchemePlan> {
        check_schema(&self.schema, PLAN_SCHEMA)?;
        build_plan(
            self.n_servers,
            self.profile.clone(),
            &self.partitions,
            (self.dims[0], self.dims[1], self.dims[2]),
            PrimeField::new(self.modulus)?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareDocument {
    pub schema: String,
    pub share: ServerShare,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema: String,
    pub results: Vec<TaskResult>,
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "expected a {expected} document, found schema {found:?}"
        )));
    }
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_json(value)?.as_bytes())?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn plan_to_json(plan: &SchemePlan) -> Result<String> {
    to_json(&PlanDocument::from(plan))
}

pub fn plan_from_json(text: &str) -> Result<SchemePlan> {
    serde_json::from_str::<PlanDocument>(text)?.build()
}

pub fn write_plan(path: &Path, plan: &SchemePlan) -> Result<()> {
    write_json(path, &PlanDocument::from(plan))
}

pub fn read_plan(path: &Path) -> Result<SchemePlan> {
    read_json::<PlanDocument>(path)?.build()
}

pub fn write_share(path: &Path, share: &ServerShare) -> Result<()> {
    write_json(
        path,
        &ShareDocument {
            schema: SHARE_SCHEMA.into(),
            share: share.clone(),
        },
    )
}

pub fn read_share(path: &Path) -> Result<ServerShare> {
    let doc: ShareDocument = read_json(path)?;
    check_schema(&doc.schema, SHARE_SCHEMA)?;
    Ok(doc.share)
}

pub fn write_results(path: &Path, results: &[TaskResult]) -> Result<()> {
    write_json(
        path,
        &ResultsDocument {
            schema: RESULTS_SCHEMA.into(),
            results: results.to_vec(),
        },
    )
}

pub fn read_results(path: &Path) -> Result<Vec<TaskResult>> {
    let doc: ResultsDocument = read_json(path)?;
    check_schema(&doc.schema, RESULTS_SCHEMA)?;
    Ok(doc.results)
}

/// Wraps any report in a versioned document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument<T> {
    pub schema: String,
    pub report: T,
}

pub fn write_report<T: Serialize + Clone>(path: &Path, report: &T) -> Result<()> {
    write_json(
        path,
        &ReportDocument {
            schema: REPORT_SCHEMA.into(),
            report: report.clone(),
        },
    )
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let doc: ReportDocument<T> = read_json(path)?;
    check_schema(&doc.schema, REPORT_SCHEMA)?;
    Ok(doc.report)
}
