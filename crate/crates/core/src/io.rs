//! On-disk formats.
//!
//! Weight files are a 14-byte little-endian header followed by a row-major
//! payload:
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `MACP`                       |
//! | 4      | 1    | version, currently 1               |
//! | 5      | 1    | dtype: 0 = f32, 1 = f64            |
//! | 6      | 4    | rows (u32)                         |
//! | 10     | 4    | cols (u32)                         |
//! | 14     | ...  | rows × cols elements               |
//!
//! Adapter checkpoints are pretty-printed JSON with a fixed key order and
//! shortest round-trip float formatting, so re-serialising a parsed
//! checkpoint reproduces it byte for byte. Run logs are plain CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::adapter::AdapterState;
use crate::error::IoError;
use crate::matrix::DenseMatrix;
use crate::partition::PartitionScheme;
use crate::selection::{Provenance, SelectionPlan, SelectionStrategy};
use crate::trainer::{EpochLog, Method, RunRecord, RunStatus};

type Result<T> = std::result::Result<T, IoError>;

pub const MAGIC: [u8; 4] = *b"MACP";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

/// Element type of a weight file payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn element_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(IoError::UnknownDtype(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightFileHeader {
    pub version: u8,
    pub dtype: Dtype,
    pub rows: u32,
    pub cols: u32,
}

impl WeightFileHeader {
    pub fn payload_len(&self) -> Result<usize> {
        (self.rows as usize)
            .checked_mul(self.cols as usize)
            .and_then(|n| n.checked_mul(self.dtype.element_size()))
            .ok_or(IoError::DimensionOverflow {
                rows: self.rows as u64,
                cols: self.cols as u64,
            })
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4] = self.version;
        out[5] = self.dtype as u8;
        out[6..10].copy_from_slice(&self.rows.to_le_bytes());
        out[10..14].copy_from_slice(&self.cols.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(IoError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let found: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if found != MAGIC {
            return Err(IoError::BadMagic { found });
        }
        if bytes.len() < HEADER_LEN {
            return Err(IoError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(IoError::UnsupportedVersion(bytes[4]));
        }
        let dtype = Dtype::from_tag(bytes[5])?;
        let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("fixed slice"));
        let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("fixed slice"));
        Ok(Self {
            version: bytes[4],
            dtype,
            rows,
            cols,
        })
    }
}

pub fn encode_matrix(matrix: &DenseMatrix, dtype: Dtype) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.shape();
    let overflow = || IoError::DimensionOverflow {
        rows: rows as u64,
        cols: cols as u64,
    };
    let header = WeightFileHeader {
        version: FORMAT_VERSION,
        dtype,
        rows: u32::try_from(rows).map_err(|_| overflow())?,
        cols: u32::try_from(cols).map_err(|_| overflow())?,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len()?);
    out.extend_from_slice(&header.encode());
    match dtype {
        Dtype::F64 => {
            for v in matrix.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::F32 => {
            for (index, &v) in matrix.as_slice().iter().enumerate() {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(crate::error::MacpError::NonFinite { index, value: v }.into());
                }
                out.extend_from_slice(&narrow.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(DenseMatrix, Dtype)> {
    let header = WeightFileHeader::decode(bytes)?;
    let expected = HEADER_LEN
        .checked_add(header.payload_len()?)
        .ok_or(IoError::DimensionOverflow {
            rows: header.rows as u64,
            cols: header.cols as u64,
        })?;
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match header.dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
    };
    let matrix = DenseMatrix::new(header.rows as usize, header.cols as usize, values)?;
    Ok((matrix, header.dtype))
}

pub fn write_matrix(path: impl AsRef<Path>, matrix: &DenseMatrix, dtype: Dtype) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(matrix, dtype)?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_matrix_with_dtype(path).map(|(m, _)| m)
}

pub fn read_matrix_with_dtype(path: impl AsRef<Path>) -> Result<(DenseMatrix, Dtype)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_matrix(&bytes)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct CheckpointDoc<'a> {
    shape: [usize; 2],
    alpha: f64,
    delta: f64,
    seed: u64,
    scheme: &'static str,
    coords: Vec<[usize; 2]>,
    provenance: Vec<&'static str>,
    coeffs: &'a [f64],
}

/// Canonical text form of an adapter.
pub fn encode_checkpoint(state: &AdapterState) -> Result<String> {
    if let Some(index) = state.coeffs().iter().position(|c| !c.is_finite()) {
        return Err(IoError::NonFiniteCoefficient { index });
    }
    let plan = state.plan();
    let doc = CheckpointDoc {
        shape: [plan.rows(), plan.cols()],
        alpha: state.alpha(),
        delta: plan.delta(),
        seed: plan.seed(),
        scheme: plan.strategy().name(),
        coords: plan.coords().map(|(u, v)| [u, v]).collect(),
        provenance: plan.entries().iter().map(|e| e.provenance.name()).collect(),
        coeffs: state.coeffs(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

fn field<'a>(doc: &'a serde_json::Map<String, Value>, key: &'static str) -> Result<&'a Value> {
    doc.get(key).ok_or(IoError::MissingKey(key))
}

fn malformed(key: &'static str, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        key,
        reason: reason.into(),
    }
}

fn as_f64(doc: &serde_json::Map<String, Value>, key: &'static str) -> Result<f64> {
    field(doc, key)?
        .as_f64()
        .ok_or_else(|| malformed(key, "expected a number"))
}

fn as_array<'a>(doc: &'a serde_json::Map<String, Value>, key: &'static str) -> Result<&'a Vec<Value>> {
    field(doc, key)?
        .as_array()
        .ok_or_else(|| malformed(key, "expected a list"))
}

fn as_index(value: &Value, key: &'static str) -> Result<usize> {
    value
        .as_u64()
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| malformed(key, format!("expected a non-negative integer, got {value}")))
}

pub fn decode_checkpoint(text: &str) -> Result<AdapterState> {
    let root: Value = serde_json::from_str(text)?;
    let doc = root
        .as_object()
        .ok_or_else(|| malformed("<root>", "expected an object"))?;

    let shape = as_array(doc, "shape")?;
    if shape.len() != 2 {
        return Err(malformed("shape", "expected [rows, cols]"));
    }
    let rows = as_index(&shape[0], "shape")?;
    let cols = as_index(&shape[1], "shape")?;
    let alpha = as_f64(doc, "alpha")?;
    let delta = as_f64(doc, "delta")?;
    let seed = field(doc, "seed")?
        .as_u64()
        .ok_or_else(|| malformed("seed", "expected an unsigned 64-bit integer"))?;
    let strategy: SelectionStrategy = field(doc, "scheme")?
        .as_str()
        .ok_or_else(|| malformed("scheme", "expected a string"))?
        .parse()
        .map_err(|e: crate::error::MacpError| malformed("scheme", e.to_string()))?;

    let coords_raw = as_array(doc, "coords")?;
    let provenance_raw = as_array(doc, "provenance")?;
    let coeffs_raw = as_array(doc, "coeffs")?;
    if coords_raw.len() != provenance_raw.len() || coords_raw.len() != coeffs_raw.len() {
        return Err(IoError::ListLengthMismatch {
            coords: coords_raw.len(),
            provenance: provenance_raw.len(),
            coeffs: coeffs_raw.len(),
        });
    }

    let coords = coords_raw
        .iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([u, v]) => Ok((as_index(u, "coords")?, as_index(v, "coords")?)),
            _ => Err(malformed("coords", format!("expected [u, v], got {c}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = provenance_raw
        .iter()
        .map(|p| {
            p.as_str()
                .ok_or_else(|| malformed("provenance", "expected a string"))?
                .parse::<Provenance>()
                .map_err(|e| malformed("provenance", e))
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = coeffs_raw
        .iter()
        .enumerate()
        .map(|(index, c)| match c.as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(IoError::NonFiniteCoefficient { index }),
        })
        .collect::<Result<Vec<_>>>()?;

    let plan = SelectionPlan::from_parts(rows, cols, &coords, &provenance, delta, seed, strategy)?;
    Ok(AdapterState::new(plan, coeffs, alpha)?)
}

pub fn write_checkpoint(path: impl AsRef<Path>, state: &AdapterState) -> Result<()> {
    write_atomic(path.as_ref(), encode_checkpoint(state)?.as_bytes())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<AdapterState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    decode_checkpoint(&text)
}

pub const RUNS_HEADER: [&str; 5] = ["seed", "method", "epoch", "loss", "train_acc"];
pub const ABLATION_HEADER: [&str; 3] = ["scheme", "seed", "final_acc"];

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

/// `seed,method,epoch,loss,train_acc`, one line per logged epoch.
pub fn encode_runs_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(RUNS_HEADER)?;
        for r in records {
            for e in &r.epochs {
                w.write_record([
                    r.seed.to_string(),
                    r.method.name().to_string(),
                    e.epoch.to_string(),
                    e.loss.to_string(),
                    e.train_acc.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| IoError::io("<csv buffer>", e))?;
    }
    Ok(buf)
}

/// Regroups CSV rows into run records. The trainable count is not part of
/// the CSV and comes back as 0; runs are marked completed.
pub fn decode_runs_csv(bytes: &[u8]) -> Result<Vec<RunRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    check_header(reader.headers()?, &RUNS_HEADER)?;
    let mut records: Vec<RunRecord> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let seed: u64 = parse_cell(&row, 0, "seed")?;
        let method: Method = row[1]
            .parse()
            .map_err(|e: crate::error::MacpError| malformed("method", e.to_string()))?;
        let epoch: usize = parse_cell(&row, 2, "epoch")?;
        let loss: f64 = parse_cell(&row, 3, "loss")?;
        let train_acc: f64 = parse_cell(&row, 4, "train_acc")?;
        let same_run = records.last().is_some_and(|r| r.seed == seed && r.method == method);
        if !same_run {
            records.push(RunRecord {
                method,
                seed,
                trainable: 0,
                epochs: Vec::new(),
                status: RunStatus::Completed,
            });
        }
        let run = records.last_mut().expect("pushed above");
        let best_acc = run.epochs.last().map_or(train_acc, |e| e.best_acc.max(train_acc));
        run.epochs.push(EpochLog {
            epoch,
            loss,
            train_acc,
            best_acc,
        });
    }
    Ok(records)
}

/// One `ablation.csv` line. An empty `final_acc` marks a scheme that could
/// not be trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationEntry {
    pub scheme: PartitionScheme,
    pub seed: u64,
    pub final_acc: Option<f64>,
}

pub fn encode_ablation_csv(entries: &[AblationEntry]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(ABLATION_HEADER)?;
        for e in entries {
            w.write_record([
                e.scheme.name().to_string(),
                e.seed.to_string(),
                e.final_acc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| IoError::io("<csv buffer>", e))?;
    }
    Ok(buf)
}

pub fn decode_ablation_csv(bytes: &[u8]) -> Result<Vec<AblationEntry>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    check_header(reader.headers()?, &ABLATION_HEADER)?;
    reader
        .records()
        .map(|row| {
            let row = row?;
            let scheme = row[0]
                .parse()
                .map_err(|e: crate::error::MacpError| malformed("scheme", e.to_string()))?;
            let seed = parse_cell(&row, 1, "seed")?;
            let final_acc = if row[2].is_empty() {
                None
            } else {
                Some(parse_cell(&row, 2, "final_acc")?)
            };
            Ok(AblationEntry {
                scheme,
                seed,
                final_acc,
            })
        })
        .collect()
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(malformed(
            "<header>",
            format!(
                "expected `{}`, got `{}`",
                expected.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize, key: &'static str) -> Result<T> {
    row.get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(key, format!("cannot parse `{}`", row.get(idx).unwrap_or(""))))
}

pub fn write_runs_csv(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_runs_csv(records)?)
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    decode_runs_csv(&fs::read(path).map_err(|e| IoError::io(path, e))?)
}

pub fn write_ablation_csv(path: impl AsRef<Path>, entries: &[AblationEntry]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_ablation_csv(entries)?)
}

pub fn read_ablation_csv(path: impl AsRef<Path>) -> Result<Vec<AblationEntry>> {
    let path = path.as_ref();
    decode_ablation_csv(&fs::read(path).map_err(|e| IoError::io(path, e))?)
}
