//! Model files and CSV sequences.
//!
//! A model file is one compact UTF-8 JSON document followed by a newline.
//! Keys appear in this fixed order:
//!
//! ```text
//! format, config, sign, w_rec{row_offsets, col_indices},
//! w_in{row_offsets, col_indices, values}, w_out, lambda, feature_mode,
//! [cache{features, targets, boundaries}], checksum
//! ```
//!
//! `format` is `"LSM1"` for a plain model and `"LSMC1"` when the state cache
//! is embedded. An untrained reservoir stores `null` for `w_out`, `lambda`
//! and `feature_mode`. `checksum` is the CRC-32 (IEEE) of the whole file
//! with the checksum value written as `"00000000"`, in lowercase hex.
//! Numbers use the shortest decimal form that round-trips exactly.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{Reservoir, ReservoirConfig};
use crate::error::{LsmError, Result};
use crate::matrix::Matrix;
use crate::pipeline::LsmModel;
use crate::readout::{FeatureMode, ReadoutModel, StateCache};
use crate::sparse::{SparseBinaryMatrix, SparseRealMatrix};

pub const FORMAT_MODEL: &str = "LSM1";
pub const FORMAT_MODEL_WITH_CACHE: &str = "LSMC1";

const CHECKSUM_PLACEHOLDER: &str = "00000000";
const CHECKSUM_KEY: &str = ",\"checksum\":\"";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryDoc {
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealDoc {
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheDoc {
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    boundaries: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    config: ReservoirConfig,
    sign: Vec<i8>,
    w_rec: BinaryDoc,
    w_in: RealDoc,
    w_out: Option<Vec<Vec<f64>>>,
    lambda: Option<f64>,
    feature_mode: Option<FeatureMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cache: Option<CacheDoc>,
    checksum: String,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| LsmError::Dimension(format!("{what}: {e}")))
}

/// Serializes `model` into its file bytes.
pub fn to_bytes(model: &LsmModel) -> Result<Vec<u8>> {
    let res = model.reservoir();
    let readout = model.readout();
    let cache = model.cache().map(|c| CacheDoc {
        features: matrix_rows(c.features()),
        targets: matrix_rows(c.targets()),
        boundaries: c.boundaries().to_vec(),
    });
    let doc = ModelDoc {
        format: if cache.is_some() {
            FORMAT_MODEL_WITH_CACHE
        } else {
            FORMAT_MODEL
        }
        .to_string(),
        config: res.config().clone(),
        sign: res.sign().to_vec(),
        w_rec: BinaryDoc {
            row_offsets: res.recurrent().row_offsets().to_vec(),
            col_indices: res.recurrent().col_indices().to_vec(),
        },
        w_in: RealDoc {
            row_offsets: res.input().row_offsets().to_vec(),
            col_indices: res.input().col_indices().to_vec(),
            values: res.input().values().to_vec(),
        },
        w_out: readout.map(|r| matrix_rows(r.weights())),
        lambda: readout.map(ReadoutModel::lambda),
        feature_mode: readout.map(|r| *r.feature_mode()),
        cache,
        checksum: CHECKSUM_PLACEHOLDER.to_string(),
    };
    let mut bytes = serde_json::to_vec(&doc).map_err(|e| LsmError::Corrupt(e.to_string()))?;
    bytes.push(b'\n');
    let crc = crc32fast::hash(&bytes);
    let at = checksum_offset(&bytes).expect("serializer emits checksum last");
    bytes[at..at + 8].copy_from_slice(format!("{crc:08x}").as_bytes());
    Ok(bytes)
}

/// Byte offset of the eight checksum hex digits, if the document ends in
/// the expected `,"checksum":"xxxxxxxx"}` tail.
fn checksum_offset(bytes: &[u8]) -> Option<usize> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let tail_len = CHECKSUM_KEY.len() + 8 + 2;
    if body.len() < tail_len {
        return None;
    }
    let tail = &body[body.len() - tail_len..];
    if !tail.starts_with(CHECKSUM_KEY.as_bytes()) || !tail.ends_with(b"\"}") {
        return None;
    }
    Some(body.len() - 10)
}

/// Parses model file bytes, checking version, checksum and dimensions in
/// that order.
pub fn from_bytes(bytes: &[u8]) -> Result<LsmModel> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| LsmError::Corrupt(format!("not a complete model document ({e})")))?;
    let format = value
        .get("format")
        .and_then(Value::as_str)
        .ok_or_else(|| LsmError::Corrupt("missing format tag".into()))?;
    if format != FORMAT_MODEL && format != FORMAT_MODEL_WITH_CACHE {
        return Err(LsmError::UnsupportedVersion(format.to_string()));
    }

    let at = checksum_offset(bytes)
        .ok_or_else(|| LsmError::Corrupt("checksum field missing or misplaced".into()))?;
    let stored = std::str::from_utf8(&bytes[at..at + 8])
        .ok()
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| LsmError::Corrupt("checksum is not 8 hex digits".into()))?;
    let mut zeroed = bytes.to_vec();
    zeroed[at..at + 8].copy_from_slice(CHECKSUM_PLACEHOLDER.as_bytes());
    let computed = crc32fast::hash(&zeroed);
    if stored != computed {
        return Err(LsmError::Checksum { stored, computed });
    }

    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| LsmError::Corrupt(e.to_string()))?;
    if (doc.format == FORMAT_MODEL_WITH_CACHE) != doc.cache.is_some() {
        return Err(LsmError::Corrupt(format!(
            "format {} does not match presence of the state cache",
            doc.format
        )));
    }
    model_from_doc(doc)
}

fn model_from_doc(doc: ModelDoc) -> Result<LsmModel> {
    let n = doc.config.n_neurons;
    let m = doc.config.n_inputs;
    let w_rec = SparseBinaryMatrix::new(n, n, doc.w_rec.row_offsets, doc.w_rec.col_indices)?;
    let w_in = SparseRealMatrix::new(
        n,
        m,
        doc.w_in.row_offsets,
        doc.w_in.col_indices,
        doc.w_in.values,
    )?;
    let reservoir = Reservoir::from_parts(doc.config, w_rec, w_in, doc.sign).map_err(|e| match e {
        LsmError::Config { .. } => LsmError::Dimension(e.to_string()),
        other => other,
    })?;

    let readout = match (doc.w_out, doc.lambda, doc.feature_mode) {
        (None, None, None) => None,
        (Some(w), Some(lambda), Some(mode)) => Some(
            ReadoutModel::from_parts(rows_matrix(&w, "w_out")?, lambda, mode)
                .map_err(|e| LsmError::Dimension(e.to_string()))?,
        ),
        _ => {
            return Err(LsmError::Corrupt(
                "w_out, lambda and feature_mode must be all present or all null".into(),
            ))
        }
    };
    let cache = match doc.cache {
        None => None,
        Some(c) => {
            let mode = readout
                .as_ref()
                .map(|r| *r.feature_mode())
                .ok_or_else(|| LsmError::Corrupt("state cache without a readout".into()))?;
            let features = rows_matrix(&c.features, "cache features")?;
            let targets = rows_matrix(&c.targets, "cache targets")?;
            Some(StateCache::new(features, targets, c.boundaries, mode)?)
        }
    };
    LsmModel::from_parts(reservoir, readout, cache)
}

pub fn save_model<W: Write>(model: &LsmModel, mut dst: W) -> Result<()> {
    dst.write_all(&to_bytes(model)?)?;
    dst.flush()?;
    Ok(())
}

pub fn load_model<R: Read>(mut src: R) -> Result<LsmModel> {
    let mut bytes = Vec::new();
    src.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn save_model_file(model: &LsmModel, path: impl AsRef<Path>) -> Result<()> {
    save_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<LsmModel> {
    load_model(File::open(path)?)
}

/// Reads a reservoir configuration (the `config` section of a model file).
pub fn load_config(path: impl AsRef<Path>) -> Result<ReservoirConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: ReservoirConfig =
        serde_json::from_str(&text).map_err(|e| LsmError::Corrupt(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn config_to_json(config: &ReservoirConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Reads a headerless, comma-separated numeric matrix; row `t` is time
/// step `t`.
pub fn import_csv<R: Read>(src: R) -> Result<Matrix> {
    let reader = BufReader::new(src);
    let mut rows = Matrix::zeros(0, 0);
    let mut fields = Vec::new();
    let mut blank_at: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => LsmError::Csv {
                line: line_no,
                message: "invalid UTF-8".into(),
            },
            _ => LsmError::Io(e),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            blank_at.get_or_insert(line_no);
            continue;
        }
        if let Some(b) = blank_at {
            return Err(LsmError::Csv {
                line: b,
                message: "empty line".into(),
            });
        }
        fields.clear();
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| LsmError::Csv {
                line: line_no,
                message: format!("field {} ({field:?}) is not a number", c + 1),
            })?;
            if !v.is_finite() {
                return Err(LsmError::Csv {
                    line: line_no,
                    message: format!("field {} is not finite", c + 1),
                });
            }
            fields.push(v);
        }
        if rows.rows() > 0 && fields.len() != rows.cols() {
            return Err(LsmError::Csv {
                line: line_no,
                message: format!("expected {} fields, found {}", rows.cols(), fields.len()),
            });
        }
        rows.push_row(&fields)?;
    }
    if rows.rows() == 0 {
        return Err(LsmError::Csv {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn export_csv<W: Write>(matrix: &Matrix, dst: W) -> Result<()> {
    let mut w = BufWriter::new(dst);
    for row in matrix.iter_rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                w.write_all(b",")?;
            }
            w.write_all(format_f64(*v).as_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_csv_file(path: impl AsRef<Path>) -> Result<Matrix> {
    import_csv(File::open(path)?)
}

pub fn export_csv_file(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    export_csv(matrix, File::create(path)?)
}
