//! File formats: DDPM prediction matrices, label CSVs and JSON manifests.
//!
//! # DDPM v1
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DDPM"
//! 4       2     version (u16 LE) = 1
//! 6       2     flags   (u16 LE); bit 0 = logits block present
//! 8       4     n       (u32 LE) samples
//! 12      4     k       (u32 LE) classes
//! 16      ...   probabilities, n*k f32 LE, row-major
//!         ...   logits, n*k f32 LE, row-major (only if flag bit 0)
//! ```
//!
//! The file must end exactly after the last block.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::domain::{EnsembleManifest, LabelVector, PredictionSet};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DDPM";
pub const VERSION: u16 = 1;
pub const FLAG_LOGITS: u16 = 1;
pub const HEADER_LEN: usize = 16;
const MAX_ENTRIES: u64 = 1 << 31;

/// Parsed DDPM header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionFileHeader {
    pub version: u16,
    pub flags: u16,
    pub n: u32,
    pub k: u32,
}

impl PredictionFileHeader {
    pub fn has_logits(&self) -> bool {
        self.flags & FLAG_LOGITS != 0
    }

    pub fn payload_len(&self) -> usize {
        let blocks = if self.has_logits() { 2 } else { 1 };
        self.n as usize * self.k as usize * 4 * blocks
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::BadVersion(version));
        }
        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        if flags & !FLAG_LOGITS != 0 {
            return Err(Error::UnknownFlags(flags));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let k = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        if n as u64 * k as u64 > MAX_ENTRIES {
            return Err(Error::ShapeOverflow { n, k });
        }
        if n == 0 || k == 0 {
            return Err(Error::EmptyShape { n, k });
        }
        Ok(Self { version, flags, n, k })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..8].copy_from_slice(&self.flags.to_le_bytes());
        out[8..12].copy_from_slice(&self.n.to_le_bytes());
        out[12..16].copy_from_slice(&self.k.to_le_bytes());
        out
    }
}

/// Raw contents of a DDPM file at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub n: u32,
    pub k: u32,
    pub probs: Vec<f32>,
    pub logits: Option<Vec<f32>>,
}

impl PredictionFile {
    pub fn header(&self) -> PredictionFileHeader {
        PredictionFileHeader {
            version: VERSION,
            flags: if self.logits.is_some() { FLAG_LOGITS } else { 0 },
            n: self.n,
            k: self.k,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
        out.extend_from_slice(&header.to_bytes());
        for v in self.probs.iter().chain(self.logits.iter().flatten()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = PredictionFileHeader::parse(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        let expected = header.payload_len();
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes(payload.len() - expected));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let block = header.n as usize * header.k as usize;
        let (probs, logits) = if header.has_logits() {
            (floats[..block].to_vec(), Some(floats[block..].to_vec()))
        } else {
            (floats, None)
        };
        Ok(Self {
            n: header.n,
            k: header.k,
            probs,
            logits,
        })
    }

    /// Stores a prediction set at `f32` precision.
    pub fn from_set(set: &PredictionSet) -> Self {
        Self {
            n: set.n_samples() as u32,
            k: set.n_classes() as u32,
            probs: set.probs().iter().map(|&v| v as f32).collect(),
            logits: set.logits().map(|l| l.iter().map(|&v| v as f32).collect()),
        }
    }

    /// Widens to `f64` and validates.
    pub fn to_prediction_set(&self, model_id: &str, split_id: &str) -> Result<PredictionSet> {
        PredictionSet::new(
            model_id,
            split_id,
            self.n as usize,
            self.k as usize,
            self.probs.iter().map(|&v| v as f64).collect(),
            self.logits.as_ref().map(|l| l.iter().map(|&v| v as f64).collect()),
        )
    }
}

pub fn read_prediction_file(path: &Path) -> Result<PredictionFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PredictionFile::decode(&bytes)
}

pub fn write_prediction_file(file: &PredictionFile, path: &Path) -> Result<()> {
    fs::write(path, file.encode()).map_err(|e| Error::io(path, e))
}

/// Reads only the 16-byte header.
pub fn read_header(path: &Path) -> Result<PredictionFileHeader> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    f.by_ref()
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    PredictionFileHeader::parse(&buf)
}

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<()> {
    write_prediction_file(&PredictionFile::from_set(set), path)
}

pub fn read_predictions(path: &Path, model_id: &str, split_id: &str) -> Result<PredictionSet> {
    read_prediction_file(path)?.to_prediction_set(model_id, split_id)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses a label CSV: one non-negative integer per line, optional `label` header.
pub fn parse_labels(text: &str, split_id: &str) -> Result<LabelVector> {
    let mut labels = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::BadLabel {
            line,
            message: e.to_string(),
        })?;
        let field = record.get(0).unwrap_or("");
        if line == 1 && field.eq_ignore_ascii_case("label") {
            continue;
        }
        if field.is_empty() {
            continue;
        }
        let value: i64 = field.parse().map_err(|_| Error::BadLabel {
            line,
            message: format!("`{field}` is not an integer"),
        })?;
        if value < 0 {
            return Err(Error::BadLabel {
                line,
                message: format!("negative label {value}"),
            });
        }
        let value = u32::try_from(value).map_err(|_| Error::BadLabel {
            line,
            message: format!("label {value} too large"),
        })?;
        labels.push(value);
    }
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    Ok(LabelVector::new(split_id, labels))
}

pub fn read_labels(path: &Path, split_id: &str) -> Result<LabelVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, split_id)
}

pub fn write_labels(labels: &LabelVector, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3 + 6);
    text.push_str("label\n");
    for l in &labels.labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Imports predictions from CSV with header `p0,...,p{K-1}` and an optional
/// `y` column. Values are rounded to `f32`, the binary storage precision.
pub fn import_prediction_csv(path: &Path) -> Result<(PredictionFile, Option<Vec<u32>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let mut prob_cols = Vec::new();
    let mut label_col = None;
    for (i, h) in headers.iter().enumerate() {
        if h == "y" {
            label_col = Some(i);
        } else if h.strip_prefix('p').and_then(|d| d.parse::<usize>().ok()) == Some(prob_cols.len()) {
            prob_cols.push(i);
        } else {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: format!("unexpected column `{h}`; expected p0..p{{K-1}} and optional y"),
            });
        }
    }
    let k = prob_cols.len();
    if k == 0 {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            message: "no probability columns".into(),
        });
    }
    let mut probs = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        for &c in &prob_cols {
            let v: f32 = record[c].parse().map_err(|_| Error::Manifest {
                path: path.to_path_buf(),
                message: format!("row {}: `{}` is not a number", row + 1, &record[c]),
            })?;
            probs.push(v);
        }
        if let (Some(c), Some(out)) = (label_col, labels.as_mut()) {
            let y: u32 = record[c].parse().map_err(|_| Error::BadLabel {
                line: row + 2,
                message: format!("`{}` is not a non-negative integer", &record[c]),
            })?;
            out.push(y);
        }
    }
    let n = probs.len() / k;
    if n == 0 {
        return Err(Error::EmptyShape { n: 0, k: k as u32 });
    }
    Ok((
        PredictionFile {
            n: n as u32,
            k: k as u32,
            probs,
            logits: None,
        },
        labels,
    ))
}

/// Fails if `path` exists and `force` is not set.
pub fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    Ok(())
}

pub fn write_manifest(manifest: &EnsembleManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a manifest without touching the files it references.
pub fn parse_manifest(text: &str, path: &Path) -> Result<EnsembleManifest> {
    serde_json::from_str(text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a manifest, resolves relative paths against its directory, and
/// checks every referenced file's header for consistent shapes.
pub fn load_manifest(path: &Path) -> Result<EnsembleManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let schema = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };

    if manifest.k < 2 {
        return Err(schema(format!("k must be at least 2, got {}", manifest.k)));
    }
    let mut seen = std::collections::BTreeSet::new();
    for split in manifest.splits() {
        if !seen.insert(split.clone()) {
            return Err(schema(format!("split `{split}` listed twice")));
        }
    }
    // Also checks model count, duplicate ids and the anchor.
    manifest.pairing.pairs(&manifest.model_ids())?;

    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    let mut n_per_split: BTreeMap<String, (u32, String)> = BTreeMap::new();
    for model in &mut manifest.models {
        for split in std::iter::once(&manifest.id_split).chain(&manifest.ood_splits) {
            if !model.predictions.contains_key(split) {
                return Err(Error::MissingSplit {
                    split: split.clone(),
                    owner: format!("model `{}`", model.id),
                });
            }
        }
        for (split, file) in model.predictions.iter_mut() {
            *file = resolve(file);
            if !file.exists() {
                return Err(Error::DanglingPath { path: file.clone() });
            }
            let header = read_header(file)?;
            if header.k as usize != manifest.k {
                return Err(Error::ClassCountMismatch {
                    expected: manifest.k,
                    found: header.k as usize,
                });
            }
            match n_per_split.get(split) {
                Some((n, other)) if *n != header.n => {
                    return Err(Error::ShapeMismatch(format!(
                        "split `{split}`: model `{other}` has n={n}, model `{}` has n={}",
                        model.id, header.n
                    )));
                }
                Some(_) => {}
                None => {
                    n_per_split.insert(split.clone(), (header.n, model.id.clone()));
                }
            }
        }
    }
    if !manifest.labels.contains_key(&manifest.id_split) {
        return Err(Error::MissingSplit {
            split: manifest.id_split.clone(),
            owner: "labels".into(),
        });
    }
    for (split, file) in manifest.labels.iter_mut() {
        *file = resolve(file);
        if !file.exists() {
            return Err(Error::DanglingPath { path: file.clone() });
        }
        if !n_per_split.contains_key(split) {
            return Err(schema(format!("labels given for unknown split `{split}`")));
        }
    }
    Ok(manifest)
}
