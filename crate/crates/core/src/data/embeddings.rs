//! The BMIE binary embedding format, its JSON-lines alignment sidecar and
//! type-level random embeddings.
//!
//! Layout (little-endian): `b"BMIE"`, `u32` version, `u32` dimension,
//! `u64` count, then `count * dimension` `f32` values row-major.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conllu::TokenRecord;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BMIE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 20;

/// A dense `count x dim` matrix of 32-bit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "row {bad} has width {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, index: usize) -> Result<&[f32]> {
        if index >= self.count() {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.count(),
            });
        }
        Ok(&self.data[index * self.dim..(index + 1) * self.dim])
    }

    /// Serialises to BMIE bytes; non-finite values are rejected.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                offset: HEADER_LEN + 4 * i as u64,
                message: format!("non-finite value {} in vector {}", self.data[i], i / self.dim),
            });
        }
        let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len = bytes.len() as u64;
        if len < HEADER_LEN {
            return Err(Error::Format {
                offset: len,
                message: format!("file ends inside the {HEADER_LEN}-byte header"),
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}", &bytes[0..4]),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
        if dim == 0 {
            return Err(Error::Format {
                offset: 8,
                message: "dimension is zero".into(),
            });
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected = count
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN))
            .ok_or(Error::Format {
                offset: 12,
                message: format!("count {count} x dimension {dim} overflows"),
            })?;
        if len < expected {
            return Err(Error::Format {
                offset: len,
                message: format!("payload truncated: header promises {count} vectors, expected {expected} bytes"),
            });
        }
        if len > expected {
            return Err(Error::Format {
                offset: expected,
                message: format!("{} trailing bytes after {count} vectors", len - expected),
            });
        }
        let mut data = Vec::with_capacity((count * dim) as usize);
        for (i, chunk) in bytes[HEADER_LEN as usize..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: HEADER_LEN + 4 * i as u64,
                    message: format!("non-finite value {v}"),
                });
            }
            data.push(v);
        }
        Self::new(dim as usize, data)
    }
}

pub fn write_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = store.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// One sidecar line: a token and the index of its vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub sent: usize,
    pub tok: usize,
    pub form: String,
    pub upos: Option<String>,
    pub deprel: Option<String>,
    pub head: Option<usize>,
    pub vec: usize,
}

impl AlignmentRow {
    pub fn from_record(record: &TokenRecord, vec: usize) -> Self {
        Self {
            sent: record.sent,
            tok: record.tok,
            form: record.form.clone(),
            upos: record.upos.clone(),
            deprel: record.deprel.clone(),
            head: record.head,
            vec,
        }
    }
}

pub fn write_sidecar(rows: &[AlignmentRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_sidecar<R: BufRead>(reader: R) -> Result<Vec<AlignmentRow>> {
    let mut rows = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: index + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: index + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Vec<AlignmentRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_sidecar(std::io::BufReader::new(file))
}

/// Maps every record to its vector index, checking that the sidecar is a
/// bijection onto the records and that indices fit the store.
pub fn align(records: &[TokenRecord], rows: &[AlignmentRow], store: &EmbeddingStore) -> Result<Vec<usize>> {
    let mut by_key: HashMap<(usize, usize), &AlignmentRow> = HashMap::with_capacity(rows.len());
    for row in rows {
        if by_key.insert((row.sent, row.tok), row).is_some() {
            return Err(Error::DomainMismatch(format!(
                "sidecar lists token ({}, {}) twice",
                row.sent, row.tok
            )));
        }
        if row.vec >= store.count() {
            return Err(Error::DomainMismatch(format!(
                "sidecar token ({}, {}) points at vector {} but the store holds {}",
                row.sent,
                row.tok,
                row.vec,
                store.count()
            )));
        }
    }
    if rows.len() != records.len() {
        return Err(Error::DomainMismatch(format!(
            "sidecar has {} rows for {} tokens",
            rows.len(),
            records.len()
        )));
    }
    records
        .iter()
        .map(|r| {
            let row = by_key.get(&(r.sent, r.tok)).ok_or_else(|| {
                Error::DomainMismatch(format!("token ({}, {}) `{}` missing from sidecar", r.sent, r.tok, r.form))
            })?;
            if row.form != r.form {
                return Err(Error::DomainMismatch(format!(
                    "token ({}, {}) is `{}` in the treebank but `{}` in the sidecar",
                    r.sent, r.tok, r.form, row.form
                )));
            }
            Ok(row.vec)
        })
        .collect()
}

/// The vector for one word form: standard normal entries scaled by
/// `1/sqrt(d)`, from a stream keyed by `(seed, form)` only.
pub fn type_vector(form: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(form.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * scale) as f32
        })
        .collect()
}

/// Type-level random vectors for a vocabulary, one row per distinct form.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeEmbeddings {
    pub store: EmbeddingStore,
    pub index: BTreeMap<String, usize>,
}

impl TypeEmbeddings {
    pub fn vector_for(&self, form: &str) -> Option<&[f32]> {
        self.index.get(form).map(|&i| self.store.vector(i).expect("index built with store"))
    }
}

/// Rows follow first occurrence in `vocab`; the vectors themselves depend
/// only on `(form, seed)`.
pub fn random_type_embeddings<'a, I>(vocab: I, dim: usize, seed: u64) -> Result<TypeEmbeddings>
where
    I: IntoIterator<Item = &'a str>,
{
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let mut index = BTreeMap::new();
    let mut data = Vec::new();
    for form in vocab {
        if !index.contains_key(form) {
            index.insert(form.to_string(), index.len());
            data.extend(type_vector(form, dim, seed));
        }
    }
    Ok(TypeEmbeddings {
        store: EmbeddingStore::new(dim, data)?,
        index,
    })
}
