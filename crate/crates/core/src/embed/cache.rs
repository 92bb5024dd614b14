//! Binary embedding cache.
//!
//! ```text
//! offset  size  field
//! 0       4     magic b"CSEM"
//! 4       2     version (u16 LE) = 1
//! 6       1     element width in bytes: 4 (f32) or 8 (f64)
//! 7       1     reserved, 0
//! 8       2     provider_id length L (u16 LE)
//! 10      L     provider_id, UTF-8
//! 10+L    4     context_budget (u32 LE)
//! 14+L    4     dimension (u32 LE)
//! 18+L    8     row count (u64 LE)
//! 26+L    ..    rows: count x dimension little-endian floats
//! ```
//!
//! Company ids live in a sidecar `<file>.ids`, one id per line in row order.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EmbeddingMatrix;

pub const CACHE_MAGIC: [u8; 4] = *b"CSEM";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: not an embedding cache (bad magic)")]
    BadMagic(PathBuf),
    #[error("unsupported cache version {0}")]
    Version(u16),
    #[error("corrupt cache header: {0}")]
    Header(String),
    #[error("declared shape {count}x{dimension} needs {expected} payload bytes, file has {actual}")]
    DimensionMismatch { count: u64, dimension: u32, expected: u64, actual: u64 },
    #[error("id index lists {ids} ids but the cache has {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("duplicate company_id {0:?}")]
    DuplicateId(String),
    #[error("invalid company_id {0:?} (empty or contains a line break)")]
    InvalidId(String),
    #[error("cannot append {new} to cache holding {existing}")]
    Incompatible { existing: String, new: String },
}

fn ids_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".ids");
    PathBuf::from(p)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), CacheError> {
    save_embeddings_with(matrix, path, Precision::F64)
}

/// Writes the matrix and its id index, replacing any existing files.
pub fn save_embeddings_with(matrix: &EmbeddingMatrix, path: &Path, precision: Precision) -> Result<(), CacheError> {
    let mut seen = HashSet::new();
    for id in matrix.ids() {
        if id.is_empty() || id.contains(['\n', '\r']) {
            return Err(CacheError::InvalidId(id.clone()));
        }
        if !seen.insert(id.as_str()) {
            return Err(CacheError::DuplicateId(id.clone()));
        }
    }
    let provider = matrix.provider_id.as_bytes();
    let provider_len = u16::try_from(provider.len()).map_err(|_| CacheError::Header("provider_id too long".into()))?;
    let budget = u32::try_from(matrix.context_budget).map_err(|_| CacheError::Header("context_budget too large".into()))?;
    let dimension = u32::try_from(matrix.dimension()).map_err(|_| CacheError::Header("dimension too large".into()))?;

    let mut buf = Vec::with_capacity(26 + provider.len() + matrix.as_slice().len() * precision.width());
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(precision.width() as u8);
    buf.push(0);
    buf.extend_from_slice(&provider_len.to_le_bytes());
    buf.extend_from_slice(provider);
    buf.extend_from_slice(&budget.to_le_bytes());
    buf.extend_from_slice(&dimension.to_le_bytes());
    buf.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    for &x in matrix.as_slice() {
        match precision {
            Precision::F32 => buf.extend_from_slice(&(x as f32).to_le_bytes()),
            Precision::F64 => buf.extend_from_slice(&x.to_le_bytes()),
        }
    }
    let mut index = String::new();
    for id in matrix.ids() {
        index.push_str(id);
        index.push('\n');
    }
    write_atomic(path, &buf)?;
    write_atomic(&ids_path(path), index.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let out = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| CacheError::Header(format!("truncated at offset {}", self.pos)))?;
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CacheError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Loads a cache written by [`save_embeddings`], returning it with its precision.
pub fn load_embeddings(path: &Path) -> Result<(EmbeddingMatrix, Precision), CacheError> {
    let data = fs::read(path).map_err(io(path))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(4).ok() != Some(&CACHE_MAGIC[..]) {
        return Err(CacheError::BadMagic(path.to_path_buf()));
    }
    let version = u16::from_le_bytes(c.array()?);
    if version != CACHE_VERSION {
        return Err(CacheError::Version(version));
    }
    let precision = match c.array::<1>()?[0] {
        4 => Precision::F32,
        8 => Precision::F64,
        w => return Err(CacheError::Header(format!("unknown element width {w}"))),
    };
    c.take(1)?;
    let provider_len = u16::from_le_bytes(c.array()?) as usize;
    let provider_id = std::str::from_utf8(c.take(provider_len)?)
        .map_err(|e| CacheError::Header(format!("provider_id: {e}")))?
        .to_string();
    let context_budget = u32::from_le_bytes(c.array()?) as usize;
    let dimension = u32::from_le_bytes(c.array()?);
    let count = u64::from_le_bytes(c.array()?);

    let payload = (data.len() - c.pos) as u64;
    let expected = count
        .checked_mul(u64::from(dimension))
        .and_then(|n| n.checked_mul(precision.width() as u64));
    if expected != Some(payload) {
        return Err(CacheError::DimensionMismatch {
            count,
            dimension,
            expected: expected.unwrap_or(u64::MAX),
            actual: payload,
        });
    }

    let index_path = ids_path(path);
    let index = fs::read_to_string(&index_path).map_err(io(&index_path))?;
    let ids: Vec<String> = index.lines().map(String::from).collect();
    if ids.len() as u64 != count {
        return Err(CacheError::IdCount { ids: ids.len(), rows: count as usize });
    }

    let body = &data[c.pos..];
    let values: Vec<f64> = match precision {
        Precision::F32 => body
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect(),
        Precision::F64 => body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
    };
    let dim = dimension as usize;
    let mut matrix = EmbeddingMatrix::new(provider_id, context_budget, dim);
    let mut seen = HashSet::new();
    for (i, id) in ids.into_iter().enumerate() {
        if !seen.insert(id.clone()) {
            return Err(CacheError::DuplicateId(id));
        }
        matrix
            .push(id, &values[i * dim..(i + 1) * dim])
            .map_err(|e| CacheError::Header(e.to_string()))?;
    }
    Ok((matrix, precision))
}

/// Adds the rows of `matrix` to the cache at `path` (created when absent).
/// Fails without writing if any id is already cached or the metadata differs.
pub fn append_embeddings(matrix: &EmbeddingMatrix, path: &Path, precision: Precision) -> Result<(), CacheError> {
    if !path.exists() {
        return save_embeddings_with(matrix, path, precision);
    }
    let (mut existing, existing_precision) = load_embeddings(path)?;
    let describe = |m: &EmbeddingMatrix, p: Precision| {
        format!("{}@{} dim {} {:?}", m.provider_id, m.context_budget, m.dimension(), p)
    };
    if existing.provider_id != matrix.provider_id
        || existing.context_budget != matrix.context_budget
        || existing.dimension() != matrix.dimension()
        || existing_precision != precision
    {
        return Err(CacheError::Incompatible {
            existing: describe(&existing, existing_precision),
            new: describe(matrix, precision),
        });
    }
    let present: HashSet<&str> = existing.ids().iter().map(String::as_str).collect();
    if let Some(dup) = matrix.ids().iter().find(|id| present.contains(id.as_str())) {
        return Err(CacheError::DuplicateId(dup.clone()));
    }
    for (id, row) in matrix.ids().iter().zip(matrix.rows()) {
        existing.push(id.clone(), row).map_err(|e| CacheError::Header(e.to_string()))?;
    }
    save_embeddings_with(&existing, path, precision)
}

/// Interchange export: one `{"company_id", "provider_id", "context_budget", "vector"}` object per line.
pub fn export_jsonl(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), CacheError> {
    let mut out = String::new();
    for (id, row) in matrix.ids().iter().zip(matrix.rows()) {
        let line = serde_json::json!({
            "company_id": id,
            "provider_id": matrix.provider_id,
            "context_budget": matrix.context_budget,
            "vector": row,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
