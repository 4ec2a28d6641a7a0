//! Named dense vector spaces and their binary file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   "EMBD"      4 bytes
//! version u16 = 1
//! dim     u32
//! count   u64
//! count x { id_len u16, id bytes (UTF-8), dim x f32 }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CorpusError;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMBD";
pub const EMBEDDING_VERSION: u16 = 1;
/// Bytes before the first record.
pub const HEADER_LEN: u64 = 4 + 2 + 4 + 8;

/// One image's vector, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub image_id: String,
    pub values: Vec<f32>,
}

/// A named assignment of fixed-dimension vectors to image ids.
///
/// Vectors are stored row-major in one contiguous buffer in insertion order.
/// Every vector is finite with a positive norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    name: String,
    dimension: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingSpace {
    pub fn new(name: impl Into<String>, dimension: usize) -> Result<Self, CorpusError> {
        if dimension == 0 {
            return Err(CorpusError::ZeroDimension);
        }
        Ok(EmbeddingSpace {
            name: name.into(),
            dimension,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn from_vectors(
        name: impl Into<String>,
        dimension: usize,
        vectors: impl IntoIterator<Item = EmbeddingVector>,
    ) -> Result<Self, CorpusError> {
        let mut space = Self::new(name, dimension)?;
        for v in vectors {
            space.push(v.image_id, &v.values)?;
        }
        Ok(space)
    }

    pub fn push(&mut self, id: impl Into<String>, values: &[f32]) -> Result<(), CorpusError> {
        let id = id.into();
        if values.len() != self.dimension {
            return Err(CorpusError::DimensionMismatch {
                id,
                expected: self.dimension,
                found: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(CorpusError::NonFinite { id });
        }
        if values.iter().all(|&x| x == 0.0) {
            return Err(CorpusError::ZeroNorm { id });
        }
        if self.index.contains_key(&id) {
            return Err(CorpusError::DuplicateVector {
                space: self.name.clone(),
                id,
            });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// The vector at insertion position `pos`.
    pub fn row(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.dimension..(pos + 1) * self.dimension]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|p| self.row(p))
    }

    /// The whole row-major buffer (`len() * dimension()` values).
    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dimension))
            .map(|(id, v)| (id.as_str(), v))
    }

    pub fn to_vectors(&self) -> Vec<EmbeddingVector> {
        self.iter()
            .map(|(id, v)| EmbeddingVector {
                image_id: id.to_string(),
                values: v.to_vec(),
            })
            .collect()
    }

    /// Size in bytes of this space's embedding file.
    pub fn encoded_len(&self) -> u64 {
        HEADER_LEN
            + self
                .ids
                .iter()
                .map(|id| 2 + id.len() as u64 + 4 * self.dimension as u64)
                .sum::<u64>()
    }
}

/// Writes `space` to `path`, returning the number of bytes written.
pub fn write_embedding_file(space: &EmbeddingSpace, path: &Path) -> Result<u64, CorpusError> {
    if space.is_empty() {
        return Err(CorpusError::EmptySpace {
            space: space.name.clone(),
        });
    }
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let io = |e| CorpusError::io(path, e);
    let mut written = 0u64;
    let mut put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<(), CorpusError> {
        written += bytes.len() as u64;
        w.write_all(bytes).map_err(io)
    };
    put(&mut w, &EMBEDDING_MAGIC)?;
    put(&mut w, &EMBEDDING_VERSION.to_le_bytes())?;
    put(&mut w, &(space.dimension as u32).to_le_bytes())?;
    put(&mut w, &(space.len() as u64).to_le_bytes())?;
    let mut row_buf = Vec::with_capacity(space.dimension * 4);
    for (id, values) in space.iter() {
        let id_len = u16::try_from(id.len())
            .map_err(|_| CorpusError::Format(format!("id {id:?} longer than 65535 bytes")))?;
        put(&mut w, &id_len.to_le_bytes())?;
        put(&mut w, id.as_bytes())?;
        row_buf.clear();
        for v in values {
            row_buf.extend_from_slice(&v.to_le_bytes());
        }
        put(&mut w, &row_buf)?;
    }
    w.flush().map_err(io)?;
    Ok(written)
}

/// Reads an embedding file; the space is named after the file stem.
pub fn read_embedding_file(path: &Path) -> Result<EmbeddingSpace, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_embeddings(BufReader::with_capacity(1 << 20, file), name)
}

fn read_embeddings<R: Read>(mut r: R, name: String) -> Result<EmbeddingSpace, CorpusError> {
    let header_err = |_| CorpusError::Format("truncated header".into());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(header_err)?;
    if magic != EMBEDDING_MAGIC {
        return Err(CorpusError::BadMagic { found: magic });
    }
    let mut b2 = [0u8; 2];
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b2).map_err(header_err)?;
    let version = u16::from_le_bytes(b2);
    if version != EMBEDDING_VERSION {
        return Err(CorpusError::VersionMismatch {
            found: version,
            expected: EMBEDDING_VERSION,
        });
    }
    r.read_exact(&mut b4).map_err(header_err)?;
    let dim = u32::from_le_bytes(b4) as usize;
    if dim == 0 {
        return Err(CorpusError::ZeroDimension);
    }
    r.read_exact(&mut b8).map_err(header_err)?;
    let count = u64::from_le_bytes(b8);

    let mut space = EmbeddingSpace::new(name, dim)?;
    let mut row_bytes = vec![0u8; dim * 4];
    let mut row = vec![0f32; dim];
    for rec in 0..count {
        let trunc = |_| CorpusError::Truncated { record: rec };
        r.read_exact(&mut b2).map_err(trunc)?;
        let mut id = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut id).map_err(trunc)?;
        let id = String::from_utf8(id)
            .map_err(|_| CorpusError::Format(format!("record {rec}: id is not UTF-8")))?;
        r.read_exact(&mut row_bytes).map_err(trunc)?;
        for (x, chunk) in row.iter_mut().zip(row_bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        space.push(id, &row)?;
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => Ok(space),
        Ok(_) => Err(CorpusError::Format(format!(
            "trailing bytes after {count} records"
        ))),
        Err(e) => Err(CorpusError::Format(e.to_string())),
    }
}
