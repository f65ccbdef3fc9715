//! On-disk formats. All integers little-endian.
//!
//! Index (`MVI1`):
//!
//! ```text
//! magic "MVI1" | version u16 = 1 | dtype u8 (0 f32, 1 bf16) | reserved u8 = 0
//! N u64 | R_c u32 | D u32
//! N × doc_id u64
//! N × R_c × D values, candidate-major, row-major
//! CRC32 (IEEE) of every preceding byte, u32
//! ```
//!
//! Embedding input (`MVE1`):
//!
//! ```text
//! magic "MVE1" | version u16 = 1 | dtype u8 = 0 | reserved u8
//! count u64 | R u32 | D u32
//! count × { doc_id u64, R × D f32 }
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Bf16, NestedIndex, Storage};
use crate::embedding::{MetaEmbeddingSet, Side};
use crate::error::{Error, Result};

const INDEX_MAGIC: [u8; 4] = *b"MVI1";
const EMBED_MAGIC: [u8; 4] = *b"MVE1";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;
const CRC_LEN: usize = 4;

struct CrcWriter<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn header(magic: [u8; 4], dtype: u8, count: usize, rows: usize, dim: usize) -> Result<[u8; HEADER_LEN]> {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&magic);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6] = dtype;
    h[7] = 0;
    h[8..16].copy_from_slice(&(count as u64).to_le_bytes());
    let rows = u32::try_from(rows).map_err(|_| Error::Config("row count exceeds u32".into()))?;
    let dim = u32::try_from(dim).map_err(|_| Error::Config("dimension exceeds u32".into()))?;
    h[16..20].copy_from_slice(&rows.to_le_bytes());
    h[20..24].copy_from_slice(&dim.to_le_bytes());
    Ok(h)
}

pub fn save_index(index: &NestedIndex, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = CrcWriter {
        inner: BufWriter::new(file),
        hasher: crc32fast::Hasher::new(),
    };
    w.write_all(&header(
        INDEX_MAGIC,
        index.dtype().code(),
        index.len(),
        index.r_c(),
        index.dim(),
    )?)?;
    for id in index.doc_ids() {
        w.write_all(&id.to_le_bytes())?;
    }
    match index.storage() {
        Storage::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Storage::Bf16(v) => {
            for x in v {
                w.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
    }
    let crc = w.hasher.clone().finalize();
    let mut inner = w.inner;
    inner.write_all(&crc.to_le_bytes())?;
    inner.flush()?;
    Ok(())
}

struct Header {
    dtype: u8,
    count: usize,
    rows: usize,
    dim: usize,
}

fn parse_header(bytes: &[u8], magic: [u8; 4], min_total: usize) -> Result<Header> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            expected: min_total as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[0..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: min_total as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rows = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    Ok(Header {
        dtype: bytes[6],
        count: usize::try_from(count).map_err(|_| Error::Parse("record count too large".into()))?,
        rows: rows as usize,
        dim: dim as usize,
    })
}

fn sized(parts: &[usize]) -> Result<usize> {
    parts
        .iter()
        .try_fold(1usize, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| Error::Parse("declared sizes overflow".into()))
}

fn check_length(actual: usize, expected: usize) -> Result<()> {
    if actual < expected {
        return Err(Error::TruncatedFile {
            expected: expected as u64,
            actual: actual as u64,
        });
    }
    if actual > expected {
        return Err(Error::Parse(format!(
            "{} trailing bytes after declared payload",
            actual - expected
        )));
    }
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<NestedIndex> {
    let bytes = std::fs::read(path)?;
    decode_index(&bytes)
}

pub(crate) fn decode_index(bytes: &[u8]) -> Result<NestedIndex> {
    let h = parse_header(bytes, INDEX_MAGIC, HEADER_LEN + CRC_LEN)?;
    let dtype = super::Dtype::from_code(h.dtype)?;
    if bytes[7] != 0 {
        return Err(Error::Parse(format!("reserved header byte is {}", bytes[7])));
    }
    if h.rows == 0 || h.dim == 0 {
        return Err(Error::Parse("index header declares R_c = 0 or D = 0".into()));
    }
    let values = sized(&[h.count, h.rows, h.dim])?;
    let ids_len = sized(&[h.count, 8])?;
    let data_len = sized(&[values, dtype.bytes_per_value()])?;
    let expected = HEADER_LEN
        .checked_add(ids_len)
        .and_then(|x| x.checked_add(data_len))
        .and_then(|x| x.checked_add(CRC_LEN))
        .ok_or_else(|| Error::Parse("declared sizes overflow".into()))?;
    check_length(bytes.len(), expected)?;

    let body = &bytes[..expected - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[expected - CRC_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let ids: Vec<u64> = body[HEADER_LEN..HEADER_LEN + ids_len]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = &body[HEADER_LEN + ids_len..];
    let storage = match dtype {
        super::Dtype::F32 => Storage::F32(
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        super::Dtype::Bf16 => Storage::Bf16(
            data.chunks_exact(2)
                .map(|c| Bf16::from_bits(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
        ),
    };
    let index = NestedIndex::from_parts(ids, h.rows, h.dim, storage)?;
    index.check_norms()?;
    Ok(index)
}

/// Raw (not yet normalized) embedding records from an `MVE1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub rows: usize,
    pub dim: usize,
    pub records: Vec<(u64, Vec<f32>)>,
}

impl EmbeddingFile {
    /// L2-normalize every record into a [`MetaEmbeddingSet`].
    pub fn into_sets(self, side: Side) -> Result<Vec<(u64, MetaEmbeddingSet)>> {
        let dim = self.dim;
        self.records
            .into_iter()
            .map(|(id, raw)| Ok((id, MetaEmbeddingSet::normalized(&raw, dim, side)?)))
            .collect()
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let bytes = std::fs::read(path)?;
    decode_embeddings(&bytes)
}

pub(crate) fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingFile> {
    let h = parse_header(bytes, EMBED_MAGIC, HEADER_LEN)?;
    if h.dtype != 0 {
        return Err(Error::UnsupportedDtype(h.dtype));
    }
    if h.rows == 0 || h.dim == 0 {
        return Err(Error::Parse("embedding header declares R = 0 or D = 0".into()));
    }
    let per_record = sized(&[h.rows, h.dim, 4])?
        .checked_add(8)
        .ok_or_else(|| Error::Parse("declared sizes overflow".into()))?;
    let expected = sized(&[h.count, per_record])?
        .checked_add(HEADER_LEN)
        .ok_or_else(|| Error::Parse("declared sizes overflow".into()))?;
    check_length(bytes.len(), expected)?;
    let records = bytes[HEADER_LEN..]
        .chunks_exact(per_record)
        .map(|rec| {
            let id = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let values = rec[8..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            (id, values)
        })
        .collect();
    Ok(EmbeddingFile {
        rows: h.rows,
        dim: h.dim,
        records,
    })
}

pub fn write_embeddings<V: AsRef<[f32]>>(
    path: impl AsRef<Path>,
    rows: usize,
    dim: usize,
    records: &[(u64, V)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header(EMBED_MAGIC, 0, records.len(), rows, dim)?)?;
    for (id, values) in records {
        let values = values.as_ref();
        if values.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                actual: values.len(),
            });
        }
        w.write_all(&id.to_le_bytes())?;
        for x in values {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
