//! On-disk index layout.
//!
//! All integers are little-endian.
//!
//! ```text
//! "CVIX"             4 bytes
//! version            u32 (= 1)
//! token_width        u8  (16 or 32)
//! reserved           3 bytes (zero)
//! tokens_len         u64
//! docs_len           u64
//! max_clause_freq    u64
//! max_clause_dist    u64
//! vocab_meta_len     u32, then that many UTF-8 bytes
//! header_crc32       u32 over every header byte before it
//! tokens             tokens_len * token_width / 8 bytes
//! suffix array       tokens_len * 8 bytes (u64 positions)
//! doc bounds         docs_len * 8 bytes (u64 offsets)
//! data_crc32         u32 over the three arrays
//! ```
//!
//! The in-memory index holds exactly these bytes, so a loaded file can be
//! queried straight out of the memory map.

use std::fs::File;
use std::io::Write;
use std::ops::Deref;
use std::path::Path;

use memmap2::Mmap;

use super::{IndexError, IndexParams, TokenWidth};

pub const MAGIC: &[u8; 4] = b"CVIX";
pub const FORMAT_VERSION: u32 = 1;

/// Byte length of the header up to (not including) `vocab_meta` bytes.
const FIXED_HEADER: usize = 4 + 4 + 1 + 3 + 8 * 4 + 4;

pub(crate) enum Backing {
    Owned(Vec<u8>),
    Mapped(Mmap),
}

impl Deref for Backing {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        match self {
            Backing::Owned(v) => v,
            Backing::Mapped(m) => m,
        }
    }
}

/// Decoded header plus the byte offsets of each array.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub params: IndexParams,
    pub tokens_len: usize,
    pub docs_len: usize,
    pub vocab_meta: String,
    pub tokens_at: usize,
    pub sa_at: usize,
    pub docs_at: usize,
    pub crc_at: usize,
}

impl Layout {
    fn new(params: IndexParams, tokens_len: usize, docs_len: usize, vocab_meta: String) -> Self {
        let tokens_at = FIXED_HEADER + vocab_meta.len() + 4;
        let sa_at = tokens_at + tokens_len * params.token_width.bytes();
        let docs_at = sa_at + tokens_len * 8;
        let crc_at = docs_at + docs_len * 8;
        Layout {
            params,
            tokens_len,
            docs_len,
            vocab_meta,
            tokens_at,
            sa_at,
            docs_at,
            crc_at,
        }
    }

    pub fn file_len(&self) -> usize {
        self.crc_at + 4
    }
}

/// Serializes an index into its file image.
pub(crate) fn encode(
    params: &IndexParams,
    vocab_meta: &str,
    tokens: &[u32],
    suffix_array: &[usize],
    doc_bounds: &[usize],
) -> (Vec<u8>, Layout) {
    let layout = Layout::new(params.clone(), tokens.len(), doc_bounds.len(), vocab_meta.to_owned());
    let mut buf = Vec::with_capacity(layout.file_len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(params.token_width.bits());
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(doc_bounds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&params.max_clause_freq.to_le_bytes());
    buf.extend_from_slice(&params.max_clause_dist.to_le_bytes());
    buf.extend_from_slice(&(vocab_meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(vocab_meta.as_bytes());
    let header_crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&header_crc.to_le_bytes());
    debug_assert_eq!(buf.len(), layout.tokens_at);

    match params.token_width {
        TokenWidth::U16 => {
            for &t in tokens {
                buf.extend_from_slice(&(t as u16).to_le_bytes());
            }
        }
        TokenWidth::U32 => {
            for &t in tokens {
                buf.extend_from_slice(&t.to_le_bytes());
            }
        }
    }
    for &p in suffix_array {
        buf.extend_from_slice(&(p as u64).to_le_bytes());
    }
    for &b in doc_bounds {
        buf.extend_from_slice(&(b as u64).to_le_bytes());
    }
    let data_crc = crc32fast::hash(&buf[layout.tokens_at..]);
    buf.extend_from_slice(&data_crc.to_le_bytes());
    debug_assert_eq!(buf.len(), layout.file_len());
    (buf, layout)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let mut file = File::create(path).map_err(|e| IndexError::io(path, e))?;
    file.write_all(bytes).map_err(|e| IndexError::io(path, e))?;
    file.sync_all().map_err(|e| IndexError::io(path, e))?;
    Ok(())
}

pub(crate) fn map_file(path: &Path) -> Result<Backing, IndexError> {
    let file = File::open(path).map_err(|e| IndexError::io(path, e))?;
    let len = file.metadata().map_err(|e| IndexError::io(path, e))?.len();
    if len == 0 {
        return Err(IndexError::Truncated { expected: FIXED_HEADER as u64, found: 0 });
    }
    // SAFETY: the index file is treated as immutable; concurrent truncation by
    // another process is outside the supported usage.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| IndexError::io(path, e))?;
    Ok(Backing::Mapped(map))
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Validates a file image and returns its layout.
pub(crate) fn decode(bytes: &[u8]) -> Result<Layout, IndexError> {
    if bytes.len() < 8 {
        return Err(IndexError::Truncated { expected: FIXED_HEADER as u64, found: bytes.len() as u64 });
    }
    if &bytes[0..4] != MAGIC {
        return Err(IndexError::BadMagic);
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(IndexError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < FIXED_HEADER {
        return Err(IndexError::Truncated { expected: FIXED_HEADER as u64, found: bytes.len() as u64 });
    }
    let meta_len = read_u32(bytes, FIXED_HEADER - 4) as usize;
    let header_end = FIXED_HEADER + meta_len;
    if bytes.len() < header_end + 4 {
        return Err(IndexError::Truncated {
            expected: (header_end + 4) as u64,
            found: bytes.len() as u64,
        });
    }
    if crc32fast::hash(&bytes[..header_end]) != read_u32(bytes, header_end) {
        return Err(IndexError::HeaderChecksum);
    }

    let token_width = TokenWidth::from_bits(bytes[8]).ok_or(IndexError::Corrupt("token width"))?;
    let tokens_len = read_u64(bytes, 12);
    let docs_len = read_u64(bytes, 20);
    let max_clause_freq = read_u64(bytes, 28);
    let max_clause_dist = read_u64(bytes, 36);
    let vocab_meta = std::str::from_utf8(&bytes[FIXED_HEADER..header_end])
        .map_err(|_| IndexError::Corrupt("vocab_meta is not UTF-8"))?
        .to_owned();
    let params = IndexParams { max_clause_freq, max_clause_dist, token_width };
    params.validate()?;

    let expected = (tokens_len as u128) * (token_width.bytes() as u128 + 8)
        + (docs_len as u128) * 8
        + (header_end as u128)
        + 8;
    if expected != bytes.len() as u128 {
        return Err(IndexError::Truncated {
            expected: expected.min(u64::MAX as u128) as u64,
            found: bytes.len() as u64,
        });
    }
    let layout = Layout::new(params, tokens_len as usize, docs_len as usize, vocab_meta);
    if crc32fast::hash(&bytes[layout.tokens_at..layout.crc_at]) != read_u32(bytes, layout.crc_at) {
        return Err(IndexError::DataChecksum);
    }
    Ok(layout)
}
