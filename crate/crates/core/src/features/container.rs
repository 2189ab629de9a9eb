//! `SPSF` binary container shared by feature files and checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SPSF" | version u16 | kind u8 | dtype u8 | ndim u8 | ndim x u32 dims
//!        | payload (row-major, f32 LE) | u32 metadata length | UTF-8 JSON
//! ```

use thiserror::Error;

pub const SPSF_MAGIC: &[u8; 4] = b"SPSF";
pub const SPSF_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
/// Type byte for a flat pack of named network tensors.
pub const CHECKPOINT_KIND: u8 = 0xFF;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContainerError {
    #[error("bad magic {0:?}, expected \"SPSF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("container truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after metadata")]
    TrailingBytes(usize),
    #[error("metadata is not valid UTF-8")]
    MetadataEncoding,
    #[error("dimension product overflows")]
    DimsOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsfFile {
    pub kind: u8,
    pub dims: Vec<u32>,
    pub payload: Vec<f32>,
    /// Raw JSON text, kept verbatim so re-encoding is byte-exact.
    pub metadata: Vec<u8>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).ok_or(ContainerError::Truncated(what))?;
        let s = self.bytes.get(self.pos..end).ok_or(ContainerError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ContainerError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ContainerError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl SpsfFile {
    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.dims.len() + 4 * self.payload.len() + 4 + self.metadata.len());
        out.extend_from_slice(SPSF_MAGIC);
        out.extend_from_slice(&SPSF_VERSION.to_le_bytes());
        out.push(self.kind);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.metadata);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SpsfFile, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != SPSF_MAGIC {
            return Err(ContainerError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
        }
        let version = r.u16("version")?;
        if version != SPSF_VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let kind = r.u8("kind")?;
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(ContainerError::UnsupportedDtype(dtype));
        }
        let ndim = r.u8("ndim")?;
        let dims = (0..ndim).map(|_| r.u32("dims")).collect::<Result<Vec<_>, _>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(4))
            .ok_or(ContainerError::DimsOverflow)?;
        let payload = r
            .take(count, "payload")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let meta_len = r.u32("metadata length")? as usize;
        let metadata = r.take(meta_len, "metadata")?.to_vec();
        if std::str::from_utf8(&metadata).is_err() {
            return Err(ContainerError::MetadataEncoding);
        }
        if r.pos != bytes.len() {
            return Err(ContainerError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(SpsfFile {
            kind,
            dims,
            payload,
            metadata,
        })
    }
}
