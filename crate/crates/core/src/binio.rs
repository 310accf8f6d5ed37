//! Little-endian framing helpers shared by the similarity cache and the
//! checkpoint format. Every file ends with a CRC32 of all preceding bytes.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    Truncated { needed: usize, at: usize },
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    Checksum { stored: u32, computed: u32 },
    TrailingBytes(usize),
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::Truncated { needed, at } => {
                write!(
                    f,
                    "file truncated: needed {needed} more bytes at offset {at}"
                )
            }
            FrameError::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            FrameError::Checksum { stored, computed } => {
                write!(
                    f,
                    "checksum mismatch: stored {stored:08x}, computed {computed:08x}"
                )
            }
            FrameError::TrailingBytes(n) => write!(f, "{n} unexpected bytes before checksum"),
        }
    }
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Writer {
        Writer {
            buf: magic.to_vec(),
        }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Append the CRC32 trailer and return the finished bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

/// Cursor over a framed file body (magic consumed, CRC trailer excluded).
pub struct Reader<'a> {
    bytes: &'a [u8],
    body_end: usize,
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Check the magic; the checksum is verified separately by [`Reader::finish`]
    /// so that truncation and version problems surface with their own errors.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Reader<'a>, FrameError> {
        if bytes.len() < 4 {
            return Err(FrameError::Truncated {
                needed: 4 - bytes.len(),
                at: bytes.len(),
            });
        }
        if &bytes[..4] != magic {
            return Err(FrameError::BadMagic {
                expected: *magic,
                found: bytes[..4].to_vec(),
            });
        }
        Ok(Reader {
            bytes,
            body_end: bytes.len().saturating_sub(4).max(4),
            pos: 4,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.pos + n > self.body_end {
            return Err(FrameError::Truncated {
                needed: self.pos + n - self.body_end,
                at: self.pos,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FrameError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, FrameError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        self.take(n)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FrameError> {
        let len = n.checked_mul(4).ok_or(FrameError::Truncated {
            needed: usize::MAX,
            at: self.pos,
        })?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn is_at_end(&self) -> bool {
        self.pos >= self.body_end
    }

    /// Require the body to be fully consumed and the CRC trailer to match.
    pub fn finish(self) -> Result<(), FrameError> {
        if self.bytes.len() < self.body_end + 4 {
            return Err(FrameError::Truncated {
                needed: self.body_end + 4 - self.bytes.len(),
                at: self.bytes.len(),
            });
        }
        if self.pos != self.body_end {
            return Err(FrameError::TrailingBytes(self.body_end - self.pos));
        }
        let t = &self.bytes[self.body_end..];
        let stored = u32::from_le_bytes([t[0], t[1], t[2], t[3]]);
        let computed = crc32fast::hash(&self.bytes[..self.body_end]);
        if stored != computed {
            return Err(FrameError::Checksum { stored, computed });
        }
        Ok(())
    }
}
