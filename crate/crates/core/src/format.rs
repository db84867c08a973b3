//! Binary stream files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "CSWM"
//! version    u8       1
//! matrix     u8       0 Hadamard, 1 S-matrix
//! S          u32
//! L          u32      measurements in the original stream
//! seed       u64
//! kind       u8       0 original (i16 values), 1 marked (i32 values)
//! n          u8       insertion levels, 0 for original streams
//! tail_bits  u16
//! map_count  u32
//! map        map_count × u32, strictly increasing
//! values     L × i16 (original) or (L − map_count) × i32 (marked)
//! checksum   u32, marked files only: CRC-32 of the original values
//! ```
//!
//! The checksum covers the original stream as little-endian `i16`s, leaving
//! out the final payload position when it is truncated. The threshold is
//! secret and never written.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rdh::{EmbedStats, MarkedStream, PAYLOAD_BITS};
use crate::sensing::{MatrixKind, MeasurementStream, OperatorDescriptor};

pub const MAGIC: [u8; 4] = *b"CSWM";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 1 + 4 + 4 + 8 + 1 + 1 + 2 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Original,
    Marked,
}

impl StreamKind {
    pub fn code(self) -> u8 {
        match self {
            StreamKind::Original => 0,
            StreamKind::Marked => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFileHeader {
    pub matrix_kind: MatrixKind,
    pub order: u32,
    pub total: u32,
    pub seed: u64,
    pub kind: StreamKind,
    pub levels: u8,
    pub tail_bits: u16,
    pub map_count: u32,
}

impl StreamFileHeader {
    pub fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            kind: self.matrix_kind,
            order: self.order as usize,
            rows: self.total as usize,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamValues {
    Original(Vec<i16>),
    Marked { values: Vec<i32>, checksum: u32 },
}

/// A parsed stream file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFile {
    pub header: StreamFileHeader,
    pub location_map: Vec<u32>,
    pub values: StreamValues,
}

/// CRC-32 of `values` as little-endian `i16`, skipping index `skip`.
pub fn stream_checksum(values: &[i16], skip: Option<usize>) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for (i, v) in values.iter().enumerate() {
        if Some(i) != skip {
            h.update(&v.to_le_bytes());
        }
    }
    h.finalize()
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit 32 bits")))
}

impl StreamFile {
    pub fn from_original(stream: &MeasurementStream) -> Result<Self> {
        let d = stream.descriptor;
        Ok(Self {
            header: StreamFileHeader {
                matrix_kind: d.kind,
                order: u32_of(d.order, "order")?,
                total: u32_of(stream.len(), "length")?,
                seed: d.seed,
                kind: StreamKind::Original,
                levels: 0,
                tail_bits: 0,
                map_count: 0,
            },
            location_map: Vec::new(),
            values: StreamValues::Original(stream.values.clone()),
        })
    }

    /// Wraps an embedding result; `original` feeds the integrity checksum.
    pub fn from_marked(marked: &MarkedStream, descriptor: OperatorDescriptor, original: &[i16]) -> Result<Self> {
        if original.len() != marked.source_len {
            return Err(Error::SizeMismatch {
                expected: marked.source_len,
                actual: original.len(),
            });
        }
        let tail_bits = u16::try_from(marked.tail_bits)
            .map_err(|_| Error::Format(format!("tail of {} bits", marked.tail_bits)))?;
        Ok(Self {
            header: StreamFileHeader {
                matrix_kind: descriptor.kind,
                order: u32_of(descriptor.order, "order")?,
                total: u32_of(marked.source_len, "length")?,
                seed: descriptor.seed,
                kind: StreamKind::Marked,
                levels: marked.levels as u8,
                tail_bits,
                map_count: u32_of(marked.location_map.len(), "map count")?,
            },
            location_map: marked
                .location_map
                .iter()
                .map(|&i| u32_of(i, "index"))
                .collect::<Result<_>>()?,
            values: StreamValues::Marked {
                values: marked.values.clone(),
                checksum: stream_checksum(original, marked.truncated_position()),
            },
        })
    }

    pub fn descriptor(&self) -> OperatorDescriptor {
        self.header.descriptor()
    }

    pub fn is_marked(&self) -> bool {
        self.header.kind == StreamKind::Marked
    }

    pub fn original_stream(&self) -> Result<MeasurementStream> {
        match &self.values {
            StreamValues::Original(v) => Ok(MeasurementStream {
                values: v.clone(),
                descriptor: self.descriptor(),
            }),
            StreamValues::Marked { .. } => Err(Error::Format("expected an original stream, found a marked one".into())),
        }
    }

    pub fn marked_stream(&self) -> Result<MarkedStream> {
        match &self.values {
            StreamValues::Marked { values, .. } => Ok(MarkedStream {
                values: values.clone(),
                location_map: self.location_map.iter().map(|&i| i as usize).collect(),
                levels: u32::from(self.header.levels),
                tail_bits: u32::from(self.header.tail_bits),
                source_len: self.header.total as usize,
                stats: EmbedStats {
                    payloads: self.location_map.len(),
                    key_bits: u64::from(PAYLOAD_BITS) * self.location_map.len() as u64,
                    ..EmbedStats::default()
                },
            }),
            StreamValues::Original(_) => Err(Error::Format("expected a marked stream, found an original one".into())),
        }
    }

    pub fn checksum(&self) -> Option<u32> {
        match self.values {
            StreamValues::Marked { checksum, .. } => Some(checksum),
            StreamValues::Original(_) => None,
        }
    }

    /// Checks recovered values against the stored checksum.
    pub fn verify(&self, recovered: &[i16], truncated: Option<usize>) -> Result<()> {
        let Some(stored) = self.checksum() else {
            return Ok(());
        };
        let got = stream_checksum(recovered, truncated);
        if got != stored {
            return Err(Error::Checksum {
                stored,
                recovered: got,
            });
        }
        Ok(())
    }

    /// Bytes spent on measurement values alone (no header, map or checksum).
    pub fn value_bytes(&self) -> usize {
        match &self.values {
            StreamValues::Original(v) => 2 * v.len(),
            StreamValues::Marked { values, .. } => 4 * values.len(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_BYTES + 4 * self.location_map.len() + self.value_bytes() + 4);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(h.matrix_kind.code());
        out.extend_from_slice(&h.order.to_le_bytes());
        out.extend_from_slice(&h.total.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        out.push(h.kind.code());
        out.push(h.levels);
        out.extend_from_slice(&h.tail_bits.to_le_bytes());
        out.extend_from_slice(&h.map_count.to_le_bytes());
        for i in &self.location_map {
            out.extend_from_slice(&i.to_le_bytes());
        }
        match &self.values {
            StreamValues::Original(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            StreamValues::Marked { values, checksum } => {
                values.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                out.extend_from_slice(&checksum.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let code = cur.u8()?;
        let matrix_kind =
            MatrixKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown matrix kind {code}")))?;
        let order = cur.u32()?;
        let total = cur.u32()?;
        let seed = cur.u64()?;
        let kind = match cur.u8()? {
            0 => StreamKind::Original,
            1 => StreamKind::Marked,
            k => return Err(Error::Format(format!("unknown stream kind {k}"))),
        };
        let levels = cur.u8()?;
        let tail_bits = cur.u16()?;
        let map_count = cur.u32()?;
        if map_count > total {
            return Err(Error::Format(format!("{map_count} map entries for {total} measurements")));
        }
        match kind {
            StreamKind::Original if levels != 0 || map_count != 0 || tail_bits != 0 => {
                return Err(Error::Format("original stream with embedding fields set".into()));
            }
            StreamKind::Marked if !(1..=16).contains(&levels) => {
                return Err(Error::Format(format!("marked stream with {levels} levels")));
            }
            _ => {}
        }
        let mut location_map = Vec::with_capacity(map_count as usize);
        for _ in 0..map_count {
            let i = cur.u32()?;
            if i >= total || location_map.last().is_some_and(|&p| i <= p) {
                return Err(Error::Format(format!("location map entry {i} out of order or range")));
            }
            location_map.push(i);
        }
        let values = match kind {
            StreamKind::Original => StreamValues::Original(
                (0..total).map(|_| cur.take(2).map(|b| i16::from_le_bytes([b[0], b[1]]))).collect::<Result<_>>()?,
            ),
            StreamKind::Marked => {
                let values = (0..total - map_count).map(|_| cur.i32()).collect::<Result<_>>()?;
                StreamValues::Marked {
                    values,
                    checksum: cur.u32()?,
                }
            }
        };
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(Self {
            header: StreamFileHeader {
                matrix_kind,
                order,
                total,
                seed,
                kind,
                levels,
                tail_bits,
                map_count,
            },
            location_map,
            values,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keystream::ConstantKey;
    use crate::rdh::{embed_values, EmbedParams};

    fn desc() -> OperatorDescriptor {
        OperatorDescriptor {
            kind: MatrixKind::ScrambledHadamard,
            order: 64,
            rows: 5,
            seed: 0x0102_0304_0506_0708,
        }
    }

    #[test]
    fn original_layout() {
        let s = MeasurementStream {
            values: vec![1, -2, 3, 0, 7],
            descriptor: desc(),
        };
        let f = StreamFile::from_original(&s).unwrap();
        let b = f.to_bytes();
        assert_eq!(b.len(), HEADER_BYTES + 10);
        assert_eq!(&b[..6], b"CSWM\x01\x00");
        assert_eq!(&b[6..10], &64u32.to_le_bytes());
        assert_eq!(&b[14..22], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&b[HEADER_BYTES + 2..HEADER_BYTES + 4], &[0xFE, 0xFF]);
        assert_eq!(StreamFile::from_bytes(&b).unwrap(), f);
        assert_eq!(f.original_stream().unwrap(), s);
    }

    #[test]
    fn marked_round_trip() {
        let ys = vec![-8i16, -4, 2, 22, 23];
        let p = EmbedParams::new(7, 10).unwrap();
        let m = embed_values(ys.iter().copied(), &p, ConstantKey::zeros()).unwrap();
        let f = StreamFile::from_marked(&m, desc(), &ys).unwrap();
        let b = f.to_bytes();
        assert_eq!(b.len(), HEADER_BYTES + 4 * 2 + 4 * 3 + 4);
        let g = StreamFile::from_bytes(&b).unwrap();
        assert_eq!(g, f);
        let back = g.marked_stream().unwrap();
        assert_eq!(back.values, m.values);
        assert_eq!(back.location_map, m.location_map);
        assert_eq!(back.tail_bits, 11);
        assert_eq!(f.checksum(), Some(stream_checksum(&ys, Some(3))));
    }

    #[test]
    fn rejects_corruption() {
        let s = MeasurementStream {
            values: vec![1, 2],
            descriptor: desc(),
        };
        let b = StreamFile::from_original(&s).unwrap().to_bytes();
        assert!(StreamFile::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(StreamFile::from_bytes(&extra).is_err());
        let mut magic = b.clone();
        magic[0] = b'X';
        assert!(StreamFile::from_bytes(&magic).is_err());
        let mut kind = b;
        kind[5] = 9;
        assert!(StreamFile::from_bytes(&kind).is_err());
    }
}
