//! VCF1: the binary field-grid file format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"VCF1"
//! u32 height, u32 width, u32 channel_count
//! channel_count x (u16 name_len, name_len bytes of UTF-8)
//! height * width * channel_count x f32, channel-major planes, row-major within a plane
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{check_channel_names, FieldGrid};

pub const MAGIC: [u8; 4] = *b"VCF1";

/// Counts bytes that reached the underlying sink so I/O errors can report them.
struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        let mut rest = bytes;
        while !rest.is_empty() {
            match self.inner.write(rest) {
                Ok(0) => {
                    return Err(Error::io(
                        std::io::ErrorKind::WriteZero.into(),
                        self.written,
                    ))
                }
                Ok(n) => {
                    self.written += n as u64;
                    rest = &rest[n..];
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io(e, self.written)),
            }
        }
        Ok(())
    }
}

/// Serializes `grid` into `sink`, returning the number of bytes written.
/// Grids holding NaN or infinite values are rejected before anything is written.
pub fn write_field_grid<W: Write>(grid: &FieldGrid, sink: W) -> Result<u64> {
    grid.check_finite()?;
    let dims = [grid.height(), grid.width(), grid.channel_count()];
    for d in dims {
        if d > u32::MAX as usize {
            return Err(Error::Format(format!("dimension {d} does not fit in u32")));
        }
    }
    let mut out = CountingWriter {
        inner: sink,
        written: 0,
    };
    let mut header = Vec::with_capacity(16 + grid.channels().iter().map(|c| c.len() + 2).sum::<usize>());
    header.extend_from_slice(&MAGIC);
    for d in dims {
        header.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for name in grid.channels() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("channel name `{name}` longer than 65535 bytes")))?;
        header.extend_from_slice(&len.to_le_bytes());
        header.extend_from_slice(name.as_bytes());
    }
    out.put(&header)?;

    const CHUNK: usize = 16 * 1024;
    let mut buf = Vec::with_capacity(CHUNK * 4);
    for chunk in grid.data().chunks(CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.put(&buf)?;
    }
    out.inner.flush().map_err(|e| Error::io(e, out.written))?;
    Ok(out.written)
}

fn read_exact_or<R: Read>(src: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    src.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated header while reading {what}"))
        } else {
            Error::io(e, 0)
        }
    })
}

fn read_u32<R: Read>(src: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(src, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Parses a VCF1 stream. Trailing bytes after the payload are ignored.
pub fn read_field_grid<R: Read>(mut source: R) -> Result<FieldGrid> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut source, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            "VCF1"
        )));
    }
    let height = read_u32(&mut source, "height")? as usize;
    let width = read_u32(&mut source, "width")? as usize;
    let count = read_u32(&mut source, "channel count")? as usize;

    let mut channels = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let mut lb = [0u8; 2];
        read_exact_or(&mut source, &mut lb, "channel name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(lb) as usize];
        read_exact_or(&mut source, &mut name, "channel name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format(format!("channel {i} name is not UTF-8")))?;
        channels.push(name);
    }
    check_channel_names(&channels)?;

    let expected = (height as u64)
        .checked_mul(width as u64)
        .and_then(|v| v.checked_mul(count as u64))
        .ok_or_else(|| Error::Format("declared dimensions overflow".into()))?;
    let byte_len = expected
        .checked_mul(4)
        .ok_or_else(|| Error::Format("declared dimensions overflow".into()))?;

    let mut payload = Vec::new();
    source
        .by_ref()
        .take(byte_len)
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(e, 0))?;
    if (payload.len() as u64) < byte_len {
        return Err(Error::Length {
            expected,
            found: payload.len() as u64 / 4,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let grid = FieldGrid::new(height, width, channels, data)?;
    grid.check_finite()?;
    Ok(grid)
}

pub fn write_field_file(grid: &FieldGrid, path: &Path) -> Result<u64> {
    let f = File::create(path).map_err(|e| Error::io(e, 0))?;
    write_field_grid(grid, BufWriter::new(f))
}

pub fn read_field_file(path: &Path) -> Result<FieldGrid> {
    let f = File::open(path).map_err(|e| Error::io(e, 0))?;
    read_field_grid(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one(v: f32) -> FieldGrid {
        FieldGrid::new(1, 1, vec!["a".into()], vec![v]).unwrap()
    }

    #[test]
    fn single_zero_value_layout() {
        let mut buf = Vec::new();
        let n = write_field_grid(&one_by_one(0.0), &mut buf).unwrap();
        let mut expected = b"VCF1".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, b'a']);
        expected.extend_from_slice(&[0, 0, 0, 0]);
        assert_eq!(buf, expected);
        assert_eq!(n, expected.len() as u64);
        assert!(read_field_grid(&buf[..]).unwrap().bit_eq(&one_by_one(0.0)));
    }

    #[test]
    fn nan_rejected_before_write() {
        let mut buf = Vec::new();
        let err = write_field_grid(&one_by_one(f32::NAN), &mut buf).unwrap_err();
        assert!(matches!(err, Error::InvalidValue(_)));
        assert!(buf.is_empty());
    }

    #[test]
    fn bad_magic() {
        let err = read_field_grid(&b"XXXX\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn truncated_payload() {
        let g = FieldGrid::zeros(2, 2, vec!["a".into()]).unwrap();
        let mut buf = Vec::new();
        write_field_grid(&g, &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        let err = read_field_grid(&buf[..]).unwrap_err();
        assert!(matches!(err, Error::Length { expected: 4, found: 3 }), "{err}");
    }

    #[test]
    fn duplicate_names() {
        let mut buf = b"VCF1".to_vec();
        for d in [1u32, 1, 2] {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        buf.extend_from_slice(&[1, 0, b'a', 1, 0, b'a']);
        buf.extend_from_slice(&[0u8; 8]);
        assert!(matches!(read_field_grid(&buf[..]), Err(Error::Schema(_))));
    }

    struct FailAfter(usize);

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if self.0 == 0 {
                return Err(std::io::Error::other("disk full"));
            }
            let n = buf.len().min(self.0);
            self.0 -= n;
            Ok(n)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_reports_bytes_written() {
        let g = FieldGrid::zeros(4, 4, vec!["a".into()]).unwrap();
        match write_field_grid(&g, FailAfter(20)) {
            Err(Error::Io { bytes_written, .. }) => assert_eq!(bytes_written, 20),
            other => panic!("unexpected {other:?}"),
        }
    }
}
