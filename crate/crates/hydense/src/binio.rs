//! Little-endian binary I/O helpers shared by the index and checkpoint
//! formats. Reads distinguish truncation from content mismatches.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32<W: Write>(w: &mut W, v: f32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// u32 length prefix followed by UTF-8 bytes.
pub(crate) fn write_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Truncated(what.to_string())
        } else {
            Error::io(what, e)
        }
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn read_f32<R: Read>(r: &mut R, what: &str) -> Result<f32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(f32::from_le_bytes(buf))
}

pub(crate) fn read_string<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let len = read_u32(r, what)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| Error::Truncated(format!("{what}: invalid UTF-8")))
}

pub(crate) fn read_bytes<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

/// Validate a 4-byte magic and a u32 format version.
pub(crate) fn read_header<R: Read>(r: &mut R, magic: [u8; 4], version: u32) -> Result<()> {
    let found: [u8; 4] = read_bytes(r, "magic")?;
    if found != magic {
        return Err(Error::MagicMismatch {
            expected: magic,
            found,
        });
    }
    let found_version = read_u32(r, "version")?;
    if found_version != version {
        return Err(Error::VersionMismatch {
            expected: version,
            found: found_version,
        });
    }
    Ok(())
}

/// Error if any bytes remain unread.
pub(crate) fn expect_eof<R: Read>(r: &mut R, what: &str) -> Result<()> {
    let mut buf = [0u8; 1];
    match r.read(&mut buf) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::Parse {
            path: what.to_string(),
            line: 0,
            message: "trailing bytes after declared content".into(),
        }),
        Err(e) => Err(Error::io(what, e)),
    }
}
