//! Little-endian primitives shared by the artifact formats, plus content hashing.
//!
//! Every artifact starts with a 4-byte magic followed by a `u16` version.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{FormatError, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"AMCD";
pub const CNN_MAGIC: [u8; 4] = *b"AMCM";
pub const SVM_MAGIC: [u8; 4] = *b"AMCS";
pub const NR_MAGIC: [u8; 4] = *b"AMCN";

pub fn write_header<W: Write>(w: &mut W, magic: [u8; 4], version: u16) -> Result<()> {
    w.write_all(&magic)?;
    w.write_u16::<LittleEndian>(version)?;
    Ok(())
}

pub fn read_magic<R: Read>(r: &mut R, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)
        .map_err(|_| FormatError::Truncated("magic".into()))?;
    if found != expected {
        return Err(FormatError::BadMagic { expected, found }.into());
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R, magic: [u8; 4], what: &'static str, version: u16) -> Result<()> {
    read_magic(r, magic)?;
    let found = r
        .read_u16::<LittleEndian>()
        .map_err(|_| FormatError::Truncated(format!("{what} version")))?;
    if found != version {
        return Err(FormatError::Version {
            what,
            expected: version,
            found,
        }
        .into());
    }
    Ok(())
}

/// Reads exactly `n` little-endian f32 values.
pub fn read_f32s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f32>> {
    let mut out = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out)
        .map_err(|_| FormatError::Truncated(what.to_string()))?;
    Ok(out)
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = vec![0f64; n];
    r.read_f64_into::<LittleEndian>(&mut out)
        .map_err(|_| FormatError::Truncated(what.to_string()))?;
    Ok(out)
}

pub fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    Ok(r.read_u32::<LittleEndian>()
        .map_err(|_| FormatError::Truncated(what.to_string()))?)
}

/// SHA-256 of a byte slice, lowercase hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
