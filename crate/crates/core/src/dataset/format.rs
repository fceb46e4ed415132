//! `AMCD` dataset files.
//!
//! ```text
//! "AMCD" | u16 version=1 | u32 count | u8 class count
//! class table: per class u8 byte length + UTF-8 name
//! per example: i8 snr_db | u8 label | 256 x f32 LE (row-major 2x128)
//! trailing blocks (optional): 4-byte tag | u32 LE length | payload
//! ```
//!
//! The only trailing block read here is `AMCP` (u8 provenance, u64 seed).
//! Files without it load as imported data with seed 0. Other blocks, such as
//! the attack metadata block, are returned to the caller untouched.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DatasetBundle, IqFrame, LabeledExample, Provenance, FRAME_SIZE};
use crate::codec::{self, DATASET_MAGIC};
use crate::error::{Error, FormatError, Result};

pub const DATASET_VERSION: u16 = 1;
const PROVENANCE_TAG: [u8; 4] = *b"AMCP";

pub fn write_dataset<W: Write>(w: &mut W, bundle: &DatasetBundle, extra_blocks: &[([u8; 4], Vec<u8>)]) -> Result<()> {
    codec::write_header(w, DATASET_MAGIC, DATASET_VERSION)?;
    let count =
        u32::try_from(bundle.len()).map_err(|_| Error::InvalidArgument("too many examples for the format".into()))?;
    w.write_u32::<LittleEndian>(count)?;
    let n_classes =
        u8::try_from(bundle.class_names.len()).map_err(|_| Error::InvalidArgument("too many classes".into()))?;
    w.write_u8(n_classes)?;
    for name in &bundle.class_names {
        let bytes = name.as_bytes();
        let len =
            u8::try_from(bytes.len()).map_err(|_| Error::InvalidArgument(format!("class name {name:?} too long")))?;
        w.write_u8(len)?;
        w.write_all(bytes)?;
    }
    for ex in &bundle.examples {
        w.write_i8(ex.snr_db)?;
        w.write_u8(ex.label)?;
        codec::write_f32s(w, ex.frame.as_slice().iter().map(|&v| v as f32))?;
    }
    let mut prov = Vec::with_capacity(9);
    prov.push(match bundle.provenance {
        Provenance::Synthetic => 0u8,
        Provenance::Imported => 1u8,
    });
    prov.extend_from_slice(&bundle.seed.to_le_bytes());
    write_block(w, PROVENANCE_TAG, &prov)?;
    for (tag, payload) in extra_blocks {
        write_block(w, *tag, payload)?;
    }
    Ok(())
}

fn write_block<W: Write>(w: &mut W, tag: [u8; 4], payload: &[u8]) -> Result<()> {
    w.write_all(&tag)?;
    w.write_u32::<LittleEndian>(payload.len() as u32)?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads a dataset and returns it with any trailing blocks it did not consume.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<(DatasetBundle, Vec<([u8; 4], Vec<u8>)>)> {
    codec::read_header(r, DATASET_MAGIC, "dataset", DATASET_VERSION)?;
    let count = codec::read_u32(r, "example count")? as usize;
    let n_classes = r.read_u8().map_err(|_| FormatError::Truncated("class count".into()))?;
    let mut class_names = Vec::with_capacity(n_classes as usize);
    for i in 0..n_classes {
        let len = r
            .read_u8()
            .map_err(|_| FormatError::Truncated(format!("class name {i}")))?;
        let mut buf = vec![0u8; len as usize];
        r.read_exact(&mut buf)
            .map_err(|_| FormatError::Truncated(format!("class name {i}")))?;
        class_names
            .push(String::from_utf8(buf).map_err(|_| FormatError::Invalid(format!("class name {i} is not UTF-8")))?);
    }
    let mut examples = Vec::with_capacity(count.min(1 << 20));
    let mut raw = vec![0f32; FRAME_SIZE];
    for i in 0..count {
        let snr_db = r
            .read_i8()
            .map_err(|_| FormatError::Truncated(format!("example {i}")))?;
        let label = r
            .read_u8()
            .map_err(|_| FormatError::Truncated(format!("example {i}")))?;
        r.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|_| FormatError::Truncated(format!("example {i} samples")))?;
        let frame = IqFrame::from_vec(raw.iter().map(|&v| v as f64).collect())
            .map_err(|e| FormatError::Invalid(format!("example {i}: {e}")))?;
        examples.push(LabeledExample { frame, label, snr_db });
    }

    let mut provenance = Provenance::Imported;
    let mut seed = 0;
    let mut blocks = Vec::new();
    loop {
        let mut tag = [0u8; 4];
        let got = read_fully(r, &mut tag)?;
        if got == 0 {
            break;
        }
        if got < 4 {
            return Err(FormatError::Truncated("trailing block tag".into()).into());
        }
        let len = codec::read_u32(r, "trailing block length")? as usize;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)
            .map_err(|_| FormatError::Truncated("trailing block payload".into()))?;
        if tag == PROVENANCE_TAG {
            if len != 9 {
                return Err(FormatError::Invalid("provenance block length".into()).into());
            }
            provenance = match payload[0] {
                0 => Provenance::Synthetic,
                1 => Provenance::Imported,
                p => {
                    return Err(FormatError::Invalid(format!("provenance code {p}")).into());
                }
            };
            seed = u64::from_le_bytes(payload[1..9].try_into().unwrap());
        } else {
            blocks.push((tag, payload));
        }
    }

    let bundle = DatasetBundle {
        examples,
        class_names,
        provenance,
        seed,
    };
    bundle.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((bundle, blocks))
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got)
}

pub fn save_dataset(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, bundle, &[])?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(read_dataset(&mut r)?.0)
}
