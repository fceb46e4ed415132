//! `AMCM` checkpoints.
//!
//! ```text
//! "AMCM" | u16 version=1 | u8 block count
//! per block: u8 name length + name | u8 rank | rank x u32 dims
//! then every block's values as f32 LE, in block order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Arch, CnnModel, Params, BLOCK_NAMES, KERNEL, ROWS};
use crate::codec::{self, CNN_MAGIC};
use crate::dataset::FRAME_LEN;
use crate::error::{FormatError, Result};
use crate::NUM_CLASSES;

pub const CNN_VERSION: u16 = 1;

fn block_dims(arch: Arch) -> [Vec<usize>; 8] {
    let Arch {
        conv1_filters: f1,
        conv2_filters: f2,
        dense_width: h,
    } = arch;
    [
        vec![f1, KERNEL],
        vec![f1],
        vec![f2, KERNEL, ROWS, f1],
        vec![f2],
        vec![h, FRAME_LEN, f2],
        vec![h],
        vec![NUM_CLASSES, h],
        vec![NUM_CLASSES],
    ]
}

pub fn write_cnn<W: Write>(w: &mut W, model: &CnnModel) -> Result<()> {
    codec::write_header(w, CNN_MAGIC, CNN_VERSION)?;
    w.write_u8(BLOCK_NAMES.len() as u8)?;
    for (name, dims) in BLOCK_NAMES.iter().zip(block_dims(model.arch())) {
        w.write_u8(name.len() as u8)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(dims.len() as u8)?;
        for d in dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
    }
    for block in model.params().blocks() {
        codec::write_f32s(w, block.iter().map(|&v| v as f32))?;
    }
    Ok(())
}

pub fn read_cnn<R: Read>(r: &mut R) -> Result<CnnModel> {
    codec::read_header(r, CNN_MAGIC, "checkpoint", CNN_VERSION)?;
    let trunc = |what: &str| FormatError::Truncated(format!("checkpoint {what}"));
    let count = r.read_u8().map_err(|_| trunc("block count"))?;
    if count as usize != BLOCK_NAMES.len() {
        return Err(FormatError::Invalid(format!("expected 8 blocks, found {count}")).into());
    }
    let mut dims = Vec::with_capacity(8);
    for expected in BLOCK_NAMES {
        let len = r.read_u8().map_err(|_| trunc("block name"))?;
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name).map_err(|_| trunc("block name"))?;
        if name != expected.as_bytes() {
            return Err(FormatError::Invalid(format!(
                "expected block {expected}, found {}",
                String::from_utf8_lossy(&name)
            ))
            .into());
        }
        let rank = r.read_u8().map_err(|_| trunc("block rank"))?;
        let mut d = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            d.push(codec::read_u32(r, "block dims")? as usize);
        }
        dims.push(d);
    }
    let arch = Arch {
        conv1_filters: dims[0].first().copied().unwrap_or(0),
        conv2_filters: dims[2].first().copied().unwrap_or(0),
        dense_width: dims[4].first().copied().unwrap_or(0),
    };
    if dims.as_slice() != block_dims(arch).as_slice() {
        return Err(FormatError::Invalid(format!("layer shapes do not chain: {dims:?}")).into());
    }
    let mut params = Params::zeros(arch);
    for (name, block) in BLOCK_NAMES.iter().zip(params.blocks_mut()) {
        let values = codec::read_f32s(r, block.len(), name)?;
        for (dst, v) in block.iter_mut().zip(values) {
            *dst = v as f64;
        }
    }
    CnnModel::from_params(arch, params).map_err(|e| FormatError::Invalid(e.to_string()).into())
}

pub fn save_cnn(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cnn(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_cnn(path: impl AsRef<Path>) -> Result<CnnModel> {
    read_cnn(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn round_trip_is_f32_exact() {
        let arch = Arch {
            conv1_filters: 3,
            conv2_filters: 2,
            dense_width: 5,
        };
        let m = CnnModel::new(arch, 4).unwrap();
        let mut buf = Vec::new();
        write_cnn(&mut buf, &m).unwrap();
        let back = read_cnn(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m.rounded_to_f32());
        let mut again = Vec::new();
        write_cnn(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn refuses_other_magic() {
        let mut buf = Vec::new();
        codec::write_header(&mut buf, *b"AMCD", 1).unwrap();
        assert!(matches!(
            read_cnn(&mut buf.as_slice()),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
    }
}
