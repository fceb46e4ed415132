//! `AMCS` files.
//!
//! ```text
//! "AMCS" | u16 version=1 | u32 feature dim
//! mean: dim x f64 | scale: dim x f64 | u8 machine count
//! per machine: u32 n_sv | f64 gamma | f64 bias | f64 C
//!              n_sv x f64 dual coefficients | n_sv * dim x f64 support vectors
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{BinarySvm, OvaSvm, Standardizer};
use crate::codec::{self, SVM_MAGIC};
use crate::error::{FormatError, Result};

pub const SVM_VERSION: u16 = 1;

pub fn write_svm<W: Write>(w: &mut W, svm: &OvaSvm) -> Result<()> {
    codec::write_header(w, SVM_MAGIC, SVM_VERSION)?;
    w.write_u32::<LittleEndian>(svm.dim() as u32)?;
    codec::write_f64s(w, &svm.standardizer.mean)?;
    codec::write_f64s(w, &svm.standardizer.scale)?;
    w.write_u8(svm.machines.len() as u8)?;
    for m in &svm.machines {
        w.write_u32::<LittleEndian>(m.n_support() as u32)?;
        codec::write_f64s(w, &[m.gamma, m.bias, m.c])?;
        codec::write_f64s(w, &m.dual_coeffs)?;
        codec::write_f64s(w, &m.support_vectors)?;
    }
    Ok(())
}

pub fn read_svm<R: Read>(r: &mut R) -> Result<OvaSvm> {
    codec::read_header(r, SVM_MAGIC, "svm", SVM_VERSION)?;
    let dim = codec::read_u32(r, "feature dim")? as usize;
    let mean = codec::read_f64s(r, dim, "standardisation mean")?;
    let scale = codec::read_f64s(r, dim, "standardisation scale")?;
    let count = r
        .read_u8()
        .map_err(|_| FormatError::Truncated("machine count".into()))?;
    let mut machines = Vec::with_capacity(count as usize);
    for k in 0..count {
        let n_sv = codec::read_u32(r, "support vector count")? as usize;
        let head = codec::read_f64s(r, 3, "machine header")?;
        let dual_coeffs = codec::read_f64s(r, n_sv, "dual coefficients")?;
        let support_vectors = codec::read_f64s(r, n_sv * dim, "support vectors")?;
        if !(head[0] > 0.0) {
            return Err(FormatError::Invalid(format!("machine {k}: gamma {}", head[0])).into());
        }
        machines.push(BinarySvm {
            dim,
            support_vectors,
            dual_coeffs,
            gamma: head[0],
            bias: head[1],
            c: head[2],
        });
    }
    OvaSvm::new(Standardizer { mean, scale }, machines).map_err(|e| FormatError::Invalid(e.to_string()).into())
}

pub fn save_svm(svm: &OvaSvm, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_svm(&mut w, svm)?;
    w.flush()?;
    Ok(())
}

pub fn load_svm(path: impl AsRef<Path>) -> Result<OvaSvm> {
    read_svm(&mut BufReader::new(File::open(path)?))
}
