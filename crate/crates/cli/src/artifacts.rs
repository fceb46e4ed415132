//! File plumbing: atomic writes, quarantine of partial outputs, the run
//! lock, and the attack-set metadata block.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use amcdef_core::attacks::AttackOutcome;
use amcdef_core::codec::content_hash;
use amcdef_core::dataset::{read_dataset, write_dataset, DatasetBundle, LabeledExample};
use amcdef_core::FormatError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{CliError, CliResult};

/// Trailing dataset block carrying per-example attack metadata.
pub const ATTACK_BLOCK: [u8; 4] = *b"AMCA";

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(content_hash(&bytes))
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through `<path>.partial` and renames into place on success. On
/// failure the partial file is moved to `quarantine` under its content hash.
pub fn write_atomic<F>(path: &Path, quarantine: Option<&Path>, write: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> CliResult<()>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    let partial = partial_path(path);
    let mut buf = Vec::new();
    let produced = write(&mut buf);
    let result = produced.and_then(|()| {
        let mut f = File::create(&partial).map_err(|e| CliError::io(format!("creating {}", partial.display()), e))?;
        f.write_all(&buf)
            .and_then(|()| f.sync_all())
            .map_err(|e| CliError::io(format!("writing {}", partial.display()), e))?;
        fs::rename(&partial, path).map_err(|e| CliError::io(format!("renaming {}", partial.display()), e))
    });
    if result.is_err() {
        if !buf.is_empty() && !partial.exists() {
            let _ = fs::write(&partial, &buf);
        }
        if let Some(q) = quarantine {
            let _ = quarantine_file(&partial, q);
        }
    }
    result
}

/// Moves a file into `dir` as `<sha256>-<original name>`.
pub fn quarantine_file(path: &Path, dir: &Path) -> CliResult<PathBuf> {
    let hash = hash_file(path)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    let target = dir.join(format!("{hash}-{name}"));
    fs::rename(path, &target).map_err(|e| CliError::io(format!("quarantining {}", path.display()), e))?;
    Ok(target)
}

/// Exclusive ownership of a run directory for the lifetime of the value.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "output directory {} is locked by another run ({} exists)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackRecord {
    /// Index of the original example in the source dataset.
    pub source_index: u32,
    pub pnr_db: f64,
    pub epsilon: f64,
    pub target_class: Option<u8>,
    pub succeeded: bool,
    pub evaded_rejection: Option<bool>,
}

impl AttackRecord {
    pub fn from_outcome(source_index: usize, pnr_db: f64, o: &AttackOutcome) -> Self {
        AttackRecord {
            source_index: source_index as u32,
            pnr_db,
            epsilon: o.epsilon_used,
            target_class: o.target_class.map(|t| t as u8),
            succeeded: o.succeeded,
            evaded_rejection: o.evaded_rejection,
        }
    }
}

/// Block layout: u32 count, then per record u32 source index, f64 PNR dB,
/// f64 epsilon, u8 target (255 = none), u8 flags (bit 0 succeeded, bit 1
/// rejection outcome present, bit 2 rejection evaded).
fn encode_records(records: &[AttackRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + records.len() * 22);
    out.write_u32::<LittleEndian>(records.len() as u32).unwrap();
    for r in records {
        out.write_u32::<LittleEndian>(r.source_index).unwrap();
        out.write_f64::<LittleEndian>(r.pnr_db).unwrap();
        out.write_f64::<LittleEndian>(r.epsilon).unwrap();
        out.write_u8(r.target_class.unwrap_or(u8::MAX)).unwrap();
        let flags = r.succeeded as u8
            | (r.evaded_rejection.is_some() as u8) << 1
            | ((r.evaded_rejection == Some(true)) as u8) << 2;
        out.write_u8(flags).unwrap();
    }
    out
}

fn decode_records(mut bytes: &[u8]) -> Result<Vec<AttackRecord>, FormatError> {
    let trunc = |_| FormatError::Truncated("attack metadata".into());
    let n = bytes.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let source_index = bytes.read_u32::<LittleEndian>().map_err(trunc)?;
        let pnr_db = bytes.read_f64::<LittleEndian>().map_err(trunc)?;
        let epsilon = bytes.read_f64::<LittleEndian>().map_err(trunc)?;
        let target = bytes.read_u8().map_err(trunc)?;
        let flags = bytes.read_u8().map_err(trunc)?;
        out.push(AttackRecord {
            source_index,
            pnr_db,
            epsilon,
            target_class: (target != u8::MAX).then_some(target),
            succeeded: flags & 1 != 0,
            evaded_rejection: (flags & 2 != 0).then_some(flags & 4 != 0),
        });
    }
    if !bytes.is_empty() {
        return Err(FormatError::Invalid("trailing bytes in attack metadata".into()));
    }
    Ok(out)
}

/// Adversarial frames as a dataset (true labels, original SNRs) with the
/// metadata block appended.
pub fn write_attack_set(
    w: &mut Vec<u8>,
    class_names: &[String],
    examples: Vec<LabeledExample>,
    records: &[AttackRecord],
) -> CliResult<()> {
    let bundle = DatasetBundle {
        examples,
        class_names: class_names.to_vec(),
        provenance: amcdef_core::dataset::Provenance::Imported,
        seed: 0,
    };
    write_dataset(w, &bundle, &[(ATTACK_BLOCK, encode_records(records))])?;
    Ok(())
}

pub fn read_attack_set(path: &Path) -> CliResult<(DatasetBundle, Vec<AttackRecord>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let (bundle, blocks) = read_dataset(&mut bytes.as_slice())?;
    let block = blocks
        .iter()
        .find(|(tag, _)| *tag == ATTACK_BLOCK)
        .ok_or_else(|| FormatError::Invalid(format!("{} has no attack metadata", path.display())))
        .map_err(amcdef_core::Error::from)?;
    let records = decode_records(&block.1).map_err(amcdef_core::Error::from)?;
    if records.len() != bundle.len() {
        return Err(amcdef_core::Error::from(FormatError::Invalid(format!(
            "{} metadata records for {} examples",
            records.len(),
            bundle.len()
        )))
        .into());
    }
    Ok((bundle, records))
}
