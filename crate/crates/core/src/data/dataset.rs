//! On-disk dataset layout: `<dir>/manifest.txt` lists one subject id per
//! line; each subject has `<id>.vol.svol` and `<id>.mask.svol`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{
    derive_seed, generate_phantom, read_mask, read_volume, write_mask, write_volume, DataError, Mask, PhantomSpec, Volume,
};

pub const MANIFEST: &str = "manifest.txt";

pub fn subject_id(index: usize) -> String {
    format!("subj_{index:04}")
}

pub fn volume_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.vol.svol"))
}

pub fn mask_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.mask.svol"))
}

pub fn write_manifest(dir: &Path, ids: &[String]) -> Result<(), DataError> {
    let path = dir.join(MANIFEST);
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<String>, DataError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn load_subject(dir: &Path, id: &str) -> Result<(Volume, Mask), DataError> {
    let v = read_volume(volume_path(dir, id))?;
    let m = read_mask(mask_path(dir, id))?;
    if v.extents() != m.extents() {
        return Err(DataError::PairMismatch {
            id: id.to_string(),
            volume: v.extents(),
            mask: m.extents(),
        });
    }
    Ok((v, m))
}

/// `count` phantoms; subject `i` is generated from
/// `derive_seed(spec.seed, i)`.
pub fn phantom_dataset(spec: &PhantomSpec, count: usize) -> Result<Vec<(String, Volume, Mask)>, DataError> {
    spec.validate()?;
    (0..count)
        .map(|i| {
            let (v, m) = generate_phantom(&spec.with_seed(derive_seed(spec.seed, i as u64)))?;
            Ok((subject_id(i), v, m))
        })
        .collect()
}

/// Writes a phantom dataset and its manifest, creating `dir` if needed.
/// Returns the subject ids.
pub fn write_phantom_dataset(spec: &PhantomSpec, count: usize, dir: &Path) -> Result<Vec<String>, DataError> {
    let subjects = phantom_dataset(spec, count)?;
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut ids = Vec::with_capacity(count);
    for (id, v, m) in subjects {
        write_volume(volume_path(dir, &id), &v)?;
        write_mask(mask_path(dir, &id), &m)?;
        ids.push(id);
    }
    write_manifest(dir, &ids)?;
    Ok(ids)
}
