//! Model files on shared storage.

use std::io::Write;
use std::path::Path;
use std::time::SystemTime;

use anyhow::Context;
use dheb_core::FittedModel;

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers see either the old file or the new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming model into {}", path.display()))?;
    Ok(())
}

pub fn save(path: &Path, model: &FittedModel, feature_names: &[String]) -> anyhow::Result<()> {
    write_atomic(path, &model.to_bytes(feature_names)?)
}

pub fn load(path: &Path) -> anyhow::Result<(FittedModel, Vec<String>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    FittedModel::from_bytes(&bytes).with_context(|| format!("loading model {}", path.display()))
}

/// Identity of the file currently at a path; changes whenever a new file
/// is renamed over it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileStamp {
    len: u64,
    modified: Option<SystemTime>,
    inode: u64,
}

pub fn stamp(path: &Path) -> std::io::Result<FileStamp> {
    let meta = std::fs::metadata(path)?;
    #[cfg(unix)]
    let inode = std::os::unix::fs::MetadataExt::ino(&meta);
    #[cfg(not(unix))]
    let inode = 0;
    Ok(FileStamp {
        len: meta.len(),
        modified: meta.modified().ok(),
        inode,
    })
}
