use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("{what}: cannot read {}", path.display()))
}

/// Files with `extension` under each path; directories are listed one level
/// deep, plain files are taken as given. Sorted for stable processing.
pub fn collect(paths: &[PathBuf], extension: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries =
                fs::read_dir(p).with_context(|| format!("cannot list {}", p.display()))?;
            for entry in entries {
                let path = entry?.path();
                if path.is_file() && path.extension().is_some_and(|e| e == extension) {
                    out.push(path);
                }
            }
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("no such file or directory: {}", p.display());
        }
    }
    out.sort();
    Ok(out)
}

/// Creates `dir`; refuses a non-empty one unless `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("cannot list {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            );
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Writes `contents`, refusing to replace an existing file unless `force`.
pub fn write(path: &Path, contents: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists (use --force to overwrite)", path.display());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Rejects ids that would escape the output directory.
pub fn file_stem_for(frame_id: &str) -> Result<&str> {
    if frame_id.is_empty() || frame_id.contains(['/', '\\']) || frame_id == "." || frame_id == ".."
    {
        bail!("frame_id {frame_id:?} cannot be used as a file name");
    }
    Ok(frame_id)
}
