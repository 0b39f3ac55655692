pub mod eval;
pub mod gradcam;
pub mod losslab;
pub mod shapes;
pub mod split;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

pub(crate) fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
