//! All-or-nothing output: files are written into a staging directory next
//! to the destination and only renamed into place once every file is
//! complete. Dropping an uncommitted [`Staged`] removes the staging area.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{CliError, CliResult};

pub struct Staged {
    dest: PathBuf,
    stage: TempDir,
    files: Vec<PathBuf>,
    created_dest: bool,
}

impl Staged {
    pub fn new(dest: &Path) -> CliResult<Self> {
        let created_dest = !dest.exists();
        std::fs::create_dir_all(dest).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dest.display())))?;
        let stage = tempfile::Builder::new()
            .prefix(".nhfa-staging-")
            .tempdir_in(dest)
            .map_err(|e| CliError::Runtime(format!("staging in {}: {e}", dest.display())))?;
        Ok(Self { dest: dest.to_path_buf(), stage, files: Vec::new(), created_dest })
    }

    /// Writes `rel` (relative to the destination) through `fill`.
    pub fn write(&mut self, rel: impl AsRef<Path>, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
        let rel = rel.as_ref();
        let path = self.stage.path().join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::runtime)?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(CliError::runtime)?);
        fill(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Runtime(format!("writing {}: {e}", rel.display())))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    pub fn write_str(&mut self, rel: impl AsRef<Path>, text: &str) -> CliResult<()> {
        self.write(rel, |w| w.write_all(text.as_bytes()))
    }

    /// Moves every staged file into the destination.
    pub fn commit(mut self) -> CliResult<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for rel in std::mem::take(&mut self.files) {
            let target = self.dest.join(&rel);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent).map_err(CliError::runtime)?;
            }
            std::fs::rename(self.stage.path().join(&rel), &target)
                .map_err(|e| CliError::Runtime(format!("moving {} into place: {e}", rel.display())))?;
            out.push(target);
        }
        self.created_dest = false;
        Ok(out)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        // An abandoned run leaves no trace, including a directory it created.
        if self.created_dest {
            let _ = std::fs::remove_dir_all(&self.dest);
        }
    }
}
