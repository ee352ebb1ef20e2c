//! In-memory output set committed with write-then-rename.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }

    /// Renders `name` through a writer callback.
    pub fn render(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> pvhier::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    /// Writes every file to a hidden temporary next to its target, then
    /// renames them all into place.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |what: &str, p: &Path, e: std::io::Error| CliError::data(format!("{what} {}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, data) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, data) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(io("cannot write", &tmp, e));
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut done = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            fs::rename(&tmp, &target).map_err(|e| io("cannot rename", &tmp, e))?;
            done.push(target);
        }
        Ok(done)
    }
}
