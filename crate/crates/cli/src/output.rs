use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult, Command, Global};

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to repeat a run: `rmtk rerun <dir>/manifest.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub global: Global,
    pub command: Command,
    pub outputs: Vec<String>,
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.root.join(name);
        let f = File::create(&path)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_owned());
        Ok(BufWriter::new(f))
    }

    pub fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<File>) -> rmtk::Result<()>,
    ) -> CliResult<()> {
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self, global: &Global, command: &Command) -> CliResult<()> {
        let outputs = std::mem::take(&mut self.written);
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            global: global.clone(),
            command: command.clone(),
            outputs,
        };
        self.json(MANIFEST, &manifest)
    }
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
