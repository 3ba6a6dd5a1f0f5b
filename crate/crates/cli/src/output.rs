use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use drne_core::Error;

pub const UNCERTIFIED: u8 = 1;
pub const CONFIG_READ: u8 = 2;
pub const VALIDATION: u8 = 3;
pub const SOLVER: u8 = 4;
pub const MISSING_CONSTANTS: u8 = 5;
pub const IO: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Failure of a library call made after the config validated.
    pub fn from_run(e: Error) -> Self {
        match e {
            Error::MissingConstants(_) => Self::new(MISSING_CONSTANTS, e.to_string()),
            Error::Io(_) => Self::new(IO, e.to_string()),
            Error::InvalidGame(v) => Self::new(VALIDATION, v.join("\n")),
            Error::Config(_) | Error::Dimension { .. } => Self::new(VALIDATION, e.to_string()),
            _ => Self::new(SOLVER, e.to_string()),
        }
    }
}

pub fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Output directory that remembers every file written to it.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::new(IO, format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> drne_core::Result<()>,
    ) -> Result<(), Failure> {
        let path = self.dir.join(name);
        let io = |e: String| Failure::new(IO, format!("cannot write {}: {e}", path.display()));
        let file = File::create(&path).map_err(|e| io(e.to_string()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| io(e.to_string()))?;
        w.into_inner().map_err(|e| io(e.to_string()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}
