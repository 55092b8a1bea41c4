//! Run manifest: every resolved setting, seed, and input digest, written
//! before work starts so a run can be reproduced exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pne_core::PneError;

/// FNV-1a 64-bit digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<u64, PneError> {
    let bytes = std::fs::read(path).map_err(|e| PneError::io(path, e))?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in &bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(hash)
}

pub struct Manifest {
    entries: Vec<(String, String)>,
    path: PathBuf,
}

impl Manifest {
    pub fn new(path: PathBuf, command: &str) -> Self {
        let mut m = Manifest {
            entries: Vec::new(),
            path,
        };
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis().to_string())
            .unwrap_or_default();
        m.set("started_unix_ms", &started);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn set_input(&mut self, key: &str, path: &Path) -> Result<(), PneError> {
        self.set(key, path.display());
        self.set(&format!("{}_fnv1a64", key), format!("{:016x}", file_digest(path)?));
        Ok(())
    }

    /// Writes all entries collected so far (called before the run starts).
    pub fn write(&self) -> Result<(), PneError> {
        let file = File::create(&self.path).map_err(|e| PneError::io(&self.path, e))?;
        let mut w = BufWriter::new(file);
        for (k, v) in &self.entries {
            writeln!(w, "{}\t{}", k, v).map_err(|e| PneError::io(&self.path, e))?;
        }
        w.flush().map_err(|e| PneError::io(&self.path, e))
    }

    /// Appends the wall-clock duration once the run finishes.
    pub fn finish(&self, wall_seconds: f64) -> Result<(), PneError> {
        let mut file = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| PneError::io(&self.path, e))?;
        writeln!(file, "wall_seconds\t{:.3}", wall_seconds).map_err(|e| PneError::io(&self.path, e))
    }
}
