//! File writes that never clobber silently.

use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Written,
    /// The file already held exactly these bytes.
    Unchanged,
}

#[derive(Debug)]
pub enum WriteError {
    /// A file with different content is already there.
    Exists,
    Io(io::Error),
}

/// Writes `bytes` to `path`, creating parent directories. An existing file
/// is accepted only if its content is identical.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<WriteOutcome, WriteError> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => return Ok(WriteOutcome::Unchanged),
        Ok(_) => return Err(WriteError::Exists),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(WriteError::Io(e)),
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(WriteError::Io)?;
    }
    fs::write(path, bytes).map_err(WriteError::Io)?;
    Ok(WriteOutcome::Written)
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
