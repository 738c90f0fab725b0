//! File formats: time-tag files (binary and CSV), curve and fit-report
//! documents, and run manifests with content digests.

pub mod curves;
pub mod manifest;
pub mod tagfile;

use std::path::Path;

use crate::error::Result;

/// Write a file atomically: the content lands under a temporary name in
/// the target directory and is renamed into place, so failed commands never
/// leave partial outputs behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}
