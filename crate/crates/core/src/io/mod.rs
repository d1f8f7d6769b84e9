//! On-disk formats: binary fields (`PHF1`), trajectory and parametric
//! manifests, the content-addressed plan cache (`PLN1`) and CSV tables.
//!
//! Every file is written through [`atomic_write`], so readers never observe a
//! partially written artifact.

mod bytes;
mod csv;
mod manifest;
mod phf;
mod plan_cache;

use std::fs;
use std::path::Path;

pub use csv::CsvTable;
pub use manifest::{
    parse_key_values, read_parametric_manifest, read_trajectory, write_parametric_manifest, write_trajectory,
    ParametricEntry,
};
pub use phf::{decode_field, encode_field, read_field, write_field};
pub use plan_cache::PlanCache;

use crate::error::Result;

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp.{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let entries: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
