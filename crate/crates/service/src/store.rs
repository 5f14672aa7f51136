//! Durable per-project state: one JSON file replaced atomically on every
//! write, so a reader after a crash sees either the old or the new file.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::VideoRecord;

pub const STORE_FORMAT: &str = "stepcoin-store-v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreFile {
    pub format: String,
    pub videos: BTreeMap<String, VideoRecord>,
}

/// Reads the store, or `None` when it has never been written.
pub fn read_store(path: &Path) -> io::Result<Option<StoreFile>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let store: StoreFile = serde_json::from_slice(&bytes)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
    if store.format != STORE_FORMAT {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: expected format {STORE_FORMAT}, found {}", path.display(), store.format),
        ));
    }
    Ok(Some(store))
}

/// Writes `store` to a sibling temp file, fsyncs it, renames it over `path`
/// and fsyncs the directory. Returns only once the rename is durable.
pub fn write_store(path: &Path, videos: &BTreeMap<String, VideoRecord>) -> io::Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        format: &'a str,
        videos: &'a BTreeMap<String, VideoRecord>,
    }
    let bytes = serde_json::to_vec_pretty(&Out {
        format: STORE_FORMAT,
        videos,
    })
    .map_err(io::Error::other)?;

    let mut tmp_name = path.file_name().unwrap_or_default().to_owned();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        // Directory fsync is unsupported on some platforms; the rename
        // itself has already happened.
        if let Ok(d) = File::open(if dir.as_os_str().is_empty() { Path::new(".") } else { dir }) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
