//! Content-addressed response cache: one JSON file per request digest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RecognitionOutcome;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub outcome: RecognitionOutcome,
    /// Provider response body as received, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<CacheRecord>> {
        let path = self.path_for(digest);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Writes through a temporary file and a rename; concurrent writers of the
    /// same digest leave one complete record.
    pub fn put(&self, digest: &str, record: &CacheRecord) -> Result<()> {
        let path = self.path_for(digest);
        let tmp = self.dir.join(format!(
            ".{digest}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let body = serde_json::to_string_pretty(record)?;
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
