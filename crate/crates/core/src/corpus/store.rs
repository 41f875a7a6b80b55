//! Content-addressed artifact store.
//!
//! Layout under the root:
//!
//! ```text
//! objects/<2 hex>/<62 hex>    blob, named by its SHA-256
//! refs/<key>                  "<kind> <version> <sha256>"
//! ```
//!
//! Every file is written to a temporary name and renamed into place, so
//! readers never observe a partial write.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::codec::Artifact;
use crate::{Error, Result};

/// Environment variable overriding the store root.
pub const STORE_ENV: &str = "MIMICRY_STORE";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn validate_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && !key.starts_with('/')
        && key
            .split('/')
            .all(|seg| !seg.is_empty() && seg != "." && seg != "..")
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '/'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid store key {key:?}")))
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("objects"))?;
        std::fs::create_dir_all(root.join("refs"))?;
        Ok(Store { root })
    }

    /// Opens the store at `$MIMICRY_STORE`, falling back to `default`.
    pub fn from_env(default: impl Into<PathBuf>) -> Result<Self> {
        match std::env::var_os(STORE_ENV) {
            Some(v) if !v.is_empty() => Store::open(PathBuf::from(v)),
            _ => Store::open(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, digest: &str) -> PathBuf {
        self.root.join("objects").join(&digest[..2]).join(&digest[2..])
    }

    fn ref_path(&self, key: &str) -> PathBuf {
        self.root.join("refs").join(key)
    }

    /// Stores raw bytes and returns their hex digest.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        let digest = hex_digest(bytes);
        let path = self.object_path(&digest);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(digest)
    }

    pub fn put<A: Artifact>(&self, key: &str, artifact: &A) -> Result<String> {
        validate_key(key)?;
        let digest = self.put_blob(&artifact.to_bytes())?;
        let line = format!("{} {} {}\n", A::KIND, A::VERSION, digest);
        write_atomic(&self.ref_path(key), line.as_bytes())?;
        Ok(digest)
    }

    /// The digest recorded for `key`, if any.
    pub fn digest(&self, key: &str) -> Result<Option<String>> {
        validate_key(key)?;
        match std::fs::read_to_string(self.ref_path(key)) {
            Ok(line) => Ok(line.split_whitespace().nth(2).map(str::to_string)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.ref_path(key).is_file()
    }

    pub fn get<A: Artifact>(&self, key: &str) -> Result<A> {
        validate_key(key)?;
        let line = match std::fs::read_to_string(self.ref_path(key)) {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingKey(key.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Corrupt(format!("malformed ref for {key}")));
        }
        let expected = format!("{} v{}", A::KIND, A::VERSION);
        let found = format!("{} v{}", parts[0], parts[1]);
        if expected != found {
            return Err(Error::VersionMismatch {
                key: key.to_string(),
                expected,
                found,
            });
        }
        let bytes = std::fs::read(self.object_path(parts[2]))?;
        if hex_digest(&bytes) != parts[2] {
            return Err(Error::Corrupt(format!("digest mismatch for {key}")));
        }
        A::from_bytes(&bytes).map_err(|e| match e {
            Error::VersionMismatch { expected, found, .. } => Error::VersionMismatch {
                key: key.to_string(),
                expected,
                found,
            },
            other => other,
        })
    }

    /// Keys under a prefix, sorted.
    pub fn keys(&self, prefix: &str) -> Result<Vec<String>> {
        let base = self.root.join("refs");
        let mut out = Vec::new();
        let mut stack = vec![base.clone()];
        while let Some(dir) = stack.pop() {
            let entries = match std::fs::read_dir(&dir) {
                Ok(e) => e,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(e.into()),
            };
            for entry in entries {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if let Ok(rel) = path.strip_prefix(&base) {
                    let key = rel.to_string_lossy().replace('\\', "/");
                    if key.starts_with(prefix) && !key.rsplit('/').next().unwrap_or("").starts_with('.') {
                        out.push(key);
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
