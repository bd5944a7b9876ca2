//! Content-addressed object store.
//!
//! Layout under the root directory:
//!
//! ```text
//! objects/<kind>/<sha256>.json     immutable objects, named by content hash
//! truncations/<model>/<stage>.ref  ref of the model truncated at that stage
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Model,
    Input,
    Dataset,
    Result,
}

impl Kind {
    pub fn dir(self) -> &'static str {
        match self {
            Kind::Model => "models",
            Kind::Input => "inputs",
            Kind::Dataset => "datasets",
            Kind::Result => "results",
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed ref '{0}'")]
    BadRef(String),
    #[error("no {kind} with ref {reference}")]
    NotFound { kind: &'static str, reference: String },
    #[error("stored object {0} is corrupt: {1}")]
    Corrupt(String, serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Canonical bytes of `value`: compact JSON with struct fields in declaration
/// order and maps sorted by key.
pub fn canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("store objects serialize to JSON")
}

/// Hex SHA-256 of the canonical bytes.
pub fn content_ref<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(canonical_bytes(value)))
}

fn check_ref(reference: &str) -> Result<(), StoreError> {
    if reference.len() == 64 && reference.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        Ok(())
    } else {
        Err(StoreError::BadRef(reference.to_string()))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` unless it exists, via a temporary file and a
/// rename so readers never see partial objects.
fn write_once(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if path.exists() {
        return Ok(());
    }
    let dir = path.parent().expect("object paths have a parent");
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("objects"))?;
        fs::create_dir_all(root.join("truncations"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, kind: Kind, reference: &str) -> PathBuf {
        self.root.join("objects").join(kind.dir()).join(format!("{reference}.json"))
    }

    pub fn put<T: Serialize>(&self, kind: Kind, value: &T) -> Result<String, StoreError> {
        let bytes = canonical_bytes(value);
        let reference = hex::encode(Sha256::digest(&bytes));
        write_once(&self.object_path(kind, &reference), &bytes)?;
        Ok(reference)
    }

    pub fn contains(&self, kind: Kind, reference: &str) -> bool {
        check_ref(reference).is_ok() && self.object_path(kind, reference).exists()
    }

    pub fn get_bytes(&self, kind: Kind, reference: &str) -> Result<Vec<u8>, StoreError> {
        check_ref(reference)?;
        match fs::read(self.object_path(kind, reference)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound {
                kind: kind.dir(),
                reference: reference.to_string(),
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, kind: Kind, reference: &str) -> Result<T, StoreError> {
        let bytes = self.get_bytes(kind, reference)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(reference.to_string(), e))
    }

    fn truncation_path(&self, model: &str, stage: usize) -> PathBuf {
        self.root.join("truncations").join(model).join(format!("{stage}.ref"))
    }

    /// Records `truncated` as `model` cut at `stage`. Truncation is
    /// deterministic, so a second writer stores the same ref.
    pub fn set_truncation(&self, model: &str, stage: usize, truncated: &str) -> Result<(), StoreError> {
        check_ref(model)?;
        check_ref(truncated)?;
        let path = self.truncation_path(model, stage);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        let tmp = path.with_extension(format!("tmp{}", TMP_COUNTER.fetch_add(1, Ordering::Relaxed)));
        fs::write(&tmp, truncated)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn truncation(&self, model: &str, stage: usize) -> Result<Option<String>, StoreError> {
        check_ref(model)?;
        match fs::read_to_string(self.truncation_path(model, stage)) {
            Ok(s) => {
                let s = s.trim().to_string();
                check_ref(&s)?;
                Ok(Some(s))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
