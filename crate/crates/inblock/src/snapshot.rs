//! Digest-sealed state persistence.
//!
//! A snapshot is a single JSON object `{"version":…,"digest":…,"state":…}`:
//! the format version, the hex digest of the state bytes exactly as stored,
//! and the state itself. Restoring re-hashes the stored bytes, so any
//! corruption — a flipped bit, a truncation, a hand edit — is detected
//! before the state is deserialized. Writing is deterministic: the same
//! state always yields the same bytes, so snapshot → restore → snapshot is
//! the identity on files.

use crate::ledger::Hash32;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Bumped when the envelope or any persisted type changes incompatibly.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    /// The file is unreadable, unparsable, fails its digest, or holds a
    /// state that no longer deserializes.
    #[error("snapshot is corrupt: {0}")]
    CorruptSnapshot(String),
    #[error("snapshot format version {found} differs from supported version {expected}")]
    VersionMismatch { expected: u32, found: u32 },
}

/// Seals `state` into the snapshot envelope.
pub fn write_snapshot<T: Serialize>(state: &T) -> String {
    let state_json = serde_json::to_string(state).expect("state serializes");
    let digest = Hash32::of(state_json.as_bytes()).to_hex();
    format!("{{\"version\":{SNAPSHOT_VERSION},\"digest\":\"{digest}\",\"state\":{state_json}}}")
}

/// Opens an envelope, verifying version and digest before touching the
/// state.
pub fn read_snapshot<T: DeserializeOwned>(bytes: &str) -> Result<T, SnapshotError> {
    #[derive(Deserialize)]
    struct Envelope<'a> {
        version: u32,
        digest: String,
        #[serde(borrow)]
        state: &'a serde_json::value::RawValue,
    }
    let envelope: Envelope =
        serde_json::from_str(bytes).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
    if envelope.version != SNAPSHOT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            expected: SNAPSHOT_VERSION,
            found: envelope.version,
        });
    }
    let actual = Hash32::of(envelope.state.get().as_bytes()).to_hex();
    if actual != envelope.digest {
        return Err(SnapshotError::CorruptSnapshot(
            "digest does not match state bytes".to_string(),
        ));
    }
    serde_json::from_str(envelope.state.get())
        .map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))
}

/// [`write_snapshot`] to a file.
pub fn save_snapshot<T: Serialize>(state: &T, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, write_snapshot(state))
}

/// [`read_snapshot`] from a file.
pub fn load_snapshot<T: DeserializeOwned>(path: &Path) -> Result<T, SnapshotError> {
    let bytes = std::fs::read_to_string(path)
        .map_err(|e| SnapshotError::CorruptSnapshot(format!("reading {}: {e}", path.display())))?;
    read_snapshot(&bytes)
}
