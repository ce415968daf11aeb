//! Persisted index sets: one JSON object per split or selection event.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Val,
    Test,
    /// Labeled set at the start of a run (an initial fold).
    Labeled,
    Fold(usize),
    SelectedAt(usize),
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitRole::Train => f.write_str("train"),
            SplitRole::Val => f.write_str("val"),
            SplitRole::Test => f.write_str("test"),
            SplitRole::Labeled => f.write_str("labeled"),
            SplitRole::Fold(i) => write!(f, "fold-{i}"),
            SplitRole::SelectedAt(i) => write!(f, "selected-at-iteration-{i}"),
        }
    }
}

impl FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidIndexSet(format!("unknown split role `{s}`"));
        Ok(match s {
            "train" => SplitRole::Train,
            "val" => SplitRole::Val,
            "test" => SplitRole::Test,
            "labeled" => SplitRole::Labeled,
            _ => {
                if let Some(i) = s.strip_prefix("selected-at-iteration-") {
                    SplitRole::SelectedAt(i.parse().map_err(|_| bad())?)
                } else if let Some(i) = s.strip_prefix("fold-") {
                    SplitRole::Fold(i.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for SplitRole {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SplitRole {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
    pub iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSetFile {
    pub indices: Vec<usize>,
    pub dataset_id: String,
    pub dataset_size: usize,
    pub split_role: SplitRole,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct OnDisk {
    #[serde(flatten)]
    set: IndexSetFile,
    digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSetWarning {
    /// Stored digest does not match the file contents (edited by hand?).
    DigestMismatch { stored: String, computed: String },
    /// File was written by a run with a different configuration.
    ProvenanceMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedIndexSet {
    pub set: IndexSetFile,
    pub warnings: Vec<IndexSetWarning>,
}

impl IndexSetFile {
    pub fn new(
        indices: Vec<usize>,
        dataset_id: impl Into<String>,
        dataset_size: usize,
        split_role: SplitRole,
        provenance: Provenance,
    ) -> Result<Self> {
        let s = IndexSetFile {
            indices,
            dataset_id: dataset_id.into(),
            dataset_size,
            split_role,
            provenance,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        check_sorted_unique(&self.indices)?;
        if let Some(&last) = self.indices.last() {
            if last >= self.dataset_size {
                return Err(Error::InvalidIndexSet(format!(
                    "index {last} out of range for dataset of size {}",
                    self.dataset_size
                )));
            }
        }
        Ok(())
    }

    fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(&serde_json::to_value(self)?)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// Strictly increasing means sorted with no duplicates.
pub fn check_sorted_unique(indices: &[usize]) -> Result<()> {
    for (pos, w) in indices.windows(2).enumerate() {
        if w[0] == w[1] {
            return Err(Error::InvalidIndexSet(format!(
                "duplicate index {} at position {}",
                w[0],
                pos + 1
            )));
        }
        if w[0] > w[1] {
            return Err(Error::InvalidIndexSet(format!(
                "indices not sorted: {} before {} at position {}",
                w[0],
                w[1],
                pos + 1
            )));
        }
    }
    Ok(())
}

pub fn write_index_set(set: &IndexSetFile, path: &Path) -> Result<()> {
    set.check()?;
    let on_disk = OnDisk {
        set: set.clone(),
        digest: set.digest()?,
    };
    let value = serde_json::to_value(&on_disk)?;
    let mut bytes = serde_json::to_vec(&value)?;
    bytes.push(b'\n');
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_index_set(path: &Path) -> Result<LoadedIndexSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let on_disk: OnDisk = serde_json::from_str(&text)?;
    on_disk.set.check().map_err(|e| match e {
        Error::InvalidIndexSet(m) => Error::InvalidIndexSet(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let computed = on_disk.set.digest()?;
    let mut warnings = Vec::new();
    if computed != on_disk.digest {
        warnings.push(IndexSetWarning::DigestMismatch {
            stored: on_disk.digest,
            computed,
        });
    }
    Ok(LoadedIndexSet {
        set: on_disk.set,
        warnings,
    })
}

/// Like [`read_index_set`], additionally flagging files whose provenance
/// names a different configuration.
pub fn read_index_set_for(path: &Path, expected_config_hash: &str) -> Result<LoadedIndexSet> {
    let mut loaded = read_index_set(path)?;
    if loaded.set.provenance.config_hash != expected_config_hash {
        loaded.warnings.push(IndexSetWarning::ProvenanceMismatch {
            expected: expected_config_hash.to_string(),
            found: loaded.set.provenance.config_hash.clone(),
        });
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prov() -> Provenance {
        Provenance {
            config_hash: "abc".into(),
            seed: Some(1),
            fold: Some(0),
            iteration: Some(2),
        }
    }

    #[test]
    fn unsorted_is_rejected() {
        let err = IndexSetFile::new(vec![3, 1, 2], "cifar10", 10, SplitRole::Labeled, prov());
        assert!(matches!(err, Err(Error::InvalidIndexSet(_))));
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(IndexSetFile::new(vec![0, 10], "cifar10", 10, SplitRole::Val, prov()).is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = IndexSetFile::new(vec![0, 5, 9], "cifar10", 10, SplitRole::SelectedAt(2), prov())
            .unwrap();
        write_index_set(&s, &p).unwrap();
        let back = read_index_set(&p).unwrap();
        assert_eq!(back.set.indices, vec![0, 5, 9]);
        assert_eq!(back.set, s);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn edited_duplicate_is_a_read_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = IndexSetFile::new(vec![0, 5, 9], "cifar10", 10, SplitRole::Labeled, prov()).unwrap();
        write_index_set(&s, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("[0,5,9]", "[0,5,5,9]");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(read_index_set(&p), Err(Error::InvalidIndexSet(_))));
    }

    #[test]
    fn edited_contents_raise_digest_warning() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = IndexSetFile::new(vec![0, 5, 9], "cifar10", 10, SplitRole::Labeled, prov()).unwrap();
        write_index_set(&s, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("[0,5,9]", "[0,5,8]");
        std::fs::write(&p, text).unwrap();
        let loaded = read_index_set(&p).unwrap();
        assert!(matches!(loaded.warnings[..], [IndexSetWarning::DigestMismatch { .. }]));
    }

    #[test]
    fn foreign_provenance_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = IndexSetFile::new(vec![1], "cifar10", 10, SplitRole::Test, prov()).unwrap();
        write_index_set(&s, &p).unwrap();
        assert!(read_index_set_for(&p, "abc").unwrap().warnings.is_empty());
        let w = read_index_set_for(&p, "other").unwrap().warnings;
        assert!(matches!(w[..], [IndexSetWarning::ProvenanceMismatch { .. }]));
    }

    #[test]
    fn roles_parse() {
        for r in [
            SplitRole::Train,
            SplitRole::Val,
            SplitRole::Test,
            SplitRole::Labeled,
            SplitRole::Fold(3),
            SplitRole::SelectedAt(12),
        ] {
            assert_eq!(r.to_string().parse::<SplitRole>().unwrap(), r);
        }
        assert!("selected-at-iteration-x".parse::<SplitRole>().is_err());
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(raw in proptest::collection::btree_set(0usize..500, 0..60)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.json");
            let s = IndexSetFile::new(raw.into_iter().collect(), "synthetic", 500, SplitRole::Train, prov()).unwrap();
            write_index_set(&s, &p).unwrap();
            let back = read_index_set(&p).unwrap();
            prop_assert_eq!(back.set, s);
            prop_assert!(back.warnings.is_empty());
        }
    }
}
