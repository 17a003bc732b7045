use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::StoreError;
use crate::ModalityKind;

pub const MANIFEST_VERSION: u32 = 1;

/// Binary class label; hate is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonHate = 0,
    Hate = 1,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::NonHate, Label::Hate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NonHate),
            1 => Some(Label::Hate),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::NonHate => "non_hate",
            Label::Hate => "hate",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_index(v as usize)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One labeled video with references to its four embedding files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub label: Label,
    /// Paths relative to the manifest directory (absolute paths are kept).
    pub embeddings: BTreeMap<ModalityKind, PathBuf>,
    #[serde(default)]
    pub has_onscreen_text: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    #[serde(default)]
    pub provenance: String,
    /// Optional blank-frame embedding used instead of zero rows when padding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_frame: Option<Vec<f32>>,
    pub samples: Vec<SampleRecord>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(provenance: impl Into<String>, samples: Vec<SampleRecord>) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            provenance: provenance.into(),
            blank_frame: None,
            samples,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Structural checks that need no embedding payloads.
    pub fn check_structure(&self) -> Result<(), StoreError> {
        if self.format_version != MANIFEST_VERSION {
            return Err(StoreError::UnsupportedVersion(self.format_version));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(StoreError::DuplicateId(s.id.clone()));
            }
            for m in ModalityKind::ALL {
                if !s.embeddings.contains_key(&m) {
                    return Err(StoreError::MissingModality {
                        id: s.id.clone(),
                        modality: m,
                    });
                }
            }
        }
        if let Some(blank) = &self.blank_frame {
            if blank.len() != super::VIDEO_DIM {
                return Err(StoreError::BadPadVector {
                    expected: super::VIDEO_DIM,
                    got: blank.len(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| StoreError::io(path, e))
    }
}

/// Reads and structurally checks a manifest. Embedding files are not opened.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| StoreError::ManifestParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.check_structure()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: Label) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            label,
            embeddings: ModalityKind::ALL
                .iter()
                .map(|m| (*m, PathBuf::from(format!("{id}_{m}.bin"))))
                .collect(),
            has_onscreen_text: true,
        }
    }

    #[test]
    fn loads_two_samples_without_touching_payloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = DatasetManifest::new("unit", vec![record("v1", Label::Hate), record("v2", Label::NonHate)]);
        m.save(&path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.samples.len(), 2);
        assert_eq!(loaded.base_dir, dir.path());
        assert_eq!(loaded.class_counts(), [1, 1]);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        DatasetManifest::new("dup", vec![record("v1", Label::Hate), record("v1", Label::NonHate)])
            .save(&path)
            .unwrap();
        match load_manifest(&path) {
            Err(StoreError::DuplicateId(id)) => assert_eq!(id, "v1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_gate_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = DatasetManifest::new("v", vec![record("v1", Label::Hate)]);
        m.format_version = 7;
        m.save(&path).unwrap();
        assert!(matches!(load_manifest(&path), Err(StoreError::UnsupportedVersion(7))));

        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_manifest(&path), Err(StoreError::ManifestParse { .. })));
        assert!(matches!(
            load_manifest(&dir.path().join("missing.json")),
            Err(StoreError::Io { .. })
        ));
    }

    #[test]
    fn missing_modality_reference_is_structural() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut r = record("v1", Label::Hate);
        r.embeddings.remove(&ModalityKind::Audio);
        DatasetManifest::new("m", vec![r]).save(&path).unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(StoreError::MissingModality { modality: ModalityKind::Audio, .. })
        ));
    }

    #[test]
    fn label_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Label::Hate).unwrap(), "1");
        assert!(serde_json::from_str::<Label>("2").is_err());
    }
}
