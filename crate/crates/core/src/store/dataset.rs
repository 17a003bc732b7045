use std::collections::HashMap;

use ndarray::{Array1, Array2};

use super::format::read_embedding;
use super::manifest::{DatasetManifest, Label};
use super::validate::validate_matrix;
use super::{StoreError, VIDEO_DIM};
use crate::ModalityKind;

/// Embeddings of one video held in memory. Video frames are kept unpadded;
/// models pad logically with the dataset's pad row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleData {
    pub id: String,
    pub label: Label,
    pub transcript: Array1<f32>,
    pub ocr: Array1<f32>,
    pub audio: Array1<f32>,
    pub video: Array2<f32>,
    pub has_onscreen_text: bool,
}

impl SampleData {
    /// Single-row modality vector; `None` for video.
    pub fn vector(&self, kind: ModalityKind) -> Option<&Array1<f32>> {
        match kind {
            ModalityKind::Transcript => Some(&self.transcript),
            ModalityKind::Ocr => Some(&self.ocr),
            ModalityKind::Audio => Some(&self.audio),
            ModalityKind::Video => None,
        }
    }

    pub fn vector_mut(&mut self, kind: ModalityKind) -> Option<&mut Array1<f32>> {
        match kind {
            ModalityKind::Transcript => Some(&mut self.transcript),
            ModalityKind::Ocr => Some(&mut self.ocr),
            ModalityKind::Audio => Some(&mut self.audio),
            ModalityKind::Video => None,
        }
    }
}

/// A fully loaded dataset: all samples plus the pad row used for video.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<SampleData>,
    pad_row: Array1<f32>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset from in-memory samples. No shape checks are applied,
    /// which lets tests use toy widths.
    pub fn from_samples(samples: Vec<SampleData>, pad_row: Array1<f32>) -> Result<Self, StoreError> {
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            samples,
            pad_row,
            index,
        })
    }

    /// Loads and validates every sample referenced by the manifest.
    pub fn load(manifest: &DatasetManifest) -> Result<Self, StoreError> {
        manifest.check_structure()?;
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for rec in &manifest.samples {
            let load = |kind: ModalityKind| -> Result<Array2<f32>, StoreError> {
                let m = read_embedding(&manifest.resolve(&rec.embeddings[&kind]))?;
                let bad = |reason: String| StoreError::InvalidSample {
                    id: rec.id.clone(),
                    reason,
                };
                if m.modality != kind {
                    return Err(bad(format!("{kind} file holds {} data", m.modality)));
                }
                validate_matrix(kind, m.data.view()).map_err(|e| bad(format!("{kind}: {e}")))?;
                Ok(m.data)
            };
            let row = |m: Array2<f32>| m.row(0).to_owned();
            samples.push(SampleData {
                id: rec.id.clone(),
                label: rec.label,
                transcript: row(load(ModalityKind::Transcript)?),
                ocr: row(load(ModalityKind::Ocr)?),
                audio: row(load(ModalityKind::Audio)?),
                video: load(ModalityKind::Video)?,
                has_onscreen_text: rec.has_onscreen_text,
            });
        }
        let pad_row = match &manifest.blank_frame {
            Some(v) => Array1::from(v.clone()),
            None => Array1::zeros(VIDEO_DIM),
        };
        Self::from_samples(samples, pad_row)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleData] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &SampleData {
        &self.samples[i]
    }

    pub fn pad_row(&self) -> &Array1<f32> {
        &self.pad_row
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Maps ids to sample indices, failing on the first unknown id.
    pub fn indices(&self, ids: &[String]) -> Result<Vec<usize>, StoreError> {
        ids.iter()
            .map(|id| self.index_of(id).ok_or_else(|| StoreError::UnknownId(id.clone())))
            .collect()
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<Label> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }
}
