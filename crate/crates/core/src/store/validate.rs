use std::fmt;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use super::format::{read_embedding, FormatError};
use super::manifest::{DatasetManifest, SampleRecord};
use super::{StoreError, AUDIO_DIM, MAX_FRAMES, TEXT_DIM, VIDEO_DIM};
use crate::ModalityKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeViolation {
    #[error("TextDimMismatch({modality}: expected {expected}, got {got})")]
    TextDimMismatch {
        modality: ModalityKind,
        expected: usize,
        got: usize,
    },
    #[error("AudioDimMismatch(expected {expected}, got {got})")]
    AudioDimMismatch { expected: usize, got: usize },
    #[error("VideoDimMismatch(expected {expected}, got {got})")]
    VideoDimMismatch { expected: usize, got: usize },
    #[error("RowCountMismatch({modality}: expected 1 row, got {got})")]
    RowCountMismatch { modality: ModalityKind, got: usize },
    #[error("TooManyFrames({0} > {max})", max = MAX_FRAMES)]
    TooManyFrames(usize),
    #[error("NoFrames")]
    NoFrames,
    #[error("NonFinite(row {row}, col {col})")]
    NonFinite { row: usize, col: usize },
    #[error("ModalityMismatch(file holds {found}, manifest says {expected})")]
    ModalityMismatch {
        expected: ModalityKind,
        found: ModalityKind,
    },
    #[error("Malformed({0})")]
    Malformed(FormatError),
}

/// Expected embedding width for a modality.
pub fn expected_cols(modality: ModalityKind) -> usize {
    match modality {
        ModalityKind::Transcript | ModalityKind::Ocr => TEXT_DIM,
        ModalityKind::Audio => AUDIO_DIM,
        ModalityKind::Video => VIDEO_DIM,
    }
}

/// Checks one unpadded embedding against the per-modality shape rules and
/// finiteness. Video may have 1..=100 rows; all other modalities exactly 1.
pub fn validate_matrix(modality: ModalityKind, data: ArrayView2<f32>) -> Result<(), ShapeViolation> {
    let (rows, cols) = data.dim();
    let want = expected_cols(modality);
    if cols != want {
        return Err(match modality {
            ModalityKind::Audio => ShapeViolation::AudioDimMismatch {
                expected: want,
                got: cols,
            },
            ModalityKind::Video => ShapeViolation::VideoDimMismatch {
                expected: want,
                got: cols,
            },
            m => ShapeViolation::TextDimMismatch {
                modality: m,
                expected: want,
                got: cols,
            },
        });
    }
    match modality {
        ModalityKind::Video if rows == 0 => return Err(ShapeViolation::NoFrames),
        ModalityKind::Video if rows > MAX_FRAMES => return Err(ShapeViolation::TooManyFrames(rows)),
        ModalityKind::Video => {}
        m if rows != 1 => return Err(ShapeViolation::RowCountMismatch { modality: m, got: rows }),
        _ => {}
    }
    if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(ShapeViolation::NonFinite { row, col });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityCheck {
    pub modality: ModalityKind,
    /// `(rows, cols)` as stored, or the first violated invariant.
    pub outcome: Result<(usize, usize), ShapeViolation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub id: String,
    pub checks: Vec<ModalityCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome.is_ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (ModalityKind, &ShapeViolation)> {
        self.checks
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.modality, e)))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.id)?;
        for c in &self.checks {
            match &c.outcome {
                Ok((r, cols)) => write!(f, " {}=ok({r}x{cols})", c.modality)?,
                Err(e) => write!(f, " {}=FAIL({e})", c.modality)?,
            }
        }
        Ok(())
    }
}

/// Reads the four embedding files of `record` and checks each one. I/O
/// failures are errors; malformed or mis-shaped payloads are reported as
/// per-modality failures.
pub fn validate_sample(
    manifest: &DatasetManifest,
    record: &SampleRecord,
) -> Result<ValidationReport, StoreError> {
    let mut checks = Vec::with_capacity(4);
    for modality in ModalityKind::ALL {
        let rel = record
            .embeddings
            .get(&modality)
            .ok_or_else(|| StoreError::MissingModality {
                id: record.id.clone(),
                modality,
            })?;
        let outcome = match read_embedding(&manifest.resolve(rel)) {
            Ok(m) if m.modality != modality => Err(ShapeViolation::ModalityMismatch {
                expected: modality,
                found: m.modality,
            }),
            Ok(m) => validate_matrix(modality, m.data.view()).map(|_| m.data.dim()),
            Err(StoreError::Format { source, .. }) => Err(ShapeViolation::Malformed(source)),
            Err(e) => return Err(e),
        };
        checks.push(ModalityCheck { modality, outcome });
    }
    Ok(ValidationReport {
        id: record.id.clone(),
        checks,
    })
}

pub fn validate_manifest(manifest: &DatasetManifest) -> Result<Vec<ValidationReport>, StoreError> {
    manifest
        .samples
        .iter()
        .map(|r| validate_sample(manifest, r))
        .collect()
}

/// Pads `frames` (r×d, 1 ≤ r ≤ target) to `target` rows with copies of
/// `pad_row`, or zero rows when no pad vector is given.
pub fn pad_frames(
    frames: ArrayView2<f32>,
    target: usize,
    pad_row: Option<ArrayView1<f32>>,
) -> Result<Array2<f32>, StoreError> {
    let (rows, cols) = frames.dim();
    if rows == 0 || rows > target {
        return Err(StoreError::BadFrameCount { rows, target });
    }
    if let Some(p) = &pad_row {
        if p.len() != cols {
            return Err(StoreError::BadPadVector {
                expected: cols,
                got: p.len(),
            });
        }
    }
    let mut out = Array2::zeros((target, cols));
    out.slice_mut(s![..rows, ..]).assign(&frames);
    if let Some(p) = pad_row {
        for mut row in out.rows_mut().into_iter().skip(rows) {
            row.assign(&p);
        }
    }
    Ok(out)
}

/// Pads a video embedding to exactly 100 frames.
pub fn pad_video(
    frames: ArrayView2<f32>,
    pad_row: Option<ArrayView1<f32>>,
) -> Result<Array2<f32>, StoreError> {
    pad_frames(frames, MAX_FRAMES, pad_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::format::{write_embedding, EmbeddingMatrix};
    use crate::store::manifest::Label;
    use ndarray::Array1;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn write_sample(dir: &std::path::Path, id: &str, shapes: [(usize, usize); 4]) -> SampleRecord {
        let mut embeddings = std::collections::BTreeMap::new();
        for (m, (r, c)) in ModalityKind::ALL.into_iter().zip(shapes) {
            let name = PathBuf::from(format!("{id}_{m}.bin"));
            let data = Array2::from_elem((r, c), 0.25f32);
            write_embedding(&dir.join(&name), &EmbeddingMatrix::new(m, data)).unwrap();
            embeddings.insert(m, name);
        }
        SampleRecord {
            id: id.into(),
            label: Label::Hate,
            embeddings,
            has_onscreen_text: true,
        }
    }

    fn manifest_in(dir: &std::path::Path, samples: Vec<SampleRecord>) -> DatasetManifest {
        let mut m = DatasetManifest::new("test", samples);
        m.base_dir = dir.to_path_buf();
        m
    }

    #[test]
    fn paper_shapes_pass() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_sample(dir.path(), "v1", [(1, 768), (1, 768), (1, 1024), (57, 768)]);
        let m = manifest_in(dir.path(), vec![rec.clone()]);
        let report = validate_sample(&m, &rec).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn audio_width_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_sample(dir.path(), "v1", [(1, 768), (1, 768), (1, 768), (10, 768)]);
        let m = manifest_in(dir.path(), vec![rec.clone()]);
        let report = validate_sample(&m, &rec).unwrap();
        let fails: Vec<_> = report.failures().collect();
        assert_eq!(
            fails,
            vec![(
                ModalityKind::Audio,
                &ShapeViolation::AudioDimMismatch {
                    expected: 1024,
                    got: 768
                }
            )]
        );
    }

    #[test]
    fn too_many_frames_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_sample(dir.path(), "v1", [(1, 768), (1, 768), (1, 1024), (120, 768)]);
        let m = manifest_in(dir.path(), vec![rec.clone()]);
        let report = validate_sample(&m, &rec).unwrap();
        let fails: Vec<_> = report.failures().collect();
        assert_eq!(fails, vec![(ModalityKind::Video, &ShapeViolation::TooManyFrames(120))]);
        assert_eq!(fails[0].1.to_string(), "TooManyFrames(120 > 100)");
    }

    #[test]
    fn missing_file_is_io_error_not_violation() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_sample(dir.path(), "v1", [(1, 768), (1, 768), (1, 1024), (3, 768)]);
        std::fs::remove_file(dir.path().join("v1_A.bin")).unwrap();
        let m = manifest_in(dir.path(), vec![rec.clone()]);
        assert!(matches!(validate_sample(&m, &rec), Err(StoreError::Io { .. })));
    }

    #[test]
    fn non_finite_and_swapped_modality() {
        let mut v = Array2::<f32>::zeros((1, 768));
        v[[0, 5]] = f32::NAN;
        assert_eq!(
            validate_matrix(ModalityKind::Transcript, v.view()),
            Err(ShapeViolation::NonFinite { row: 0, col: 5 })
        );
        let dir = tempfile::tempdir().unwrap();
        let mut rec = write_sample(dir.path(), "v1", [(1, 768), (1, 768), (1, 1024), (3, 768)]);
        let t = rec.embeddings[&ModalityKind::Transcript].clone();
        rec.embeddings.insert(ModalityKind::Ocr, t);
        let m = manifest_in(dir.path(), vec![rec.clone()]);
        let report = validate_sample(&m, &rec).unwrap();
        assert!(matches!(
            report.failures().next(),
            Some((ModalityKind::Ocr, ShapeViolation::ModalityMismatch { .. }))
        ));
    }

    #[test]
    fn accepts_exactly_the_documented_shapes() {
        for (m, rows, cols, ok) in [
            (ModalityKind::Transcript, 1, 768, true),
            (ModalityKind::Transcript, 2, 768, false),
            (ModalityKind::Ocr, 1, 1024, false),
            (ModalityKind::Audio, 1, 1024, true),
            (ModalityKind::Video, 100, 768, true),
            (ModalityKind::Video, 1, 768, true),
            (ModalityKind::Video, 0, 768, false),
            (ModalityKind::Video, 101, 768, false),
            (ModalityKind::Video, 5, 1024, false),
        ] {
            let data = Array2::<f32>::zeros((rows, cols));
            assert_eq!(validate_matrix(m, data.view()).is_ok(), ok, "{m} {rows}x{cols}");
        }
    }

    fn reference_pad(frames: &Array2<f32>, target: usize) -> Array2<f32> {
        let mut out = Array2::zeros((target, frames.ncols()));
        for r in 0..frames.nrows() {
            for c in 0..frames.ncols() {
                out[[r, c]] = frames[[r, c]];
            }
        }
        out
    }

    #[test]
    fn pad_examples() {
        let full = Array2::from_shape_fn((100, 768), |(r, c)| (r * 7 + c) as f32 * 0.01);
        assert_eq!(pad_video(full.view(), None).unwrap(), full);

        let one = Array2::<f32>::ones((1, 768));
        let padded = pad_video(one.view(), None).unwrap();
        assert!(padded.row(0).iter().all(|v| *v == 1.0));
        assert!(padded.slice(s![1.., ..]).iter().all(|v| *v == 0.0));

        let r57 = Array2::from_shape_fn((57, 768), |(r, c)| ((r * 13 + c * 7) % 19) as f32 - 9.0);
        let padded = pad_video(r57.view(), None).unwrap();
        let want = reference_pad(&r57, 100);
        assert!(padded
            .iter()
            .zip(want.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pad_rejects_bad_counts_and_uses_blank_frame() {
        let empty = Array2::<f32>::zeros((0, 768));
        assert!(pad_video(empty.view(), None).is_err());
        let big = Array2::<f32>::zeros((101, 768));
        assert!(pad_video(big.view(), None).is_err());
        let blank = Array1::from_elem(4, 0.5f32);
        let frames = Array2::<f32>::ones((2, 4));
        let out = pad_frames(frames.view(), 5, Some(blank.view())).unwrap();
        assert_eq!(out.row(4).to_vec(), vec![0.5; 4]);
        assert_eq!(out.row(1).to_vec(), vec![1.0; 4]);
    }

    proptest! {
        #[test]
        fn pad_is_idempotent(rows in 1usize..=100, seed in any::<u16>()) {
            let frames = Array2::from_shape_fn((rows, 8), |(r, c)| (seed as usize + r * 3 + c) as f32);
            let once = pad_frames(frames.view(), 100, None).unwrap();
            let twice = pad_frames(once.view(), 100, None).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
