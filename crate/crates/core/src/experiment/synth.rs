//! Planted-dependency synthetic datasets with real embedding shapes.
//!
//! Each modality row is a low-dimensional Gaussian factor vector mapped to
//! the embedding width by a fixed random matrix, plus small per-element
//! noise. Factor 0 carries a latent score `u`: for ordinary samples
//! `u = (2y - 1) + latent_noise * z`, scaled by the modality's strength.
//! For a `dependency` share of samples `u` is pure noise; instead factor 1
//! of the query and key modalities holds a random sign each, and the label
//! is whether the two signs agree. No single modality says anything about
//! those labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::store::{
    write_embedding, Dataset, DatasetManifest, EmbeddingMatrix, Label, SampleData, SampleRecord, StoreError,
    AUDIO_DIM, MAX_FRAMES, TEXT_DIM, VIDEO_DIM,
};
use crate::ModalityKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_samples: usize,
    /// Share of hate samples.
    pub hate_fraction: f64,
    /// Per-modality signal strength in `[0, 1]`.
    pub strengths: BTreeMap<ModalityKind, f64>,
    /// Share of samples whose label is only recoverable from the
    /// query/key interaction.
    pub dependency: f64,
    /// Number of factors behind each modality.
    pub factors: usize,
    /// Gaussian noise on every factor.
    pub noise: f64,
    /// Per-element noise added after the factor map.
    pub embed_noise: f64,
    pub latent_noise: f64,
    pub signal_scale: f64,
    pub query: ModalityKind,
    pub key: ModalityKind,
    /// Inclusive range of real video frames per sample.
    pub frames: [usize; 2],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            hate_fraction: 0.4,
            strengths: ModalityKind::ALL.into_iter().map(|k| (k, 1.0)).collect(),
            dependency: 0.5,
            factors: 8,
            noise: 1.0,
            embed_noise: 0.05,
            latent_noise: 0.6,
            signal_scale: 4.0,
            query: ModalityKind::Ocr,
            key: ModalityKind::Transcript,
            frames: [1, 4],
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Checks every field; the error names the first bad one.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let field = |name: &str, msg: String| Err((name.to_string(), msg));
        if self.n_samples < 40 {
            return field("n_samples", format!("must be at least 40, got {}", self.n_samples));
        }
        if !(self.hate_fraction > 0.0 && self.hate_fraction < 1.0) {
            return field("hate_fraction", format!("must lie in (0, 1), got {}", self.hate_fraction));
        }
        for (k, s) in &self.strengths {
            if !(0.0..=1.0).contains(s) {
                return field(&format!("strengths.{k}"), format!("must lie in [0, 1], got {s}"));
            }
        }
        if !(0.0..=1.0).contains(&self.dependency) {
            return field("dependency", format!("must lie in [0, 1], got {}", self.dependency));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("embed_noise", self.embed_noise),
            ("latent_noise", self.latent_noise),
            ("signal_scale", self.signal_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return field(name, format!("must be a nonnegative number, got {v}"));
            }
        }
        if self.factors < 2 {
            return field("factors", format!("must be at least 2, got {}", self.factors));
        }
        if self.query == self.key {
            return field("key", format!("must differ from the query {}", self.query));
        }
        let [lo, hi] = self.frames;
        if lo == 0 || lo > hi || hi > MAX_FRAMES {
            return field("frames", format!("need 1 <= min <= max <= {MAX_FRAMES}, got [{lo}, {hi}]"));
        }
        Ok(())
    }

    fn strength(&self, kind: ModalityKind) -> f64 {
        self.strengths.get(&kind).copied().unwrap_or(0.0)
    }
}

fn width(kind: ModalityKind) -> usize {
    match kind {
        ModalityKind::Audio => AUDIO_DIM,
        ModalityKind::Video => VIDEO_DIM,
        _ => TEXT_DIM,
    }
}

/// `factors × dim` matrix with unit-norm rows.
fn factor_map<R: Rng>(rng: &mut R, factors: usize, dim: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_simple_fn((factors, dim), || rng.sample::<f64, _>(StandardNormal));
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    m
}

/// Generates the samples in memory. Deterministic per spec.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset, StoreError> {
    spec.validate().map_err(|(field, msg)| StoreError::InvalidSample {
        id: "synth".into(),
        reason: format!("{field}: {msg}"),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples;
    let maps: Vec<Array2<f64>> = ModalityKind::ALL
        .iter()
        .map(|&k| factor_map(&mut rng, spec.factors, width(k)))
        .collect();

    let n_hate = (n as f64 * spec.hate_fraction).round() as usize;
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i < n_hate)).collect();
    labels.shuffle(&mut rng);
    let n_pair = (n as f64 * spec.dependency).round() as usize;
    let mut paired: Vec<bool> = (0..n).map(|i| i < n_pair).collect();
    paired.shuffle(&mut rng);

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let y = labels[i];
        let z: f64 = rng.sample(StandardNormal);
        let (u, signs) = if paired[i] {
            let s_q = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let s_k = if y == 1 { s_q } else { -s_q };
            (spec.latent_noise * z, Some((s_q, s_k)))
        } else {
            ((2.0 * y as f64 - 1.0) + spec.latent_noise * z, None)
        };
        let n_frames = rng.random_range(spec.frames[0]..=spec.frames[1]);
        let mut embed = |kind: ModalityKind, rows: usize| -> Array2<f32> {
            let sign = match signs {
                Some((s_q, _)) if kind == spec.query => s_q,
                Some((_, s_k)) if kind == spec.key => s_k,
                _ => 0.0,
            };
            let factors = Array2::from_shape_fn((rows, spec.factors), |(_, f)| {
                let base = match f {
                    0 => spec.strength(kind) * spec.signal_scale * u,
                    1 => sign * spec.signal_scale,
                    _ => 0.0,
                };
                base + spec.noise * rng.sample::<f64, _>(StandardNormal)
            });
            let mut x = factors.dot(&maps[kind.index()]);
            x.mapv_inplace(|v| v + spec.embed_noise * rng.sample::<f64, _>(StandardNormal));
            x.mapv(|v| v as f32)
        };
        let transcript = embed(ModalityKind::Transcript, 1).row(0).to_owned();
        let ocr = embed(ModalityKind::Ocr, 1).row(0).to_owned();
        let audio = embed(ModalityKind::Audio, 1).row(0).to_owned();
        let video = embed(ModalityKind::Video, n_frames);
        samples.push(SampleData {
            id: format!("synth_{i:05}"),
            label: Label::from_index(y).unwrap(),
            transcript,
            ocr,
            audio,
            video,
            has_onscreen_text: true,
        });
    }
    Dataset::from_samples(samples, Array1::zeros(VIDEO_DIM))
}

/// Writes a generated dataset as embedding files plus `manifest.json`
/// under `dir`, returning the manifest.
pub fn write_synthetic(spec: &SynthSpec, dir: &Path) -> Result<DatasetManifest, StoreError> {
    let data = gen_synthetic(spec)?;
    let emb_dir = dir.join("embeddings");
    std::fs::create_dir_all(&emb_dir).map_err(|e| StoreError::io(&emb_dir, e))?;
    let mut records = Vec::with_capacity(data.len());
    for s in data.samples() {
        let mut embeddings = BTreeMap::new();
        for kind in ModalityKind::ALL {
            let matrix = match s.vector(kind) {
                Some(v) => v.clone().insert_axis(ndarray::Axis(0)),
                None => s.video.clone(),
            };
            let rel = PathBuf::from("embeddings").join(format!("{}_{}.mmeb", s.id, kind.code()));
            write_embedding(&dir.join(&rel), &EmbeddingMatrix::new(kind, matrix))?;
            embeddings.insert(kind, rel);
        }
        records.push(SampleRecord {
            id: s.id.clone(),
            label: s.label,
            embeddings,
            has_onscreen_text: s.has_onscreen_text,
        });
    }
    let provenance = format!(
        "synthetic: {}",
        serde_json::to_string(spec).expect("spec serialises")
    );
    let mut manifest = DatasetManifest::new(provenance, records);
    manifest.base_dir = dir.to_path_buf();
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
