use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::nn::{cast, Scalar, SeqBatch};
use crate::store::Dataset;
use crate::{ModalityKind, ModalitySet};

/// Per-sample row blocks of one modality, stored as a single stacked matrix.
/// Sample `i` owns rows `spans[i]` followed by `steps - len` copies of `pad`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowBlock<T> {
    pub rows: Array2<T>,
    pub spans: Vec<(usize, usize)>,
    pub pad: Option<Array1<T>>,
    pub steps: usize,
}

impl<T: Scalar> RowBlock<T> {
    /// One row per sample.
    pub fn single(rows: Array2<T>) -> Self {
        let spans = (0..rows.nrows()).map(|i| (i, 1)).collect();
        Self {
            rows,
            spans,
            pad: None,
            steps: 1,
        }
    }

    /// Variable-length sequences padded to `steps` with `pad`.
    pub fn padded(seqs: &[ArrayView2<T>], pad: ArrayView1<T>, steps: usize) -> Self {
        let total = seqs.iter().map(|s| s.nrows()).sum();
        let mut rows = Array2::zeros((total, pad.len()));
        let mut spans = Vec::with_capacity(seqs.len());
        let mut at = 0;
        for seq in seqs {
            rows.slice_mut(s![at..at + seq.nrows(), ..]).assign(seq);
            spans.push((at, seq.nrows()));
            at += seq.nrows();
        }
        Self {
            rows,
            spans,
            pad: Some(pad.to_owned()),
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    pub fn sample(&self, i: usize) -> ArrayView2<'_, T> {
        let (start, len) = self.spans[i];
        self.rows.slice(s![start..start + len, ..])
    }

    /// Sample `i` with padding materialised (`steps × width`).
    pub fn padded_sample(&self, i: usize) -> Array2<T> {
        let mut out = Array2::zeros((self.steps, self.width()));
        let real = self.sample(i);
        out.slice_mut(s![..real.nrows(), ..]).assign(&real);
        if let Some(pad) = &self.pad {
            for t in real.nrows()..self.steps {
                out.row_mut(t).assign(pad);
            }
        }
        out
    }

    pub fn as_seq_batch(&self) -> SeqBatch<'_, T> {
        SeqBatch {
            seqs: (0..self.len()).map(|i| self.sample(i)).collect(),
            pad: self.pad.as_ref().expect("sequence block has a pad row").view(),
            steps: self.steps,
        }
    }
}

/// Model input for a batch of samples. Only the modalities a model reads are
/// filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub labels: Vec<usize>,
    blocks: [Option<RowBlock<T>>; 4],
}

impl<T: Scalar> Batch<T> {
    pub fn new(labels: Vec<usize>) -> Self {
        Self {
            labels,
            blocks: [None, None, None, None],
        }
    }

    pub fn with_block(mut self, kind: ModalityKind, block: RowBlock<T>) -> Self {
        assert_eq!(block.len(), self.labels.len(), "block size for {kind}");
        self.blocks[kind.index()] = Some(block);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn block(&self, kind: ModalityKind) -> Option<&RowBlock<T>> {
        self.blocks[kind.index()].as_ref()
    }

    pub fn present(&self) -> ModalitySet {
        ModalitySet::from_kinds(ModalityKind::ALL.into_iter().filter(|k| self.blocks[k.index()].is_some()))
    }

    /// Gathers `indices` from a dataset, copying only the `needed`
    /// modalities. Video is padded to `frames` with the dataset pad row.
    pub fn from_dataset(ds: &Dataset, indices: &[usize], needed: ModalitySet, frames: usize) -> Self {
        let conv = |v: f32| cast::<T>(v as f64);
        let labels = indices.iter().map(|&i| ds.sample(i).label.index()).collect();
        let mut batch = Self::new(labels);
        for kind in needed.iter() {
            let block = if kind == ModalityKind::Video {
                let seqs: Vec<Array2<T>> = indices.iter().map(|&i| ds.sample(i).video.mapv(conv)).collect();
                let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
                RowBlock::padded(&views, ds.pad_row().mapv(conv).view(), frames)
            } else {
                let width = ds.sample(indices[0]).vector(kind).unwrap().len();
                let mut rows = Array2::zeros((indices.len(), width));
                for (mut row, &i) in rows.rows_mut().into_iter().zip(indices) {
                    row.assign(&ds.sample(i).vector(kind).unwrap().mapv(conv));
                }
                RowBlock::single(rows)
            };
            batch = batch.with_block(kind, block);
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn padded_block_layout() {
        let a = array![[1.0f64, 2.0], [3.0, 4.0]];
        let b = array![[5.0, 6.0]];
        let pad = array![0.5, -0.5];
        let block = RowBlock::padded(&[a.view(), b.view()], pad.view(), 3);
        assert_eq!(block.spans, vec![(0, 2), (2, 1)]);
        assert_eq!(block.sample(1), b);
        assert_eq!(
            block.padded_sample(1),
            array![[5.0, 6.0], [0.5, -0.5], [0.5, -0.5]]
        );
        let seq = block.as_seq_batch();
        assert_eq!(seq.steps, 3);
        assert_eq!(seq.row(0, 2), pad.view());
    }

    #[test]
    fn batch_presence() {
        let batch = Batch::new(vec![0, 1]).with_block(ModalityKind::Audio, RowBlock::single(Array2::<f32>::zeros((2, 3))));
        assert_eq!(batch.present(), ModalitySet::single(ModalityKind::Audio));
        assert!(batch.block(ModalityKind::Video).is_none());
    }
}
