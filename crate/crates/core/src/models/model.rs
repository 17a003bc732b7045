use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::{Batch, RowBlock};
use super::config::{ModelConfig, ModelMode};
use super::ModelError;
use crate::nn::{
    cast, cma_backward, cma_forward, dropout_apply, elastic_net_grad, elastic_net_penalty, relu, relu_backward,
    weighted_cross_entropy, Linear, LossSpec, Lstm, LstmCache, Mode, NnError, ParamGrads, ParamValues, ParameterSet,
    Scalar,
};
use crate::ModalityKind;

#[derive(Clone, Debug, PartialEq)]
enum Encoder {
    Dense(Vec<Linear>),
    Video { lstm: Lstm, fc: Linear },
}

#[derive(Clone, Debug, PartialEq)]
enum Attention {
    /// Projections of raw embeddings: one query projection, and a key and a
    /// value projection per key modality.
    Raw {
        query: (ModalityKind, Linear),
        keys: Vec<(ModalityKind, Linear, Linear)>,
    },
    /// Encoder outputs used directly as query and key/value rows.
    Features { query: ModalityKind, keys: Vec<ModalityKind> },
}

enum EncoderCache<T> {
    Dense {
        /// Output of each layer after dropout.
        outs: Vec<Array2<T>>,
        acts: Vec<Array2<T>>,
        masks: Vec<Option<Array2<T>>>,
    },
    Video {
        lstm: LstmCache<T>,
        last: Array2<T>,
        act: Array2<T>,
        mask: Option<Array2<T>>,
    },
}

struct Projected<T> {
    real: Array2<T>,
    pad: Option<Array2<T>>,
}

struct SampleAttention<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    weights: Array2<T>,
}

enum AttentionCache<T> {
    Raw {
        samples: Vec<SampleAttention<T>>,
    },
    Features {
        samples: Vec<SampleAttention<T>>,
    },
}

/// Everything the backward pass needs from one forward pass. Only
/// [`Model::forward`] can create one.
pub struct ForwardCache<T> {
    encoders: Vec<EncoderCache<T>>,
    features: Vec<Array2<T>>,
    attention: Option<AttentionCache<T>>,
    head_in: Array2<T>,
}

/// A built model: configuration, parameters and wiring.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParameterSet<T>,
    encoders: Vec<(ModalityKind, Encoder)>,
    attention: Option<Attention>,
    head: Linear,
}

fn project<T: Scalar>(lin: &Linear, vals: ParamValues<'_, T>, block: &RowBlock<T>) -> Result<Projected<T>, NnError> {
    let real = lin.forward(vals, block.rows.view())?;
    let pad = match &block.pad {
        Some(p) => Some(lin.forward(vals, p.view().insert_axis(Axis(0)))?),
        None => None,
    };
    Ok(Projected { real, pad })
}

/// Sample `i`'s projected rows, padding included.
fn sample_rows<T: Scalar>(block: &RowBlock<T>, proj: &Projected<T>, i: usize) -> Array2<T> {
    let (start, len) = block.spans[i];
    let mut out = Array2::zeros((block.steps, proj.real.ncols()));
    out.slice_mut(s![..len, ..]).assign(&proj.real.slice(s![start..start + len, ..]));
    if let Some(pad) = &proj.pad {
        for t in len..block.steps {
            out.row_mut(t).assign(&pad.row(0));
        }
    }
    out
}

/// Accumulates per-sample row gradients back onto the stacked real rows and
/// the shared pad row.
struct Scatter<T> {
    real: Array2<T>,
    pad: Array2<T>,
}

impl<T: Scalar> Scatter<T> {
    fn new(block: &RowBlock<T>, width: usize) -> Self {
        Self {
            real: Array2::zeros((block.rows.nrows(), width)),
            pad: Array2::zeros((1, width)),
        }
    }

    fn add(&mut self, block: &RowBlock<T>, i: usize, grad: ArrayView2<T>) {
        let (start, len) = block.spans[i];
        self.real
            .slice_mut(s![start..start + len, ..])
            .scaled_add(T::one(), &grad.slice(s![..len, ..]));
        for t in len..block.steps {
            self.pad.row_mut(0).scaled_add(T::one(), &grad.row(t));
        }
    }

    fn apply(&self, lin: &Linear, vals: ParamValues<'_, T>, grads: &mut ParamGrads<'_, T>, block: &RowBlock<T>) {
        lin.backward(vals, grads, block.rows.view(), self.real.view(), false);
        if let Some(pad) = &block.pad {
            lin.backward(vals, grads, pad.view().insert_axis(Axis(0)), self.pad.view(), false);
        }
    }
}

fn stack_rows<T: Scalar>(parts: &[ArrayView2<T>]) -> Array2<T> {
    concatenate(Axis(0), parts).expect("equal widths")
}

impl<T: Scalar> Model<T> {
    /// Registers and initialises every parameter. The same config and seed
    /// always give the same parameters, in `f32` and `f64` alike.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let dims = &config.dims;
        let mut params = ParameterSet::new();
        let mut encoders = Vec::new();
        for kind in config.encoded().iter() {
            let name = format!("enc.{}", kind.code());
            let enc = if kind == ModalityKind::Video {
                let lstm = Lstm::new(&mut params, &format!("{name}.lstm"), dims.video_dim, dims.lstm_hidden);
                let fc = Linear::new(&mut params, &format!("{name}.fc"), dims.lstm_hidden, dims.feature_dim);
                Encoder::Video { lstm, fc }
            } else {
                let mut widths = vec![dims.input_dim(kind)];
                widths.extend(&dims.hidden);
                widths.push(dims.feature_dim);
                let layers = widths
                    .windows(2)
                    .enumerate()
                    .map(|(l, w)| Linear::new(&mut params, &format!("{name}.fc{l}"), w[0], w[1]))
                    .collect();
                Encoder::Dense(layers)
            };
            encoders.push((kind, enc));
        }
        let attention = match (config.mode, config.attention, config.effective_keys()) {
            (ModelMode::CmaLF, Some(att), Some(keys)) => Some(Attention::Features {
                query: att.query,
                keys: keys.iter().collect(),
            }),
            (mode, Some(att), Some(keys)) if mode.raw_attention() => {
                let q = att.query;
                let query = (
                    q,
                    Linear::new(&mut params, &format!("cma.q.{}", q.code()), dims.input_dim(q), dims.d_model),
                );
                let keys = keys
                    .iter()
                    .map(|k| {
                        let key = Linear::new(&mut params, &format!("cma.k.{}", k.code()), dims.input_dim(k), dims.d_model);
                        let value =
                            Linear::new(&mut params, &format!("cma.v.{}", k.code()), dims.input_dim(k), dims.d_model);
                        (k, key, value)
                    })
                    .collect();
                Some(Attention::Raw { query, keys })
            }
            _ => None,
        };
        let head = Linear::new(&mut params, "head", config.head_input(), 2);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, enc) in &encoders {
            match enc {
                Encoder::Dense(layers) => layers.iter().for_each(|l| l.init(&mut params, &mut rng)),
                Encoder::Video { lstm, fc } => {
                    lstm.init(&mut params, &mut rng);
                    fc.init(&mut params, &mut rng);
                }
            }
        }
        if let Some(Attention::Raw { query, keys }) = &attention {
            query.1.init(&mut params, &mut rng);
            for (_, k, v) in keys {
                k.init(&mut params, &mut rng);
                v.init(&mut params, &mut rng);
            }
        }
        head.init(&mut params, &mut rng);
        Ok(Self {
            config,
            params,
            encoders,
            attention,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    /// Replaces all parameter values; the layout must match.
    pub fn load_params(&mut self, other: &ParameterSet<T>) -> Result<(), ModelError> {
        if other.specs() != self.params.specs() {
            return Err(ModelError::InvalidConfig("parameter layout does not match the model".into()));
        }
        self.params.flat_values_mut().copy_from_slice(other.flat_values());
        Ok(())
    }

    /// Changes the dropout rate used in train-mode forward passes.
    pub fn set_dropout(&mut self, rate: f64) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(ModelError::InvalidConfig(format!("dropout must lie in [0, 1), got {rate}")));
        }
        self.config.dropout = rate;
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Width of the attention key stack per sample (0 without attention).
    pub fn key_rows(&self) -> usize {
        match &self.attention {
            Some(Attention::Raw { keys, .. }) => keys
                .iter()
                .map(|(k, _, _)| if *k == ModalityKind::Video { self.config.dims.frames } else { 1 })
                .sum(),
            Some(Attention::Features { keys, .. }) => keys.len(),
            None => 0,
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let dims = &self.config.dims;
        for kind in self.config.required().iter() {
            let block = batch.block(kind).ok_or(ModelError::MissingModality(kind))?;
            let steps = if kind == ModalityKind::Video { dims.frames } else { 1 };
            if block.width() != dims.input_dim(kind) || block.steps != steps {
                return Err(ModelError::Nn(NnError::ShapeMismatch {
                    op: "model input",
                    detail: format!(
                        "{kind}: width {} over {} steps, expected {} over {steps}",
                        block.width(),
                        block.steps,
                        dims.input_dim(kind)
                    ),
                }));
            }
        }
        Ok(())
    }

    fn dropout<R: Rng + ?Sized>(
        &self,
        x: &Array2<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, Option<Array2<T>>), NnError> {
        dropout_apply(x.view(), self.config.dropout, mode, rng)
    }

    fn encode<R: Rng + ?Sized>(
        &self,
        enc: &Encoder,
        block: &RowBlock<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, EncoderCache<T>), NnError> {
        let vals = self.params.values();
        match enc {
            Encoder::Dense(layers) => {
                let (mut outs, mut acts, mut masks) = (Vec::<Array2<T>>::new(), Vec::new(), Vec::new());
                for (l, layer) in layers.iter().enumerate() {
                    let input = if l == 0 { block.rows.view() } else { outs[l - 1].view() };
                    let mut act = layer.forward(vals, input)?;
                    relu(&mut act);
                    let (out, mask) = self.dropout(&act, mode, rng)?;
                    acts.push(act);
                    masks.push(mask);
                    outs.push(out);
                }
                let feature = outs.last().unwrap().clone();
                Ok((feature, EncoderCache::Dense { outs, acts, masks }))
            }
            Encoder::Video { lstm, fc } => {
                let (last, cache) = lstm.forward(vals, &block.as_seq_batch())?;
                let mut act = fc.forward(vals, last.view())?;
                relu(&mut act);
                let (out, mask) = self.dropout(&act, mode, rng)?;
                Ok((
                    out,
                    EncoderCache::Video {
                        lstm: cache,
                        last,
                        act,
                        mask,
                    },
                ))
            }
        }
    }

    fn attend_raw(
        &self,
        query: &(ModalityKind, Linear),
        keys: &[(ModalityKind, Linear, Linear)],
        batch: &Batch<T>,
    ) -> Result<(Array2<T>, AttentionCache<T>), NnError> {
        let vals = self.params.values();
        let q_block = batch.block(query.0).unwrap();
        let q_proj = project(&query.1, vals, q_block)?;
        let mut k_proj = Vec::new();
        let mut v_proj = Vec::new();
        for (kind, k, v) in keys {
            let block = batch.block(*kind).unwrap();
            k_proj.push(project(k, vals, block)?);
            v_proj.push(project(v, vals, block)?);
        }
        let mut out = Array2::zeros((batch.len(), self.config.dims.d_model));
        let mut samples = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let q = sample_rows(q_block, &q_proj, i);
            let k_parts: Vec<Array2<T>> = keys
                .iter()
                .zip(&k_proj)
                .map(|((kind, _, _), p)| sample_rows(batch.block(*kind).unwrap(), p, i))
                .collect();
            let v_parts: Vec<Array2<T>> = keys
                .iter()
                .zip(&v_proj)
                .map(|((kind, _, _), p)| sample_rows(batch.block(*kind).unwrap(), p, i))
                .collect();
            let k = stack_rows(&k_parts.iter().map(|a| a.view()).collect::<Vec<_>>());
            let v = stack_rows(&v_parts.iter().map(|a| a.view()).collect::<Vec<_>>());
            let res = cma_forward(q.view(), k.view(), v.view())?;
            out.row_mut(i).assign(&res.output.mean_axis(Axis(0)).unwrap());
            samples.push(SampleAttention {
                q,
                k,
                v,
                weights: res.weights,
            });
        }
        Ok((
            out,
            AttentionCache::Raw { samples },
        ))
    }

    fn attend_features(
        &self,
        query: ModalityKind,
        keys: &[ModalityKind],
        features: &[Array2<T>],
        n: usize,
    ) -> Result<(Array2<T>, AttentionCache<T>), NnError> {
        let feature = |kind: ModalityKind| &features[slot(&self.encoders, kind)];
        let mut out = Array2::zeros((n, self.config.dims.feature_dim));
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let q = feature(query).slice(s![i..i + 1, ..]).to_owned();
            let rows: Vec<ArrayView2<T>> = keys.iter().map(|k| feature(*k).slice(s![i..i + 1, ..])).collect();
            let k = stack_rows(&rows);
            let res = cma_forward(q.view(), k.view(), k.view())?;
            out.row_mut(i).assign(&res.output.row(0));
            samples.push(SampleAttention {
                q,
                v: k.clone(),
                k,
                weights: res.weights,
            });
        }
        Ok((out, AttentionCache::Features { samples }))
    }

    /// Logits (`batch × 2`) plus the cache for [`Model::backward`]. Dropout
    /// draws from `rng` in train mode only.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Batch<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, ForwardCache<T>), ModelError> {
        self.check_batch(batch)?;
        let mut features = Vec::with_capacity(self.encoders.len());
        let mut enc_caches = Vec::with_capacity(self.encoders.len());
        for (kind, enc) in &self.encoders {
            let (f, c) = self.encode(enc, batch.block(*kind).unwrap(), mode, rng)?;
            features.push(f);
            enc_caches.push(c);
        }
        let attended = match &self.attention {
            Some(Attention::Raw { query, keys }) => Some(self.attend_raw(query, keys, batch)?),
            Some(Attention::Features { query, keys }) => {
                Some(self.attend_features(*query, keys, &features, batch.len())?)
            }
            None => None,
        };
        let head_in = match self.config.mode {
            ModelMode::Unimodal(_) | ModelMode::ConcatLF => {
                stack_cols(&features.iter().map(|f| f.view()).collect::<Vec<_>>())
            }
            ModelMode::CmaLF | ModelMode::CmaS => attended.as_ref().unwrap().0.clone(),
            ModelMode::MMHSD => {
                let mut parts: Vec<ArrayView2<T>> = features.iter().map(|f| f.view()).collect();
                parts.push(attended.as_ref().unwrap().0.view());
                stack_cols(&parts)
            }
        };
        let logits = self.head.forward(self.params.values(), head_in.view())?;
        Ok((
            logits,
            ForwardCache {
                encoders: enc_caches,
                features,
                attention: attended.map(|(_, c)| c),
                head_in,
            },
        ))
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the logits is `d_logits`.
    pub fn backward(&mut self, batch: &Batch<T>, cache: ForwardCache<T>, d_logits: ArrayView2<T>) {
        let (vals, mut grads) = self.params.split_mut();
        let d_head_in = self
            .head
            .backward(vals, &mut grads, cache.head_in.view(), d_logits, true)
            .unwrap();
        let f = self.config.dims.feature_dim;
        let mut d_features: Vec<Array2<T>> =
            cache.features.iter().map(|x| Array2::zeros(x.raw_dim())).collect();
        let d_attended = match self.config.mode {
            ModelMode::Unimodal(_) | ModelMode::ConcatLF => {
                for (j, d) in d_features.iter_mut().enumerate() {
                    d.assign(&d_head_in.slice(s![.., j * f..(j + 1) * f]));
                }
                None
            }
            ModelMode::CmaLF | ModelMode::CmaS => Some(d_head_in),
            ModelMode::MMHSD => {
                for (j, d) in d_features.iter_mut().enumerate() {
                    d.assign(&d_head_in.slice(s![.., j * f..(j + 1) * f]));
                }
                let at = f * d_features.len();
                Some(d_head_in.slice(s![.., at..]).to_owned())
            }
        };

        match (&self.attention, cache.attention, d_attended) {
            (
                Some(Attention::Raw { query, keys }),
                Some(AttentionCache::Raw { samples }),
                Some(d_out),
            ) => {
                let q_block = batch.block(query.0).unwrap();
                let blocks: Vec<&RowBlock<T>> = keys.iter().map(|(k, _, _)| batch.block(*k).unwrap()).collect();
                let d = self.config.dims.d_model;
                let mut q_sc = Scatter::new(q_block, d);
                let mut k_sc: Vec<Scatter<T>> = blocks.iter().map(|b| Scatter::new(b, d)).collect();
                let mut v_sc: Vec<Scatter<T>> = blocks.iter().map(|b| Scatter::new(b, d)).collect();
                for (i, sa) in samples.iter().enumerate() {
                    let nq: T = cast(sa.q.nrows() as f64);
                    let d_rows = Array2::from_shape_fn((sa.q.nrows(), d), |(_, c)| d_out[[i, c]] / nq);
                    let g = cma_backward(sa.q.view(), sa.k.view(), sa.v.view(), sa.weights.view(), d_rows.view());
                    q_sc.add(q_block, i, g.dq.view());
                    let mut at = 0;
                    for (j, block) in blocks.iter().enumerate() {
                        let rows = block.steps;
                        k_sc[j].add(block, i, g.dk.slice(s![at..at + rows, ..]));
                        v_sc[j].add(block, i, g.dv.slice(s![at..at + rows, ..]));
                        at += rows;
                    }
                }
                q_sc.apply(&query.1, vals, &mut grads, q_block);
                for (j, (_, k, v)) in keys.iter().enumerate() {
                    k_sc[j].apply(k, vals, &mut grads, blocks[j]);
                    v_sc[j].apply(v, vals, &mut grads, blocks[j]);
                }
            }
            (Some(Attention::Features { query, keys }), Some(AttentionCache::Features { samples }), Some(d_out)) => {
                let q_slot = slot(&self.encoders, *query);
                let key_slots: Vec<usize> = keys.iter().map(|k| slot(&self.encoders, *k)).collect();
                for (i, sa) in samples.iter().enumerate() {
                    let d_rows = d_out.slice(s![i..i + 1, ..]);
                    let g = cma_backward(sa.q.view(), sa.k.view(), sa.v.view(), sa.weights.view(), d_rows);
                    d_features[q_slot].row_mut(i).scaled_add(T::one(), &g.dq.row(0));
                    for (j, &slot) in key_slots.iter().enumerate() {
                        let mut row = d_features[slot].row_mut(i);
                        row.scaled_add(T::one(), &g.dk.row(j));
                        row.scaled_add(T::one(), &g.dv.row(j));
                    }
                }
            }
            (None, None, None) => {}
            _ => unreachable!("cache built by the same model"),
        }

        for (((kind, enc), ec), d) in self.encoders.iter().zip(&cache.encoders).zip(d_features) {
            encoder_backward(vals, enc, batch.block(*kind).unwrap(), ec, d, &mut grads);
        }
    }

    /// Training step on one batch: clears gradients, runs forward in train
    /// mode, backpropagates the weighted cross-entropy and adds the
    /// elastic-net gradient. Returns the penalised loss.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch<T>,
        loss: &LossSpec,
        rng: &mut R,
    ) -> Result<T, ModelError> {
        self.params.zero_grads();
        let (logits, cache) = self.forward(batch, Mode::Train, rng)?;
        let (data, d_logits) = weighted_cross_entropy(logits.view(), &batch.labels, loss.class_weights)?;
        self.backward(batch, cache, d_logits.view());
        elastic_net_grad(&mut self.params, loss.l1, loss.l2);
        Ok(data + elastic_net_penalty(&self.params, loss.l1, loss.l2))
    }

    /// Eval-mode logits.
    pub fn logits(&self, batch: &Batch<T>) -> Result<Array2<T>, ModelError> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(batch, Mode::Eval, &mut unused)?.0)
    }

    /// Argmax predictions; ties go to class 0.
    pub fn predict(&self, batch: &Batch<T>) -> Result<Vec<usize>, ModelError> {
        Ok(self
            .logits(batch)?
            .rows()
            .into_iter()
            .map(|r| usize::from(r[1] > r[0]))
            .collect())
    }
}

fn encoder_backward<T: Scalar>(
    vals: ParamValues<'_, T>,
    enc: &Encoder,
    block: &RowBlock<T>,
    cache: &EncoderCache<T>,
    d_feature: Array2<T>,
    grads: &mut ParamGrads<'_, T>,
) {
    match (enc, cache) {
        (Encoder::Dense(layers), EncoderCache::Dense { outs, acts, masks }) => {
            let mut d = d_feature;
            for l in (0..layers.len()).rev() {
                if let Some(m) = &masks[l] {
                    d *= m;
                }
                relu_backward(&mut d, acts[l].view());
                let input = if l == 0 { block.rows.view() } else { outs[l - 1].view() };
                match layers[l].backward(vals, grads, input, d.view(), l > 0) {
                    Some(dx) => d = dx,
                    None => break,
                }
            }
        }
        (Encoder::Video { lstm, fc }, EncoderCache::Video { lstm: lc, last, act, mask }) => {
            let mut d = d_feature;
            if let Some(m) = mask {
                d *= m;
            }
            relu_backward(&mut d, act.view());
            let d_last = fc.backward(vals, grads, last.view(), d.view(), true).unwrap();
            lstm.backward(vals, grads, &block.as_seq_batch(), lc, d_last.view());
        }
        _ => unreachable!("cache built by the same encoder"),
    }
}

fn slot(encoders: &[(ModalityKind, Encoder)], kind: ModalityKind) -> usize {
    encoders.iter().position(|(k, _)| *k == kind).expect("encoded modality")
}

fn stack_cols<T: Scalar>(parts: &[ArrayView2<T>]) -> Array2<T> {
    concatenate(Axis(1), parts).expect("equal batch sizes")
}
