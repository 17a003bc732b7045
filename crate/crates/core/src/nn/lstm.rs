use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{shape_err, NnError, ParamGrads, ParamId, ParamValues, ParameterSet, Scalar};

/// A batch of variable-length sequences, each padded on the right to `steps`
/// rows with a shared `pad` row. Padding is logical: the pad row is projected
/// once instead of once per padded step.
#[derive(Clone, Debug)]
pub struct SeqBatch<'a, T> {
    pub seqs: Vec<ArrayView2<'a, T>>,
    pub pad: ArrayView1<'a, T>,
    pub steps: usize,
}

impl<T: Scalar> SeqBatch<'_, T> {
    pub fn batch_size(&self) -> usize {
        self.seqs.len()
    }

    /// Row `t` of sample `b` after padding.
    pub fn row(&self, b: usize, t: usize) -> ArrayView1<'_, T> {
        let seq = &self.seqs[b];
        if t < seq.nrows() {
            seq.row(t)
        } else {
            self.pad.view()
        }
    }
}

/// Single-layer LSTM with gate order `[i, f, g, o]` and one bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

/// Forward state needed by [`Lstm::backward`].
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    /// `steps × batch × 4h` activated gates.
    gates: Array3<T>,
    /// `(steps + 1) × batch × h` cell states, starting from zeros.
    cells: Array3<T>,
    /// `(steps + 1) × batch × h` hidden states, starting from zeros.
    hiddens: Array3<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

// Through exp, which is several times cheaper than libm tanh for f32.
fn tanh<T: Scalar>(x: T) -> T {
    let two = T::one() + T::one();
    two * sigmoid(two * x) - T::one()
}

impl Lstm {
    pub fn new<T: Scalar>(params: &mut ParameterSet<T>, name: &str, in_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: params.add(format!("{name}.w_ih"), in_dim, 4 * hidden, true),
            w_hh: params.add(format!("{name}.w_hh"), hidden, 4 * hidden, true),
            bias: params.add(format!("{name}.bias"), 1, 4 * hidden, false),
            in_dim,
            hidden,
        }
    }

    /// Weights `U(±1/√h)`, forget-gate bias 1, other biases 0.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut ParameterSet<T>, rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        params.fill_uniform(self.w_ih, bound, rng);
        params.fill_uniform(self.w_hh, bound, rng);
        params.fill(self.bias, 0.0);
        let h = self.hidden;
        params
            .value_mut(self.bias)
            .slice_mut(s![0, h..2 * h])
            .fill(T::one());
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden * (self.in_dim + self.hidden + 1)
    }

    fn check<T: Scalar>(&self, batch: &SeqBatch<'_, T>) -> Result<(), NnError> {
        if batch.steps == 0 || batch.pad.len() != self.in_dim {
            return Err(shape_err(
                "lstm",
                format!("steps {}, pad width {}", batch.steps, batch.pad.len()),
            ));
        }
        for seq in &batch.seqs {
            if seq.ncols() != self.in_dim || seq.nrows() > batch.steps {
                return Err(shape_err(
                    "lstm",
                    format!("sequence {:?} for {} steps of width {}", seq.dim(), batch.steps, self.in_dim),
                ));
            }
        }
        Ok(())
    }

    /// Runs all `steps` and returns the final hidden states (`batch × h`).
    pub fn forward<T: Scalar>(
        &self,
        vals: ParamValues<'_, T>,
        batch: &SeqBatch<'_, T>,
    ) -> Result<(Array2<T>, LstmCache<T>), NnError> {
        self.check(batch)?;
        let (h, n, steps) = (self.hidden, batch.batch_size(), batch.steps);
        let w_ih = vals.get(self.w_ih);
        let w_hh = vals.get(self.w_hh).to_owned();
        let w_hh = w_hh.as_slice().expect("contiguous w_hh");
        let bias = vals.get(self.bias).row(0).to_owned();
        let real_proj: Vec<Array2<T>> = batch.seqs.iter().map(|s| s.dot(&w_ih) + &bias).collect();
        let pad_proj = batch.pad.dot(&w_ih) + &bias;

        let mut gates = Array3::zeros((steps, n, 4 * h));
        let mut cells = Array3::zeros((steps + 1, n, h));
        let mut hiddens = Array3::zeros((steps + 1, n, h));
        for t in 0..steps {
            let mut z = gates.index_axis_mut(Axis(0), t);
            for (b, mut row) in z.rows_mut().into_iter().enumerate() {
                if t < real_proj[b].nrows() {
                    row.assign(&real_proj[b].row(t));
                } else {
                    row.assign(&pad_proj);
                }
            }
            let z = z.as_slice_mut().expect("contiguous gates");
            let (c_prev, c_next) = split_steps(cells.as_slice_mut().expect("contiguous cells"), t, n * h);
            let (h_prev, h_next) = split_steps(hiddens.as_slice_mut().expect("contiguous hiddens"), t, n * h);
            add_matmul(h_prev, w_hh, z, h);
            for b in 0..n {
                let g = &mut z[b * 4 * h..(b + 1) * 4 * h];
                for v in &mut g[..2 * h] {
                    *v = sigmoid(*v);
                }
                for v in &mut g[2 * h..3 * h] {
                    *v = tanh(*v);
                }
                for v in &mut g[3 * h..] {
                    *v = sigmoid(*v);
                }
                for j in 0..h {
                    let k = b * h + j;
                    let c = g[h + j] * c_prev[k] + g[j] * g[2 * h + j];
                    c_next[k] = c;
                    h_next[k] = g[3 * h + j] * tanh(c);
                }
            }
        }
        let last = hiddens.index_axis(Axis(0), steps).to_owned();
        Ok((last, LstmCache { gates, cells, hiddens }))
    }

    /// Backpropagation through time from the gradient of the final hidden
    /// state. Inputs are data, so no input gradient is produced.
    pub fn backward<T: Scalar>(
        &self,
        vals: ParamValues<'_, T>,
        grads: &mut ParamGrads<'_, T>,
        batch: &SeqBatch<'_, T>,
        cache: &LstmCache<T>,
        d_last: ArrayView2<T>,
    ) {
        let (h, n, steps) = (self.hidden, batch.batch_size(), batch.steps);
        let w_hh = vals.get(self.w_hh).to_owned();
        let w_hh = w_hh.as_slice().expect("contiguous w_hh");
        let mut dz_real: Vec<Array2<T>> = batch
            .seqs
            .iter()
            .map(|s| Array2::zeros((s.nrows(), 4 * h)))
            .collect();
        let mut dz_pad = vec![T::zero(); 4 * h];
        let mut dw_hh = vec![T::zero(); h * 4 * h];
        let mut db = vec![T::zero(); 4 * h];

        let mut dh = d_last.as_standard_layout().into_owned();
        let mut dc = vec![T::zero(); n * h];
        let mut dz = Array2::<T>::zeros((n, 4 * h));
        let cells = cache.cells.as_slice().expect("contiguous cells");
        let hiddens = cache.hiddens.as_slice().expect("contiguous hiddens");
        for t in (0..steps).rev() {
            let g = &cache.gates.as_slice().expect("contiguous gates")[t * n * 4 * h..(t + 1) * n * 4 * h];
            let c = &cells[(t + 1) * n * h..(t + 2) * n * h];
            let c_prev = &cells[t * n * h..(t + 1) * n * h];
            let dh_s = dh.as_slice().expect("contiguous dh");
            let dz_s = dz.as_slice_mut().expect("contiguous dz");
            for b in 0..n {
                let gb = &g[b * 4 * h..(b + 1) * 4 * h];
                let dzb = &mut dz_s[b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let k = b * h + j;
                    let (i_g, f_g, g_g, o_g) = (gb[j], gb[h + j], gb[2 * h + j], gb[3 * h + j]);
                    let tc = tanh(c[k]);
                    let dhv = dh_s[k];
                    let dcv = dc[k] + dhv * o_g * (T::one() - tc * tc);
                    dzb[j] = dcv * g_g * i_g * (T::one() - i_g);
                    dzb[h + j] = dcv * c_prev[k] * f_g * (T::one() - f_g);
                    dzb[2 * h + j] = dcv * i_g * (T::one() - g_g * g_g);
                    dzb[3 * h + j] = dhv * tc * o_g * (T::one() - o_g);
                    dc[k] = dcv * f_g;
                }
            }
            let h_prev = &hiddens[t * n * h..(t + 1) * n * h];
            let dz_s = dz.as_slice().expect("contiguous dz");
            let dh_s = dh.as_slice_mut().expect("contiguous dh");
            let (dw, bias_g, pad_g) = (&mut dw_hh[..], &mut db[..], &mut dz_pad[..]);
            for b in 0..n {
                let dzb = &dz_s[b * 4 * h..(b + 1) * 4 * h];
                for k in 0..h {
                    let hv = h_prev[b * h + k];
                    for (w, &d) in dw[k * 4 * h..(k + 1) * 4 * h].iter_mut().zip(dzb) {
                        *w += hv * d;
                    }
                    dh_s[b * h + k] = w_hh[k * 4 * h..(k + 1) * 4 * h]
                        .iter()
                        .zip(dzb)
                        .fold(T::zero(), |acc, (&w, &d)| acc + w * d);
                }
                for (g, &d) in bias_g.iter_mut().zip(dzb) {
                    *g += d;
                }
                if t < dz_real[b].nrows() {
                    dz_real[b].row_mut(t).as_slice_mut().expect("contiguous row").copy_from_slice(dzb);
                } else {
                    for (g, &d) in pad_g.iter_mut().zip(dzb) {
                        *g += d;
                    }
                }
            }
        }

        let mut gw_ih = grads.get_mut(self.w_ih);
        for (seq, dzr) in batch.seqs.iter().zip(&dz_real) {
            general_mat_mul(T::one(), &seq.t(), dzr, T::one(), &mut gw_ih);
        }
        let dz_pad = ArrayView1::from(&dz_pad[..]);
        for (mut row, &p) in gw_ih.rows_mut().into_iter().zip(batch.pad.iter()) {
            row.scaled_add(p, &dz_pad);
        }
        let dw_hh = ArrayView2::from_shape((h, 4 * h), &dw_hh[..]).expect("w_hh shape");
        grads.get_mut(self.w_hh).scaled_add(T::one(), &dw_hh);
        grads.get_mut(self.bias).row_mut(0).scaled_add(T::one(), &ArrayView1::from(&db[..]));
    }
}

/// `z += h · w` for row-major `h` (`n × k`) and `w` (`k × 4h`).
fn add_matmul<T: Scalar>(h: &[T], w: &[T], z: &mut [T], k: usize) {
    let width = w.len() / k;
    for (hb, zb) in h.chunks_exact(k).zip(z.chunks_exact_mut(width)) {
        for (&hv, wr) in hb.iter().zip(w.chunks_exact(width)) {
            for (zv, &wv) in zb.iter_mut().zip(wr) {
                *zv += hv * wv;
            }
        }
    }
}

/// Step `t` and step `t + 1` blocks of a flat `(steps + 1) × width` buffer.
fn split_steps<T>(buf: &mut [T], t: usize, width: usize) -> (&mut [T], &mut [T]) {
    let (head, tail) = buf.split_at_mut((t + 1) * width);
    (&mut head[t * width..], &mut tail[..width])
}

/// Final hidden state of one unpadded sequence.
pub fn lstm_forward<T: Scalar>(
    lstm: &Lstm,
    vals: ParamValues<'_, T>,
    seq: ArrayView2<T>,
) -> Result<Array1<T>, NnError> {
    let pad = Array1::zeros(lstm.in_dim);
    let batch = SeqBatch {
        seqs: vec![seq],
        pad: pad.view(),
        steps: seq.nrows(),
    };
    let (last, _) = lstm.forward(vals, &batch)?;
    Ok(last.row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straightforward per-sample recurrence on an explicitly padded matrix.
    fn reference(ps: &ParameterSet<f64>, lstm: &Lstm, seq: &Array2<f64>) -> Array1<f64> {
        let h = lstm.hidden;
        let (w_ih, w_hh, b) = (ps.value(lstm.w_ih), ps.value(lstm.w_hh), ps.value(lstm.bias));
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        for row in seq.rows() {
            let mut z = vec![0.0; 4 * h];
            for k in 0..4 * h {
                z[k] = b[[0, k]];
                for (i, x) in row.iter().enumerate() {
                    z[k] += x * w_ih[[i, k]];
                }
                for (i, hv) in hs.iter().enumerate() {
                    z[k] += hv * w_hh[[i, k]];
                }
            }
            for j in 0..h {
                cs[j] = sig(z[h + j]) * cs[j] + sig(z[j]) * z[2 * h + j].tanh();
                hs[j] = sig(z[3 * h + j]) * cs[j].tanh();
            }
        }
        Array1::from(hs)
    }

    fn setup(seed: u64) -> (ParameterSet<f64>, Lstm) {
        let mut ps = ParameterSet::new();
        let lstm = Lstm::new(&mut ps, "lstm", 3, 4);
        lstm.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(seed));
        (ps, lstm)
    }

    #[test]
    fn init_and_count() {
        let (ps, lstm) = setup(0);
        assert_eq!(ps.len(), lstm.param_count());
        let b = ps.value(lstm.bias);
        assert!(b.slice(s![0, 4..8]).iter().all(|v| *v == 1.0));
        assert!(b.slice(s![0, ..4]).iter().all(|v| *v == 0.0));
        assert!(ps.value(lstm.w_hh).iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn batched_logical_padding_matches_reference() {
        let (ps, lstm) = setup(3);
        let a = array![[0.1, -0.4, 0.9], [1.0, 0.2, -0.3]];
        let b = array![[0.5, 0.5, -1.0]];
        let pad = array![0.05, -0.02, 0.3];
        let batch = SeqBatch {
            seqs: vec![a.view(), b.view()],
            pad: pad.view(),
            steps: 4,
        };
        let (last, _) = lstm.forward(ps.values(), &batch).unwrap();
        for (k, seq) in [&a, &b].into_iter().enumerate() {
            let mut padded = Array2::zeros((4, 3));
            padded.slice_mut(s![..seq.nrows(), ..]).assign(seq);
            for t in seq.nrows()..4 {
                padded.row_mut(t).assign(&pad);
            }
            let want = reference(&ps, &lstm, &padded);
            for (x, y) in last.row(k).iter().zip(want.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let single = lstm_forward(&lstm, ps.values(), a.view()).unwrap();
        let want = reference(&ps, &lstm, &a);
        assert!(single.iter().zip(want.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_shapes() {
        let (ps, lstm) = setup(0);
        let long = Array2::<f64>::zeros((5, 3));
        let pad = Array1::zeros(3);
        let batch = SeqBatch { seqs: vec![long.view()], pad: pad.view(), steps: 4 };
        assert!(lstm.forward(ps.values(), &batch).is_err());
        let narrow = Array2::<f64>::zeros((2, 2));
        let batch = SeqBatch { seqs: vec![narrow.view()], pad: pad.view(), steps: 4 };
        assert!(lstm.forward(ps.values(), &batch).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (mut ps, lstm) = setup(11);
        let a = array![[0.1, -0.4, 0.9], [1.0, 0.2, -0.3], [0.0, 0.7, 0.1]];
        let b = array![[0.5, 0.5, -1.0]];
        let pad = array![0.2, -0.6, 0.4];
        let coef = array![[0.3, -1.0, 0.5, 2.0], [-0.7, 0.1, 1.2, -0.4]];
        let run = |ps: &ParameterSet<f64>| {
            let batch = SeqBatch { seqs: vec![a.view(), b.view()], pad: pad.view(), steps: 4 };
            lstm.forward(ps.values(), &batch).unwrap()
        };
        let (_, cache) = run(&ps);
        {
            let batch = SeqBatch { seqs: vec![a.view(), b.view()], pad: pad.view(), steps: 4 };
            let (vals, mut grads) = ps.split_mut();
            lstm.backward(vals, &mut grads, &batch, &cache, coef.view());
        }
        let analytic = ps.flat_grads().to_vec();
        let eps = 1e-6;
        for i in 0..ps.len() {
            let orig = ps.flat_values()[i];
            ps.flat_values_mut()[i] = orig + eps;
            let up = (run(&ps).0 * &coef).sum();
            ps.flat_values_mut()[i] = orig - eps;
            let down = (run(&ps).0 * &coef).sum();
            ps.flat_values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            assert!(
                (numeric - analytic[i]).abs() <= 1e-7 + 1e-5 * numeric.abs(),
                "param {i}: {numeric} vs {}",
                analytic[i]
            );
        }
    }
}
