//! Forward and backward passes through the fixed layer chain.
//!
//! The backward pass is exact analytic differentiation of the training
//! loss: dense head, dropout mask, full backpropagation through time for
//! the LSTM, and the valid cross-correlation of the conv layer.

use rand::Rng;

use super::{plan, LayerSpec, ModelWeights};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
enum Value {
    Seq(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl Value {
    fn flatten(self) -> (Vec<f64>, Option<(usize, usize)>) {
        match self {
            Value::Flat(v) => (v, None),
            Value::Seq(rows) => {
                let dims = (rows.len(), rows.first().map_or(0, |r| r.len()));
                (rows.into_iter().flatten().collect(), Some(dims))
            }
        }
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        match self {
            Value::Flat(v) => v.iter_mut().for_each(&mut f),
            Value::Seq(rows) => rows.iter_mut().flatten().for_each(&mut f),
        }
    }
}

#[derive(Debug, Clone)]
struct LstmCache {
    /// Input sequence, one row per step.
    inputs: Vec<Vec<f64>>,
    gate_i: Vec<Vec<f64>>,
    gate_f: Vec<Vec<f64>>,
    gate_g: Vec<Vec<f64>>,
    gate_o: Vec<Vec<f64>>,
    cell: Vec<Vec<f64>>,
    tanh_cell: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv {
        input: Vec<Vec<f64>>,
        pre: Vec<Vec<f64>>,
    },
    Lstm(Box<LstmCache>),
    Dropout {
        /// Flat inverted-dropout mask (0 or 1/keep); `None` = identity.
        mask: Option<Vec<f64>>,
    },
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
        /// Set when a sequence was flattened into this layer.
        seq_dims: Option<(usize, usize)>,
    },
}

/// Everything the backward pass needs, captured during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    samples: Vec<Vec<LayerCache>>,
    /// Unclamped sigmoid outputs, used for the exact composite gradient.
    probs_raw: Vec<f64>,
    logits: Vec<f64>,
}

impl ForwardCache {
    /// Final pre-sigmoid activations, one per sample.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Parameter index ranges per layer, in spec order.
fn param_spans(specs: &[LayerSpec]) -> Vec<(usize, usize)> {
    let mut spans = Vec::with_capacity(specs.len());
    let mut cursor = 0;
    for spec in specs {
        let count = match spec {
            LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. } => 2,
            LayerSpec::Lstm { .. } => 3,
            LayerSpec::Dropout { .. } => 0,
        };
        spans.push((cursor, count));
        cursor += count;
    }
    spans
}

fn check_batch(batch: &[Vec<Vec<f64>>]) -> Result<(usize, usize)> {
    let Some(first) = batch.first() else {
        return Err(Error::Argument("empty batch".into()));
    };
    let steps = first.len();
    let channels = first.first().map_or(0, |r| r.len());
    for window in batch {
        if window.len() != steps || window.iter().any(|r| r.len() != channels) {
            return Err(Error::Shape("ragged batch".into()));
        }
        for row in window {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite input value".into()));
            }
        }
    }
    Ok((steps, channels))
}

fn verify_layout(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    input_shape: (usize, usize),
) -> Result<()> {
    let (metas, _) = plan(specs, input_shape)?;
    if metas.len() != weights.params.len()
        || metas
            .iter()
            .zip(&weights.params)
            .any(|(m, p)| m.name != p.name || m.shape != p.shape)
    {
        return Err(Error::Shape(
            "weights do not match the canonical layout for these specs".into(),
        ));
    }
    Ok(())
}

/// Runs the network over a batch of `n x steps x channels` windows.
///
/// Dropout is active only in train mode (inverted scaling, seeded);
/// returned probabilities are clamped strictly inside (0,1).
pub fn forward(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    batch: &[Vec<Vec<f64>>],
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Vec<f64>, ForwardCache)> {
    let input_shape = check_batch(batch)?;
    verify_layout(weights, specs, input_shape)?;
    if !weights.all_finite() {
        return Err(Error::Numeric("non-finite weight value".into()));
    }
    let spans = param_spans(specs);
    let mut rng = rng_from(dropout_seed);

    let mut probs = Vec::with_capacity(batch.len());
    let mut probs_raw = Vec::with_capacity(batch.len());
    let mut logits = Vec::with_capacity(batch.len());
    let mut samples = Vec::with_capacity(batch.len());

    for window in batch {
        let mut value = Value::Seq(window.clone());
        let mut caches = Vec::with_capacity(specs.len());
        for (spec, &(start, _)) in specs.iter().zip(&spans) {
            match *spec {
                LayerSpec::Conv1d {
                    filters,
                    kernel_size,
                    stride,
                    activation,
                } => {
                    let Value::Seq(input) = value else {
                        return Err(Error::Shape("conv1d needs a sequence input".into()));
                    };
                    let kernel = &weights.params[start].values;
                    let bias = &weights.params[start + 1].values;
                    let channels = input[0].len();
                    let t_out = (input.len() - kernel_size) / stride + 1;
                    let mut pre = vec![vec![0.0; filters]; t_out];
                    for (t_o, pre_row) in pre.iter_mut().enumerate() {
                        for (f, slot) in pre_row.iter_mut().enumerate() {
                            let mut acc = bias[f];
                            for k in 0..kernel_size {
                                let row = &input[t_o * stride + k];
                                let base = k * channels;
                                for (c, x) in row.iter().enumerate() {
                                    acc += x * kernel[(base + c) * filters + f];
                                }
                            }
                            *slot = acc;
                        }
                    }
                    let out = pre
                        .iter()
                        .map(|row| row.iter().map(|&z| activation.apply(z)).collect())
                        .collect();
                    caches.push(LayerCache::Conv { input, pre });
                    value = Value::Seq(out);
                }
                LayerSpec::Lstm { units } => {
                    let Value::Seq(input) = value else {
                        return Err(Error::Shape("lstm needs a sequence input".into()));
                    };
                    let kernel = &weights.params[start].values;
                    let recurrent = &weights.params[start + 1].values;
                    let bias = &weights.params[start + 2].values;
                    let steps = input.len();
                    let width = 4 * units;
                    let mut cache = LstmCache {
                        inputs: input,
                        gate_i: Vec::with_capacity(steps),
                        gate_f: Vec::with_capacity(steps),
                        gate_g: Vec::with_capacity(steps),
                        gate_o: Vec::with_capacity(steps),
                        cell: Vec::with_capacity(steps),
                        tanh_cell: Vec::with_capacity(steps),
                        hidden: Vec::with_capacity(steps),
                    };
                    let mut h_prev = vec![0.0; units];
                    let mut c_prev = vec![0.0; units];
                    for t in 0..steps {
                        let mut pre = bias.clone();
                        for (d, x) in cache.inputs[t].iter().enumerate() {
                            let row = &kernel[d * width..(d + 1) * width];
                            for (p, w) in pre.iter_mut().zip(row) {
                                *p += x * w;
                            }
                        }
                        for (u, h) in h_prev.iter().enumerate() {
                            let row = &recurrent[u * width..(u + 1) * width];
                            for (p, w) in pre.iter_mut().zip(row) {
                                *p += h * w;
                            }
                        }
                        let gate_i: Vec<f64> = (0..units).map(|j| sigmoid(pre[j])).collect();
                        let gate_f: Vec<f64> =
                            (0..units).map(|j| sigmoid(pre[units + j])).collect();
                        let gate_g: Vec<f64> =
                            (0..units).map(|j| pre[2 * units + j].tanh()).collect();
                        let gate_o: Vec<f64> =
                            (0..units).map(|j| sigmoid(pre[3 * units + j])).collect();
                        let cell: Vec<f64> = (0..units)
                            .map(|j| gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j])
                            .collect();
                        let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
                        let hidden: Vec<f64> =
                            (0..units).map(|j| gate_o[j] * tanh_cell[j]).collect();
                        h_prev.clone_from(&hidden);
                        c_prev.clone_from(&cell);
                        cache.gate_i.push(gate_i);
                        cache.gate_f.push(gate_f);
                        cache.gate_g.push(gate_g);
                        cache.gate_o.push(gate_o);
                        cache.cell.push(cell);
                        cache.tanh_cell.push(tanh_cell);
                        cache.hidden.push(hidden);
                    }
                    value = Value::Flat(h_prev);
                    caches.push(LayerCache::Lstm(Box::new(cache)));
                }
                LayerSpec::Dropout { rate } => {
                    if mode == Mode::Train && rate > 0.0 {
                        let keep = 1.0 - rate;
                        let mut mask = Vec::new();
                        value.for_each_mut(|v| {
                            let m = if rng.gen_range(0.0..1.0) < rate {
                                0.0
                            } else {
                                1.0 / keep
                            };
                            mask.push(m);
                            *v *= m;
                        });
                        caches.push(LayerCache::Dropout { mask: Some(mask) });
                    } else {
                        caches.push(LayerCache::Dropout { mask: None });
                    }
                }
                LayerSpec::Dense { units, activation } => {
                    let (input, seq_dims) = value.flatten();
                    let kernel = &weights.params[start].values;
                    let bias = &weights.params[start + 1].values;
                    let mut pre = bias.clone();
                    for (d, x) in input.iter().enumerate() {
                        let row = &kernel[d * units..(d + 1) * units];
                        for (p, w) in pre.iter_mut().zip(row) {
                            *p += x * w;
                        }
                    }
                    let out: Vec<f64> = pre.iter().map(|&z| activation.apply(z)).collect();
                    caches.push(LayerCache::Dense {
                        input,
                        pre,
                        seq_dims,
                    });
                    value = Value::Flat(out);
                }
            }
        }
        let Value::Flat(out) = value else {
            unreachable!("plan() guarantees a flat sigmoid head");
        };
        let logit = match caches.last() {
            Some(LayerCache::Dense { pre, .. }) => pre[0],
            _ => unreachable!(),
        };
        let p_raw = out[0];
        logits.push(logit);
        probs_raw.push(p_raw);
        probs.push(p_raw.clamp(1e-12, 1.0 - 1e-12));
        samples.push(caches);
    }
    Ok((
        probs,
        ForwardCache {
            mode,
            samples,
            probs_raw,
            logits,
        },
    ))
}

/// Exact gradient of [`super::loss_bce`] with respect to every parameter.
///
/// The sigmoid head and the cross-entropy are differentiated jointly
/// (`p - y`), which is exact wherever the probability clamp is inactive.
pub fn backward(
    cache: &ForwardCache,
    weights: &ModelWeights,
    specs: &[LayerSpec],
    labels: &[u8],
    l2_lambda: f64,
) -> Result<ModelWeights> {
    if cache.mode != Mode::Train {
        return Err(Error::Argument(
            "backward needs a cache from a train-mode forward".into(),
        ));
    }
    if labels.len() != cache.samples.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} cached samples",
            labels.len(),
            cache.samples.len()
        )));
    }
    let spans = param_spans(specs);
    let mut grads = weights.zeros_like();
    let n = labels.len() as f64;

    for (sample_idx, caches) in cache.samples.iter().enumerate() {
        // joint BCE+sigmoid gradient at the head
        let dz_head = (cache.probs_raw[sample_idx] - labels[sample_idx] as f64) / n;
        let mut dvalue = Value::Flat(vec![dz_head]);
        let mut head = true;

        for (layer_idx, spec) in specs.iter().enumerate().rev() {
            let (start, _) = spans[layer_idx];
            match (*spec, &caches[layer_idx]) {
                (
                    LayerSpec::Dense { units, activation },
                    LayerCache::Dense {
                        input,
                        pre,
                        seq_dims,
                    },
                ) => {
                    let Value::Flat(dout) = dvalue else {
                        return Err(Error::Shape("dense gradient must be flat".into()));
                    };
                    // for the head the incoming vector already is d/d(pre)
                    let dz: Vec<f64> = if head {
                        dout
                    } else {
                        dout.iter()
                            .zip(pre)
                            .map(|(d, &z)| d * activation.derivative(z))
                            .collect()
                    };
                    let kernel = &weights.params[start].values;
                    let gkernel = &mut grads.params[start].values;
                    for (d, x) in input.iter().enumerate() {
                        let row = &mut gkernel[d * units..(d + 1) * units];
                        for (g, dz_u) in row.iter_mut().zip(&dz) {
                            *g += x * dz_u;
                        }
                    }
                    for (g, dz_u) in grads.params[start + 1].values.iter_mut().zip(&dz) {
                        *g += dz_u;
                    }
                    let mut dinput = vec![0.0; input.len()];
                    for (d, slot) in dinput.iter_mut().enumerate() {
                        let row = &kernel[d * units..(d + 1) * units];
                        *slot = row.iter().zip(&dz).map(|(w, dz_u)| w * dz_u).sum();
                    }
                    dvalue = match seq_dims {
                        None => Value::Flat(dinput),
                        Some((steps, dim)) => Value::Seq(
                            (0..*steps)
                                .map(|t| dinput[t * dim..(t + 1) * dim].to_vec())
                                .collect(),
                        ),
                    };
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    if let Some(mask) = mask {
                        let mut cursor = 0;
                        dvalue.for_each_mut(|v| {
                            *v *= mask[cursor];
                            cursor += 1;
                        });
                    }
                }
                (LayerSpec::Lstm { units }, LayerCache::Lstm(lstm)) => {
                    let Value::Flat(dh_last) = dvalue else {
                        return Err(Error::Shape("lstm gradient must be flat".into()));
                    };
                    let kernel = &weights.params[start].values;
                    let recurrent = &weights.params[start + 1].values;
                    let width = 4 * units;
                    let steps = lstm.inputs.len();
                    let zeros = vec![0.0; units];

                    let mut dh = dh_last;
                    let mut dc_carry = vec![0.0; units];
                    let mut dinputs = vec![vec![0.0; lstm.inputs[0].len()]; steps];
                    for t in (0..steps).rev() {
                        let c_prev = if t == 0 { &zeros } else { &lstm.cell[t - 1] };
                        let h_prev = if t == 0 { &zeros } else { &lstm.hidden[t - 1] };
                        let mut dpre = vec![0.0; width];
                        for j in 0..units {
                            let i = lstm.gate_i[t][j];
                            let f = lstm.gate_f[t][j];
                            let g = lstm.gate_g[t][j];
                            let o = lstm.gate_o[t][j];
                            let tc = lstm.tanh_cell[t][j];
                            let d_o = dh[j] * tc;
                            let dc = dc_carry[j] + dh[j] * o * (1.0 - tc * tc);
                            let d_i = dc * g;
                            let d_g = dc * i;
                            let d_f = dc * c_prev[j];
                            dc_carry[j] = dc * f;
                            dpre[j] = d_i * i * (1.0 - i);
                            dpre[units + j] = d_f * f * (1.0 - f);
                            dpre[2 * units + j] = d_g * (1.0 - g * g);
                            dpre[3 * units + j] = d_o * o * (1.0 - o);
                        }
                        let gkernel = &mut grads.params[start].values;
                        for (d, x) in lstm.inputs[t].iter().enumerate() {
                            let row = &mut gkernel[d * width..(d + 1) * width];
                            for (g, dp) in row.iter_mut().zip(&dpre) {
                                *g += x * dp;
                            }
                        }
                        let grecurrent = &mut grads.params[start + 1].values;
                        for (u, h) in h_prev.iter().enumerate() {
                            let row = &mut grecurrent[u * width..(u + 1) * width];
                            for (g, dp) in row.iter_mut().zip(&dpre) {
                                *g += h * dp;
                            }
                        }
                        for (g, dp) in grads.params[start + 2].values.iter_mut().zip(&dpre) {
                            *g += dp;
                        }
                        for (d, slot) in dinputs[t].iter_mut().enumerate() {
                            let row = &kernel[d * width..(d + 1) * width];
                            *slot = row.iter().zip(&dpre).map(|(w, dp)| w * dp).sum();
                        }
                        let mut dh_prev = vec![0.0; units];
                        for (u, slot) in dh_prev.iter_mut().enumerate() {
                            let row = &recurrent[u * width..(u + 1) * width];
                            *slot = row.iter().zip(&dpre).map(|(w, dp)| w * dp).sum();
                        }
                        dh = dh_prev;
                    }
                    dvalue = Value::Seq(dinputs);
                }
                (
                    LayerSpec::Conv1d {
                        filters,
                        kernel_size,
                        stride,
                        activation,
                    },
                    LayerCache::Conv { input, pre },
                ) => {
                    let Value::Seq(dout) = dvalue else {
                        return Err(Error::Shape("conv gradient must be a sequence".into()));
                    };
                    let channels = input[0].len();
                    let kernel = &weights.params[start].values;
                    let mut dinput = vec![vec![0.0; channels]; input.len()];
                    for (t_o, dout_row) in dout.iter().enumerate() {
                        for f in 0..filters {
                            let dz = dout_row[f] * activation.derivative(pre[t_o][f]);
                            if dz == 0.0 {
                                continue;
                            }
                            grads.params[start + 1].values[f] += dz;
                            let gkernel = &mut grads.params[start].values;
                            for k in 0..kernel_size {
                                let row = &input[t_o * stride + k];
                                let drow = &mut dinput[t_o * stride + k];
                                let base = k * channels;
                                for c in 0..channels {
                                    gkernel[(base + c) * filters + f] += dz * row[c];
                                    drow[c] += dz * kernel[(base + c) * filters + f];
                                }
                            }
                        }
                    }
                    dvalue = Value::Seq(dinput);
                }
                _ => unreachable!("cache/spec mismatch"),
            }
            head = false;
        }
    }

    if l2_lambda != 0.0 {
        for (grad, param) in grads.params.iter_mut().zip(&weights.params) {
            if param.is_matrix() {
                for (g, w) in grad.values.iter_mut().zip(&param.values) {
                    *g += 2.0 * l2_lambda * w;
                }
            }
        }
    }
    Ok(grads)
}
