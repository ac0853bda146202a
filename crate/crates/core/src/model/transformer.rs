//! Forward and backward passes.
//!
//! Everything is expressed over a *segment*: a run of tokens at absolute
//! positions `offset .. offset + n` whose attention may also read the keys
//! and values of an earlier segment covering `0 .. offset`. A plain forward
//! pass is a segment with `offset = 0`; incremental decoding and shared
//! prompt prefixes reuse the same code with a non-empty past.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{LayerParams, ModelParams, NormParams};
use super::ModelError;
use crate::corpus::TokenId;

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Keys and values of one layer for positions `0 .. len`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKv {
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
}

/// Per-layer keys and values of an already processed prefix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvCache {
    pub layers: Vec<LayerKv>,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.keys.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    norm1: NormCache,
    h1: Array2<f64>,
    queries: Array2<f64>,
    /// past keys followed by this segment's keys
    keys: Array2<f64>,
    values: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    norm2: NormCache,
    h2: Array2<f64>,
    up: Array2<f64>,
    act: Array2<f64>,
}

/// Activations cached by a forward pass, sufficient for exact backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    ids: Vec<TokenId>,
    offset: usize,
    n_layers: usize,
    d_model: usize,
    vocab_size: usize,
    layers: Vec<LayerTrace>,
    final_norm: Option<NormCache>,
    hidden: Option<Array2<f64>>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Keys and values for positions `0 .. offset + len`, ready to serve as
    /// the past of a following segment.
    pub fn kv_cache(&self) -> KvCache {
        KvCache {
            layers: self
                .layers
                .iter()
                .map(|l| LayerKv {
                    keys: l.keys.clone(),
                    values: l.values.clone(),
                })
                .collect(),
        }
    }

    fn into_kv_cache(self) -> KvCache {
        KvCache {
            layers: self
                .layers
                .into_iter()
                .map(|l| LayerKv {
                    keys: l.keys,
                    values: l.values,
                })
                .collect(),
        }
    }

    fn check_matches(&self, params: &ModelParams) -> Result<(), ModelError> {
        let c = &params.config;
        if self.n_layers != c.n_layers || self.d_model != c.d_model || self.vocab_size != c.vocab_size {
            return Err(ModelError::TraceMismatch(format!(
                "trace has {} layers, d_model {}, vocab {}; params have {}, {}, {}",
                self.n_layers, self.d_model, self.vocab_size, c.n_layers, c.d_model, c.vocab_size
            )));
        }
        Ok(())
    }
}

/// Gradient with respect to the keys and values of a segment's past.
pub type KvGrad = KvCache;

fn validate_ids(params: &ModelParams, ids: &[TokenId], offset: usize) -> Result<(), ModelError> {
    let c = &params.config;
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if offset + ids.len() > c.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: offset + ids.len(),
            max: c.max_seq_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(ModelError::IdOutOfVocab {
            id,
            vocab_size: c.vocab_size,
        });
    }
    Ok(())
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

fn norm_forward(x: &Array2<f64>, p: &NormParams) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let r = 1.0 / (var + NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * r);
        *s = r;
    }
    let mut y = &normalized * &p.gain;
    y += &p.bias;
    (y, NormCache { normalized, inv_std })
}

fn norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    p: &NormParams,
    grad: &mut NormParams,
) -> Array2<f64> {
    grad.gain += &(dy * &cache.normalized).sum_axis(Axis(0));
    grad.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &p.gain;
    for ((mut row, xhat), &r) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.normalized.axis_iter(Axis(0)))
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        row.iter_mut()
            .zip(xhat.iter())
            .for_each(|(v, &xh)| *v = r * (*v - mean_d - xh * mean_dx));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// `acc += a^T b`
fn acc_at_b(acc: &mut Array2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

fn stack_rows(past: Option<&Array2<f64>>, own: Array2<f64>) -> Array2<f64> {
    match past {
        Some(p) if p.nrows() > 0 => {
            ndarray::concatenate(Axis(0), &[p.view(), own.view()]).expect("matching widths")
        }
        _ => own,
    }
}

fn layer_forward(
    p: &LayerParams,
    x: &mut Array2<f64>,
    past: Option<&LayerKv>,
    n_heads: usize,
) -> LayerTrace {
    let n = x.nrows();
    let d = x.ncols();
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();

    let (h1, norm1) = norm_forward(x, &p.attn_norm);
    let queries = linear(&h1, &p.w_query, &p.b_query);
    let keys = stack_rows(past.map(|kv| &kv.keys), linear(&h1, &p.w_key, &p.b_key));
    let values = stack_rows(past.map(|kv| &kv.values), linear(&h1, &p.w_value, &p.b_value));
    let past_len = keys.nrows() - n;

    let mut attn = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let mut scores = queries.slice(cols).dot(&keys.slice(cols).t());
        for (i, mut row) in scores.axis_iter_mut(Axis(0)).enumerate() {
            let visible = past_len + i + 1;
            let max = row
                .slice(s![..visible])
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
            let mut sum = 0.0;
            for v in row.slice_mut(s![..visible]).iter_mut() {
                *v = (*v * scale - max).exp();
                sum += *v;
            }
            row.slice_mut(s![..visible]).mapv_inplace(|v| v / sum);
            row.slice_mut(s![visible..]).fill(0.0);
        }
        attn.slice_mut(cols).assign(&scores.dot(&values.slice(cols)));
        probs.push(scores);
    }

    *x += &linear(&attn, &p.w_out, &p.b_out);

    let (h2, norm2) = norm_forward(x, &p.ffn_norm);
    let up = linear(&h2, &p.w_up, &p.b_up);
    let act = up.mapv(gelu);
    *x += &linear(&act, &p.w_down, &p.b_down);

    LayerTrace {
        norm1,
        h1,
        queries,
        keys,
        values,
        probs,
        attn,
        norm2,
        h2,
        up,
        act,
    }
}

/// Backpropagates through one layer. `dx` enters as the gradient of the
/// layer output and leaves as the gradient of its input. `d_own_kv` carries
/// gradients that later segments sent to this segment's own keys/values.
/// Returns the gradient for the past keys/values.
fn layer_backward(
    p: &LayerParams,
    t: &LayerTrace,
    dx: &mut Array2<f64>,
    d_own_kv: Option<&LayerKv>,
    g: &mut LayerParams,
    n_heads: usize,
) -> LayerKv {
    let n = dx.nrows();
    let d = dx.ncols();
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let past_len = t.keys.nrows() - n;

    // feed-forward block
    acc_at_b(&mut g.w_down, &t.act.view(), &dx.view());
    g.b_down += &dx.sum_axis(Axis(0));
    let mut d_up = dx.dot(&p.w_down.t());
    d_up.zip_mut_with(&t.up, |dv, &u| *dv *= gelu_grad(u));
    acc_at_b(&mut g.w_up, &t.h2.view(), &d_up.view());
    g.b_up += &d_up.sum_axis(Axis(0));
    let dh2 = d_up.dot(&p.w_up.t());
    *dx += &norm_backward(&dh2, &t.norm2, &p.ffn_norm, &mut g.ffn_norm);

    // attention block
    acc_at_b(&mut g.w_out, &t.attn.view(), &dx.view());
    g.b_out += &dx.sum_axis(Axis(0));
    let d_attn = dx.dot(&p.w_out.t());

    let mut d_queries = Array2::zeros((n, d));
    let mut d_keys = Array2::zeros(t.keys.raw_dim());
    let mut d_values = Array2::zeros(t.values.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let probs = &t.probs[h];
        let d_out = d_attn.slice(cols);
        let mut d_scores = d_out.dot(&t.values.slice(cols).t());
        general_mat_mul(1.0, &probs.t(), &d_out, 1.0, &mut d_values.slice_mut(cols));
        for (mut ds, pr) in d_scores.axis_iter_mut(Axis(0)).zip(probs.axis_iter(Axis(0))) {
            let dot: f64 = ds.iter().zip(pr.iter()).map(|(a, b)| a * b).sum();
            ds.zip_mut_with(&pr, |v, &pv| *v = pv * (*v - dot) * scale);
        }
        general_mat_mul(1.0, &d_scores, &t.keys.slice(cols), 1.0, &mut d_queries.slice_mut(cols));
        general_mat_mul(1.0, &d_scores.t(), &t.queries.slice(cols), 1.0, &mut d_keys.slice_mut(cols));
    }
    if let Some(ext) = d_own_kv {
        d_keys.slice_mut(s![past_len.., ..]).scaled_add(1.0, &ext.keys);
        d_values.slice_mut(s![past_len.., ..]).scaled_add(1.0, &ext.values);
    }
    let d_k_own = d_keys.slice(s![past_len.., ..]);
    let d_v_own = d_values.slice(s![past_len.., ..]);

    acc_at_b(&mut g.w_query, &t.h1.view(), &d_queries.view());
    g.b_query += &d_queries.sum_axis(Axis(0));
    acc_at_b(&mut g.w_key, &t.h1.view(), &d_k_own);
    g.b_key += &d_k_own.sum_axis(Axis(0));
    acc_at_b(&mut g.w_value, &t.h1.view(), &d_v_own);
    g.b_value += &d_v_own.sum_axis(Axis(0));

    let mut dh1 = d_queries.dot(&p.w_query.t());
    general_mat_mul(1.0, &d_k_own, &p.w_key.t(), 1.0, &mut dh1);
    general_mat_mul(1.0, &d_v_own, &p.w_value.t(), 1.0, &mut dh1);
    *dx += &norm_backward(&dh1, &t.norm1, &p.attn_norm, &mut g.attn_norm);

    LayerKv {
        keys: d_keys.slice(s![..past_len, ..]).to_owned(),
        values: d_values.slice(s![..past_len, ..]).to_owned(),
    }
}

/// Runs `ids` at positions `past.len() ..` given the past keys/values.
/// Logits are skipped when `with_logits` is false.
pub fn forward_segment(
    params: &ModelParams,
    ids: &[TokenId],
    past: Option<&KvCache>,
    with_logits: bool,
) -> Result<(Option<Array2<f64>>, ForwardTrace), ModelError> {
    let c = &params.config;
    let offset = past.map_or(0, KvCache::len);
    if let Some(p) = past {
        if !p.layers.is_empty() && p.layers.len() != c.n_layers {
            return Err(ModelError::TraceMismatch(format!(
                "past has {} layers, model has {}",
                p.layers.len(),
                c.n_layers
            )));
        }
    }
    validate_ids(params, ids, offset)?;

    let mut x = Array2::zeros((ids.len(), c.d_model));
    for (i, (mut row, &id)) in x.axis_iter_mut(Axis(0)).zip(ids).enumerate() {
        row.assign(&params.token_embedding.row(id as usize));
        row += &params.position_embedding.row(offset + i);
    }

    let mut layers = Vec::with_capacity(c.n_layers);
    for (l, lp) in params.layers.iter().enumerate() {
        let layer_past = past.and_then(|p| p.layers.get(l));
        layers.push(layer_forward(lp, &mut x, layer_past, c.n_heads));
    }

    let (logits, final_norm, hidden) = if with_logits {
        let (hidden, cache) = norm_forward(&x, &params.final_norm);
        (Some(hidden.dot(&params.unembedding)), Some(cache), Some(hidden))
    } else {
        (None, None, None)
    };

    let trace = ForwardTrace {
        ids: ids.to_vec(),
        offset,
        n_layers: c.n_layers,
        d_model: c.d_model,
        vocab_size: c.vocab_size,
        layers,
        final_norm,
        hidden,
    };
    Ok((logits, trace))
}

/// Backward pass of a segment, accumulating parameter gradients into `grads`.
///
/// `d_logits` may be omitted for a segment whose own predictions carry no
/// loss; `d_own_kv` is the gradient later segments produced for this
/// segment's keys/values. Returns the gradient for the past keys/values.
pub fn backward_segment(
    params: &ModelParams,
    trace: &ForwardTrace,
    d_logits: Option<&Array2<f64>>,
    d_own_kv: Option<&KvGrad>,
    grads: &mut ModelParams,
) -> Result<KvGrad, ModelError> {
    trace.check_matches(params)?;
    trace.check_matches(grads)?;
    let c = &params.config;
    let n = trace.len();

    let mut dx = match d_logits {
        Some(dl) => {
            if dl.shape() != [n, c.vocab_size] {
                return Err(ModelError::TraceMismatch(format!(
                    "logit gradient shape {:?}, expected [{n}, {}]",
                    dl.shape(),
                    c.vocab_size
                )));
            }
            let (hidden, cache) = match (&trace.hidden, &trace.final_norm) {
                (Some(h), Some(cache)) => (h, cache),
                _ => {
                    return Err(ModelError::TraceMismatch(
                        "trace was recorded without logits".into(),
                    ))
                }
            };
            acc_at_b(&mut grads.unembedding, &hidden.view(), &dl.view());
            let d_hidden = dl.dot(&params.unembedding.t());
            norm_backward(&d_hidden, cache, &params.final_norm, &mut grads.final_norm)
        }
        None => Array2::zeros((n, c.d_model)),
    };
    if let Some(ext) = d_own_kv {
        if ext.layers.len() != c.n_layers || ext.len() != n {
            return Err(ModelError::TraceMismatch(
                "key/value gradient does not match the segment".into(),
            ));
        }
    }

    let mut d_past = Vec::with_capacity(c.n_layers);
    for l in (0..c.n_layers).rev() {
        let ext = d_own_kv.map(|e| &e.layers[l]);
        let dp = layer_backward(
            &params.layers[l],
            &trace.layers[l],
            &mut dx,
            ext,
            &mut grads.layers[l],
            c.n_heads,
        );
        d_past.push(dp);
    }
    d_past.reverse();

    for (i, (row, &id)) in dx.axis_iter(Axis(0)).zip(&trace.ids).enumerate() {
        let mut te = grads.token_embedding.row_mut(id as usize);
        te += &row;
        let mut pe = grads.position_embedding.row_mut(trace.offset + i);
        pe += &row;
    }
    Ok(KvCache { layers: d_past })
}

/// Per-position logits for `ids`, plus the trace for [`backward`].
pub fn forward(
    params: &ModelParams,
    ids: &[TokenId],
) -> Result<(Array2<f64>, ForwardTrace), ModelError> {
    let (logits, trace) = forward_segment(params, ids, None, true)?;
    Ok((logits.expect("logits requested"), trace))
}

/// Exact parameter gradients of a scalar loss whose gradient with respect to
/// the logits is `d_logits`.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    d_logits: &Array2<f64>,
) -> Result<ModelParams, ModelError> {
    let mut grads = params.zeros_like();
    backward_segment(params, trace, Some(d_logits), None, &mut grads)?;
    Ok(grads)
}

/// Incremental decoder over a growing key/value cache.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    cache: KvCache,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    /// Appends `ids` and returns the logits of the last one.
    pub fn feed(&mut self, params: &ModelParams, ids: &[TokenId]) -> Result<Array1<f64>, ModelError> {
        let past = (!self.cache.is_empty()).then_some(&self.cache);
        let (logits, trace) = forward_segment(params, ids, past, true)?;
        let logits = logits.expect("logits requested");
        self.cache = trace.into_kv_cache();
        Ok(logits.row(logits.nrows() - 1).to_owned())
    }
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 4,
            d_ff: 24,
            vocab_size: 11,
            max_seq_len: 16,
            init_seed: 5,
        }
    }

    fn loss_and_grad(logits: &Array2<f64>, targets: &[TokenId]) -> (f64, Array2<f64>) {
        let lp = log_softmax(logits);
        let n = targets.len() as f64;
        let mut d = lp.mapv(f64::exp);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            loss -= lp[[i, t as usize]];
            d[[i, t as usize]] -= 1.0;
        }
        (loss / n, d / n)
    }

    #[test]
    fn one_token_one_row() {
        let p = ModelParams::init(&cfg()).unwrap();
        let (logits, _) = forward(&p, &[3]).unwrap();
        assert_eq!(logits.shape(), &[1, 11]);
    }

    #[test]
    fn errors() {
        let p = ModelParams::init(&cfg()).unwrap();
        assert!(matches!(forward(&p, &[0; 17]), Err(ModelError::SequenceTooLong { .. })));
        assert!(matches!(forward(&p, &[11]), Err(ModelError::IdOutOfVocab { id: 11, .. })));
        assert!(matches!(forward(&p, &[]), Err(ModelError::EmptySequence)));
    }

    #[test]
    fn zero_params_are_uniform() {
        let p = ModelParams::zeros(&cfg()).unwrap();
        let (logits, _) = forward(&p, &[1, 2, 3]).unwrap();
        let lp = log_softmax(&logits);
        for v in lp.iter() {
            assert!((v + (11f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_normalized() {
        let p = ModelParams::init(&cfg()).unwrap();
        let (logits, _) = forward(&p, &[1, 5, 2, 9, 4]).unwrap();
        for row in log_softmax(&logits).axis_iter(Axis(0)) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_prefix_bit_exact() {
        let p = ModelParams::init(&cfg()).unwrap();
        let a = [1, 5, 2, 9, 4, 7];
        let b = [1, 5, 2, 3, 0, 10];
        let (la, _) = forward(&p, &a).unwrap();
        let (lb, _) = forward(&p, &b).unwrap();
        assert_eq!(la.slice(s![..3, ..]), lb.slice(s![..3, ..]));
        assert_ne!(la.row(3), lb.row(3));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let p = ModelParams::init(&cfg()).unwrap();
        let (logits, trace) = forward(&p, &[1, 2, 3]).unwrap();
        let g = backward(&p, &trace, &Array2::zeros(logits.raw_dim())).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unused_positions_get_no_gradient() {
        let p = ModelParams::init(&cfg()).unwrap();
        let ids = [1, 2, 3, 4];
        let (logits, trace) = forward(&p, &ids).unwrap();
        let (_, d) = loss_and_grad(&logits, &[2, 3, 4, 5]);
        let g = backward(&p, &trace, &d).unwrap();
        assert!(g.position_embedding.slice(s![4.., ..]).iter().all(|&v| v == 0.0));
        assert!(g.position_embedding.slice(s![..4, ..]).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mismatched_trace() {
        let p = ModelParams::init(&cfg()).unwrap();
        let other = ModelParams::init(&ModelConfig {
            n_layers: 1,
            ..cfg()
        })
        .unwrap();
        let (logits, trace) = forward(&p, &[1, 2]).unwrap();
        assert!(matches!(
            backward(&other, &trace, &logits),
            Err(ModelError::TraceMismatch(_))
        ));
        assert!(backward(&p, &trace, &Array2::zeros((3, 11))).is_err());
    }

    #[test]
    fn decoder_matches_full_forward() {
        let p = ModelParams::init(&cfg()).unwrap();
        let ids = [1, 5, 2, 9, 4, 7];
        let (full, _) = forward(&p, &ids).unwrap();
        let mut dec = Decoder::new();
        let first = dec.feed(&p, &ids[..3]).unwrap();
        for (a, b) in first.iter().zip(full.row(2)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (i, &id) in ids.iter().enumerate().skip(3) {
            let row = dec.feed(&p, &[id]).unwrap();
            for (a, b) in row.iter().zip(full.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(dec.len(), ids.len());
    }

    #[test]
    fn prefix_split_gradient_matches_full() {
        let p = ModelParams::init(&cfg()).unwrap();
        let ids = [1, 5, 2, 9, 4, 7, 3];
        let targets = [5, 2, 9, 4, 7, 3, 8];
        let split = 3;

        let (logits, trace) = forward(&p, &ids).unwrap();
        let (_, d) = loss_and_grad(&logits, &targets);
        // zero loss on the prefix rows
        let mut d_full = d.clone();
        d_full.slice_mut(s![..split, ..]).fill(0.0);
        let full = backward(&p, &trace, &d_full).unwrap();

        let (_, prefix) = forward_segment(&p, &ids[..split], None, false).unwrap();
        let cache = prefix.kv_cache();
        let (sl, st) = forward_segment(&p, &ids[split..], Some(&cache), true).unwrap();
        let sl = sl.unwrap();
        for (a, b) in sl.iter().zip(logits.slice(s![split.., ..]).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut g = p.zeros_like();
        let d_suffix = d.slice(s![split.., ..]).to_owned();
        let d_past = backward_segment(&p, &st, Some(&d_suffix), None, &mut g).unwrap();
        assert_eq!(d_past.len(), split);
        backward_segment(&p, &prefix, None, Some(&d_past), &mut g).unwrap();

        for (a, b) in g.to_flat().iter().zip(full.to_flat()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
