use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 128,
            n_heads: 4,
            d_ff: 512,
            vocab_size: 103,
            max_seq_len: 512,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// What a tensor is, for optimizer grouping. Only [`TensorKind::Matrix`]
/// tensors receive weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Matrix,
    Bias,
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl NormParams {
    fn new(d: usize) -> Self {
        Self {
            gain: Array1::ones(d),
            bias: Array1::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm: NormParams,
    pub w_query: Array2<f64>,
    pub b_query: Array1<f64>,
    pub w_key: Array2<f64>,
    pub b_key: Array1<f64>,
    pub w_value: Array2<f64>,
    pub b_value: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub ffn_norm: NormParams,
    pub w_up: Array2<f64>,
    pub b_up: Array1<f64>,
    pub w_down: Array2<f64>,
    pub b_down: Array1<f64>,
}

/// All weights of the transformer. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `vocab_size x d_model`
    pub token_embedding: Array2<f64>,
    /// `max_seq_len x d_model`
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_norm: NormParams,
    /// `d_model x vocab_size`
    pub unembedding: Array2<f64>,
}

pub struct TensorRef<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub data: &'a mut [f64],
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter tensors are standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameter tensors are standard layout")
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameter tensors are standard layout")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameter tensors are standard layout")
}

impl ModelParams {
    /// Normal(0, 0.02) initialization; the two residual projections of each
    /// layer use `0.02 / sqrt(2 * n_layers)`. Norm gains start at one, biases
    /// at zero.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let base = Normal::new(0.0, 0.02).unwrap();
        let residual = Normal::new(0.0, 0.02 / (2.0 * config.n_layers as f64).sqrt()).unwrap();

        let mut fill = |a: &mut Array2<f64>, dist: &Normal<f64>| {
            a.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        };
        fill(&mut params.token_embedding, &base);
        fill(&mut params.position_embedding, &base);
        for layer in &mut params.layers {
            layer.attn_norm = NormParams::new(config.d_model);
            layer.ffn_norm = NormParams::new(config.d_model);
            fill(&mut layer.w_query, &base);
            fill(&mut layer.w_key, &base);
            fill(&mut layer.w_value, &base);
            fill(&mut layer.w_out, &residual);
            fill(&mut layer.w_up, &base);
            fill(&mut layer.w_down, &residual);
        }
        params.final_norm = NormParams::new(config.d_model);
        fill(&mut params.unembedding, &base);
        Ok(params)
    }

    /// Every entry zero, including norm gains.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let f = config.d_ff;
        let zero_norm = || NormParams {
            gain: Array1::zeros(d),
            bias: Array1::zeros(d),
        };
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                attn_norm: zero_norm(),
                w_query: Array2::zeros((d, d)),
                b_query: Array1::zeros(d),
                w_key: Array2::zeros((d, d)),
                b_key: Array1::zeros(d),
                w_value: Array2::zeros((d, d)),
                b_value: Array1::zeros(d),
                w_out: Array2::zeros((d, d)),
                b_out: Array1::zeros(d),
                ffn_norm: zero_norm(),
                w_up: Array2::zeros((d, f)),
                b_up: Array1::zeros(f),
                w_down: Array2::zeros((f, d)),
                b_down: Array1::zeros(d),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_seq_len, d)),
            layers,
            final_norm: zero_norm(),
            unembedding: Array2::zeros((d, config.vocab_size)),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config was validated on construction")
    }

    /// Tensors in a fixed canonical order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        use TensorKind::*;
        let mut out = Vec::new();
        fn push2<'a>(name: String, kind: TensorKind, a: &'a Array2<f64>, out: &mut Vec<TensorRef<'a>>) {
            out.push(TensorRef {
                name,
                kind,
                shape: a.shape().to_vec(),
                data: slice2(a),
            })
        }
        push2("token_embedding".into(), Embedding, &self.token_embedding, &mut out);
        push2("position_embedding".into(), Embedding, &self.position_embedding, &mut out);
        fn push1<'a>(name: String, kind: TensorKind, a: &'a Array1<f64>, out: &mut Vec<TensorRef<'a>>) {
            out.push(TensorRef {
                name,
                kind,
                shape: a.shape().to_vec(),
                data: slice1(a),
            })
        }
        for (i, l) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            push1(p("attn_norm.gain"), Norm, &l.attn_norm.gain, &mut out);
            push1(p("attn_norm.bias"), Norm, &l.attn_norm.bias, &mut out);
            push2(p("w_query"), Matrix, &l.w_query, &mut out);
            push1(p("b_query"), Bias, &l.b_query, &mut out);
            push2(p("w_key"), Matrix, &l.w_key, &mut out);
            push1(p("b_key"), Bias, &l.b_key, &mut out);
            push2(p("w_value"), Matrix, &l.w_value, &mut out);
            push1(p("b_value"), Bias, &l.b_value, &mut out);
            push2(p("w_out"), Matrix, &l.w_out, &mut out);
            push1(p("b_out"), Bias, &l.b_out, &mut out);
            push1(p("ffn_norm.gain"), Norm, &l.ffn_norm.gain, &mut out);
            push1(p("ffn_norm.bias"), Norm, &l.ffn_norm.bias, &mut out);
            push2(p("w_up"), Matrix, &l.w_up, &mut out);
            push1(p("b_up"), Bias, &l.b_up, &mut out);
            push2(p("w_down"), Matrix, &l.w_down, &mut out);
            push1(p("b_down"), Bias, &l.b_down, &mut out);
        }
        push1("final_norm.gain".into(), Norm, &self.final_norm.gain, &mut out);
        push1("final_norm.bias".into(), Norm, &self.final_norm.bias, &mut out);
        push2("unembedding".into(), Matrix, &self.unembedding, &mut out);
        out
    }

    /// Mutable view of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        use TensorKind::*;
        let mut out = Vec::new();
        let t = |name: String, kind, data| TensorMut { name, kind, data };
        out.push(t("token_embedding".into(), Embedding, slice2_mut(&mut self.token_embedding)));
        out.push(t(
            "position_embedding".into(),
            Embedding,
            slice2_mut(&mut self.position_embedding),
        ));
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            out.push(t(p("attn_norm.gain"), Norm, slice1_mut(&mut l.attn_norm.gain)));
            out.push(t(p("attn_norm.bias"), Norm, slice1_mut(&mut l.attn_norm.bias)));
            out.push(t(p("w_query"), Matrix, slice2_mut(&mut l.w_query)));
            out.push(t(p("b_query"), Bias, slice1_mut(&mut l.b_query)));
            out.push(t(p("w_key"), Matrix, slice2_mut(&mut l.w_key)));
            out.push(t(p("b_key"), Bias, slice1_mut(&mut l.b_key)));
            out.push(t(p("w_value"), Matrix, slice2_mut(&mut l.w_value)));
            out.push(t(p("b_value"), Bias, slice1_mut(&mut l.b_value)));
            out.push(t(p("w_out"), Matrix, slice2_mut(&mut l.w_out)));
            out.push(t(p("b_out"), Bias, slice1_mut(&mut l.b_out)));
            out.push(t(p("ffn_norm.gain"), Norm, slice1_mut(&mut l.ffn_norm.gain)));
            out.push(t(p("ffn_norm.bias"), Norm, slice1_mut(&mut l.ffn_norm.bias)));
            out.push(t(p("w_up"), Matrix, slice2_mut(&mut l.w_up)));
            out.push(t(p("b_up"), Bias, slice1_mut(&mut l.b_up)));
            out.push(t(p("w_down"), Matrix, slice2_mut(&mut l.w_down)));
            out.push(t(p("b_down"), Bias, slice1_mut(&mut l.b_down)));
        }
        out.push(t("final_norm.gain".into(), Norm, slice1_mut(&mut self.final_norm.gain)));
        out.push(t("final_norm.bias".into(), Norm, slice1_mut(&mut self.final_norm.bias)));
        out.push(t("unembedding".into(), Matrix, slice2_mut(&mut self.unembedding)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Flattened copy in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Reads entry `index` of the flattened parameter vector.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.data.len() {
                return t.data[index];
            }
            index -= t.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.data.len() {
                t.data[index] = value;
                return;
            }
            index -= t.data.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Name of the tensor containing flat entry `index`.
    pub fn flat_name(&self, mut index: usize) -> String {
        for t in self.tensors() {
            if index < t.data.len() {
                return t.name;
            }
            index -= t.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &Self, alpha: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.data
                .iter_mut()
                .zip(src.data)
                .for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Bitwise equality of every entry, including signed zeros and NaN payloads.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| {
                    a.data.len() == b.data.len()
                        && a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}
