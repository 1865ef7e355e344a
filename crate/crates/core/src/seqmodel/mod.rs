//! Tied-weight multi-layer LSTM language model with an explicit backward
//! pass.
//!
//! Gate blocks inside every `4h`-sized weight are ordered
//! `(input, forget, cell, output)`. Everything is `f64`.

mod checkpoint;
mod generate;
mod lstm;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointState};
pub use generate::{generate, Generated, GenerationConfig, GenerationMode};
pub use lstm::{backward, forward, forward_stepwise, loss_and_grads, nll_sum, LayerCache, StepCache};

/// Uniform initialization bound for every weight matrix.
pub const INIT_SCALE: f64 = 0.1;

pub const DEFAULT_CLIP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Output projection shares the embedding matrix.
    pub tied: bool,
}

impl ModelConfig {
    /// Tied two-layer model with `emb_dim == hidden`.
    pub fn tied(vocab_size: usize, hidden: usize) -> Self {
        ModelConfig {
            vocab_size,
            emb_dim: hidden,
            hidden,
            layers: 2,
            tied: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.emb_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Sizing(format!("all model sizes must be at least 1: {self:?}")));
        }
        if self.tied && self.emb_dim != self.hidden {
            return Err(Error::Sizing(format!(
                "tied weights need emb_dim == hidden, got {} and {}",
                self.emb_dim, self.hidden
            )));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.emb_dim
        } else {
            self.hidden
        }
    }

    /// Closed-form parameter count.
    pub fn num_params(&self) -> usize {
        let (v, h) = (self.vocab_size, self.hidden);
        let layers: usize = (0..self.layers)
            .map(|l| 4 * h * self.layer_input(l) + 4 * h * h + 4 * h)
            .sum();
        let output = if self.tied { 0 } else { v * h };
        v * self.emb_dim + layers + output + v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[4h x in]`
    pub w_input: Array2<f64>,
    /// `[4h x h]`
    pub w_recurrent: Array2<f64>,
    /// `[4h]`
    pub bias: Array1<f64>,
}

/// Model parameters. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[|V| x emb_dim]`
    pub embedding: Array2<f64>,
    pub layers: Vec<LstmLayer>,
    /// `[|V| x h]`, only for untied models.
    pub output: Option<Array2<f64>>,
    /// `[|V|]`
    pub output_bias: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| LstmLayer {
                w_input: Array2::zeros((4 * h, config.layer_input(l))),
                w_recurrent: Array2::zeros((4 * h, h)),
                bias: Array1::zeros(4 * h),
            })
            .collect();
        Ok(ModelParams {
            config,
            embedding: Array2::zeros((config.vocab_size, config.emb_dim)),
            layers,
            output: (!config.tied).then(|| Array2::zeros((config.vocab_size, h))),
            output_bias: Array1::zeros(config.vocab_size),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.config).expect("config already validated")
    }

    /// The matrix multiplied into the top hidden state to get logits.
    pub fn output_weights(&self) -> &Array2<f64> {
        self.output.as_ref().unwrap_or(&self.embedding)
    }

    /// Every tensor in declaration order: embedding, then per layer input
    /// weights, recurrent weights and bias, then the untied output matrix
    /// (if any) and the output bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice().expect("standard layout")];
        for layer in &self.layers {
            out.push(layer.w_input.as_slice().expect("standard layout"));
            out.push(layer.w_recurrent.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        if let Some(o) = &self.output {
            out.push(o.as_slice().expect("standard layout"));
        }
        out.push(self.output_bias.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_slice_mut().expect("standard layout")];
        for layer in &mut self.layers {
            out.push(layer.w_input.as_slice_mut().expect("standard layout"));
            out.push(layer.w_recurrent.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(o) = &mut self.output {
            out.push(o.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["embedding".to_string()];
        for l in 0..self.layers.len() {
            out.push(format!("layer{l}.w_input"));
            out.push(format!("layer{l}.w_recurrent"));
            out.push(format!("layer{l}.bias"));
        }
        if self.output.is_some() {
            out.push("output".to_string());
        }
        out.push("output_bias".to_string());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Plain SGD: `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &ModelParams, lr: f64) {
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
    }
}

/// Weights uniform in `[-0.1, 0.1]`, biases zero.
pub fn init_params<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<ModelParams> {
    init_params_scaled(config, INIT_SCALE, rng)
}

/// Like [`init_params`] with weights uniform in `[-scale, scale]`.
pub fn init_params_scaled<R: Rng + ?Sized>(config: ModelConfig, scale: f64, rng: &mut R) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut fill = |a: &mut Array2<f64>| {
        a.iter_mut().for_each(|x| *x = rng.random_range(-scale..=scale));
    };
    fill(&mut params.embedding);
    for layer in &mut params.layers {
        fill(&mut layer.w_input);
        fill(&mut layer.w_recurrent);
    }
    if let Some(o) = &mut params.output {
        fill(o);
    }
    Ok(params)
}

/// Per-layer hidden and cell states, each `[batch x h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<Array2<f64>>,
    pub c: Vec<Array2<f64>>,
}

impl HiddenState {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        let z = || Array2::zeros((batch, config.hidden));
        HiddenState {
            h: (0..config.layers).map(|_| z()).collect(),
            c: (0..config.layers).map(|_| z()).collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.first().map_or(0, |h| h.nrows())
    }
}

/// Scales `grads` so their global L2 norm is at most `threshold`. Returns
/// the norm before clipping.
pub fn clip_gradients(grads: &mut ModelParams, threshold: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > threshold {
        grads.scale(threshold / norm);
    }
    norm
}

pub fn perplexity(mean_nll: f64) -> f64 {
    mean_nll.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_bounds_and_determinism() {
        let cfg = ModelConfig::tied(11, 4);
        let a = init_params(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = init_params(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.embedding.iter().all(|x| x.abs() <= 0.1));
        for layer in &a.layers {
            assert!(layer.w_input.iter().chain(&layer.w_recurrent).all(|x| x.abs() <= 0.1));
            assert!(layer.bias.iter().all(|&x| x == 0.0));
        }
        assert!(a.output_bias.iter().all(|&x| x == 0.0));
        assert!(a.output.is_none());
    }

    #[test]
    fn tied_parameter_count() {
        let (v, h) = (11, 4);
        let cfg = ModelConfig::tied(v, h);
        let params = ModelParams::zeros(cfg).unwrap();
        let expected = v * h + 2 * (4 * h * h + 4 * h * h + 4 * h) + v;
        assert_eq!(cfg.num_params(), expected);
        assert_eq!(params.num_params(), expected);

        let untied = ModelConfig {
            tied: false,
            emb_dim: 3,
            ..cfg
        };
        assert_eq!(ModelParams::zeros(untied).unwrap().num_params(), untied.num_params());
    }

    #[test]
    fn tied_requires_matching_dims() {
        let cfg = ModelConfig {
            emb_dim: 3,
            ..ModelConfig::tied(5, 4)
        };
        assert!(ModelParams::zeros(cfg).is_err());
    }

    #[test]
    fn clipping() {
        let cfg = ModelConfig::tied(3, 2);
        let mut g = ModelParams::zeros(cfg).unwrap();
        g.output_bias[0] = 0.3;
        let before = g.clone();
        assert!((clip_gradients(&mut g, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(g, before);

        g.output_bias[0] = 3.0;
        g.output_bias[1] = 4.0;
        assert!((clip_gradients(&mut g, 0.5) - 5.0).abs() < 1e-12);
        assert!((g.l2_norm() - 0.5).abs() < 1e-10);

        let mut zero = ModelParams::zeros(cfg).unwrap();
        clip_gradients(&mut zero, 0.5);
        assert_eq!(zero, ModelParams::zeros(cfg).unwrap());
    }

    #[test]
    fn perplexity_examples() {
        assert!((perplexity(10f64.ln()) - 10.0).abs() < 1e-12);
        assert_eq!(perplexity(0.0), 1.0);
        let nll = (2f64.ln() + 4f64.ln()) / 2.0;
        assert!((perplexity(nll) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
