//! Dual Bi-GRU encoders, bi-attention, merge layer, and attentive GRU decoder.
//!
//! Weight matrices are stored `[out × in]` and applied as `x · Wᵀ`, so every
//! shape reads like the algebra: `W_p: [d × 2d]`, `W_v: [|V| × 2d]`.

mod batch;
pub mod checkpoint;
mod graph;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::component_rng;

pub use batch::{Batch, Padded, Sources};
pub use graph::{BiAttention, EncoderOutput, Graph, Memory, Merged, Nll, StepOutput};

pub const INIT_RANGE: f64 = 0.08;

/// The six wirings compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PostOnly,
    ConvOnly,
    PostPlusConvConcat,
    PostAttOnly,
    ConvAttOnly,
    Full,
}

impl Variant {
    /// Ablation-table order.
    pub const ALL: [Variant; 6] = [
        Variant::PostOnly,
        Variant::ConvOnly,
        Variant::PostPlusConvConcat,
        Variant::PostAttOnly,
        Variant::ConvAttOnly,
        Variant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::PostOnly => "post_only",
            Variant::ConvOnly => "conv_only",
            Variant::PostPlusConvConcat => "post_plus_conv_concat",
            Variant::PostAttOnly => "post_att_only",
            Variant::ConvAttOnly => "conv_att_only",
            Variant::Full => "full",
        }
    }

    pub fn uses_post_encoder(self) -> bool {
        !matches!(self, Variant::ConvOnly | Variant::PostPlusConvConcat)
    }

    pub fn uses_conv_encoder(self) -> bool {
        !matches!(self, Variant::PostOnly | Variant::PostPlusConvConcat)
    }

    pub fn uses_bi_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::PostAttOnly | Variant::ConvAttOnly)
    }

    pub fn merges_post(self) -> bool {
        matches!(self, Variant::Full | Variant::PostAttOnly)
    }

    pub fn merges_conv(self) -> bool {
        matches!(self, Variant::Full | Variant::ConvAttOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderSide {
    Post,
    Conversation,
    /// Single encoder over the token-level concatenation of post and conversation.
    Joint,
}

impl EncoderSide {
    fn prefix(self) -> &'static str {
        match self {
            EncoderSide::Post => "enc.post",
            EncoderSide::Conversation => "enc.conv",
            EncoderSide::Joint => "enc.joint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Width `d` of every encoder state, merge output, and decoder state.
    /// Each GRU direction of an encoder has width `d / 2`.
    pub hidden: usize,
    pub embed: usize,
    pub layers: usize,
    pub variant: Variant,
    pub share_embeddings: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, hidden: usize, embed: usize, variant: Variant) -> Self {
        ModelConfig {
            vocab_size,
            hidden,
            embed,
            layers: 2,
            variant,
            share_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!("hidden size must be positive and even, got {}", self.hidden)));
        }
        if self.embed == 0 || self.layers == 0 {
            return Err(Error::Config("embedding size and layer count must be positive".into()));
        }
        if self.vocab_size <= crate::corpus::RESERVED.len() {
            return Err(Error::Config(format!("vocabulary of size {} has no ordinary tokens", self.vocab_size)));
        }
        Ok(())
    }

    fn encoder_sides(&self) -> Vec<EncoderSide> {
        let v = self.variant;
        let mut sides = Vec::new();
        if v == Variant::PostPlusConvConcat {
            sides.push(EncoderSide::Joint);
        }
        if v.uses_post_encoder() {
            sides.push(EncoderSide::Post);
        }
        if v.uses_conv_encoder() {
            sides.push(EncoderSide::Conversation);
        }
        sides
    }

    pub fn source_embedding(&self) -> &'static str {
        "embedding"
    }

    pub fn target_embedding(&self) -> &'static str {
        if self.share_embeddings {
            "embedding"
        } else {
            "embedding.target"
        }
    }

    /// Name and shape of every learnable tensor this wiring uses.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (v, d, e, h) = (self.vocab_size, self.hidden, self.embed, self.hidden / 2);
        let mut out: Vec<(String, Vec<usize>)> = vec![("embedding".into(), vec![v, e])];
        if !self.share_embeddings {
            out.push(("embedding.target".into(), vec![v, e]));
        }
        let gru = |out: &mut Vec<(String, Vec<usize>)>, prefix: String, input: usize, width: usize| {
            out.push((format!("{prefix}.w_x"), vec![3 * width, input]));
            out.push((format!("{prefix}.u_zr"), vec![2 * width, width]));
            out.push((format!("{prefix}.u_n"), vec![width, width]));
            out.push((format!("{prefix}.b"), vec![3 * width]));
        };
        let sides = self.encoder_sides();
        for side in &sides {
            for layer in 0..self.layers {
                let input = if layer == 0 { e } else { d };
                for dir in ["fwd", "bwd"] {
                    gru(&mut out, format!("{}.l{layer}.{dir}", side.prefix()), input, h);
                }
            }
        }
        if self.variant.uses_bi_attention() {
            out.push(("biatt.w".into(), vec![d, d]));
        }
        if self.variant.merges_post() {
            out.push(("merge.w_p".into(), vec![d, 2 * d]));
            out.push(("merge.b_p".into(), vec![d]));
        }
        if self.variant.merges_conv() {
            out.push(("merge.w_c".into(), vec![d, 2 * d]));
            out.push(("merge.b_c".into(), vec![d]));
        }
        out.push(("dec.init.w".into(), vec![d, d * sides.len()]));
        out.push(("dec.init.b".into(), vec![d]));
        gru(&mut out, "dec.gru".into(), e, d);
        out.push(("dec.att.w".into(), vec![d, d]));
        out.push(("out.w".into(), vec![v, 2 * d]));
        out.push(("out.b".into(), vec![v]));
        out.sort();
        out
    }
}

/// Named learnable tensors. Snapshots are cheap clones of shared buffers.
pub type ParamStore = BTreeMap<String, Arc<Tensor>>;

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Uniform(−0.08, 0.08) matrices and zero biases, drawn in parameter-name order.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init_range(config, seed, INIT_RANGE)
    }

    pub fn with_init_range(config: ModelConfig, seed: u64, range: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = component_rng(seed, "init");
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if shape.len() == 1 {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.gen_range(-range..range)).collect()
                };
                (name, Arc::new(Tensor::new(&shape, data).expect("consistent shape")))
            })
            .collect();
        Ok(Model { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| (name, Arc::new(Tensor::zeros(&shape))))
            .collect();
        Ok(Model { config, params })
    }

    /// Builds a model from explicit tensors, checking names and shapes against the config.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this configuration, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape("set_param", slot.shape(), value.shape()));
        }
        *slot = Arc::new(value);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("bogus".parse::<Variant>(), Err(Error::Config(_))));
    }

    #[test]
    fn full_model_has_more_parameters_than_post_only() {
        let full = Model::zeros(ModelConfig::new(20, 8, 8, Variant::Full)).unwrap();
        let post = Model::zeros(ModelConfig::new(20, 8, 8, Variant::PostOnly)).unwrap();
        assert!(full.num_params() > post.num_params());
        for name in post.params.keys().filter(|n| !n.starts_with("dec.init.w")) {
            assert!(full.params.contains_key(name), "{name}");
        }
    }

    #[test]
    fn odd_hidden_rejected() {
        assert!(Model::zeros(ModelConfig::new(20, 7, 8, Variant::Full)).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::new(20, 8, 6, Variant::Full);
        let a = Model::new(cfg.clone(), 1).unwrap();
        let b = Model::new(cfg, 1).unwrap();
        assert_eq!(a.params, b.params);
        for (name, t) in &a.params {
            if t.rank() == 1 {
                assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|x| x.abs() < INIT_RANGE), "{name}");
            }
        }
    }
}
