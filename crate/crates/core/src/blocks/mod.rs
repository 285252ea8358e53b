//! Dilated gated convolution stacks with residual and skip paths: the one
//! building block behind both encoders and both decoder stages.
//!
//! Per layer `l` with input `h` and optional conditioning `c`:
//!
//! ```text
//! z      = Σ_j W_j · h[t + offset_j] + V · c[t] + b      (2R channels)
//! a      = tanh(z_filter) ⊙ σ(z_gate)                     (R channels)
//! skip  += S · a + s_b
//! h'     = h + R · a + r_b                                (all but the last layer)
//! ```
//!
//! The skip sum goes through a leaky ReLU and a two-layer 1×1 output stack.
//! Causal blocks pad on the left only; non-causal blocks use odd kernels with
//! centred taps.

mod incremental;
mod network;
mod params;

pub use incremental::IncrementalState;
pub use network::{block_backward, block_forward, block_forward_cached, BlockCache, BlockGrads};
pub use params::{init_params, BlockParams, LayerParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Real;

/// Slope of every leaky ReLU in the system.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum BlockError {
    #[error("invalid block configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("incremental inference requires a causal block")]
    NotCausal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu => leaky_relu(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::LeakyRelu => leaky_relu_grad(x),
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

#[inline]
pub fn leaky_relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::from_f64_lossy(LEAKY_SLOPE)
    }
}

#[inline]
pub fn leaky_relu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::from_f64_lossy(LEAKY_SLOPE)
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Where conditioning features enter the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// 1×1 projection into every gated layer.
    PerLayer,
    /// Concatenated to the block input once.
    InputConcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputLayer {
    pub channels: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub in_dim: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub causal: bool,
    pub output_stack: [OutputLayer; 2],
    /// Width of the conditioning input; 0 for none.
    pub cond_dim: usize,
    pub cond_mode: ConditioningMode,
}

impl BlockConfig {
    pub fn n_layers(&self) -> usize {
        self.dilations.len()
    }

    pub fn out_dim(&self) -> usize {
        self.output_stack[1].channels
    }

    /// Width of the first projection's input.
    pub fn effective_in_dim(&self) -> usize {
        match self.cond_mode {
            ConditioningMode::InputConcat => self.in_dim + self.cond_dim,
            ConditioningMode::PerLayer => self.in_dim,
        }
    }

    /// Conditioning width seen by each gated layer.
    pub fn layer_cond_dim(&self) -> usize {
        match self.cond_mode {
            ConditioningMode::InputConcat => 0,
            ConditioningMode::PerLayer => self.cond_dim,
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let bad = |m: String| Err(BlockError::InvalidConfig(m));
        if self.dilations.is_empty() {
            return bad("at least one layer".into());
        }
        if self.dilations.contains(&0) {
            return bad("dilations must be >= 1".into());
        }
        if self.kernel_size < 2 {
            return bad(format!("kernel size {} < 2", self.kernel_size));
        }
        if !self.causal && self.kernel_size % 2 == 0 {
            return bad("non-causal blocks need an odd kernel".into());
        }
        if self.in_dim == 0 || self.residual_channels == 0 || self.skip_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.output_stack.iter().any(|l| l.channels == 0) {
            return bad("output stack channels must be positive".into());
        }
        Ok(())
    }

    /// Frame offsets of the kernel taps of layer `l`.
    pub fn tap_offsets(&self, layer: usize) -> Vec<isize> {
        let d = self.dilations[layer] as isize;
        let k = self.kernel_size as isize;
        (0..k)
            .map(|j| if self.causal { -(k - 1 - j) * d } else { (j - (k - 1) / 2) * d })
            .collect()
    }
}

/// Span of input frames that can influence one output frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub past: usize,
    pub future: usize,
}

impl ReceptiveField {
    pub fn total(&self) -> usize {
        self.past + self.future + 1
    }

    pub fn millis(&self, hop_ms: f64) -> f64 {
        self.total() as f64 * hop_ms
    }
}

/// `past = Σ d (k−1)` for causal blocks; `past = future = Σ d ⌊(k−1)/2⌋`
/// for non-causal ones. In both cases the total is `1 + Σ d (k−1)` for the
/// kernels each mode admits.
pub fn receptive_field(config: &BlockConfig) -> ReceptiveField {
    let k = config.kernel_size;
    let sum: usize = config.dilations.iter().sum();
    if config.causal {
        ReceptiveField { past: sum * (k - 1), future: 0 }
    } else {
        let side = sum * ((k - 1) / 2);
        ReceptiveField { past: side, future: side }
    }
}
