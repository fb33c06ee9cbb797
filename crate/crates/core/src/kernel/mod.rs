//! Minimal reverse-mode kernel for a fixed architecture.
//!
//! There is no tape: each layer exposes a forward function and a matching
//! backward function, and the model wires them together by hand. Every
//! forward output is checked for NaN/Inf.

pub mod adam;
pub mod checkpoint;
pub mod ops;
pub mod param;
pub mod tensor;

pub use adam::{AdamConfig, AdamState, Moments};
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use ops::{
    batch_norm, batch_norm_backward, batch_norm_inference, clamp_coefficient, conv1d_causal, conv1d_causal_backward,
    dropout, dropout_backward, global_avg_pool, global_avg_pool_backward, gradient_reversal,
    gradient_reversal_backward, leaky_relu, leaky_relu_backward, linear, linear_backward, softmax,
    softmax_cross_entropy, BnBanks, BnCache, BnConfig, BnMode, BnStats, DomainKey,
};
pub use param::Parameter;
pub use tensor::{DType, Real, Tensor};

/// Receptive field of stacked causal convolutions: `1 + (k - 1) * sum(d_i)`.
pub fn receptive_field(kernel_size: usize, dilations: &[usize]) -> usize {
    1 + (kernel_size - 1) * dilations.iter().sum::<usize>()
}
