//! Deterministic tensor kernel: layers with forward and backward passes,
//! losses, metrics, Adam, and finite-difference gradient checking.

pub mod adam;
pub mod attention;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{multi_head_attention, multi_head_attention_backward, AttentionWeights};
pub use conv::{depthwise_separable_conv, ConvParams, Padding};
pub use gradcheck::{numerical_gradient_check, GradCheckReport};
pub use loss::{cross_entropy, mae_in_months, softmax, softmax_cross_entropy};
pub use tensor::{seeded_rng, Tensor};
