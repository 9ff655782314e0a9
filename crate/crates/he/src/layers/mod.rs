//! Encrypted evaluation of the frozen CNN stack over packed SIMD slots.

pub mod counter;
pub mod operands;
pub mod ops;
pub mod oracle;
pub mod packing;
pub mod weights;

pub use counter::{OpCounter, OpCounts};
pub use operands::{
    prepare_frozen_operands, ConvOperands, DenseOperands, FrozenOperands, PoolOperands,
    ReluOperands, StageIo, FROZEN_DEPTH,
};
pub use ops::{
    enc_avgpool, enc_conv1d, enc_dense_bsgs, enc_relu_approx, frozen_forward, replicate, EvalKeys,
};
pub use oracle::plaintext_frozen_forward;
pub use packing::{pack_batch, plan_packing, plan_rotations, unpack_batch, PackingPlan};
pub use weights::{FrozenWeights, RELU_CUBIC_COEFFS, RELU_CUBIC_DERIV_COEFFS};
