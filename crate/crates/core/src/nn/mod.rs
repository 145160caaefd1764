//! The trainable allocator: an MLP mapping a twin snapshot to per-block
//! softmax scores over users.

mod features;
pub mod gradcheck;
pub mod io;
mod mlp;
mod train;

pub use features::{decode_output, encode_features, input_dim, FeatureConfig};
pub use gradcheck::grad_check;
pub use mlp::{Gradients, Mlp, OutputTensor};
pub use train::{accuracy, mean_loss, train, Dataset, Optimizer, TrainConfig, TrainReport};

/// Hidden widths used when a scenario does not override them.
pub const DEFAULT_HIDDEN: [usize; 3] = [600, 300, 250];

/// A network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocator {
    pub net: Mlp,
    pub features: FeatureConfig,
}

/// `[input, hidden..., users * rbs]` for a scenario of the given size.
pub fn layer_sizes(num_users: usize, num_rbs: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![input_dim(num_users, num_rbs)];
    sizes.extend_from_slice(hidden);
    sizes.push(num_users * num_rbs);
    sizes
}
