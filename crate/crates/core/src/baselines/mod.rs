//! Comparison correspondences and the reward term every method feeds into.

mod direct;
mod kernel;
mod linear;
mod method;
mod reward;

pub use direct::{fit_direct_mapping, DirectConfig, DirectMapping};
pub use kernel::{kcca_fit, kernel, KccaConfig, KernelEmbedding, KernelKind, KernelSide};
pub use linear::{cca_fit, random_projection, LinearEmbedding};
pub use method::{FittedMethod, Method};
pub use reward::{as_transfer_reward, TransferReward};
