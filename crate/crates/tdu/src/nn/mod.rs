//! Numerical core: MLP forward/backward, Adam, and seeded random streams.

mod adam;
mod mlp;
mod rng;

pub use adam::AdamState;
pub use mlp::{mlp_grad, ForwardCache, InitScheme, LayerParams, MlpGrad, MlpParams};
pub use rng::RngStream;
