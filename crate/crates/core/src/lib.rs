//! Pixel-wise depth from ordinal annotations.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors, conv/pool kernels, reverse-mode graph, Adam, checkpoints
//! - [`hourglass`]: inception blocks and the multi-scale hourglass network
//! - [`loss`]: the pairwise ranking loss and dense metric supervision
//! - [`sampling`]: point-pair samplers, relation labelling, location-bias statistics
//! - [`metrics`]: WKDR family, WHDR, threshold calibration, metric depth errors
//! - [`synthetic`]: procedurally rendered scenes with exact depth
//! - [`train`]: the mini-batch training loop
//! - [`crowd`]: the two-worker annotation protocol with gold-standard screening
//!
//! [`pairs`] defines the comma-separated pair file shared by all of them.

pub mod crowd;
pub mod depth;
pub mod error;
pub mod hourglass;
pub mod loss;
pub mod metrics;
pub mod pairs;
pub mod sampling;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use depth::{DepthMap, Pixel};
pub use error::{Error, Result};
pub use loss::{PairQuery, Relation};
pub use tensor::{Graph, Tensor, Var};
