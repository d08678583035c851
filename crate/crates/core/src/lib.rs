//! Detection of overlapping and nested social circles in ego-networks.
//!
//! An ego-network is the graph of a user's friends (the ego itself is not a
//! node). Each circle `k` is a latent subset of nodes together with a
//! similarity parameter vector `theta_k` over pairwise profile features and a
//! trade-off scalar `alpha_k`. The probability that a pair `e` is an edge is
//! the logistic function of
//!
//! ```text
//! Phi(e) = sum_k d_k(e) <phi(e), theta_k>,   d_k(e) = 1 if e inside C_k else -alpha_k
//! ```
//!
//! Circles and parameters are learned jointly by coordinate ascent
//! ([`trainer`]), alternating pseudo-boolean membership updates solved by
//! roof duality ([`pbopt`]) with L1-regularized quasi-Newton parameter steps.
//! For large networks [`mcmc`] provides annealed membership sampling over
//! collapsed node types.

pub mod data;
pub mod error;
pub mod eval;
pub mod extensions;
pub mod features;
pub mod io;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod optim;
pub mod pbopt;
pub mod synth;
pub mod trainer;

pub use data::{CircleAssignment, EgoNetwork, FeaturePath, ModelParams, NodeId, ProfileStore};
pub use error::{Error, Result};
pub use features::{EdgeFeatureCache, FeatureScheme};
pub use trainer::{FitConfig, FitResult, KChoice};
