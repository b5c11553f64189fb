//! Safe recommendation toolkit: off-policy evaluation with high-confidence
//! bounds, safe policy improvement, non-stationary evaluation, suffix-tree
//! user models with posterior sampling, and capacity-aware planning.

pub mod capacity;
pub mod error;
pub mod fqi;
pub mod hcope;
pub mod nope;
pub mod numeric;
pub mod ope;
pub mod policy;
pub mod pst;
pub mod safe;
pub mod sim;
pub mod traj;

pub use error::{Error, Result};
pub use hcope::{BoundConfig, BoundMethod, BoundResult};
pub use ope::{Estimator, IsEstimate};
pub use policy::{Policy, QFunction, SoftmaxLinear};
pub use traj::{Dataset, DiscountSpec, State, Step, Trajectory};
