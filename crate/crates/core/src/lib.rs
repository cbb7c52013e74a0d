//! H2-optimal model order reduction for linear systems with quadratic outputs.

pub mod baselines;
pub mod error;
pub mod gradients;
pub mod linalg;
pub mod lowrank;
pub mod lqo;
pub mod mm;
pub mod optimizer;
pub mod stiefel;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lqo::LqoSystem;
