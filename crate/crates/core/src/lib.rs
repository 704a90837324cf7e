//! Best-subset solution paths for PCA, PLS1 and PLS2 by continuous
//! relaxation of the subset indicator and first-order optimization.

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod multicomponent;
pub mod objective;
pub mod oracle;
pub mod path;
pub mod simulate;
pub mod solver;
pub mod subset;

pub use dataset::{Dataset, ModelKind, ModelSpec, PlsMode};
pub use error::{BssError, Result};
pub use linalg::{DominantPair, Matrix, PowerConfig, Vector};
pub use objective::{ObjectiveContext, ObjectiveEval};
pub use subset::Subset;
