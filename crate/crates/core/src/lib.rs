//! Splitting-method propagators for `exp(-itH) u0` with real-symmetric `H`,
//! with stability and error analysis of the methods and a design pipeline
//! for new ones.

pub mod baselines;
pub mod design;
pub mod error;
pub mod methods;
pub mod operator;
pub mod polyprop;
pub mod propagate;

pub use design::{design_method, factorize_k, DesignTarget};
pub use error::{Error, Result};
pub use methods::{builtin, load_method, save_method, SplittingMethod};
pub use polyprop::{compose_k, stability_threshold, Analyzer, PropagationMatrix};
