//! Shared numerical kernels.

pub mod corr;
pub mod mvn;
pub mod normal;
pub mod optimize;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod special;
pub mod stats;

pub use corr::CorrelationMatrix;
pub use mvn::mvn_rectangle;
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use optimize::{
    hessian, minimize, minimize_scalar, Bound, Method, OptimResult, OptimizerProblem,
};
pub use roots::find_root_increasing;
