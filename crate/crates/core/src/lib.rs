pub mod dyadic;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod kernel;
pub mod lower_bound;
pub mod operator;
pub mod space;
pub mod sparse_bound;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spaces.md")]
    mod spaces {}
    #[doc = include_str!("../../../book/src/dyadic.md")]
    mod dyadic {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/upper.md")]
    mod upper {}
    #[doc = include_str!("../../../book/src/lower.md")]
    mod lower {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
