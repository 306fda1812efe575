//! Crowd emotion recognition from grid-line edge features.
//!
//! Frames are reduced to Canny edge maps, sampled where a regular grid of
//! lines crosses them, summarized as static occupancy plus per-slot velocity,
//! filtered by best-first CFS selection and classified by a one-vs-one RBF
//! SVM. See the `book/` guide for a walkthrough.

pub mod data;
pub mod edges;
pub mod error;
pub mod eval;
pub mod gridfeat;
pub mod imaging;
pub mod label;
pub mod pipeline;
pub mod select;
pub mod svm;

pub use error::{Error, Result};
pub use label::Emotion;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/edges.md")]
    mod edges {}
    #[doc = include_str!("../../../book/src/grid-features.md")]
    mod grid_features {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/svm.md")]
    mod svm {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
