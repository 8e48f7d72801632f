//! Hausdorff point convolution.
//!
//! Convolution between local point-cloud neighborhoods and fixed geometric
//! kernel priors, where the response is built from the shortest-distance set
//! that underlies the Hausdorff distance. The crate carries the geometry
//! primitives, kernel generation, the distance machinery, a learnable layer
//! with closed-form gradients, a small encoder-decoder segmentation network
//! and a synthetic scene generator.
//!
//! The crate is `no_std` (it needs `alloc`). Enable `parallel` to spread
//! per-point work over a rayon pool; results are bit-identical either way.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod par;

pub mod geometry;
pub mod kernel;
pub mod layer;
pub mod metric;
pub mod network;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{Neighborhood, Point3, PointCloud, SpatialGrid};
pub use kernel::{KernelPrior, KernelShape};
pub use layer::{HpcLayer, LayerCache, MultiKernelCache, MultiKernelLayer};
pub use metric::{DistributiveFn, ShortestDistanceMatrix, ShortestDistanceSet};
pub use tensor::Matrix;
