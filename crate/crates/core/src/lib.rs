//! Fixed-length dense fingerprint descriptors: alignment, descriptor
//! extraction, template storage, matching, 1:N search, training losses and
//! accuracy metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f32`, the storage precision of template
//! files, with `*64` variants for reference computations.

pub mod align;
pub mod error;
pub mod evalkit;
pub mod format;
pub mod gallery;
pub mod kernels;
pub mod losskit;
pub mod mask;
pub mod matchkit;
pub mod net;
pub mod posenc;
pub mod scalar;
pub mod template;
pub mod tensor;

pub use error::{FddError, Result};
pub use format::StoredTemplate;
pub use gallery::{AnyGallery, BinaryGalleryIndex, Candidate, GalleryIndex, GalleryLock};
pub use mask::CellMask;
pub use matchkit::{fuse, match_binary, match_templates, MatchResult};
pub use net::{extract_template, forward, NetOutput, Network, WeightStore};
pub use scalar::Scalar;
pub use template::{binarize_template, BinaryFddTemplate, FddTemplate, Metadata, MinutiaMap};
pub use tensor::DenseTensor;

pub type Tensor = DenseTensor<f32>;
pub type Tensor64 = DenseTensor<f64>;
pub type Template = FddTemplate<f32>;
pub type Template64 = FddTemplate<f64>;
pub type Image = align::FingerprintImage<f32>;
pub type Aligned = align::AlignedImage<f32>;
pub type Gallery = GalleryIndex<f32>;
pub type Gallery64 = GalleryIndex<f64>;
pub type Weights = WeightStore<f32>;
pub type Net = Network<f32>;
