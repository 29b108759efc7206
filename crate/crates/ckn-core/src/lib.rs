//! Convolutional kernel networks (CKN): multilayer convolutional kernels,
//! their finite-dimensional approximation trained without supervision, and
//! the surrounding pipeline (datasets, feed-forward encoding, linear SVM).
//!
//! The crate is organized around the data that flows through it:
//!
//! * [`FeatureMap`] — a 2-D grid of fixed-length feature vectors; images,
//!   gradient maps and every intermediate layer output are feature maps.
//! * [`oracle`] — brute-force evaluation of the exact convolutional kernels
//!   on tiny inputs, used as ground truth when validating the approximation.
//! * [`training`] — learns one layer's filters `W`, weights `eta` and
//!   smoothing `sigma` from random patch pairs (k-means init followed by a
//!   box-constrained limited-memory quasi-Newton solver).
//! * [`network`] — the feed-forward side: activation maps, Gaussian pooling,
//!   layer-wise network training, image encoding and model serialization.
//! * [`classifier`] — feature post-processing and a one-vs-rest linear SVM
//!   (dual coordinate descent) with cross-validated regularization.
//! * [`data`] — MNIST/CIFAR-10 parsers, whitened patch banks for filter
//!   visualization experiments, PGM/PPM image I/O.

pub mod classifier;
pub mod data;
pub mod error;
pub mod feature_map;
pub mod network;
pub mod oracle;
pub mod training;

pub use error::{CknError, Result};
pub use feature_map::{FeatureMap, PatchPreproc, PatchShape, PatchVector};
pub use network::{InputMapKind, NetworkModel};
pub use training::LayerParams;
