//! Classification of BIM-style structure images.
//!
//! The crate bundles everything needed to run the HOG+SVM baseline and the
//! random-structure CNN end to end:
//!
//! - [`image`]: the pixel container, PGM/PNG I/O, bilinear resizing.
//! - [`synth`]: a deterministic renderer of wireframe structures in three
//!   classes, used as a stand-in dataset (60 structures x 4 views).
//! - [`augment`]: rotations, flips and shifts driven by a seeded generator.
//! - [`hog`]: histogram-of-oriented-gradients descriptors (L2-Hys blocks).
//! - [`svm`]: one-vs-rest linear SVM trained with Pegasos-style SGD.
//! - [`nn`]: tensors, layers, backpropagation and SGD training for the CNN.
//! - [`search`]: random hyperparameter search with k-fold model selection.
//! - [`eval`]: train/test splits, cross-validation reports, confusion matrices.
//! - [`container`]: the `BIMC1` model file format.
//! - [`cli`]: the `bimclass` command line.
//!
//! Every stochastic step takes an explicit seed; seeds for sub-tasks are
//! derived with [`seed::derive_seed`] so results never depend on scheduling.

pub mod augment;
pub mod cli;
pub mod container;
pub mod dataset;
pub mod eval;
pub mod hog;
pub mod image;
pub mod nn;
pub mod search;
pub mod seed;
pub mod svm;
pub mod synth;

pub use crate::image::Image;
pub use crate::synth::StructureClass;

/// Number of structure classes (apartment, industrial, other).
pub const N_CLASSES: usize = 3;

/// Seed used whenever the caller does not provide one.
pub const DEFAULT_SEED: u64 = 42;
