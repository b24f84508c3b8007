//! Spatial GAN texture synthesis.
//!
//! A fully convolutional generator maps a spatial noise field to an image and
//! a fully convolutional discriminator maps an image to a field of real/fake
//! probabilities. Exact projective-field arithmetic ([`fields`]) makes
//! arbitrary-size, chunked and seamless generation ([`synthesis`]) exact.

pub mod analysis;
pub mod autograd;
pub mod config;
pub mod error;
pub mod fields;
pub mod image_io;
pub mod model;
pub mod ops;
pub mod optim;
pub mod par;
pub mod persist;
pub mod synthesis;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
