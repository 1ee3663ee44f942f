//! Desk-scale controllable image generation.
//!
//! The pipeline samples a coarse procedural shape, projects it to a depth
//! map, runs small learned generators to produce interpretable reflectance
//! maps (normal, diffuse albedo, specular albedo, roughness), and composites
//! a final image with a fixed differentiable Blinn-Phong renderer. Training
//! is unpaired: adversarial losses plus cycle-consistency losses link the
//! depth domain and the reflectance-map domain without correspondences.

pub mod rng;
pub mod tensor;

pub use tensor::{Tape, Tensor, Var};

pub mod geometry;

pub mod shading;

pub mod losses;

pub mod nets;

pub mod metrics;

pub mod datagen;
pub mod io;

pub mod training;

pub mod pipeline;

pub mod commands;
pub mod config;
