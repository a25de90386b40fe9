//! Two-expert gradient estimation for domain generalization.
//!
//! A task expert (TE) is trained on source domains with its feature gradient
//! blended with the normalized parameter difference toward a generalization
//! expert (GE); GE tracks TE by an exponential moving average and is the final
//! model. The crate also ships the pieces needed to study the method at desk
//! scale: synthetic shifted domains, a small MLP with exact backprop, a
//! pre-training stand-in, gradient-conflict / cosine / linear-probe
//! diagnostics, and a seeded leave-one-domain-out harness.

pub mod analysis;
pub mod datagen;
pub mod error;
mod fsutil;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod pretrain;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{Layout, ParamVector, Segment, SegmentView};
