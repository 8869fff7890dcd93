//! Denoising world-model learning for legged locomotion.
//!
//! `no_std` + `alloc`. Everything here is pure computation: the planar biped
//! simulator, gait and reward math, the observation model, a small
//! reverse-mode tensor library and the encoder/decoder actor-critic trainer.
//! File formats, the CLI and threaded rollouts live in the `dwl` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dwl;
pub mod env;
pub mod error;
pub mod gait;
pub mod linalg;
pub mod nn;
pub mod noise;
pub mod obs;
pub mod profiles;
pub mod rewards;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
