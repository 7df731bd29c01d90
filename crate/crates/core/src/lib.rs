//! A desk-scale laboratory for five generative mechanisms of deep networks:
//! activation maximization ([`dream`]), content/style synthesis with Gram
//! statistics ([`style`]), sentiment-unit discovery and clamping
//! ([`sentiment`]), embedding-space analogies ([`embed`]) and
//! classifier-driven abstraction ([`percept`]). Everything runs on the
//! from-scratch substrate in [`nn`] over procedurally generated data from
//! [`synthdata`].

pub mod classifier;
pub mod cli;
pub mod dream;
pub mod embed;
pub mod error;
pub mod nn;
pub mod percept;
pub mod rng;
pub mod sdf;
pub mod sentiment;
pub mod style;
pub mod synthdata;

pub use error::{Error, Result};
