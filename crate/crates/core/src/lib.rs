//! Speaker-verification attack simulation.
//!
//! Two independently configured classical ASV stacks (MFCC front-end, GMM-UBM,
//! i-vectors, LDA and PLDA back-end) are used to rank public target speakers
//! against an attacker's natural voice, build attack trials, and check whether
//! the closest/median/furthest ordering found with one system carries over to
//! the other. A prosody module measures F0, speaking rate and formant changes
//! between natural and mimicked speech.

#[macro_use]
mod macros;

pub mod analysis;
pub mod attack;
pub mod backend;
pub mod corpus;
pub mod embedding;
pub mod experiment;
mod error;
pub mod frontend;
pub mod linalg;
pub mod parallel;
pub mod prosody;
pub mod synth;
pub mod system;

pub use error::{Error, ErrorKind, Result};
