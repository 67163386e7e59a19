//! Polar coding for the binary deletion channel.
//!
//! The crate is organised bottom-up: [`arikan`] holds the polar transform,
//! [`hmm_input`] the finite-state input processes, [`channels`] the deletion
//! and trimmed-deletion channels, [`trellis`] the path-sum trellises and their
//! minus/plus transforms, [`sc_decoder`] successive cancellation over those
//! trellises, [`guardband`] the framing that splits one long codeword into
//! independently trimmed blocks, and [`construction`] the Monte Carlo code
//! design and diagnostics. [`scheme`] wires everything into an
//! encode/transmit/decode pipeline.
//!
//! Indices in public APIs are 1-based where they name a polar index `i` or a
//! trellis section `j`; plain Rust slices stay 0-based.

pub mod arikan;
pub mod bits;
pub mod channels;
pub mod construction;
pub mod error;
pub mod guardband;
pub mod hmm_input;
pub mod logspace;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod sc_decoder;
pub mod scheme;
pub mod trellis;

pub use bits::BitString;
pub use error::{Error, Result};
pub use parallel::Execution;
