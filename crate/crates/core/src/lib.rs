//! Spatiotemporal WiFi CSI activity recognition.
//!
//! The pipeline runs synthetic CSI generation ([`csi`]), sliding-window
//! multi-scale 3D volume construction ([`volume`]), a 3D residual network
//! with feature self-attention ([`net`]) on top of a small reverse-mode
//! engine ([`autodiff`]), and the combined-loss trainer ([`train`]).

pub mod autodiff;
pub mod cli;
pub mod csi;
pub mod error;
pub mod io;
pub mod net;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
