//! Full-reference video quality assessment for teleoperation video.
//!
//! The crate covers the numeric core of a retrainable VMAF-style pipeline:
//! raw video ingestion ([`frame_io`]), elementary metrics ([`metrics`]),
//! the fused perceptual feature set ([`features`]), the epsilon-SVR fusion
//! model ([`svr`]), dataset manifests and splits ([`dataset`]), subjective
//! rating statistics ([`stats`]) and model/human agreement ([`alignment`]).

pub mod alignment;
pub mod dataset;
pub mod error;
pub mod features;
pub mod frame_io;
pub mod metrics;
pub mod plane;
pub mod stats;
pub mod svr;

pub use error::{Error, ErrorClass, Result};
pub use frame_io::{Frame, FrameRate, VideoClip};
pub use plane::Plane;
