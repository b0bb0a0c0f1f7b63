//! Independent reference implementations and synthetic inputs shared by the
//! test suites. Nothing here is used by production code.

pub mod brute;
pub mod desk;
pub mod qp;
pub mod study_fuzz;
pub mod synth;
