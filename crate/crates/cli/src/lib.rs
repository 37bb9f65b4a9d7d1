//! Batch harness around the twin-beam simulator core: plan execution,
//! shot-noise calibration, and report rendering. The `twinbeam` binary is a
//! thin argument-parsing layer over these modules so that integration tests
//! can drive the exact production code paths in-process.

pub mod calibrate;
pub mod report;
pub mod runner;
