//! Simulation and detection workbench for slow, weak targets in LFMCW radar
//! returns dominated by Weibull clutter and strong interference objects.
//!
//! The processing chain is: [`waveform`] synthesizes IF matrices, [`clutter`]
//! adds correlated Weibull clutter, [`rdmap`] forms range-velocity maps,
//! [`mti`] and [`godec`] suppress clutter, [`cfar`] detects, and
//! [`pipeline`] scores and sweeps complete schemes.

pub mod cfar;
pub mod clutter;
pub mod error;
pub mod godec;
pub mod mti;
pub mod pipeline;
pub mod rdmap;
pub mod rng;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};
pub use scene::Scenario;
