pub mod datamgmt;
pub mod error;
pub mod evalbench;
pub mod handseg;
pub mod highlighter;
pub mod imaging;
pub mod nn;
pub mod service;
pub mod synth;
pub mod teachtrain;

pub use error::{Error, Result};
