//! Link-level simulator for reuse-1 OFDMA downlinks with inter-tower
//! interference.

pub mod cfo;
pub mod channel;
pub mod error;
pub mod numerics;
pub mod ofdm;
pub mod pilots;
pub mod estimation;
pub mod detection;
pub mod fec;
pub mod harness;

pub use error::{Error, Result};
pub use numerics::C64;
pub use ofdm::OfdmConfig;
