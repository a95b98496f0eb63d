//! Worst-case load-shedding verification for neural line-switching proxies.

pub mod conic;
pub mod error;
pub mod formulation;
pub mod network;
pub mod nlp;
pub mod nn;
pub mod ops;
pub mod redispatch;
pub mod sampling;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
pub use network::NetworkCase;
pub use scenario::{GammaBox, ScenarioInput};
