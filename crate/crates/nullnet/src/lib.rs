//! Training and evaluation of small CNNs with a null ("no decision") output
//! class, and FGSM-based robustness measurement against those models.
//!
//! The crate is organized around a fixed-architecture network engine with
//! explicit per-layer forward/backward passes (`tensor`, `layers`, `network`),
//! data ingestion and null-sample generation (`data`, `nullgen`), a training
//! loop with deterministic RNG stream discipline (`trainer`), FGSM attack and
//! epsilon-threshold search (`attack`), scoring and cross-seed aggregation
//! (`evaluate`, `report`), the 3-pixel toy environment (`toyworld`, `probe`),
//! and checkpoint/record serialization (`persist`).

pub mod adam;
pub mod arch;
pub mod attack;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod init;
pub mod layers;
pub mod loss;
pub mod network;
pub mod nullgen;
pub mod persist;
pub mod probe;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod toyworld;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
