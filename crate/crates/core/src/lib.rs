//! Adaptive task sampling for multi-domain meta-learning.
//!
//! The crate is organized around the training loop it implements:
//!
//! * [`ndcore`] — dense f64 tensors, layers with hand-written backward
//!   passes, optimizers, and a finite-difference gradient oracle.
//! * [`taskgen`] — synthetic multi-domain task suites with controllable
//!   quantity and difficulty imbalance.
//! * [`metalearn`] — inner/outer meta-training loops (MAML, FOMAML,
//!   Reptile) plus a plain multi-task mode.
//! * [`sampling`] — domain samplers: five fixed baselines and an
//!   adversarially trained policy network.
//! * [`harness`] — experiment orchestration, metrics, and statistics.

pub mod harness;
pub mod metalearn;
pub mod ndcore;
pub mod sampling;
pub mod taskgen;

mod rng;

pub use error::Error;
pub use rng::{derive_seed, stream as rng_stream, StreamRng};

pub mod error {
    use thiserror::Error;

    /// Crate-wide error type. The CLI maps variants onto its exit-code
    /// contract: config/usage problems exit 1, numeric aborts exit 2.
    #[derive(Debug, Error)]
    pub enum Error {
        #[error("shape mismatch: {0}")]
        Shape(String),

        #[error("dimension error: {0}")]
        Dimension(String),

        #[error("config error: {0}")]
        Config(String),

        #[error("numeric error: {0}")]
        Numeric(String),

        #[error("insufficient pool: domain {domain} has {pool} examples, task needs {needed}")]
        InsufficientPool {
            domain: usize,
            pool: usize,
            needed: usize,
        },

        #[error("index error: {0}")]
        Index(String),

        #[error("argument error: {0}")]
        Argument(String),

        #[error("io error: {0}")]
        Io(#[from] std::io::Error),

        #[error("serialization error: {0}")]
        Serde(#[from] serde_json::Error),
    }

    impl Error {
        /// True for errors that should abort a run with exit code 2.
        pub fn is_numeric(&self) -> bool {
            matches!(self, Error::Numeric(_))
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
