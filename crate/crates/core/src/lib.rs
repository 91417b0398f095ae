//! Exact federated continual unlearning for ridge-regression heads on
//! frozen features.
//!
//! Clients send fixed-size sufficient statistics (or QR factors of them) for
//! the samples they add or delete each round. The server keeps an additive
//! ledger of the retained statistics and recovers a head equal to
//! centralized retraining on the retained data, either by a Cholesky solve
//! ([`coordinator::run_round_a`]) or by Sherman–Morrison–Woodbury updates of
//! a tracked inverse ([`coordinator::run_round_b`]).

pub mod client;
pub mod coordinator;
pub mod error;
pub mod inverse;
pub mod ledger;
pub mod linalg;
pub mod posterior;
pub mod sim;

pub use client::{ClientId, ClientMessage, ClientStore, MessageVariant, Payload, Sample, SampleId};
pub use coordinator::{aggregate, run_round_a, run_round_b, RoundAggregate};
pub use error::{Error, Result};
pub use inverse::{InverseState, ResetPolicy};
pub use ledger::{Ledger, SufficientStats};
pub use linalg::{Matrix, Precision};
pub use posterior::{kl_matrix_normal, posterior_from_ledger, MatrixNormalPosterior};
