//! Quantum and classical recurrent models for monthly financial series.
//!
//! The crate bundles a dense statevector simulator ([`qsim`]), amplitude
//! encoding ([`encoding`]), the LSTM / QLSTM pair ([`qlstm`]), classical and
//! quantum reservoirs with ridge and MLP readouts ([`reservoir`]), the
//! GP + HMM synthetic data pipeline ([`data`]), shared optimizers and metrics
//! ([`train`]), and the experiment harness behind the CLI ([`experiment`]).

// Guards like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod par;
pub mod qlstm;
pub mod qsim;
pub mod reservoir;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use par::Execution;
