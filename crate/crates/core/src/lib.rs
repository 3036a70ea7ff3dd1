//! Exact symbolic engine for local uniformization of Abhyankar valuations.
//!
//! The crate is organised bottom-up:
//!
//! - [`value_group`]: the ordered value group `Γ ≅ ℤ^n`, realised by
//!   embedding generators as rational combinations of square roots of primes.
//! - [`chart`]: coordinate charts, transform steps and derivation logs.
//! - [`poly`]: sparse exact polynomials over `ℚ` or `𝔽_p`.
//! - [`perron`]: Perron steps, domination, principalization and
//!   monomialization.
//! - [`reduction`]: the Newton polygon reduction algorithm and root
//!   expansion.
//! - [`task`], [`log`], [`runner`]: task files, derivation logs, execution
//!   and the replay verifier.
//! - [`cli`]: the `vforge` command line.

pub mod chart;
pub mod cli;
pub mod error;
pub mod field;
pub mod linalg;
pub mod log;
pub mod perron;
pub mod poly;
pub mod reduction;
pub mod runner;
pub mod task;
pub mod value_group;

pub use chart::{Budget, Chart, Derivation, TransformStep, VarLabel, Variable};
pub use error::{Error, Result};
pub use field::CoefficientField;
pub use poly::Poly;
pub use value_group::{GroupValue, Sign, ValuationFrame, Weight};
