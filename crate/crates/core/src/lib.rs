//! Online committee selection and weighted majority voting.
//!
//! The crate has three layers:
//!
//! - exact math: majority-vote accuracy, advantage functions, optimal
//!   egalitarian committees ([`votemath`]) and optimal voting weights via an
//!   exact coalition-family solver ([`mip`]);
//! - online learners: successive expert elimination, online weighted
//!   majority voting, and the combinatorial-UCB / zooming baselines
//!   ([`bandit`]) on top of confidence-interval estimation ([`estimate`]);
//! - experiment machinery: expert simulation and aggregation ([`experts`])
//!   and the seeded multi-trial harness with CSV/JSON outputs ([`harness`]).

pub mod bandit;
pub mod error;
pub mod estimate;
pub mod experts;
pub mod harness;
mod linprog;
pub mod mip;
pub mod votemath;

pub use error::{Error, Result};
