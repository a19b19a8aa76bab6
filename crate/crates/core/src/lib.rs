//! Closed-loop training of discrete driving decisions.
//!
//! A decision policy picks a (speed, path) meta-action from an ego-frame state embedding;
//! an action expert turns the meta-action into a concrete trajectory which a deterministic
//! 2D simulator executes. The policy is first trained by imitation of a rule-based expert,
//! then refined by PPO on sparse terminal rewards with a KL penalty to its imitation snapshot.

pub mod action;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod il;
pub mod io;
pub mod meta_action;
pub mod nn;
pub mod policy;
pub mod predict;
pub mod rl;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
