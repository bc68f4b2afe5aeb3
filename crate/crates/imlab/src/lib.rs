//! Active imitation learning laboratory.
//!
//! The crate trains three small networks from expert demonstrations — a
//! behavior-cloning policy, a one-step delta dynamics model, and a denoising
//! autoencoder whose reconstruction error acts as an epistemic-uncertainty
//! energy — and uses them for:
//!
//! - **active demonstration collection**: roll the policy, request an expert
//!   completion whenever imagination-rollout uncertainty crosses a calibrated
//!   threshold ([`active`]);
//! - **hybrid control**: add a beta-weighted first action of an
//!   uncertainty-minimizing plan to the policy output, replanning every step
//!   ([`control`]);
//! - **failure prediction**: stop execution when rollout uncertainty exceeds
//!   the threshold, and score the monitor against ground truth ([`failure`]).
//!
//! Environments are analytic 2D manipulation tasks with scripted experts
//! ([`envs`]), so learned models can be checked against closed-form dynamics.
//! Everything is seeded and deterministic: a run is a pure function of its
//! configuration.

pub mod envs;
pub mod error;
pub mod active;
pub mod control;
pub mod failure;
pub mod harness;
pub mod models;
pub mod numkit;
pub mod uncertainty;

pub use error::{Error, Result};
