//! Neural episodic control with a fixed random-projection reduction layer.
//!
//! The crate is organised bottom-up:
//!
//! * [`random_projection`]: five sketch constructions, projection, Jacobians,
//!   distortion audits and timing benchmarks.
//! * [`dnd`]: the per-action differentiable neural dictionary with an exact,
//!   incrementally maintained kd-tree index.
//! * [`encoder`]: the trainable feature path (optional convolution stage,
//!   dense stack, RP or FC reduction layer) with hand-written backward passes
//!   and Adam.
//! * [`agent`]: epsilon-greedy control, N-step targets, replay memory and the
//!   episode/training loop.
//! * [`envs`]: deterministic toy environments with exact value-iteration
//!   oracles.
//! * [`harness`]: run configuration, training/comparison orchestration,
//!   metrics files and the audit/bench entry points used by the CLI.

pub mod agent;
pub mod dnd;
pub mod encoder;
pub mod envs;
pub mod harness;
pub mod math;
pub mod random_projection;
pub mod rng;
