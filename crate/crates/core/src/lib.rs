//! Metric residual network (MRN) critics for goal-conditioned reinforcement
//! learning, together with exact small-scale oracles for the properties the
//! architecture relies on.
//!
//! - [`diff`]: reverse-mode autodiff over 2-D arrays.
//! - [`nets`]: MLP, MRN, bilinear and monolithic critics; the actor.
//! - [`quasimetric`]: axiom checks and the lift of `Q*` to a doubled space.
//! - [`exact`]: value iteration on tiny deterministic goal-conditioned MDPs.
//! - [`toyworld`]: the asymmetric unit-square world with a Dijkstra oracle.
//! - [`gcrl`]: point-mass environment, HER replay and DDPG training.
//! - [`cli`]: config parsing, experiment runners and CSV output.

pub mod cli;
pub mod diff;
pub mod exact;
pub mod gcrl;
pub mod nets;
pub mod quasimetric;
pub mod toyworld;
