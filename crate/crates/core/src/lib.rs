//! Victim-tagging laboratory.
//!
//! Everything needed to study how teams of responders tag victims spread
//! over a rectangular incident area:
//!
//! - [`domain`]: scenario geometry, triage classification, seeded instance
//!   generation with named RNG sub-streams.
//! - [`exact`]: min-max route optimization (branch-and-bound plus a
//!   brute-force oracle), feasibility checking, and LP-format export.
//! - [`policies`]: the five dispatch heuristics (random, nearest, local
//!   nearest with preemption, critical-first, grid-partitioned).
//! - [`sim`]: discrete-time multi-agent simulator with a random-order
//!   scheduler and a four-state responder FSM.
//! - [`marl`]: the simulator wrapped as a multi-agent RL environment —
//!   state encoding, action masking, conflict resolution, team rewards.
//! - [`qnet`]: from-scratch value network (shared trunk, per-agent heads),
//!   TD loss with additive joint values, backprop, Adam, gradient clipping.
//! - [`train`]: replay buffer, epsilon schedule, training/evaluation loops,
//!   checkpointing.
//! - [`experiments`]: named experiment presets, reference tables, and the
//!   CSV/JSON emitters behind the benchmark commands.

pub mod domain;
pub mod exact;
pub mod experiments;
pub mod marl;
pub mod policies;
pub mod qnet;
pub mod sim;
pub mod train;

pub use domain::{
    derive_seed, euclidean_dist, generate_instance, start_color, travel_time, DomainError,
    Instance, Point, ResponderSpec, RngStream, ScenarioConfig, TriageColor, VictimSpec,
};
pub use exact::{solve_exact, ExactSolution, RouteMatrix, SolveError, SolveLimits};
pub use policies::PolicyKind;
pub use sim::{run_episode, run_experiment, EpisodeResult, ExperimentResult, Simulation, WorldState};
pub use train::{evaluate, train, EvalReport, TrainConfig, TrainOutcome};
