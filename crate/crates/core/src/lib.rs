//! Simulation and large-deviations numerics for infinite-server queues in a
//! random environment.
//!
//! A background process `J` sets the arrival rate `λ(J)`, the rate `κ(J)` of
//! the exponential service requirement drawn at arrival and the server work
//! rate `μ(J)`. Given the whole path of `J`, the number of jobs present at
//! time `t` is Poisson with mean
//!
//! ```text
//! φ_t(J) = ∫_0^t λ(J(s)) exp(-κ(J(s)) ∫_s^t μ(J(r)) dr) ds.
//! ```
//!
//! The crate evaluates `φ_t` on step paths, simulates the queue, and computes
//! attainable intervals, rate functions and empirical decay rates under the
//! scaling `λ ↦ nλ`, `J ↦ J_n`.

pub mod background;
pub mod cli;
pub mod config;
pub mod ldp;
pub mod modulation;
pub mod paths;
pub mod queue;
pub mod rng;

pub use background::{BackgroundSpec, Ctmc, GeneratorMatrix, MmisFeed};
pub use modulation::{phi, Modulation, RateMap};
pub use paths::{StateSpace, StepPath};
