//! Deterministic closed-loop simulator of RAN slicing: an RL agent (or one
//! of four baseline allocators) assigns downlink PRBs across URLLC, eMBB
//! and mMTC slices every control epoch; a link-budget channel model and
//! FIFO traffic buffers produce the KPIs that drive clipped per-slice
//! rewards, online PPO/DQN training, and CDF comparison reports.

pub mod agents;
pub mod baselines;
pub mod channel;
pub mod commands;
pub mod control_loop;
pub mod domain;
pub mod error;
pub mod eval;
pub mod neural;
pub mod rewards;
pub mod scheduler;
pub mod traffic;

pub use error::Error;
