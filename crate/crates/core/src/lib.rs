//! Traffic profiling for adaptive video streaming sessions.
//!
//! Given the packet timestamps and payload sizes of a flow, the profiler
//! splits the session into buffer-filling, steady-state and other phases,
//! estimates the encoding rate of each steady-state phase and reconstructs the
//! client buffer. A synthetic session generator with ground-truth labels and
//! an evaluation harness are included.

pub mod burst;
pub mod config;
pub mod error;
pub mod eval;
pub mod profile;
pub mod rate;
pub mod synth;
pub mod trace;

pub use config::Config;
pub use error::{Error, Result};
pub use profile::{profile, profile_detailed, PhaseSegment, ProfileParams, ProfileReport, StreamProfiler};
pub use trace::{FlowKey, PacketRecord, Phase, PhaseLabel, Trace};
