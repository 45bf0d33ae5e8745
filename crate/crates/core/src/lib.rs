//! Hodgkin-Huxley spiking network trained with supervised, stimulus-timed STDP.
//!
//! The crate is organised bottom-up:
//!
//! * [`hh`]: membrane dynamics, spike detection, refractory gating
//! * [`plasticity`]: the trace-based STDP rule
//! * [`network`]: the input -> output network, simulation windows, readout
//! * [`trainer`]: list selection, stimulus schedules, training and evaluation
//! * [`data`]: IDX loading and 14x14 binary encoding
//! * [`snapshot`]: versioned binary network snapshots

pub mod data;
pub mod error;
pub mod hh;
mod kernel;
pub mod network;
pub mod plasticity;
pub mod seed;
pub mod snapshot;
pub mod trainer;

pub use error::{Error, Result};
pub use hh::{HhParams, MembraneState, StimulusPulse};
pub use network::{
    group_counts, predict, NetworkParams, NetworkState, Spike, SpikeRecord, StimulusEvent,
    SynapseParams, Target, Topology, DEFAULT_DT,
};
pub use plasticity::{StdpParams, SynapseState, Trace};
pub use trainer::{Lists, StimulusPlan, TrainConfig};
