//! Multi-label graph-cut refinement of lifted vertex labels.

pub mod energy;
pub mod expansion;
pub mod maxflow;

pub use energy::{build_energy, EnergyModel};
pub use expansion::{alpha_expansion, ExpansionResult, TraceEntry};
pub use maxflow::{max_flow, Arc, FlowNetwork, MaxFlowResult, INFINITE};
