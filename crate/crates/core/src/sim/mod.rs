//! Packet-level simulator of the secure, power-aware routing stack.

pub mod channel;
pub mod energy;
mod engine;
pub mod frame;
pub mod mac;
pub mod placement;
pub mod scenario;
pub mod trace;

pub use engine::{run, run_traced, Flow, NodeState, RunOutput, SimError, Simulation};
pub use energy::{EnergyLedger, EnergyMode};
pub use scenario::{
    CbrTraffic, EnergyParams, FaultKind, LinkFault, MacParams, PowerControlParams, RecoveryParams, Scenario, ScenarioError,
    UmpireParams,
};
