//! Server-side orchestration: client selection, aggregation, round
//! execution, and whole-experiment runs.

mod aggregate;
mod experiment;
mod select;
mod types;

pub use aggregate::{aggregate, aggregate_received};
pub use experiment::{
    final_reports, run_experiment, run_round, DownstreamTask, EarlyStop, Experiment, MonitorSpec,
};
pub use select::select_clients;
pub use types::{
    ClientHistory, ClientUpdate, FederationConfig, FederationState, Phase, ReceivedUpdate,
    RoundRecord, UpdateKind,
};
