//! Round-based training: FedAvg coordinator and site workers speaking a
//! framed binary protocol, plus the pooled and individual baselines.

mod aggregate;
mod coordinator;
mod protocol;
mod scenario;
mod site;
mod transport;

pub use aggregate::{aggregation_weights, fedavg_aggregate, SiteUpdate};
pub use coordinator::{Coordinator, Phase};
pub use protocol::{decode_message, encode_message, read_frame, Message, MessageType, HEADER_LEN, MAGIC, VERSION};
pub use scenario::{
    run_fedavg, run_im, run_pm, run_scenario, ExecMode, ExperimentReport, RoundRecord, RunOptions, Scenario,
    ScenarioConfig,
};
pub use site::{local_train_epoch, CaseStore, LocalEpoch, SiteState, TrainContext};
pub use transport::{link, LinkReceiver, LinkSender, Transport};
