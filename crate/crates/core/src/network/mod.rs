//! The collaboration network: topology, interaction weights, aggregation,
//! message transport and the round scheduler.

mod aggregation;
mod schedule;
mod topology;
mod transport;

pub use aggregation::{aggregate, derive_weights, InteractionWeights, NeighborContribution};
pub use schedule::{Network, NetworkOptions, RoundLog, RoundLogEntry};
pub use topology::{build_topology, Topology, TopologyKind};
pub use transport::{
    decode_message, encode_message, InProcessTransport, Message, MessageHeader, Transport,
};
