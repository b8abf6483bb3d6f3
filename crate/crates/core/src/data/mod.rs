//! Dataset ingestion, cleaning, windowing, splitting and synthesis.

pub mod cache;
pub mod harth;
pub mod pamap2;
mod series;
mod split;
pub mod synthetic;

pub use harth::load_harth;
pub use pamap2::load_pamap2;
pub use series::{clean, make_windows, ClassMap, SubjectSeries, MAX_INTERPOLATION_GAP_SECS};
pub use split::{
    split_train_test, standardize, standardize_one, AgentDataset, ChannelStats, MIN_STD,
};
pub use synthetic::{
    rotated_profile, synthesize_network_data, synthesize_windows, SyntheticConfig,
};
