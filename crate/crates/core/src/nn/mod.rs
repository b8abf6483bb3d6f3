//! Numerical core: the conv–pool–dense classifier, its loss and gradient,
//! the Adam optimizer, and flat parameter (de)serialization.

mod adam;
mod arch;
mod model;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::ModelArchitecture;
pub use model::{argmax, cross_entropy, forward, loss_and_grad, predict, SensorWindow};
pub use params::{
    decode_params, encode_params, init_params, LayerViews, ParamLayout, ParameterVector,
};
pub(crate) use params::{write_f64_array, ByteReader};
