//! Dense feed-forward networks: forward tracing, backpropagation, Adam with
//! plateau scheduling, toggleable dropout, and model files.

mod io;
mod network;
mod train;

pub use io::{from_json_str, load_model, save_model, to_json_string, MODEL_FORMAT, MODEL_VERSION};
pub use network::{
    BatchTrace, Dense, ForwardTrace, Gradients, HiddenActivation, Network, NetworkConfig,
    OutputHead,
};
pub(crate) use network::argmax;
pub use train::{mean_loss, train, train_with_validation, Adam, TrainConfig, TrainHistory, Trainer};
