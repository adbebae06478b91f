//! The statement-based memory network and its sequence-only submodel.

pub mod config;
pub mod encoders;
pub mod memory;
pub mod network;
pub mod positional;
pub mod store;

pub use config::{EncoderKind, GateQuery, GateSquash, ModelConfig, StatementEncoding};
pub use encoders::{encode_statements_eos, encode_statements_positional};
pub use memory::{gate, gate_value, memory_hops, memory_hops_values, HopVars, MemoryTrace};
pub use network::{
    build_forward, check_params, forward, forward_batch, init_params, pad_prefix, param_specs,
    DecoderInput, ForwardOutput, ForwardVars,
};
pub use positional::positional_matrix;
pub use store::{load_model, model_checkpoint_bytes, save_model};
