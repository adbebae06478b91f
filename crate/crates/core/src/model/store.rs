//! Model checkpoints: the tensor checkpoint container with the model
//! configuration as its header JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::json;
use crate::model::config::ModelConfig;
use crate::model::network::check_params;
use crate::tensor::checkpoint::{read_checkpoint, write_checkpoint};
use crate::tensor::ParameterSet;

pub fn model_checkpoint_bytes(config: &ModelConfig, params: &ParameterSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, &json::to_canonical(config)?, params)?;
    Ok(out)
}

pub fn save_model(path: &Path, config: &ModelConfig, params: &ParameterSet) -> Result<()> {
    let bytes = model_checkpoint_bytes(config, params)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint and checks its parameters against its configuration.
pub fn load_model(path: &Path) -> Result<(ModelConfig, ParameterSet)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (config_json, params) = read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        Error::Format { what, msg } => Error::Format {
            what,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })?;
    let config: ModelConfig = json::from_str(&config_json, "checkpoint config")?;
    config.validate()?;
    check_params(&config, &params)?;
    Ok((config, params))
}
