//! Loading inputs named on the command line or in the config.

use std::path::Path;

use featsplat::distill::DecodeHead;
use featsplat::io::Vocab;
use featsplat::CameraView;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_head(path: &Path) -> CliResult<DecodeHead> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(DecodeHead::from_json(&text)?)
}

pub fn load_vocab(path: &Path) -> CliResult<Vocab> {
    let v: Vocab = read_json(path)?;
    v.validate()?;
    Ok(v)
}

pub fn load_cameras(path: &Path) -> CliResult<Vec<CameraView>> {
    let cams: Vec<CameraView> = read_json(path)?;
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
