use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const FILE_NAME: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Written next to every command's outputs. `argv` replays the command;
/// `config` holds every setting with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            seed,
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| LabError::Json {
            path: path.clone(),
            source: e,
        })?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            path.join(FILE_NAME)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read(&path).map_err(|e| LabError::io(&path, e))?;
        let m: RunManifest = serde_json::from_slice(&text).map_err(|e| LabError::Json {
            path: path.clone(),
            source: e,
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(LabError::format(
                &path,
                0,
                format!(
                    "manifest version {}, this build reads {FORMAT_VERSION}",
                    m.format_version
                ),
            ));
        }
        Ok(m)
    }
}
