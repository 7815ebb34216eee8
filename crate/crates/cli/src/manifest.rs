use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Provenance of one command run, embedded in every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every option after defaults were applied.
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start<C: Serialize>(command: &str, config: &C, seed: u64) -> Self {
        let started_at = now();
        RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            finished_at: started_at.clone(),
            started_at,
        }
    }

    pub fn finish(mut self) -> Self {
        self.finished_at = now();
        self
    }
}
