use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Identifies a run: tool version, subcommand, config hash and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &'static str, cfg: &RunConfig) -> Self {
        Provenance {
            tool: "weylsampl",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: cfg.hash(command),
            seed: cfg.seed(),
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# {} {} {} config_hash={} seed={}",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }
}

/// A command result in both output forms. JSON objects get a `run` block.
pub struct Output {
    pub json: Value,
    pub csv: String,
}

pub fn write(cfg: &RunConfig, prov: &Provenance, out: Output) -> Result<(), CliError> {
    let body = match cfg.format() {
        Format::Csv => out.csv,
        Format::Json => {
            let mut json = out.json;
            if let Value::Object(map) = &mut json {
                map.insert("run".into(), serde_json::to_value(prov).expect("provenance serializes"));
            }
            let mut s = serde_json::to_string_pretty(&json).expect("json output serializes");
            s.push('\n');
            s
        }
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, body)?,
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// CSV cell for an optional value; empty when absent.
pub fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
