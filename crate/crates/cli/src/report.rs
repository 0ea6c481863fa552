//! Report envelope, output and error classification.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use lemip::bfl::BflError;
use lemip::commit::CommitError;
use lemip::gf::GfError;
use lemip::nonlocal::NonlocalError;
use lemip::runtime::RunError;
use lemip::threecol::ThreeColError;
use lemip::zkmip::ZkError;

use crate::Common;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input, or parameters outside a
    /// module's preconditions.
    #[error("{0}")]
    Validation(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Parameter(_) | RunError::Config(_) => CliError::Validation(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<GfError> for CliError {
    fn from(e: GfError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<NonlocalError> for CliError {
    fn from(e: NonlocalError) -> Self {
        match e {
            NonlocalError::Parameter(_) | NonlocalError::Capacity(_) => CliError::Validation(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<CommitError> for CliError {
    fn from(e: CommitError) -> Self {
        match e {
            CommitError::ProtocolViolation(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<BflError> for CliError {
    fn from(e: BflError) -> Self {
        match e {
            BflError::Run(r) => r.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ZkError> for CliError {
    fn from(e: ZkError) -> Self {
        match e {
            ZkError::Run(r) => r.into(),
            ZkError::Bfl(b) => b.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ThreeColError> for CliError {
    fn from(e: ThreeColError) -> Self {
        match e {
            ThreeColError::Run(r) => r.into(),
            ThreeColError::SimulatorContract(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serializes")
}

/// Builds the report: schema version, command, resolved configuration,
/// result, and a timestamp unless suppressed.
pub fn render(command: &str, common: &Common, config: Value, result: Value) -> Result<String, CliError> {
    let mut report = json!({
        "schema": SCHEMA,
        "command": command,
        "config": { "seed": common.seed, "command": config },
        "result": result,
    });
    if !common.no_timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_secs();
        report["timestamp"] = json!(secs);
    }
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read_input(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("malformed {}: {e}", path.display())))
}
