//! Loading the TOML run configuration and applying `--set key=value` overrides.

use std::path::Path;

use compdec::experiments::ExperimentConfig;
use toml::{Table, Value};

use crate::CliError;

/// Parses `raw` as a TOML value; bare words that are not valid TOML become strings.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{spec}` is not of the form key=value"))
    })?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "`{part}` in `{key}` is not a section"
                )))
            }
        };
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the optional config file, applies the overrides in order and
/// deserializes against the schema, which rejects unknown keys and mistyped values.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            toml::from_str::<Table>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = table
        .try_into()
        .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
    cfg.validate()
        .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}
