use std::fs;
use std::path::Path;

use fibwalk_core::Error;
use serde::Serialize;
use serde_json::{Map, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_NOT_FOUND: u8 = 2;
pub const EXIT_PRECISION: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_precision() => EXIT_PRECISION,
            CliError::Core(Error::NotFound(_)) => EXIT_NOT_FOUND,
            CliError::Core(Error::InvalidArgument(_) | Error::InvalidLaw(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_FAILED,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Assertion {
        Assertion {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// What a command produced: the report, its hard assertions and an optional CSV table.
pub struct Outcome {
    pub result: Value,
    pub assertions: Vec<Assertion>,
    pub csv: Option<String>,
}

impl Outcome {
    pub fn new(result: impl Serialize) -> CliResult<Outcome> {
        Ok(Outcome {
            result: to_value(&result)?,
            assertions: Vec::new(),
            csv: None,
        })
    }

    pub fn exit_code(&self) -> u8 {
        if self.assertions.iter().all(|a| a.pass) {
            EXIT_OK
        } else {
            EXIT_FAILED
        }
    }
}

pub fn to_value(v: &impl Serialize) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Usage(format!("cannot serialize output: {e}")))
}

/// Sorts object keys and writes non-integer numbers as shortest round-trip decimal strings.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, normalize(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Number(n) if n.is_f64() => Value::String(format!("{}", n.as_f64().unwrap_or(f64::NAN))),
        other => other,
    }
}

/// The versioned envelope shared by every command.
pub fn envelope(command: &str, config: Value, outcome: &Outcome) -> Value {
    let mut root = Map::new();
    root.insert(
        "schema".into(),
        Value::String(format!("fibwalk/{command}/v{SCHEMA_VERSION}")),
    );
    root.insert("command".into(), Value::String(command.into()));
    root.insert("config".into(), config);
    root.insert("result".into(), outcome.result.clone());
    root.insert(
        "assertions".into(),
        Value::Array(
            outcome
                .assertions
                .iter()
                .map(|a| serde_json::to_value(a).unwrap_or(Value::Null))
                .collect(),
        ),
    );
    root.insert("exit_code".into(), Value::from(outcome.exit_code()));
    normalize(Value::Object(root))
}

pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

pub fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn normalization_sorts_keys_and_stringifies_floats() {
        let v = normalize(json!({"b": 1.5, "a": {"z": 2, "y": [0.25]}}));
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"a":{"y":["0.25"],"z":2},"b":"1.5"}"#
        );
    }

    #[test]
    fn exit_codes_follow_error_kinds() {
        assert_eq!(CliError::from(Error::NotFound("x".into())).exit_code(), EXIT_NOT_FOUND);
        assert_eq!(CliError::from(Error::precision(64, "x")).exit_code(), EXIT_PRECISION);
        assert_eq!(
            CliError::from(Error::InvalidArgument("x".into())).exit_code(),
            EXIT_USAGE
        );
        assert_eq!(CliError::from(Error::Ordering("x".into())).exit_code(), EXIT_FAILED);
    }
}
