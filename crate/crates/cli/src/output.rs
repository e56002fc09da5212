//! Deterministic output: sorted keys, floats at nine significant digits.

use std::io::Write;
use std::path::Path;

use serde_json::{Number, Value};

use crate::error::CliError;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`]; non-finite values have no JSON form.
pub fn round_sig(x: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().ok()
}

pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(round_sig)
            .and_then(Number::from_f64)
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is a BTreeMap, so keys come out sorted
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

pub fn canonical_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonicalize(v)).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Writes to `out`, or stdout when absent.
pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(CliError::io(path)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(CliError::io(Path::new("<stdout>")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(round_sig(0.1 + 0.2), Some(0.3));
        assert_eq!(round_sig(1.0 / 3.0), Some(0.333333333));
        assert_eq!(round_sig(123456789012.0), Some(123456789000.0));
        assert_eq!(round_sig(f64::NAN), None);
    }

    #[test]
    fn sorts_keys_and_keeps_integers() {
        let s = canonical_json(json!({"b": 1, "a": [2.0000000001, 7]}));
        assert_eq!(s, "{\n  \"a\": [\n    2.0,\n    7\n  ],\n  \"b\": 1\n}\n");
    }
}
