use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Reads a `--config` file. It must hold a JSON object.
pub fn load_overrides(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::user(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::user(format!("config {} must be a JSON object", path.display())));
    }
    Ok(value)
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Settings built from flags, with keys of `overrides` replacing them.
/// Nested objects merge key by key.
pub fn overlay<T: Serialize + DeserializeOwned>(settings: T, overrides: Option<&Value>) -> Result<T, CliError> {
    let Some(patch) = overrides else {
        return Ok(settings);
    };
    let mut value = serde_json::to_value(&settings).map_err(|e| CliError::internal(e.to_string()))?;
    merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| CliError::user(format!("config does not fit these settings: {e}")))
}
