//! Published JSON schemas for request and response bodies.

use serde_json::Value;

/// All shapes, under `definitions`.
pub const API_SCHEMA: &str = include_str!("../schemas/api.schema.json");

/// Shapes with a definition in [`API_SCHEMA`].
pub const DEFINITIONS: [&str; 10] = [
    "result",
    "report",
    "check",
    "check_all",
    "session",
    "session_list",
    "annotation",
    "error",
    "partial_failure",
    "document",
];

/// A standalone schema validating one named definition.
pub fn schema_for(name: &str) -> Option<Value> {
    let mut root: Value = serde_json::from_str(API_SCHEMA).expect("schema file is valid JSON");
    root.get("definitions")?.get(name)?;
    root["$ref"] = Value::from(format!("#/definitions/{name}"));
    Some(root)
}
