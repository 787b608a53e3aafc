//! Runtime values shared by the data store, the tool executors and the
//! condition-expression evaluator.

use std::fmt;

use serde_json::Value as Json;

/// A data-store value. Numbers are 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Boolean(bool),
    List(Vec<Value>),
}

/// Tag of a [`Value`], used in type errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Number,
    Text,
    Boolean,
    List,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Number => "number",
            Tag::Text => "text",
            Tag::Boolean => "boolean",
            Tag::List => "list",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("null is not a supported value")]
    Null,
    #[error("objects are not supported as values")]
    Object,
    #[error("number is not finite")]
    NonFinite,
}

impl Value {
    pub fn tag(&self) -> Tag {
        match self {
            Value::Number(_) => Tag::Number,
            Value::Text(_) => Tag::Text,
            Value::Boolean(_) => Tag::Boolean,
            Value::List(_) => Tag::List,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn from_json(json: &Json) -> Result<Value, ValueError> {
        match json {
            Json::Null => Err(ValueError::Null),
            Json::Bool(b) => Ok(Value::Boolean(*b)),
            Json::Number(n) => {
                let f = n.as_f64().ok_or(ValueError::NonFinite)?;
                if f.is_finite() {
                    Ok(Value::Number(f))
                } else {
                    Err(ValueError::NonFinite)
                }
            }
            Json::String(s) => Ok(Value::Text(s.clone())),
            Json::Array(items) => items
                .iter()
                .map(Value::from_json)
                .collect::<Result<Vec<_>, _>>()
                .map(Value::List),
            Json::Object(_) => Err(ValueError::Object),
        }
    }

    /// JSON form. Integral numbers in the exactly-representable range become
    /// JSON integers so that they echo as `6` rather than `6.0`.
    pub fn to_json(&self) -> Json {
        match self {
            Value::Number(n) => number_to_json(*n),
            Value::Text(s) => Json::String(s.clone()),
            Value::Boolean(b) => Json::Bool(*b),
            Value::List(items) => Json::Array(items.iter().map(Value::to_json).collect()),
        }
    }
}

const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

pub(crate) fn number_to_json(n: f64) -> Json {
    if n.fract() == 0.0 && n.abs() < EXACT_INT_LIMIT {
        Json::from(n as i64)
    } else {
        serde_json::Number::from_f64(n)
            .map(Json::Number)
            .unwrap_or(Json::Null)
    }
}

fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < EXACT_INT_LIMIT {
        format!("{}", n as i64)
    } else {
        // Display for f64 is the shortest representation that round-trips.
        format!("{n}")
    }
}

/// Deterministic text rendering used for exact-match comparison and for
/// echoing values into prompts.
pub fn canonical_text(value: &Value) -> String {
    match value {
        Value::Text(s) => s.trim().to_string(),
        other => render(other),
    }
}

fn render(value: &Value) -> String {
    match value {
        Value::Number(n) => format_number(*n),
        Value::Text(s) => s.trim().to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::List(items) => {
            let inner: Vec<String> = items.iter().map(render).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

/// Canonical text of an arbitrary JSON value; objects render as `{k: v}`
/// with sorted keys.
pub fn canonical_json_text(json: &Json) -> String {
    match json {
        Json::Null => "null".to_string(),
        Json::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{k}: {}", canonical_json_text(&map[k])))
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
        Json::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json_text).collect();
            format!("[{}]", inner.join(", "))
        }
        other => match Value::from_json(other) {
            Ok(v) => canonical_text(&v),
            Err(_) => other.to_string(),
        },
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_text(self))
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = Json::deserialize(deserializer)?;
        Value::from_json(&json).map_err(serde::de::Error::custom)
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Boolean(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl<T: Into<Value>> From<Vec<T>> for Value {
    fn from(items: Vec<T>) -> Self {
        Value::List(items.into_iter().map(Into::into).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn integral_numbers_drop_fraction() {
        assert_eq!(canonical_text(&Value::Number(6.0)), "6");
        assert_eq!(canonical_text(&Value::Number(-0.0)), "0");
        assert_eq!(canonical_text(&Value::Number(1e20)), "100000000000000000000");
    }

    #[test]
    fn lists_compose_number_rules() {
        assert_eq!(canonical_text(&Value::from(vec![1.0, 2.5])), "[1, 2.5]");
        assert_eq!(canonical_text(&Value::from(Vec::<f64>::new())), "[]");
    }

    #[test]
    fn text_is_trimmed() {
        assert_eq!(canonical_text(&Value::from(" ok ")), "ok");
    }

    #[test]
    fn shortest_round_trip_for_fractions() {
        assert_eq!(canonical_text(&Value::Number(0.1 + 0.2)), "0.30000000000000004");
        assert_eq!(canonical_text(&Value::Number(1.414)), "1.414");
        assert_eq!(canonical_text(&Value::Boolean(true)), "true");
    }

    #[test]
    fn json_conversion() {
        let v = Value::from_json(&json!([1, "a", true, [2.5]])).unwrap();
        assert_eq!(canonical_text(&v), "[1, a, true, [2.5]]");
        assert_eq!(v.to_json(), json!([1, "a", true, [2.5]]));
        assert_eq!(Value::from_json(&json!(null)), Err(ValueError::Null));
        assert_eq!(Value::from_json(&json!({"a": 1})), Err(ValueError::Object));
    }
}
