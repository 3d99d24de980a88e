//! Pulling JSON objects out of free-form model replies.

use serde_json::{Map, Value};

/// Byte ranges of balanced `{...}` spans, outermost first, in order of
/// their opening brace. String literals are respected so braces inside
/// them do not count.
fn object_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' {
            continue;
        }
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, start + off + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

/// First JSON object in `text` (code fences and surrounding prose allowed)
/// for which `accept` returns `Some`.
pub fn find_object<T>(text: &str, accept: impl Fn(&Map<String, Value>) -> Option<T>) -> Option<T> {
    object_spans(text).into_iter().find_map(|(a, b)| {
        match serde_json::from_str::<Value>(&text[a..b]) {
            Ok(Value::Object(map)) => accept(&map),
            _ => None,
        }
    })
}

/// The `unpivot_columns` array of the first object that carries one as an
/// array of strings.
pub fn extract_unpivot_columns(text: &str) -> Option<Vec<String>> {
    find_object(text, |map| match map.get("unpivot_columns")? {
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>(),
        _ => None,
    })
}

/// `(var_name, value_name)` from the first object carrying both as strings.
pub fn extract_var_value(text: &str) -> Option<(String, String)> {
    find_object(text, |map| {
        let var = map.get("var_name")?.as_str()?.trim().to_string();
        let value = map.get("value_name")?.as_str()?.trim().to_string();
        Some((var, value))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_object() {
        assert_eq!(
            extract_unpivot_columns(r#"{"unpivot_columns": ["HS","AS"]}"#),
            Some(vec!["HS".into(), "AS".into()])
        );
        assert_eq!(extract_unpivot_columns(r#"{"unpivot_columns": []}"#), Some(vec![]));
    }

    #[test]
    fn fenced_with_prose() {
        let reply = "Sure! Here you go:\n```json\n{\"unpivot_columns\": [\"A\"]}\n```\nDone.";
        assert_eq!(extract_unpivot_columns(reply), Some(vec!["A".into()]));
    }

    #[test]
    fn skips_objects_without_the_key() {
        let reply = r#"{"note": "a } brace"} then {"unpivot_columns": ["B"]}"#;
        assert_eq!(extract_unpivot_columns(reply), Some(vec!["B".into()]));
    }

    #[test]
    fn nested_object_is_found() {
        let reply = r#"{"answer": {"unpivot_columns": ["C"]}}"#;
        assert_eq!(extract_unpivot_columns(reply), Some(vec!["C".into()]));
    }

    #[test]
    fn rejects_non_string_arrays_and_garbage() {
        assert_eq!(extract_unpivot_columns(r#"{"unpivot_columns": [1, 2]}"#), None);
        assert_eq!(extract_unpivot_columns("no json here"), None);
        assert_eq!(extract_unpivot_columns("{unbalanced"), None);
    }

    #[test]
    fn var_value() {
        assert_eq!(
            extract_var_value(r#"{"var_name": " Metric ", "value_name": "Value"}"#),
            Some(("Metric".into(), "Value".into()))
        );
        assert_eq!(extract_var_value(r#"{"var_name": "Metric"}"#), None);
    }
}
