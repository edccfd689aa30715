//! `key=value` configuration files. Each key names a command-line flag
//! without its leading dashes; `#` starts a comment.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_key_values(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Converts config pairs to flag arguments. `true` becomes a bare flag,
/// `false` is dropped.
pub fn pairs_to_args(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{k}").into());
                args.push(v.into());
            }
        }
    }
    args
}

pub fn read_config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pairs = parse_key_values(&text).map_err(|m| Error::format(path, m))?;
    Ok(pairs_to_args(&pairs))
}

/// Renders a flat JSON object as `key=value` lines, with keys in
/// kebab-case so the output can be fed back through `--config`.
pub fn dump_key_values(value: &serde_json::Value) -> String {
    let mut out = String::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            let key = k.replace('_', "-");
            let rendered = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Array(items) => {
                    for item in items {
                        let s = match item {
                            serde_json::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        out.push_str(&format!("{key}={s}\n"));
                    }
                    continue;
                }
                other => other.to_string(),
            };
            out.push_str(&format!("{key}={rendered}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_flags() {
        let kv = parse_key_values("# c\nseed = 7\n\nverbose=true # note\nquiet=false\n").unwrap();
        assert_eq!(kv.len(), 3);
        let args: Vec<String> = pairs_to_args(&kv).into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(args, ["--seed", "7", "--verbose"]);
        assert!(parse_key_values("novalue").is_err());
    }

    #[test]
    fn dump_round_trips_through_parse() {
        let v = serde_json::json!({"window_events": 2000, "out": "a/b", "missing": null, "flag": true});
        let text = dump_key_values(&v);
        let kv = parse_key_values(&text).unwrap();
        assert!(kv.contains(&("window-events".into(), "2000".into())));
        assert!(kv.contains(&("out".into(), "a/b".into())));
        assert!(!text.contains("missing"));
    }
}
