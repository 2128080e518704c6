//! Pipeline config file support.
//!
//! The config is one JSON object. Top-level `seed`, `threads` and `out` act
//! as global flags; a section named after a subcommand (`gen-tree` or
//! `gen_tree`) holds that subcommand's flags by long name. Config values are
//! spliced into the argument list ahead of the user's own arguments, so
//! anything given on the command line wins.

use std::path::Path;

use plantforge::{Error, Result};
use serde_json::{Map, Value};

const GLOBALS: [&str; 3] = ["seed", "threads", "out"];

fn flag_tokens(key: &str, value: &Value) -> Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => Vec::new(),
        Value::String(s) => vec![flag, s.clone()],
        Value::Number(n) => vec![flag, n.to_string()],
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                let v = match item {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    other => return Err(Error::Schema(format!("config `{key}`: unsupported list item {other}"))),
                };
                out.push(flag.clone());
                out.push(v);
            }
            out
        }
        Value::Object(_) => return Err(Error::Schema(format!("config `{key}`: nested objects are not flags"))),
    })
}

fn section<'a>(cfg: &'a Map<String, Value>, command: &str) -> Option<&'a Map<String, Value>> {
    cfg.get(command)
        .or_else(|| cfg.get(&command.replace('-', "_")))
        .and_then(Value::as_object)
}

/// Returns `args` with config-derived flags inserted. The subcommand is the
/// first argument that is not a flag or a flag value.
pub fn splice(args: Vec<String>, config: &Path, commands: &[&str]) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let cfg = value
        .as_object()
        .ok_or_else(|| Error::Schema("config must be a JSON object".into()))?;
    let Some(pos) = args.iter().position(|a| commands.contains(&a.as_str())) else {
        return Ok(args);
    };
    let given: Vec<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let unset = |key: &str| !given.contains(&key.replace('_', "-").as_str());
    let mut global = Vec::new();
    for key in GLOBALS.into_iter().filter(|k| unset(k)) {
        if let Some(v) = cfg.get(key) {
            global.extend(flag_tokens(key, v)?);
        }
    }
    let mut local = Vec::new();
    if let Some(sec) = section(cfg, &args[pos]) {
        for (k, v) in sec.iter().filter(|(k, _)| unset(k)) {
            local.extend(flag_tokens(k, v)?);
        }
    }
    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    out.push(args[0].clone());
    out.extend(global);
    out.extend_from_slice(&args[1..=pos]);
    out.extend(local);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
