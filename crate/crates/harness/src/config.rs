//! Config files for the command line: a JSON object keyed by subcommand whose
//! entries are flag values, e.g. `{"sweep": {"thresholds": [0.3, 0.2], "parallel": 2}}`.
//!
//! Entries are spliced in as flags right after the subcommand name, ahead of
//! the flags actually typed, so typed flags win.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::{Error, Result};

/// Flags for one subcommand's config entries. Booleans become bare flags
/// when true, arrays are comma-joined, `null` is skipped.
pub fn config_args(entries: &Value) -> Result<Vec<String>> {
    Ok(config_flags(entries)?.into_iter().flatten().collect())
}

/// Same as [`config_args`], one group per flag.
fn config_flags(entries: &Value) -> Result<Vec<Vec<String>>> {
    let obj = entries.as_object().ok_or_else(|| Error::Config("config entry must be an object of flags".into()))?;
    let mut out = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(Error::Config(format!("config value for {key:?} must be a string or number, got {other}"))),
        };
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(vec![flag]),
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                out.push(vec![flag, parts.join(",")]);
            }
            v => out.push(vec![flag, scalar(v)?]),
        }
    }
    Ok(out)
}

/// Pulls `--config <file>` (or `--config=<file>`) out of `argv` and splices
/// the subcommand's entries in after the subcommand name. Entries for flags
/// that are also typed are dropped, since list flags would otherwise append.
pub fn expand_argv(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    rest.extend(it.next());
    while let Some(arg) = it.next() {
        if arg == "--config" {
            path = Some(it.next().ok_or_else(|| Error::Config("--config needs a file".into()))?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|source| Error::Parse { origin: path.clone(), source })?;
    let Some(pos) = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(rest);
    };
    let Some(entries) = doc.get(&rest[pos]) else { return Ok(rest) };
    let typed: Vec<&str> = rest[pos + 1..].iter().map(|a| a.split_once('=').map_or(a.as_str(), |(f, _)| f)).collect();
    let injected: Vec<String> =
        config_flags(entries)?.into_iter().filter(|g| !typed.contains(&g[0].as_str())).flatten().collect();
    log::debug!("config {} adds {injected:?}", Path::new(&path).display());
    rest.splice(pos + 1..pos + 1, injected);
    Ok(rest)
}
