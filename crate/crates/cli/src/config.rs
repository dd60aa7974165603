//! `--config file.json`: a JSON object whose keys are flag names (`batch_size`
//! or `batch-size`). Top-level scalar keys apply to any command that accepts
//! them; an object keyed by a command name applies to that command only and
//! wins over the top level. Flags present on the command line always win.

use std::collections::BTreeMap;

use clap::CommandFactory;
use serde_json::Value;

use crate::Cli;

/// Returns `argv` with config-supplied flags appended for every accepted flag
/// not already given explicitly.
pub fn apply(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("config {path}: {e}"))?;
    let json: Value = serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
    let Value::Object(root) = json else {
        return Err(format!("config {path}: expected a JSON object"));
    };

    let cmd = Cli::command();
    let Some(sub) = argv.iter().skip(1).find_map(|a| cmd.find_subcommand(a)) else {
        // No subcommand: let clap report the usage error.
        return Ok(argv);
    };
    let accepted: BTreeMap<String, bool> = sub
        .get_arguments()
        .filter_map(|a| Some((a.get_long()?.to_string(), a.get_action().takes_values())))
        .collect();

    let mut entries: BTreeMap<String, Value> = BTreeMap::new();
    for (key, value) in &root {
        if !value.is_object() {
            entries.insert(flag_name(key), value.clone());
        }
    }
    if let Some(section) = root.get(sub.get_name()) {
        let Value::Object(section) = section else {
            return Err(format!("config {path}: \"{}\" must be an object", sub.get_name()));
        };
        for (key, value) in section {
            let name = flag_name(key);
            if !accepted.contains_key(&name) {
                return Err(format!("config {path}: {} has no --{name} flag", sub.get_name()));
            }
            entries.insert(name, value.clone());
        }
    }

    let mut out = argv.clone();
    for (name, value) in entries {
        let Some(&takes_value) = accepted.get(&name) else {
            continue;
        };
        if name == "config" || given(&argv, &name) {
            continue;
        }
        push_flag(&mut out, &name, &value, takes_value).map_err(|e| format!("config {path}: {e}"))?;
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn flag_name(key: &str) -> String {
    key.trim_start_matches("--").replace('_', "-")
}

fn given(argv: &[String], name: &str) -> bool {
    let flag = format!("--{name}");
    argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

fn push_flag(out: &mut Vec<String>, name: &str, value: &Value, takes_value: bool) -> Result<(), String> {
    let flag = format!("--{name}");
    if !takes_value {
        return match value {
            Value::Bool(true) => {
                out.push(flag);
                Ok(())
            }
            Value::Bool(false) | Value::Null => Ok(()),
            other => Err(format!("{name} is a switch; expected true or false, got {other}")),
        };
    }
    let values = match value {
        Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?,
        other => vec![scalar(other)?],
    };
    for v in values {
        out.push(flag.clone());
        out.push(v);
    }
    Ok(())
}

fn scalar(value: &Value) -> Result<String, String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}
