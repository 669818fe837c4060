//! Flat `key = value` config files. Each key names a long flag of the
//! chosen subcommand; flags given on the command line win.

use std::collections::BTreeMap;

use crate::CliError;

/// Parses config text. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", k + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", k + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Removes `--config FILE` from `args` and appends every file entry whose
/// flag is not already present. `true`/`false` values toggle switches.
pub fn merge_config(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut k = 0;
    while k < args.len() {
        if args[k] == "--config" {
            let p = args.get(k + 1).cloned().ok_or_else(|| CliError::Config("--config needs a path".into()))?;
            args.drain(k..k + 2);
            path = Some(p);
        } else if let Some(p) = args[k].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(k);
        } else {
            k += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    let mut extra = Vec::new();
    for (key, value) in parse_config(&text)? {
        if given(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                extra.push(format!("--{key}"));
                extra.push(value);
            }
        }
    }
    args.extend(extra);
    Ok(args)
}
