//! `key = value` files whose entries act as flags given before the ones on
//! the command line.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines; `#` starts a comment. Keys are long flag
/// names with or without the leading dashes, `_` and `-` alike.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{}`", i + 1, raw.trim());
        };
        let key = k.trim().trim_start_matches('-').replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Flag tokens for the entries. `true` and `false` switch a boolean flag
/// on or leave it off.
pub fn to_args(entries: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    out
}

pub fn load(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(to_args(&entries))
}

/// Inserts `extra` right after the subcommand name so that flags typed on
/// the command line still win.
pub fn splice(argv: &[String], subcommand: &str, extra: Vec<String>) -> Vec<String> {
    let mut out = argv.to_vec();
    if let Some(pos) = argv.iter().skip(1).position(|a| a == subcommand) {
        let at = pos + 2;
        out.splice(at..at, extra);
    }
    out
}
