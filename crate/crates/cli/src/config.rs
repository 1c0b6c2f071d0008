//! `--config` files: `key = value` lines naming long flags of the chosen
//! subcommand. Values from the file are spliced into the argument list
//! after the subcommand name, so the regular parser validates them and
//! anything given on the command line wins.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

#[derive(Debug, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys may use `_` or `-`.
pub fn parse_config(text: &str, source: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{source}:{}: expected `key = value`", n + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(ConfigError(format!("{source}:{}: empty key", n + 1)));
        }
        if out.insert(key.clone(), value).is_some() {
            return Err(ConfigError(format!(
                "{source}:{}: duplicate key {key:?}",
                n + 1
            )));
        }
    }
    Ok(out)
}

/// Rewrites `argv` with the config entries for subcommand `sub` inserted.
/// `first` holds matches from a lenient parse, used to tell which flags
/// were already given on the command line.
pub fn merge_config(
    argv: &[OsString],
    root: &Command,
    first: &ArgMatches,
    entries: &BTreeMap<String, String>,
    source: &str,
) -> Result<Vec<OsString>, ConfigError> {
    let Some((sub_name, sub_matches)) = first.subcommand() else {
        return Ok(argv.to_vec());
    };
    let sub = root
        .find_subcommand(sub_name)
        .ok_or_else(|| ConfigError(format!("unknown subcommand {sub_name}")))?;
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| {
                ConfigError(format!("{source}: unknown key {key:?} for `{sub_name}`"))
            })?;
        let id = arg.get_id().as_str();
        if sub_matches.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                _ => {
                    return Err(ConfigError(format!(
                        "{source}: {key} expects true or false, got {value:?}"
                    )))
                }
            },
            _ => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
        }
    }
    let pos = subcommand_position(argv, sub_name).ok_or_else(|| {
        ConfigError(format!(
            "cannot locate subcommand {sub_name} in the arguments"
        ))
    })?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}

fn subcommand_position(argv: &[OsString], name: &str) -> Option<usize> {
    (1..argv.len()).find(|&i| argv[i] == name && argv[i - 1] != "--config")
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}
