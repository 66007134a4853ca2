//! Expansion of `--config FILE` into ordinary command-line flags.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::CommandFactory;

use super::Cli;
use crate::error::{Error, Result};

/// Global options that take a value and may precede the subcommand.
const GLOBAL_VALUED: [&str; 2] = ["--config", "--threads"];

/// Returns `raw` with the config file's values inserted as flags right after
/// the subcommand name. Flags already on the command line are left alone.
pub(super) fn expand(raw: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = raw
        .iter()
        .map(|s| s.to_string_lossy().into_owned())
        .collect();
    let Some(config_path) = find_config(&strs) else {
        return Ok(raw);
    };
    let Some(sub_pos) = find_subcommand(&strs) else {
        return Ok(raw);
    };
    let sub = strs[sub_pos].as_str();
    let cmd = Cli::command();
    let Some(sub_cmd) = cmd.find_subcommand(sub) else {
        return Ok(raw);
    };
    let accepted: BTreeSet<String> = sub_cmd
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();

    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        Error::invalid(format!("{}: {}", config_path.display(), e.message()))
    })?;

    let explicit: BTreeSet<String> = strs
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut injected: Vec<OsString> = Vec::new();
    let mut seen = BTreeSet::new();
    // the subcommand table wins over top-level keys, so it goes first
    if let Some(value) = doc.get(sub) {
        let table = value.as_table().ok_or_else(|| {
            Error::invalid(format!(
                "{}: `{sub}` must be a table",
                config_path.display()
            ))
        })?;
        for (key, value) in table {
            let flag = key.replace('_', "-");
            if !accepted.contains(&flag) {
                return Err(Error::invalid(format!(
                    "{}: `{sub}` has no option `{key}`",
                    config_path.display()
                )));
            }
            push_flag(
                &mut injected,
                &mut seen,
                &explicit,
                &flag,
                value,
                &config_path,
            )?;
        }
    }
    for (key, value) in &doc {
        if value.is_table() {
            continue;
        }
        let flag = key.replace('_', "-");
        // top-level keys only reach subcommands that understand them
        if accepted.contains(&flag) {
            push_flag(
                &mut injected,
                &mut seen,
                &explicit,
                &flag,
                value,
                &config_path,
            )?;
        }
    }

    let mut out = raw;
    out.splice(sub_pos + 1..sub_pos + 1, injected);
    Ok(out)
}

fn push_flag(
    out: &mut Vec<OsString>,
    seen: &mut BTreeSet<String>,
    explicit: &BTreeSet<String>,
    flag: &str,
    value: &toml::Value,
    origin: &std::path::Path,
) -> Result<()> {
    if explicit.contains(flag) || !seen.insert(flag.to_string()) {
        return Ok(());
    }
    let items: Vec<&toml::Value> = match value {
        toml::Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    for item in items {
        match item {
            toml::Value::Boolean(true) => out.push(format!("--{flag}").into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => out.push(format!("--{flag}={s}").into()),
            toml::Value::Integer(i) => out.push(format!("--{flag}={i}").into()),
            toml::Value::Float(f) => out.push(format!("--{flag}={f}").into()),
            _ => {
                return Err(Error::invalid(format!(
                    "{}: unsupported value for `{flag}`",
                    origin.display()
                )))
            }
        }
    }
    Ok(())
}

fn find_config(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Index of the first argument that is neither a flag nor the value of a
/// global flag.
fn find_subcommand(args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if GLOBAL_VALUED.contains(&a.as_str()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}
