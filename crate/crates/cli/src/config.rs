//! `--config` files. A config file is TOML: top-level keys apply to every
//! subcommand that has a flag of that name, keys under a `[subcommand]`
//! table apply to that subcommand only. Keys are flag names with `-` or `_`.
//! Values are spliced in front of the command-line flags, so flags given on
//! the command line win.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Command;
use toml::{Table, Value};

fn config_path(args: &[OsString]) -> Result<Option<PathBuf>> {
    for (i, arg) in args.iter().enumerate() {
        let Some(s) = arg.to_str() else { continue };
        if s == "--config" {
            let path = args.get(i + 1).context("--config needs a file")?;
            return Ok(Some(PathBuf::from(path)));
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Ok(Some(PathBuf::from(path)));
        }
    }
    Ok(None)
}

fn accepts(cmd: &Command, flag: &str) -> bool {
    cmd.get_arguments().any(|a| a.get_long() == Some(flag))
}

fn push_value(out: &mut Vec<OsString>, flag: &str, value: &Value) -> Result<()> {
    let long = format!("--{flag}");
    match value {
        Value::Boolean(true) => out.push(long.into()),
        Value::Boolean(false) => {}
        Value::String(s) => out.extend([long.into(), s.into()]),
        Value::Integer(n) => out.extend([long.into(), n.to_string().into()]),
        Value::Float(x) => out.extend([long.into(), x.to_string().into()]),
        Value::Array(items) => {
            for item in items {
                push_value(out, flag, item)?;
            }
        }
        other => bail!("config key {flag}: unsupported value {other}"),
    }
    Ok(())
}

/// Returns `args` with the config file's settings inserted after the
/// subcommand name.
pub fn splice(args: Vec<OsString>, root: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("{}", path.display()))?;
    let table: Table = text.parse().with_context(|| format!("{}", path.display()))?;
    let Some((at, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| a.to_str().and_then(|s| root.find_subcommand(s)).map(|c| (i, c)))
    else {
        return Ok(args);
    };
    let mut extra = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        if let Value::Table(section) = value {
            if key != sub.get_name() {
                continue;
            }
            for (k, v) in section {
                let flag = k.replace('_', "-");
                if !accepts(sub, &flag) {
                    bail!("{}: `{}` has no flag --{flag}", path.display(), sub.get_name());
                }
                push_value(&mut extra, &flag, v)?;
            }
        } else if accepts(sub, &flag) {
            push_value(&mut extra, &flag, value)?;
        }
    }
    let mut out = args;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}
