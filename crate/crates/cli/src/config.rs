//! Flat `key = value` config files, merged underneath command-line flags.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::UsageError;

pub const CONFIG_ENV: &str = "LEGAL_SBD_CONFIG";

/// Parses `key = value` lines. `#` starts a comment line; keys may use `_`
/// or `-`. Later duplicates win.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, UsageError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.retain(|(k, _)| *k != key);
        out.push((key, value.to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Long names of the options that take a value, for top-level and subcommand args.
fn value_options(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter(|a| a.get_action().takes_values())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn long_names(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

/// Position of the subcommand name in `argv`, skipping global options.
fn subcommand_position(cmd: &Command, argv: &[OsString]) -> Option<usize> {
    let takes_value = value_options(cmd);
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if let Some(name) = arg.strip_prefix("--") {
            if !name.contains('=') && takes_value.contains(name) {
                i += 1;
            }
        } else if cmd.find_subcommand(arg.as_ref()).is_some() {
            return Some(i);
        }
        i += 1;
    }
    None
}

/// The `--config` value given on the command line, if any.
pub fn path_from_args(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Inserts config entries as `--key=value` right after the subcommand name,
/// skipping any key given explicitly on the command line.
/// Keys that name no option of any subcommand are rejected; keys belonging
/// to other subcommands are ignored.
pub fn merge(
    cmd: &Command,
    argv: Vec<OsString>,
    entries: &[(String, String)],
) -> Result<Vec<OsString>, UsageError> {
    let global = long_names(cmd);
    let mut known = global.clone();
    for sub in cmd.get_subcommands() {
        known.extend(long_names(sub));
    }
    for (key, _) in entries {
        if key == "config" || key == "help" || key == "version" || !known.contains(key) {
            return Err(UsageError(format!("unknown config key `{key}`")));
        }
    }
    let Some(pos) = subcommand_position(cmd, &argv) else {
        return Ok(argv);
    };
    let sub = cmd
        .find_subcommand(argv[pos].to_string_lossy().as_ref())
        .expect("position points at a subcommand");
    let applicable: BTreeSet<String> = global.union(&long_names(sub)).cloned().collect();
    let explicit: BTreeSet<String> = argv
        .iter()
        .filter_map(|a| {
            let a = a.to_string_lossy();
            let name = a.strip_prefix("--")?;
            Some(name.split_once('=').map_or(name, |(n, _)| n).to_string())
        })
        .collect();
    let injected = entries
        .iter()
        .filter(|(k, _)| applicable.contains(k) && !explicit.contains(k))
        .map(|(k, v)| OsString::from(format!("--{k}={v}")));
    let mut out: Vec<OsString> = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_quotes_and_duplicates() {
        let got =
            parse("# defaults\nc1 = 0.5\n\nmax_iterations=20\nout = \"m.json\"\nc1=2\n").unwrap();
        assert_eq!(
            got,
            vec![
                ("max-iterations".to_string(), "20".to_string()),
                ("out".to_string(), "m.json".to_string()),
                ("c1".to_string(), "2".to_string()),
            ]
        );
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("c1 0.5").is_err());
        assert!(parse(" = 3").is_err());
    }

    #[test]
    fn finds_config_path() {
        let argv: Vec<OsString> = ["x", "--seed", "3", "--config=a.cfg", "train"]
            .map(OsString::from)
            .to_vec();
        assert_eq!(path_from_args(&argv), Some("a.cfg".into()));
        let argv: Vec<OsString> = ["x", "--config", "b.cfg"].map(OsString::from).to_vec();
        assert_eq!(path_from_args(&argv), Some("b.cfg".into()));
    }
}
