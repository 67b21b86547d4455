//! Plain-text `key = value` config files that stand in for command-line flags.
//!
//! Keys are long flag names without the leading dashes. Blank lines and lines
//! starting with `#` are ignored. A flag given on the command line wins over
//! the same key in the file.

use std::path::Path;

pub fn parse(text: &str, origin: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("{origin}:{}: expected `key = value`", i + 1));
        };
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(format!("{origin}:{}: bad key '{}'", i + 1, k.trim()));
        }
        if key == "config" {
            return Err(format!("{origin}:{}: config files cannot include other config files", i + 1));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| *a == long || a.starts_with(&eq))
}

/// Removes `--config FILE` from `args` and splices the file's entries in
/// right after the subcommand, skipping keys the user already passed.
pub fn expand(mut args: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a file".into());
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("{path}: {e}"))?;
    let entries = parse(&text, &path)?;
    let at = 2.min(args.len());
    let extra: Vec<String> = entries
        .into_iter()
        .filter(|(k, _)| !flag_given(&args, k))
        .map(|(k, v)| format!("--{k}={v}"))
        .collect();
    args.splice(at..at, extra);
    Ok(args)
}
