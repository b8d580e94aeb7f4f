//! `key = value` config files, spliced in front of the command-line flags so
//! that explicit flags win.

use std::path::Path;

use ctvae::{Error, Result};

/// Turns each `key = value` line into `--key value`. Blank lines and `#`
/// comments are skipped; `key = true` becomes a bare `--key` and
/// `key = false` is dropped.
pub fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                row: i + 1,
                message: "empty key".into(),
            });
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

pub fn load_config(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Expands `--config FILE` (or `--config=FILE`) wherever it appears after the
/// subcommand: the file's flags go right after the subcommand, before the
/// user's own flags.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>> {
    if args.len() < 2 {
        return Ok(args);
    }
    let mut head = vec![args[0].clone(), args[1].clone()];
    let mut rest = Vec::new();
    let mut injected = Vec::new();
    let mut it = args.into_iter().skip(2);
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it
                .next()
                .ok_or_else(|| Error::InvalidArgument("--config needs a file path".into()))?;
            injected.extend(load_config(Path::new(&path))?);
        } else if let Some(path) = a.strip_prefix("--config=") {
            injected.extend(load_config(Path::new(path))?);
        } else {
            rest.push(a);
        }
    }
    head.extend(injected);
    head.extend(rest);
    Ok(head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_flags() {
        let args = parse_config("# run\nepochs = 50\nlr=0.01  # fast\nno_header = true\nstratified = false\n").unwrap();
        assert_eq!(args, vec!["--epochs", "50", "--lr", "0.01", "--no-header"]);
        assert!(parse_config("epochs 50").is_err());
    }

    #[test]
    fn config_goes_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "epochs = 5\n").unwrap();
        let args: Vec<String> = ["ctvae", "train", "--epochs", "7", "--config", p.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_args(args).unwrap();
        assert_eq!(out, vec!["ctvae", "train", "--epochs", "5", "--epochs", "7"]);
    }
}
