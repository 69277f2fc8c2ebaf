//! `key = value` config files. Each key is a long flag name without the
//! leading dashes; the file expands into flags placed before the command
//! line ones, so explicit flags win.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected key = value")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: boolean key {key} takes true or false")]
    Bool {
        path: String,
        line: usize,
        key: String,
    },
}

const SWITCHES: [&str; 1] = ["synthetic-topology"];

pub fn expand(path: &Path) -> Result<Vec<String>, ConfigFileError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: p.clone(),
        source,
    })?;
    parse(&text, &p)
}

pub fn parse(text: &str, path: &str) -> Result<Vec<String>, ConfigFileError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigFileError::Syntax {
            path: path.to_owned(),
            line: i + 1,
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigFileError::Syntax {
                path: path.to_owned(),
                line: i + 1,
            });
        }
        if SWITCHES.contains(&k) {
            match v {
                "true" => out.push(format!("--{k}")),
                "false" => {}
                _ => {
                    return Err(ConfigFileError::Bool {
                        path: path.to_owned(),
                        line: i + 1,
                        key: k.to_owned(),
                    })
                }
            }
        } else {
            out.push(format!("--{k}"));
            out.push(v.to_owned());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_become_flags() {
        let v = parse(
            "# comment\nthreads = 4\n\nlock=mcs # inline\nsynthetic-topology = true\n",
            "f",
        )
        .unwrap();
        assert_eq!(
            v,
            ["--threads", "4", "--lock", "mcs", "--synthetic-topology"]
        );
    }

    #[test]
    fn false_switch_is_dropped() {
        assert!(parse("synthetic-topology = false", "f").unwrap().is_empty());
    }

    #[test]
    fn bad_lines() {
        assert!(matches!(
            parse("threads 4", "f"),
            Err(ConfigFileError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse("= 4", "f"),
            Err(ConfigFileError::Syntax { .. })
        ));
        assert!(matches!(
            parse("synthetic-topology = yes", "f"),
            Err(ConfigFileError::Bool { .. })
        ));
    }
}
