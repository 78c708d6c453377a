//! JSON pipelines.
//!
//! ```json
//! {
//!   "dir": "out",
//!   "seed": 42,
//!   "pipeline": [
//!     {"stage": "generate", "family": "coercive-diffusion", "n": 400},
//!     {"stage": "greedy-rb", "k": 128, "r_max": 10},
//!     {"stage": "solve", "count": 50, "k_prime": 48},
//!     {"stage": "certify"},
//!     {"stage": "report"}
//!   ]
//! }
//! ```
//!
//! Every other key of a stage becomes a flag of the matching subcommand
//! (`r_max` → `--r-max`). Stages that draw random objects and have no
//! explicit `seed` get `derive_seed(seed, stage index)`. Relative paths are
//! resolved against the config file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sketchmor::embeddings::derive_seed;

use crate::failure::Failure;
use crate::{commands, Cli, Command, RunArgs};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub pipeline: Vec<Map<String, Value>>,
}

#[derive(Debug, Serialize)]
struct StageLog {
    stage: String,
    status: &'static str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

const SEEDED: [&str; 4] = ["gen", "sketch", "greedy-rb", "greedy-dict"];
const PATH_KEYS: [&str; 3] = ["params", "w", "path"];

fn subcommand(stage: &str) -> Option<&'static str> {
    Some(match stage {
        "gen" | "generate" => "gen",
        "sketch" => "sketch",
        "greedy-rb" => "greedy-rb",
        "greedy-dict" => "greedy-dict",
        "solve" => "solve",
        "certify" => "certify",
        "qoi" => "qoi",
        "report" => "report",
        _ => return None,
    })
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Command line for one stage.
fn stage_argv(
    cmd: &str,
    stage: &Map<String, Value>,
    dir: &Path,
    base: &Path,
    seed: Option<u64>,
) -> Result<Vec<String>, Failure> {
    let mut argv = vec!["sketchmor".to_string(), cmd.to_string(), "--dir".into(), dir.display().to_string()];
    for (key, value) in stage {
        if key == "stage" {
            continue;
        }
        if key == "dir" {
            return Err(Failure::config("`dir` is set once for the whole pipeline"));
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag),
            Value::Number(n) => argv.extend([flag, n.to_string()]),
            Value::String(s) if PATH_KEYS.contains(&key.as_str()) => {
                argv.extend([flag, resolve(base, s).display().to_string()])
            }
            Value::String(s) => argv.extend([flag, s.clone()]),
            _ => return Err(Failure::config(format!("stage `{cmd}`: `{key}` must be a scalar"))),
        }
    }
    if let Some(s) = seed {
        if SEEDED.contains(&cmd) && !stage.contains_key("seed") {
            argv.extend(["--seed".into(), s.to_string()]);
        }
    }
    Ok(argv)
}

fn load(stage: &Map<String, Value>, dir: &Path, base: &Path) -> Result<(), Failure> {
    let src = match stage.get("path") {
        Some(Value::String(p)) => resolve(base, p),
        _ => return Err(Failure::config("stage `load` needs a `path` to a system directory")),
    };
    if !src.join("system.json").exists() {
        return Err(Failure::config(format!("no system.json in {}", src.display())));
    }
    let dst = commands::system_dir(dir);
    fs::create_dir_all(&dst)?;
    for entry in fs::read_dir(&src)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            fs::copy(entry.path(), dst.join(entry.file_name()))?;
        }
    }
    Ok(())
}

fn run_stage(i: usize, stage: &Map<String, Value>, dir: &Path, base: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let name = match stage.get("stage") {
        Some(Value::String(s)) => s.as_str(),
        _ => return Err(Failure::config(format!("pipeline entry {i} has no `stage`"))),
    };
    if name == "load" {
        return load(stage, dir, base);
    }
    let cmd = subcommand(name).ok_or_else(|| Failure::config(format!("unknown stage `{name}`")))?;
    let argv = stage_argv(cmd, stage, dir, base, seed.map(|s| derive_seed(s, i as u64)))?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::config(format!("stage {i} ({name}): {e}")))?;
    if matches!(cli.command, Command::Run(_)) {
        return Err(Failure::config("pipelines cannot nest"));
    }
    crate::dispatch(cli)
}

pub fn run(a: &RunArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::config(format!("{}: {e}", a.config.display())))?;
    let config: Config = serde_json::from_str(&text)?;
    let base = a.config.parent().unwrap_or(Path::new("")).to_path_buf();
    let dir = match (&a.dir, &config.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => resolve(&base, &d.display().to_string()),
        (None, None) => return Err(Failure::config("no workspace directory: set `dir` or pass --dir")),
    };
    fs::create_dir_all(&dir)?;
    let mut log: Vec<StageLog> = Vec::new();
    let mut result = Ok(());
    for (i, stage) in config.pipeline.iter().enumerate() {
        let name = stage.get("stage").and_then(Value::as_str).unwrap_or("?").to_string();
        if result.is_err() {
            log.push(StageLog {
                stage: name,
                status: "skipped",
                exit_code: 0,
                message: None,
            });
            continue;
        }
        match run_stage(i, stage, &dir, &base, config.seed) {
            Ok(()) => log.push(StageLog {
                stage: name,
                status: "ok",
                exit_code: 0,
                message: None,
            }),
            Err(f) => {
                log.push(StageLog {
                    stage: name,
                    status: "failed",
                    exit_code: f.code(),
                    message: Some(f.to_string()),
                });
                result = Err(f);
            }
        }
    }
    sketchmor::io::write_json(&dir.join("run.json"), &log)?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argv_maps_keys_to_flags() {
        let stage: Map<String, Value> =
            serde_json::from_str(r#"{"stage":"greedy-rb","r_max":4,"relaxed":true,"tau":null,"params":"p.json"}"#)
                .unwrap();
        let argv = stage_argv("greedy-rb", &stage, Path::new("out"), Path::new("cfg"), Some(9)).unwrap();
        assert_eq!(
            argv,
            [
                "sketchmor",
                "greedy-rb",
                "--dir",
                "out",
                "--params",
                "cfg/p.json",
                "--r-max",
                "4",
                "--relaxed",
                "--seed",
                "9"
            ]
        );
    }

    #[test]
    fn unknown_stage_is_rejected() {
        assert!(subcommand("fit").is_none());
        assert_eq!(subcommand("generate"), Some("gen"));
    }
}
