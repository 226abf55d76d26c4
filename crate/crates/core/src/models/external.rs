//! File-based adapter for external simulators.
//!
//! Each run gets a fresh working directory. The adapter writes the parameter
//! file (CSV `name,value`), runs the command with the directory as its
//! current directory, and reads the curve file (CSV `strain,stress`).
//!
//! Argument templates may use `{param_file}`, `{curve_file}`, `{workdir}`,
//! `{row}` and `{<parameter name>}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ForwardModel, ModelFailure, ModelResult};
use crate::io::{fmt_f64, parse_curve_csv};
use crate::{Error, ParamPoint, Result};

/// Environment variable naming the root for per-run working directories.
pub const SCRATCH_ENV: &str = "PARAMID_SCRATCH";

const BUILTIN_PLACEHOLDERS: [&str; 4] = ["param_file", "curve_file", "workdir", "row"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModelSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_param_file")]
    pub param_file: String,
    #[serde(default = "default_curve_file")]
    pub curve_file: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Root for working directories; falls back to `PARAMID_SCRATCH`, then
    /// the system temporary directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub keep_workdirs: bool,
}

fn default_param_file() -> String {
    "params.csv".into()
}

fn default_curve_file() -> String {
    "curve.csv".into()
}

fn default_timeout() -> f64 {
    600.0
}

/// Splits a template into placeholder names.
fn placeholders(template: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        let close = tail.find('}').ok_or_else(|| {
            Error::InvalidConfig(format!("unclosed placeholder in template `{template}`"))
        })?;
        out.push(&tail[..close]);
        rest = &tail[close + 1..];
    }
    Ok(out)
}

impl ExternalModelSpec {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        ExternalModelSpec {
            command: command.into(),
            args,
            param_file: default_param_file(),
            curve_file: default_curve_file(),
            timeout_secs: default_timeout(),
            workdir: None,
            keep_workdirs: false,
        }
    }

    fn templates(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.command.as_str())
            .chain(self.args.iter().map(String::as_str))
            .chain([self.param_file.as_str(), self.curve_file.as_str()])
    }

    /// Structural checks that need no parameter names.
    pub fn validate(&self) -> Result<()> {
        if self.command.trim().is_empty() {
            return Err(Error::InvalidConfig("external model has an empty command".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        for t in [&self.param_file, &self.curve_file] {
            if t.is_empty() {
                return Err(Error::InvalidConfig("file templates must not be empty".into()));
            }
        }
        for t in self.templates() {
            placeholders(t)?;
        }
        Ok(())
    }

    /// Checks placeholders against the parameter names: every placeholder
    /// must be known and no parameter may be referenced twice.
    pub fn validate_for(&self, names: &[&str]) -> Result<()> {
        self.validate()?;
        let mut seen: Vec<&str> = Vec::new();
        for t in self.templates() {
            for name in placeholders(t)? {
                if BUILTIN_PLACEHOLDERS.contains(&name) {
                    continue;
                }
                if !names.contains(&name) {
                    return Err(Error::InvalidConfig(format!("unknown placeholder `{{{name}}}`")));
                }
                if seen.contains(&name) {
                    return Err(Error::InvalidConfig(format!(
                        "parameter `{name}` is referenced more than once"
                    )));
                }
                seen.push(name);
            }
        }
        Ok(())
    }

    fn expand(&self, template: &str, row: usize, dir: &Path, point: &ParamPoint) -> String {
        let mut out = template
            .replace("{param_file}", &self.param_file)
            .replace("{curve_file}", &self.curve_file)
            .replace("{workdir}", &dir.to_string_lossy())
            .replace("{row}", &row.to_string());
        for (name, value) in point.iter() {
            out = out.replace(&format!("{{{name}}}"), &fmt_f64(value));
        }
        out
    }

    fn scratch_root(&self) -> PathBuf {
        self.workdir
            .clone()
            .or_else(|| std::env::var_os(SCRATCH_ENV).map(PathBuf::from))
            .unwrap_or_else(std::env::temp_dir)
    }

    fn run_in(&self, dir: &Path, row: usize, point: &ParamPoint) -> ModelResult {
        let spawn_err = |what: &str, e: std::io::Error| ModelFailure::Spawn {
            message: format!("{what}: {e}"),
        };
        let mut params = String::from("name,value\n");
        for (name, value) in point.iter() {
            params.push_str(&format!("{name},{}\n", fmt_f64(value)));
        }
        let param_path = dir.join(self.expand(&self.param_file, row, dir, point));
        fs::write(&param_path, params).map_err(|e| spawn_err("writing parameter file", e))?;

        let stdout = fs::File::create(dir.join("stdout.txt")).map_err(|e| spawn_err("stdout", e))?;
        let stderr = fs::File::create(dir.join("stderr.txt")).map_err(|e| spawn_err("stderr", e))?;
        let mut child = Command::new(self.expand(&self.command, row, dir, point))
            .args(self.args.iter().map(|a| self.expand(a, row, dir, point)))
            .current_dir(dir)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| spawn_err(&self.command, e))?;

        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ModelFailure::Timeout {
                        seconds: self.timeout_secs,
                    });
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(spawn_err("waiting for child", e)),
            }
        };
        if !status.success() {
            let text = fs::read_to_string(dir.join("stderr.txt")).unwrap_or_default();
            let tail: String = {
                let lines: Vec<&str> = text.lines().collect();
                lines[lines.len().saturating_sub(5)..].join("\n")
            };
            return Err(ModelFailure::ExitCode {
                status: status.to_string(),
                stderr_tail: tail,
            });
        }
        let curve_path = dir.join(self.expand(&self.curve_file, row, dir, point));
        let text = fs::read_to_string(&curve_path).map_err(|e| ModelFailure::Parse {
            message: format!("{}: {e}", curve_path.display()),
        })?;
        parse_curve_csv(&text, &curve_path).map_err(|e| ModelFailure::Parse {
            message: e.to_string(),
        })
    }
}

impl ForwardModel for ExternalModelSpec {
    fn evaluate(&self, point: &ParamPoint) -> ModelResult {
        self.evaluate_row(0, point)
    }

    fn evaluate_row(&self, row: usize, point: &ParamPoint) -> ModelResult {
        let root = self.scratch_root();
        fs::create_dir_all(&root).map_err(|e| ModelFailure::Spawn {
            message: format!("scratch root {}: {e}", root.display()),
        })?;
        let dir = tempfile::Builder::new()
            .prefix(&format!("row_{row:05}_"))
            .tempdir_in(&root)
            .map_err(|e| ModelFailure::Spawn {
                message: format!("working directory: {e}"),
            })?;
        let result = self.run_in(dir.path(), row, point);
        if self.keep_workdirs {
            let _ = dir.keep();
        }
        result
    }

    fn fingerprint(&self) -> String {
        let mut spec = self.clone();
        spec.workdir = None;
        spec.keep_workdirs = false;
        format!(
            "external:{}",
            serde_json::to_string(&spec).expect("external spec serializes")
        )
    }
}
