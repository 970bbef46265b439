//! Run manifests: plain `key=value` text with everything needed to re-run a
//! command and check that it reproduces the same bytes.
//!
//! ```text
//! version=0.1.0
//! command=jumps
//! arg.input=streams.csv
//! arg.seed=7
//! input.sha256=…
//! output.jumps.tsv=…
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// Resolved arguments in command-line order; flags carry `true`.
    pub args: Vec<(String, String)>,
    pub input_sha256: Option<String>,
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<(String, String)>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            input_sha256: None,
            outputs: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# burstseg run manifest\n");
        s.push_str(&format!("version={}\ncommand={}\n", self.version, self.command));
        for (k, v) in &self.args {
            s.push_str(&format!("arg.{k}={v}\n"));
        }
        if let Some(d) = &self.input_sha256 {
            s.push_str(&format!("input.sha256={d}\n"));
        }
        for (name, d) in &self.outputs {
            s.push_str(&format!("output.{name}={d}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("manifest line {}: expected key=value", i + 1);
            };
            let value = value.to_string();
            match key {
                "version" => m.version = value,
                "command" => m.command = value,
                "input.sha256" => m.input_sha256 = Some(value),
                _ => {
                    if let Some(arg) = key.strip_prefix("arg.") {
                        m.args.push((arg.to_string(), value));
                    } else if let Some(out) = key.strip_prefix("output.") {
                        m.outputs.push((out.to_string(), value));
                    } else {
                        bail!("manifest line {}: unknown key {key:?}", i + 1);
                    }
                }
            }
        }
        if m.command.is_empty() {
            bail!("manifest has no command");
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Command line equivalent to the recorded run, minus `--out`.
    pub fn argv(&self) -> Vec<String> {
        let mut argv = vec!["burstseg".to_string(), self.command.clone()];
        for (k, v) in &self.args {
            argv.push(format!("--{k}"));
            if v != "true" {
                argv.push(v.clone());
            }
        }
        argv
    }
}
