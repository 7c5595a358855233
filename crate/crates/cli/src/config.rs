//! Layered configuration: serde defaults, then the config file, then
//! `--set` overrides, then subcommand flags. Everything is merged into one
//! TOML tree first and only then deserialized into the typed configs, so a
//! flag and the key it shadows always go through the same validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use newsocr_core::pipeline::PipelineConfig;
use serde::de::DeserializeOwned;
use toml::{Table, Value};

/// Tables the CLI adds next to the pipeline configuration.
const CLI_TABLES: [&str; 2] = ["degrade", "eval"];

const PIPELINE_KEYS: [&str; 8] = [
    "workers",
    "output_root",
    "keep_intermediates",
    "crop_padding",
    "article_detector",
    "upscaler",
    "column_detector",
    "recognizer",
];

/// Keys holding paths; relative values from a file resolve against the file's directory.
const PATH_KEYS: [&str; 9] = [
    "output_root",
    "article_detector.fixture",
    "article_detector.model_path",
    "column_detector.fixture",
    "column_detector.model_path",
    "upscaler.fixture",
    "upscaler.model_path",
    "recognizer.cache_dir",
    "recognizer.replay_fixture",
];

#[derive(Debug, Clone, Default)]
pub struct Layered {
    root: Table,
}

impl Layered {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let root: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for key in root.keys() {
            if !PIPELINE_KEYS.contains(&key.as_str()) && !CLI_TABLES.contains(&key.as_str()) {
                bail!("{}: unknown key `{key}`", path.display());
            }
        }
        let mut layered = Self { root };
        layered.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(layered)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for key in PATH_KEYS {
            if let Some(s) = self.get(key).and_then(Value::as_str).map(str::to_string) {
                let p = PathBuf::from(s);
                if p.is_relative() {
                    let joined = base.join(p).to_string_lossy().into_owned();
                    self.set(key, joined);
                }
            }
        }
    }

    fn get(&self, key: &str) -> Option<&Value> {
        let mut parts = key.split('.');
        let mut v = self.root.get(parts.next()?)?;
        for p in parts {
            v = v.as_table()?.get(p)?;
        }
        Some(v)
    }

    /// Sets a dotted key, creating intermediate tables.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("split yields one part");
        let mut table = &mut self.root;
        for p in parts {
            let entry = table.entry(p).or_insert_with(|| Value::Table(Table::new()));
            if !entry.is_table() {
                *entry = Value::Table(Table::new());
            }
            table = entry.as_table_mut().expect("just made a table");
        }
        table.insert(last.to_string(), value.into());
    }

    pub fn set_default(&mut self, key: &str, value: impl Into<Value>) {
        if self.get(key).is_none() {
            self.set(key, value);
        }
    }

    pub fn set_opt<T: Into<Value>>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn set_path(&mut self, key: &str, value: Option<&PathBuf>) {
        self.set_opt(key, value.map(|p| p.to_string_lossy().into_owned()));
    }

    /// Applies `KEY=VALUE` overrides. Values are parsed as TOML and fall back
    /// to plain strings, so `--set upscaler.scale=2` and
    /// `--set recognizer.model_name=gpt-4.1` both work.
    pub fn apply_sets(&mut self, sets: &[String]) -> Result<()> {
        for raw in sets {
            let Some((key, value)) = raw.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{raw}`");
            };
            let key = key.trim();
            let top = key.split('.').next().unwrap_or_default();
            if !PIPELINE_KEYS.contains(&top) && !CLI_TABLES.contains(&top) {
                bail!("--set: unknown key `{key}`");
            }
            let parsed = toml::from_str::<Table>(&format!("v = {value}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(value.to_string()));
            self.set(key, parsed);
        }
        Ok(())
    }

    /// Deserializes one table; an absent table deserializes from `{}`.
    pub fn section<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let value = self.root.get(key).cloned().unwrap_or_else(|| Value::Table(Table::new()));
        value.try_into().with_context(|| format!("[{key}]"))
    }

    /// The pipeline configuration, without the CLI-only tables.
    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut root = self.root.clone();
        for t in CLI_TABLES {
            root.remove(t);
        }
        let cfg: PipelineConfig = Value::Table(root).try_into().context("pipeline configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `workers` from the tree, else the number of logical CPUs.
    pub fn workers(&self) -> Result<usize> {
        match self.root.get("workers") {
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
            Some(Value::Integer(n)) if *n >= 1 => Ok(*n as usize),
            Some(v) => bail!("workers must be a positive integer, got {v}"),
        }
    }
}
