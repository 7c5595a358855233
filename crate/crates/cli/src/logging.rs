//! Stderr logger: plain lines, or one JSON object per event with the
//! record's key-values as fields.

use std::io::Write;

use clap::ValueEnum;
use log::kv::{Key, Value, VisitSource};
use log::{LevelFilter, Log, Metadata, Record};
use serde_json::{Map, Value as Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Text,
    Jsonl,
}

/// Event targets used by the CLI and the pipeline.
const OWN_TARGETS: [&str; 3] = ["sample", "config", "run"];

struct StderrLogger {
    format: LogFormat,
}

struct Fields(Map<String, Json>);

impl<'kvs> VisitSource<'kvs> for Fields {
    fn visit_pair(&mut self, key: Key<'kvs>, value: Value<'kvs>) -> Result<(), log::kv::Error> {
        let v = if let Some(b) = value.to_bool() {
            Json::Bool(b)
        } else if let Some(n) = value.to_u64() {
            n.into()
        } else if let Some(n) = value.to_i64() {
            n.into()
        } else if let Some(x) = value.to_f64() {
            x.into()
        } else {
            Json::String(value.to_string())
        };
        self.0.insert(key.to_string(), v);
        Ok(())
    }
}

impl Log for StderrLogger {
    // dependencies only get through with warnings and errors
    fn enabled(&self, meta: &Metadata) -> bool {
        let t = meta.target();
        meta.level() <= log::Level::Warn || t.starts_with("newsocr") || OWN_TARGETS.contains(&t)
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let mut fields = Fields(Map::new());
        let _ = record.key_values().visit(&mut fields);
        let line = match self.format {
            LogFormat::Jsonl => {
                let mut obj = Map::new();
                obj.insert("level".into(), record.level().as_str().to_lowercase().into());
                obj.insert("target".into(), record.target().into());
                obj.insert("message".into(), record.args().to_string().into());
                obj.extend(fields.0);
                Json::Object(obj).to_string()
            }
            LogFormat::Text => {
                let mut s = format!("{:<5} {}", record.level(), record.args());
                for (k, v) in fields.0 {
                    let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                    s.push_str(&format!(" {k}={v}"));
                }
                s
            }
        };
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

pub fn init(format: LogFormat, quiet: bool) {
    let level = if quiet { LevelFilter::Warn } else { LevelFilter::Info };
    if log::set_logger(Box::leak(Box::new(StderrLogger { format }))).is_ok() {
        log::set_max_level(level);
    }
}
