//! Line-delimited JSON run log.

use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogEntry {
    pub ts_ms: u128,
    pub level: Level,
    pub stage: String,
    pub message: String,
}

/// Collects warnings and progress messages from pipeline stages. Shared by
/// reference across threads.
#[derive(Debug, Default)]
pub struct RunLog {
    entries: Mutex<Vec<LogEntry>>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, level: Level, stage: &str, message: impl Into<String>) {
        let message = message.into();
        match level {
            Level::Info => log::info!("[{stage}] {message}"),
            Level::Warn => log::warn!("[{stage}] {message}"),
            Level::Error => log::error!("[{stage}] {message}"),
        }
        let ts_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        self.entries.lock().unwrap().push(LogEntry {
            ts_ms,
            level,
            stage: stage.to_string(),
            message,
        });
    }

    pub fn info(&self, stage: &str, message: impl Into<String>) {
        self.record(Level::Info, stage, message)
    }

    pub fn warn(&self, stage: &str, message: impl Into<String>) {
        self.record(Level::Warn, stage, message)
    }

    /// Appends entries recorded elsewhere, keeping their timestamps.
    pub fn extend(&self, entries: Vec<LogEntry>) {
        self.entries.lock().unwrap().extend(entries);
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.level == Level::Warn)
            .map(|e| e.message.clone())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries.lock().unwrap().iter() {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }
}
