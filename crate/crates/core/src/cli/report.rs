use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

/// Line-oriented `key: value` report. Keys keep insertion order and may
/// repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str, config: &str) -> Self {
        let mut r = Report::default();
        r.push("command", command);
        r.push("config", config);
        r
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key.into(), value));
    }

    pub fn append(&mut self, other: &Report) {
        self.entries.extend(other.entries.iter().cloned());
    }

    /// First value stored under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_string())
    }

    /// Parses text produced by `Display`.
    pub fn parse(text: &str) -> Self {
        Report {
            entries: text
                .lines()
                .filter_map(|l| l.split_once(": ").map(|(k, v)| (k.to_string(), v.to_string())))
                .collect(),
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}
