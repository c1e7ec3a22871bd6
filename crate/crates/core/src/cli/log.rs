//! Line-delimited `key=value` records.

use std::io::Write;

enum Sink {
    Stderr,
    Memory(Vec<String>),
    Null,
}

pub struct Logger {
    sink: Sink,
}

impl Logger {
    pub fn stderr() -> Self {
        Self { sink: Sink::Stderr }
    }

    /// Keeps records in memory; read them back with [`Logger::lines`].
    pub fn memory() -> Self {
        Self {
            sink: Sink::Memory(Vec::new()),
        }
    }

    pub fn null() -> Self {
        Self { sink: Sink::Null }
    }

    pub fn record(&mut self, event: &str, fields: &[(&str, String)]) {
        let line = format_record(event, fields);
        match &mut self.sink {
            Sink::Stderr => {
                let _ = writeln!(std::io::stderr().lock(), "{line}");
            }
            Sink::Memory(v) => v.push(line),
            Sink::Null => {}
        }
    }

    pub fn lines(&self) -> &[String] {
        match &self.sink {
            Sink::Memory(v) => v,
            _ => &[],
        }
    }
}

fn quote(v: &str) -> String {
    if !v.is_empty() && !v.contains(|c: char| c.is_whitespace() || c == '"' || c == '=') {
        v.to_string()
    } else {
        format!("\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

pub fn format_record(event: &str, fields: &[(&str, String)]) -> String {
    let mut s = format!("event={}", quote(event));
    for (k, v) in fields {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(&quote(v));
    }
    s
}

/// Value of `key` in a record produced by [`format_record`], unquoted.
pub fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("{key}=");
    let start = line
        .match_indices(&pat)
        .find(|(i, _)| *i == 0 || line.as_bytes()[i - 1] == b' ')?
        .0
        + pat.len();
    let rest = &line[start..];
    if let Some(q) = rest.strip_prefix('"') {
        q.find('"').map(|e| &q[..e])
    } else {
        Some(rest.split(' ').next().unwrap_or(""))
    }
}
