//! Structured key-value report documents.
//!
//! Reports are emitted as plain `key = value` lines in insertion order.
//! Floats use Rust's shortest round-trip formatting, so the machine-readable
//! files retain full precision. Parsing is intentionally simple: one
//! key-value pair per line, `#` starts a comment.

use std::fmt::Display;

#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    lines: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        let mut doc = KvDoc::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                doc.push(k.trim(), v.trim());
            }
        }
        doc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_full_float_precision() {
        let mut doc = KvDoc::new();
        doc.push("accuracy", 1600.0_f64 / 1606.0);
        doc.push("n", 1606_u64);
        let parsed = KvDoc::parse(&doc.render());
        let back: f64 = parsed.get("accuracy").unwrap().parse().unwrap();
        assert_eq!(back, 1600.0 / 1606.0);
        assert_eq!(parsed.get("n"), Some("1606"));
    }

    #[test]
    fn parse_skips_comments_and_blanks() {
        let doc = KvDoc::parse("# header\n\nkey = 3\n");
        assert_eq!(doc.get("key"), Some("3"));
        assert_eq!(doc.get("missing"), None);
    }
}
