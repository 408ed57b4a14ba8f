//! Plain-text run reports: `key: value` header lines, a blank line, then a
//! CSV table.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::Settings;

pub struct Report {
    header: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(command: &str, settings: &Settings, columns: &[&'static str]) -> Self {
        let mut header = vec![
            ("version".to_string(), crate::VERSION.to_string()),
            ("command".to_string(), command.to_string()),
        ];
        header.extend(
            settings
                .entries()
                .map(|(k, v)| (k.to_string(), v.to_string())),
        );
        Self {
            header,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn field(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k}: {v}");
        }
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

/// Empty cell for a missing value.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let s = Settings::load(None, &["lr"], vec![("lr", Some("0.25".into()))]).unwrap();
        let mut r = Report::new("train", &s, &["epoch", "value"]);
        r.field("wall_time_s", 1.5);
        r.row(vec!["0".into(), opt(Some(-2.0))]);
        r.row(vec!["1".into(), opt(None)]);
        let text = r.render();
        let (head, table) = text.split_once("\n\n").unwrap();
        let head: Vec<&str> = head.lines().collect();
        assert!(head[0].starts_with("version: "));
        assert_eq!(
            &head[1..],
            ["command: train", "lr: 0.25", "wall_time_s: 1.5"]
        );
        assert_eq!(table, "epoch,value\n0,-2\n1,\n");
    }
}
