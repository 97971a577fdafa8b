// SPDX-License-Identifier: Apache-2.0

use std::fmt::{Display, Write as _};

use crate::config::Format;

/// Ordered key/value report, rendered aligned for people or as `key: value` for scripts.
#[derive(Debug, Default)]
pub struct Report {
    rows: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn row(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.rows.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.rows {
            let _ = match format {
                Format::Text => writeln!(out, "{k:<width$}  {v}"),
                Format::Kv => writeln!(out, "{k}: {v}"),
            };
        }
        out
    }
}
