//! CSV and JSON writers with fixed number formatting.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::commands::CliError;

/// Scientific notation, 12 significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.11e}")
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::numerical(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn hsv_csv(hsv: &[f64]) -> Csv {
    let mut csv = Csv::new(&["index", "value"]);
    for (i, v) in hsv.iter().enumerate() {
        csv.row(&[(i + 1).to_string(), num(*v)]);
    }
    csv
}
