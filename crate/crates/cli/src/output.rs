//! CSV and manifest emission.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value as Json};

/// Shortest `%.9g`-style rendering: nine significant digits, trailing zeros
/// dropped, scientific notation outside `1e-4 ..< 1e9`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{x:.*}", (8 - exp) as usize);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes `rows` under `header`, in the order given.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Output directory and the files produced so far.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root, files: Vec::new() })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        write_csv(&self.root.join(name), header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json`; call last, its presence marks a complete run.
    pub fn finish(
        self,
        command: &str,
        config: &BTreeMap<String, Json>,
        hash: &str,
        extra: Json,
        elapsed: Duration,
    ) -> io::Result<PathBuf> {
        let manifest = json!({
            "command": command,
            "config": config,
            "config_hash": hash,
            "files": self.files,
            "results": extra,
            "duration_s": elapsed.as_secs_f64(),
        });
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
