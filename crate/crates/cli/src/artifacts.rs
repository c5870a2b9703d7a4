//! Every artifact carries the config hash: JSON files in a top-level
//! `config_hash` field, CSV and SVG files in a leading comment.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

const CSV_MARK: &str = "# config_hash: ";
const SVG_MARK: &str = "<!-- config_hash: ";

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    hash: &str,
    body: &T,
) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&Stamped {
        config_hash: hash,
        body,
    })?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn write_csv(dir: &Path, name: &str, hash: &str, body: &[u8]) -> Result<(), CliError> {
    let mut out = format!("{CSV_MARK}{hash}\n").into_bytes();
    out.extend_from_slice(body);
    fs::write(dir.join(name), out)?;
    Ok(())
}

pub fn write_svg(dir: &Path, name: &str, hash: &str, svg: &str) -> Result<(), CliError> {
    let body = svg.replacen('\n', &format!("\n{SVG_MARK}{hash} -->\n"), 1);
    fs::write(dir.join(name), body)?;
    Ok(())
}

/// The hash stamped into an artifact, if it carries one.
pub fn read_hash(path: &Path) -> Result<Option<String>, CliError> {
    let text = fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    Ok(match ext {
        "json" => serde_json::from_str::<serde_json::Value>(&text)?
            .get("config_hash")
            .and_then(|v| v.as_str())
            .map(str::to_string),
        "csv" => text
            .lines()
            .find_map(|l| l.strip_prefix(CSV_MARK))
            .map(|h| h.trim().to_string()),
        "svg" => text
            .lines()
            .find_map(|l| l.strip_prefix(SVG_MARK))
            .map(|h| h.trim_end_matches("-->").trim().to_string()),
        _ => None,
    })
}

/// Shortest round-trip formatting; empty for missing values.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn int(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
