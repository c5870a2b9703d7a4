use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::artifacts::{self, read_hash};
use crate::config::RawConfig;
use crate::error::CliError;

#[derive(Serialize)]
struct Report {
    artifacts: BTreeMap<String, String>,
    highlights: BTreeMap<String, serde_json::Value>,
}

fn field(dir: &Path, file: &str, path: &[&str]) -> Option<serde_json::Value> {
    let text = std::fs::read_to_string(dir.join(file)).ok()?;
    let mut v: serde_json::Value = serde_json::from_str(&text).ok()?;
    for key in path {
        v = v.get(*key)?.clone();
    }
    Some(v)
}

/// Checks that every artifact in `dir` carries one config hash (and the
/// hash of `raw`, when given), then writes `report.json` with the key
/// numbers.
pub fn cmd_report(raw: Option<&RawConfig>, dir: &Path) -> Result<(), CliError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", dir.display())))?
        .collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());

    let mut hashes = BTreeMap::new();
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        if name == "report.json" || !e.file_type()?.is_file() {
            continue;
        }
        if let Some(h) = read_hash(&e.path())? {
            hashes.insert(name, h);
        } else if matches!(
            e.path().extension().and_then(|x| x.to_str()),
            Some("json" | "csv" | "svg")
        ) {
            return Err(CliError::Validation(format!(
                "{name} carries no config hash"
            )));
        }
    }
    let Some(first) = hashes.values().next().cloned() else {
        return Err(CliError::Validation(format!(
            "no artifacts in {}",
            dir.display()
        )));
    };
    if let Some((name, h)) = hashes.iter().find(|(_, h)| **h != first) {
        return Err(CliError::Validation(format!(
            "{name} has config hash {h}, others have {first}"
        )));
    }
    if let Some(raw) = raw {
        let expected = raw.hash();
        if expected != first {
            return Err(CliError::Validation(format!(
                "artifacts were produced by config {first}, not {expected}"
            )));
        }
    }

    let mut highlights = BTreeMap::new();
    let picks: [(&str, &str, &[&str]); 9] = [
        ("status", "metadata.json", &["stop_reason"]),
        ("iterations", "metadata.json", &["iterations"]),
        ("eta", "metadata.json", &["resolved", "eta"]),
        ("t0", "phases.json", &["t0"]),
        ("tf", "phases.json", &["tf"]),
        ("growth_rate", "phases.json", &["growth_rate"]),
        ("decay_rate", "phases.json", &["decay_rate"]),
        ("envelope_k", "conditions.json", &["envelope_k"]),
        ("sweep_points", "summary.json", &["points"]),
    ];
    for (key, file, path) in picks {
        if let Some(v) = field(dir, file, path) {
            highlights.insert(key.to_string(), v);
        }
    }
    for (k, v) in &highlights {
        println!("{k}: {v}");
    }
    println!("{} artifacts share config hash {first}", hashes.len());
    artifacts::write_json(
        dir,
        "report.json",
        &first,
        &Report {
            artifacts: hashes,
            highlights,
        },
    )
}
