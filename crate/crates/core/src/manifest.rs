//! Line-delimited JSON training manifest.
//!
//! Each line is one input/target pair. Paths are stored as written; callers
//! resolve relative entries against the manifest's directory with [`resolve`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub input: String,
    pub targets: Vec<String>,
    pub offset_used: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_yr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<bool>,
    #[serde(default)]
    pub seed_trail: Vec<u64>,
}

impl PairRecord {
    /// Records without a retained flag count as kept.
    pub fn is_retained(&self) -> bool {
        self.retained.unwrap_or(true)
    }
}

pub fn serialize_manifest(records: &[PairRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<PairRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    parse_manifest(&fs::read_to_string(path)?)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[PairRecord]) -> Result<()> {
    fs::write(path, serialize_manifest(records))?;
    Ok(())
}

/// Resolves a manifest entry relative to the manifest file's directory.
pub fn resolve(manifest: impl AsRef<Path>, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest
        .as_ref()
        .parent()
        .map(|d| d.join(p))
        .unwrap_or_else(|| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record() -> PairRecord {
        PairRecord {
            input: "noisy/b00_f1.pcrf".into(),
            targets: vec!["targets/b00_f1.pcrf".into()],
            offset_used: (3, 7),
            s_yr: Some(-98.25),
            retained: None,
            seed_trail: vec![1, u64::MAX],
        }
    }

    #[test]
    fn optional_fields_are_omitted() {
        let mut r = record();
        r.s_yr = None;
        let text = serialize_manifest(&[r.clone()]);
        assert!(!text.contains("s_yr") && !text.contains("retained"));
        assert_eq!(parse_manifest(&text).unwrap(), vec![r]);
    }

    #[test]
    fn bad_line_is_reported() {
        let text = format!("{}\nnot json\n", serialize_manifest(&[record()]).trim());
        match parse_manifest(&text) {
            Err(Error::Manifest(msg)) => assert!(msg.starts_with("line 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relative_entries_resolve_next_to_manifest() {
        assert_eq!(
            resolve("/data/m.jsonl", "a/b.pcrf"),
            PathBuf::from("/data/a/b.pcrf")
        );
        assert_eq!(
            resolve("/data/m.jsonl", "/abs.pcrf"),
            PathBuf::from("/abs.pcrf")
        );
    }

    proptest! {
        #[test]
        fn round_trip(
            s in prop::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())),
            retained in prop::option::of(any::<bool>()),
            k in 0usize..64,
            seeds in prop::collection::vec(any::<u64>(), 0..4),
        ) {
            let r = PairRecord { s_yr: s, retained, offset_used: (k, 63 - k), seed_trail: seeds, ..record() };
            let text = serialize_manifest(&[r.clone(), record()]);
            prop_assert_eq!(parse_manifest(&text).unwrap(), vec![r, record()]);
            prop_assert_eq!(serialize_manifest(&parse_manifest(&text).unwrap()), text);
        }
    }
}
