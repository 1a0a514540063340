//! Dataset manifests: `image_path,subject_id,labels` CSV rows.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{LabelGraph, LabelSet};

pub const MANIFEST_HEADER: &str = "image_path,subject_id,labels";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image_path: String,
    pub subject_id: String,
    /// Raw (pre-expansion) label names, `;`-separated in the file.
    pub raw_labels: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break l.trim(),
                None => return Err(Error::Parse("empty manifest".into())),
            }
        };
        if header != MANIFEST_HEADER {
            return Err(Error::Parse(format!(
                "manifest header must be {MANIFEST_HEADER:?}, got {header:?}"
            )));
        }
        let mut rows = Vec::new();
        for (line_no, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "manifest line {}: expected 3 comma-separated fields, got {}",
                    line_no + 1,
                    fields.len()
                )));
            }
            let (path, subject, labels) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
            if path.is_empty() || subject.is_empty() || labels.is_empty() {
                return Err(Error::Parse(format!(
                    "manifest line {}: empty field",
                    line_no + 1
                )));
            }
            rows.push(ManifestRow {
                image_path: path.to_string(),
                subject_id: subject.to_string(),
                raw_labels: labels.to_string(),
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse("manifest has a header but no rows".into()));
        }
        Ok(Manifest { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.image_path, row.subject_id, row.raw_labels
            ));
        }
        out
    }

    /// Sorted unique subject ids.
    pub fn unique_subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(|s| s.to_string()).collect()
    }

    /// Errors on any duplicated image path.
    pub fn check_unique_paths(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if !seen.insert(row.image_path.as_str()) {
                return Err(Error::Parse(format!(
                    "duplicate image path {:?}",
                    row.image_path
                )));
            }
        }
        Ok(())
    }

    /// Raw then ancestor-expanded label sets per row, validated against `g`.
    pub fn targets(&self, g: &LabelGraph) -> Result<Vec<(LabelSet, LabelSet)>> {
        self.rows
            .iter()
            .map(|row| {
                let raw = g.parse_names(&row.raw_labels).map_err(|e| {
                    Error::Label(format!("{} ({}): {e}", row.image_path, row.subject_id))
                })?;
                let expanded = g.expand(raw)?;
                Ok((raw, expanded))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "image_path,subject_id,labels\na.pgm,s1,COVID19\nb.pgm,s1,COVID19;ARDS\n";
        let m = Manifest::parse(text).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.rows[1].raw_labels, "COVID19;ARDS");
        assert_eq!(m.to_csv(), text);
    }

    #[test]
    fn rejects_bad_header_and_empty() {
        assert!(Manifest::parse("").is_err());
        assert!(Manifest::parse("path,subject,labels\na,s,x\n").is_err());
        assert!(Manifest::parse("image_path,subject_id,labels\n").is_err());
    }

    #[test]
    fn rejects_wrong_field_count() {
        assert!(Manifest::parse("image_path,subject_id,labels\na.pgm,s1\n").is_err());
    }

    #[test]
    fn duplicate_paths_detected() {
        let text = "image_path,subject_id,labels\na.pgm,s1,ARDS\na.pgm,s2,ARDS\n";
        let m = Manifest::parse(text).unwrap();
        assert!(m.check_unique_paths().is_err());
    }

    #[test]
    fn targets_expand_through_hierarchy() {
        let g = crate::labels::LabelGraph::default_pathology();
        let text = "image_path,subject_id,labels\na.pgm,s1,COVID19\n";
        let m = Manifest::parse(text).unwrap();
        let targets = m.targets(&g).unwrap();
        let (raw, expanded) = targets[0];
        assert_eq!(raw.len(), 1);
        assert_eq!(expanded.len(), 3);
        assert!(expanded.contains(g.index_of("Pneumonia").unwrap()));
    }

    #[test]
    fn unknown_label_names_are_reported_with_the_row() {
        let g = crate::labels::LabelGraph::default_pathology();
        let text = "image_path,subject_id,labels\na.pgm,s1,NotALabel\n";
        let m = Manifest::parse(text).unwrap();
        let err = m.targets(&g).unwrap_err();
        assert!(err.to_string().contains("a.pgm"), "{err}");
    }
}
