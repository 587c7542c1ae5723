use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util;

const NOTE_TYPES: &str = include_str!("../../mappings/note_types.tsv");
const DISCHARGE_LOCATIONS: &str = include_str!("../../mappings/discharge_locations.tsv");

/// Exact-match lookup table loaded from a `RAW<TAB>MAPPED` text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMapping {
    entries: BTreeMap<String, String>,
}

impl CategoryMapping {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (raw, mapped) = line.split_once('\t').ok_or_else(|| Error::MalformedRecord {
                file: "mapping".into(),
                line: i + 1,
                reason: "expected RAW<TAB>MAPPED".into(),
            })?;
            entries.insert(raw.trim().to_string(), mapped.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?)
    }

    /// Note CATEGORY values to the note-type labels used as attribute names.
    pub fn note_types() -> Self {
        Self::parse(NOTE_TYPES).expect("shipped note mapping parses")
    }

    /// DISCHARGE_LOCATION values to the six discharge-destination classes.
    pub fn discharge_locations() -> Self {
        Self::parse(DISCHARGE_LOCATIONS).expect("shipped discharge mapping parses")
    }

    pub fn get(&self, raw: &str) -> Result<&str> {
        self.entries
            .get(raw.trim())
            .map(String::as_str)
            .ok_or_else(|| Error::UnmappedCategory(raw.to_string()))
    }

    /// Raw values that map to `label`, in sorted order.
    pub fn sources_of(&self, label: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, v)| v.as_str() == label)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Distinct mapped labels, sorted.
    pub fn labels(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries.values().map(String::as_str).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn map_category(raw: &str, mapping: &CategoryMapping) -> Result<String> {
    mapping.get(raw).map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn note_mapping_examples() {
        let m = CategoryMapping::note_types();
        assert_eq!(map_category("ECG", &m).unwrap(), "NOTE ECG BOW");
        assert_eq!(map_category("  Physician ", &m).unwrap(), "NOTE NURSING BOW");
        assert_eq!(map_category("Respiratory", &m).unwrap(), "NOTE RESPITORY BOW");
        assert_eq!(m.len(), 15);
    }

    #[test]
    fn discharge_mapping_examples() {
        let m = CategoryMapping::discharge_locations();
        assert_eq!(map_category("SNF", &m).unwrap(), "SNF");
        assert_eq!(map_category("DEAD/EXPIRED", &m).unwrap(), "MORTALITY_INHOSPITAL");
        assert_eq!(m.labels().len(), 6);
        assert_eq!(m.len(), 17);
    }

    #[test]
    fn unmapped_value_is_an_error() {
        let m = CategoryMapping::discharge_locations();
        assert!(matches!(
            map_category("NOT A CATEGORY", &m),
            Err(Error::UnmappedCategory(_))
        ));
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let m = CategoryMapping::parse("# header\n\nA\tB\n").unwrap();
        assert_eq!(m.get("A").unwrap(), "B");
        assert!(CategoryMapping::parse("no tab here\n").is_err());
    }
}
