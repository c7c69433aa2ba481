//! Dataset manifest: one row per image.
//!
//! CSV with header `image_id,group_id,class_counts,defect_free`.
//! `class_counts` is `class:count` pairs joined by `;` (empty when the image has
//! no annotations); `defect_free` is `true` or `false`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub group_id: String,
    pub class_counts: BTreeMap<u32, u64>,
    pub defect_free: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    image_id: String,
    group_id: String,
    class_counts: String,
    defect_free: bool,
}

fn parse_counts(s: &str) -> Result<BTreeMap<u32, u64>> {
    let mut out = BTreeMap::new();
    for pair in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (c, n) = pair
            .split_once(':')
            .ok_or_else(|| Error::Manifest(format!("class count '{pair}' is not 'class:count'")))?;
        let c: u32 = c.trim().parse().map_err(|_| Error::Manifest(format!("bad class id in '{pair}'")))?;
        let n: u64 = n.trim().parse().map_err(|_| Error::Manifest(format!("bad count in '{pair}'")))?;
        if out.insert(c, n).is_some() {
            return Err(Error::Manifest(format!("class {c} listed twice in '{s}'")));
        }
    }
    Ok(out)
}

fn format_counts(counts: &BTreeMap<u32, u64>) -> String {
    counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(c, n)| format!("{c}:{n}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.image_id.is_empty() || e.group_id.is_empty() {
                return Err(Error::Manifest("image_id and group_id must be non-empty".into()));
            }
            if !ids.insert(e.image_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image_id '{}'", e.image_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?;
            entries.push(ManifestEntry {
                class_counts: parse_counts(&row.class_counts).map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?,
                image_id: row.image_id,
                group_id: row.group_id,
                defect_free: row.defect_free,
            });
        }
        Self::new(entries)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.entries {
            wtr.serialize(Row {
                image_id: e.image_id.clone(),
                group_id: e.group_id.clone(),
                class_counts: format_counts(&e.class_counts),
                defect_free: e.defect_free,
            })
            .map_err(|e| Error::Manifest(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "image_id,group_id,class_counts,defect_free\na,g1,0:2;3:1,false\nb,g1,,true\n";
        let m = DatasetManifest::read_csv(text.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].class_counts[&3], 1);
        assert!(m.entries()[1].defect_free);
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = "image_id,group_id,class_counts,defect_free\na,g,,false\na,g,,false\n";
        assert!(DatasetManifest::read_csv(dup.as_bytes()).is_err());
        let bad = "image_id,group_id,class_counts,defect_free\na,g,0-2,false\n";
        assert!(DatasetManifest::read_csv(bad.as_bytes()).is_err());
        let extra = "image_id,group_id,class_counts,defect_free,x\na,g,,false,1\n";
        assert!(DatasetManifest::read_csv(extra.as_bytes()).is_err());
    }
}
