use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::Split;
use crate::error::{Error, Result};

/// One split file entry: a lone id or a `[target, source]` pair.
#[derive(Deserialize)]
#[serde(untagged)]
enum SplitEntry {
    Single(String),
    Pair([String; 2]),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Assignment of original video ids to train/val/test.
///
/// Pair entries place both ids in the file's split. A derived video id of the
/// form `<target>_<source>` is resolved through its target id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitMap {
    assignments: BTreeMap<String, Split>,
}

impl SplitMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads the three split files. Each file is a JSON array.
    pub fn load(train: &Path, val: &Path, test: &Path) -> Result<Self> {
        let mut map = SplitMap::new();
        for (split, path) in [(Split::Train, train), (Split::Val, val), (Split::Test, test)] {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            map.add_document(split, &text, &path.display().to_string())?;
        }
        Ok(map)
    }

    /// Loads `train.json`, `val.json` and `test.json` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(
            &dir.join("train.json"),
            &dir.join("val.json"),
            &dir.join("test.json"),
        )
    }

    /// Adds every id in one split document. An empty document adds nothing.
    pub fn add_document(&mut self, split: Split, text: &str, origin: &str) -> Result<()> {
        if text.trim().is_empty() {
            return Ok(());
        }
        let entries: Vec<SplitEntry> =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        for entry in entries {
            match entry {
                SplitEntry::Single(id) => self.assign(id, split)?,
                SplitEntry::Pair([target, source]) => {
                    self.assign(target, split)?;
                    self.assign(source, split)?;
                }
            }
        }
        Ok(())
    }

    pub fn assign(&mut self, id: String, split: Split) -> Result<()> {
        if id.is_empty() {
            return Err(Error::parse("split", "empty video id"));
        }
        if let Some(prev) = self.assignments.get(&id) {
            return Err(Error::DuplicateId {
                id,
                first: prev.to_string(),
                second: split.to_string(),
            });
        }
        self.assignments.insert(id, split);
        Ok(())
    }

    /// Split for an original id, or for a derived `<target>_<source>` id.
    pub fn split_of(&self, video_id: &str) -> Option<Split> {
        if let Some(s) = self.assignments.get(video_id) {
            return Some(*s);
        }
        let (target, _) = video_id.split_once('_')?;
        self.assignments.get(target).copied()
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in self.assignments.values() {
            match s {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignments.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Writes one JSON split document per split in `dir`, as lone ids.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for split in Split::ALL {
            let ids: Vec<&str> = self
                .ids()
                .filter(|(_, s)| *s == split)
                .map(|(id, _)| id)
                .collect();
            let path = dir.join(format!("{}.json", split.as_str()));
            let text = serde_json::to_string(&ids).expect("string list serializes");
            fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_doc(start: usize, n_pairs: usize) -> String {
        let entries: Vec<String> = (0..n_pairs)
            .map(|i| {
                let a = start + 2 * i;
                format!("[\"{:03}\", \"{:03}\"]", a, a + 1)
            })
            .collect();
        format!("[{}]", entries.join(", "))
    }

    #[test]
    fn official_sized_split_counts() {
        // 360 + 70 + 70 pairs covering 1000 originals.
        let mut map = SplitMap::new();
        map.add_document(Split::Train, &pairs_doc(0, 360), "train").unwrap();
        map.add_document(Split::Val, &pairs_doc(720, 70), "val").unwrap();
        map.add_document(Split::Test, &pairs_doc(860, 70), "test").unwrap();
        assert_eq!(
            map.counts(),
            SplitCounts {
                train: 720,
                val: 140,
                test: 140
            }
        );
        assert_eq!(map.split_of("000_001"), Some(Split::Train));
        assert_eq!(map.split_of("861_860"), Some(Split::Test));
        assert_eq!(map.split_of("999"), Some(Split::Test));
        assert_eq!(map.split_of("1000"), None);
    }

    #[test]
    fn empty_document_gives_empty_map() {
        let mut map = SplitMap::new();
        map.add_document(Split::Train, "", "train").unwrap();
        map.add_document(Split::Val, "[]", "val").unwrap();
        assert!(map.is_empty());
        assert_eq!(map.counts(), SplitCounts::default());
    }

    #[test]
    fn duplicate_across_splits_is_rejected() {
        let mut map = SplitMap::new();
        map.add_document(Split::Train, r#"["007", "008"]"#, "train").unwrap();
        let err = map.add_document(Split::Test, r#"[["007", "010"]]"#, "test").unwrap_err();
        assert!(matches!(err, Error::DuplicateId { ref id, .. } if id == "007"));
    }

    #[test]
    fn malformed_documents_are_parse_errors() {
        let mut map = SplitMap::new();
        for bad in ["{", "[1, 2]", r#"[["a"]]"#, r#"[["a","b","c"]]"#, r#"{"a": 1}"#] {
            let err = map.add_document(Split::Train, bad, "bad").unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn derived_ids_follow_the_target() {
        let mut map = SplitMap::new();
        map.add_document(Split::Val, r#"["100"]"#, "val").unwrap();
        map.add_document(Split::Test, r#"["200"]"#, "test").unwrap();
        assert_eq!(map.split_of("100_200"), Some(Split::Val));
        assert_eq!(map.split_of("200_100"), Some(Split::Test));
    }

    #[test]
    fn files_round_trip_through_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = SplitMap::new();
        map.assign("a".into(), Split::Train).unwrap();
        map.assign("b".into(), Split::Val).unwrap();
        map.assign("c".into(), Split::Test).unwrap();
        map.write_dir(dir.path()).unwrap();
        assert_eq!(SplitMap::load_dir(dir.path()).unwrap(), map);
    }
}
