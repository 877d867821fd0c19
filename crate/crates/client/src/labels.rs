//! Caregiver-local label document. Labels are never uploaded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxsearch_core::evaluation::Label;
use voxsearch_core::fsutil::write_atomic;

#[derive(Debug, Default, Serialize, Deserialize)]
struct LabelDoc {
    labels: BTreeMap<String, Label>,
}

#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    labels: BTreeMap<String, Label>,
}

impl LabelStore {
    /// A missing file is an empty store.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let labels = match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice::<LabelDoc>(&bytes)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
                .labels,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            path: path.to_path_buf(),
            labels,
        })
    }

    pub fn all(&self) -> &BTreeMap<String, Label> {
        &self.labels
    }

    pub fn get(&self, id: &str) -> Option<&Label> {
        self.labels.get(id)
    }

    pub fn set(&mut self, id: &str, label: Label) -> std::io::Result<()> {
        let mut next = self.labels.clone();
        next.insert(id.to_string(), label);
        let doc = LabelDoc { labels: next };
        write_atomic(
            &self.path,
            serde_json::to_string_pretty(&doc).expect("serializable").as_bytes(),
            Some(0o600),
        )?;
        self.labels = doc.labels;
        Ok(())
    }
}
