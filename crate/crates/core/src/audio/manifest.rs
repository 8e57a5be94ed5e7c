use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One speaker's recording. `path` is either a WAV path (relative paths are
/// resolved against the manifest's directory) or `synth:<seed>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    /// Each speaker owns exactly one recording.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.speaker_id.as_str()) {
                return Err(Error::Manifest(format!("speaker {} appears more than once", e.speaker_id)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        if self.entries.is_empty() {
            w.write_record(["speaker_id", "path", "label", "split", "duration_s"])?;
        }
        w.into_inner().map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_csv(data: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(data);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["speaker_id", "path", "label", "split", "duration_s"] {
            return Err(Error::Manifest(format!("unexpected header {:?}", headers)));
        }
        let entries = r.deserialize().collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&data).map_err(|e| match e {
            Error::Manifest(m) => Error::Manifest(format!("{}: {m}", path.display())),
            Error::Csv(c) => Error::Manifest(format!("{}: {c}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, label: Label, split: Split) -> ManifestEntry {
        ManifestEntry {
            speaker_id: id.into(),
            path: format!("{id}.wav"),
            label,
            split,
            duration_s: 12.5,
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let m = CorpusManifest::new(vec![
            entry("a", Label::Depressed, Split::Train),
            entry("b", Label::NonDepressed, Split::Test),
        ])
        .unwrap();
        let bytes = m.to_csv().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("speaker_id,path,label,split,duration_s\n"));
        assert!(text.contains("a,a.wav,1,train,12.5"));
        assert_eq!(CorpusManifest::from_csv(&bytes).unwrap(), m);
        assert_eq!(m.split(Split::Test).count(), 1);
    }

    #[test]
    fn duplicate_speakers_are_rejected() {
        let err = CorpusManifest::new(vec![
            entry("a", Label::Depressed, Split::Train),
            entry("a", Label::Depressed, Split::Test),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("more than once"));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(CorpusManifest::from_csv(b"id,path\nx,y\n").is_err());
    }

    #[test]
    fn bad_label_is_rejected() {
        let csv = b"speaker_id,path,label,split,duration_s\na,a.wav,2,train,1.0\n";
        assert!(CorpusManifest::from_csv(csv).is_err());
    }
}
