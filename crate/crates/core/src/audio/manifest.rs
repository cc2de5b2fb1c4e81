//! Dataset manifests: a `path,species` CSV plus an optional sidecar file
//! fixing the class order (one species per line).

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::probe_wav;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub species: String,
    pub duration_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Class order; the index of a species here is its class index.
    pub label_set: Vec<String>,
}

/// Result of [`load_manifest`], with the number of duplicate rows dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub duplicates: usize,
}

#[derive(Deserialize)]
struct Row {
    path: String,
    species: String,
}

/// Sidecar path holding the class order for a manifest.
pub fn label_file_for(manifest: &Path) -> PathBuf {
    let mut s = manifest.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

impl DatasetManifest {
    pub fn class_index(&self, species: &str) -> Option<usize> {
        self.label_set.iter().position(|s| s == species)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if self.class_index(&e.species).is_none() {
                return Err(Error::Validation(format!(
                    "{}: species '{}' is not in the label set",
                    e.path.display(),
                    e.species
                )));
            }
        }
        Ok(())
    }

    /// Writes the CSV and the label-order sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["path", "species"]).map_err(|e| csv_error(path, e))?;
        for e in &self.entries {
            w.write_record([e.path.to_string_lossy().as_ref(), e.species.as_str()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let labels = label_file_for(path);
        let mut text = self.label_set.join("\n");
        text.push('\n');
        fs::write(&labels, text).map_err(|e| Error::io(&labels, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(format!("{}: {e}", path.display()))
    }
}

/// Loads and validates a manifest.
///
/// Relative paths resolve against the manifest's directory. Every file
/// must exist and have a readable WAV header, which also supplies its
/// duration. Repeated paths keep their first row. The class order comes
/// from the sidecar label file when present (unknown species are then an
/// error), otherwise it is the sorted set of species.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let labels_path = label_file_for(path);
    let fixed: Option<Vec<String>> = if labels_path.exists() {
        let t = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
        Some(t.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
    } else {
        None
    };

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    if !text.trim().is_empty() {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "species"] {
            return Err(Error::Parse(format!(
                "{}: header must be 'path,species', found '{}'",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let p = PathBuf::from(&row.path);
            if !seen.insert(p.clone()) {
                duplicates += 1;
                continue;
            }
            let resolved = if p.is_absolute() { p.clone() } else { base.join(&p) };
            let (rate, _, frames) = probe_wav(&resolved).map_err(|e| {
                Error::Validation(format!("{}: {e}", resolved.display()))
            })?;
            entries.push(ManifestEntry {
                path: p,
                species: row.species,
                duration_secs: frames as f64 / rate as f64,
            });
        }
    }
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate rows", path.display());
    }

    let label_set = match fixed {
        Some(order) => order,
        None => entries
            .iter()
            .map(|e| e.species.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let manifest = DatasetManifest { entries, label_set };
    manifest.validate()?;
    Ok(LoadedManifest {
        manifest,
        duplicates,
    })
}

/// Resolves an entry's path against the manifest location.
pub fn resolve_entry(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::wav::write_wav_i16;

    fn make_wav(dir: &Path, name: &str, n: usize) {
        write_wav_i16(&dir.join(name), &vec![100; n], 44100, 1).unwrap();
    }

    #[test]
    fn seventeen_species() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("path,species\n");
        for i in 0..17 {
            make_wav(dir.path(), &format!("{i}.wav"), 441);
            csv.push_str(&format!("{i}.wav,species {i:02}\n"));
        }
        let m = dir.path().join("m.csv");
        fs::write(&m, csv).unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert_eq!(loaded.manifest.label_set.len(), 17);
        assert!((loaded.manifest.entries[0].duration_secs - 0.01).abs() < 1e-12);
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        fs::write(&m, "").unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert!(loaded.manifest.entries.is_empty() && loaded.manifest.label_set.is_empty());
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        make_wav(dir.path(), "a.wav", 100);
        make_wav(dir.path(), "b.wav", 100);
        let m = dir.path().join("m.csv");
        fs::write(&m, "path,species\na.wav,Ansar\nb.wav,Cigüeña\na.wav,Ansar\n").unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert_eq!(loaded.duplicates, 1);
        assert_eq!(loaded.manifest.entries.len(), 2);
        assert_eq!(loaded.manifest.label_set, vec!["Ansar", "Cigüeña"]);
    }

    #[test]
    fn fixed_order_rejects_unknown_species() {
        let dir = tempfile::tempdir().unwrap();
        make_wav(dir.path(), "a.wav", 100);
        let m = dir.path().join("m.csv");
        fs::write(&m, "path,species\na.wav,Grulla\n").unwrap();
        fs::write(label_file_for(&m), "Ansar\nCigüeña\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_file_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        fs::write(&m, "path,species\nnope.wav,Ansar\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn write_then_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["x.wav", "y.wav", "z.wav"] {
            make_wav(dir.path(), n, 441);
        }
        let manifest = DatasetManifest {
            entries: vec![
                ManifestEntry { path: "z.wav".into(), species: "Zorzal".into(), duration_secs: 0.01 },
                ManifestEntry { path: "x.wav".into(), species: "Cigüeña".into(), duration_secs: 0.01 },
                ManifestEntry { path: "y.wav".into(), species: "Zorzal".into(), duration_secs: 0.01 },
            ],
            // deliberately not sorted
            label_set: vec!["Zorzal".into(), "Cigüeña".into()],
        };
        let m = dir.path().join("out.csv");
        manifest.write(&m).unwrap();
        let back = load_manifest(&m).unwrap().manifest;
        assert_eq!(back, manifest);
    }
}
