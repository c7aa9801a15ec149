//! JSON-lines dataset manifests.
//!
//! The first line is a header, every following non-empty line one sample:
//!
//! ```text
//! {"format":"ssf-manifest","version":1,"num_classes":6,"num_categories":8,"void_value":0}
//! {"id":"c0-0000","mask":"masks/c0-0000.pgm","global":"globals/c0-0000.ssfm","label":0,"split":"train"}
//! ```
//!
//! | field            | meaning                                                    |
//! |------------------|------------------------------------------------------------|
//! | `num_classes`    | number of scene classes; labels are `0..num_classes`       |
//! | `num_categories` | `L`, the category count of every mask                     |
//! | `void_value`     | index of unlabeled pixels, or `null` when masks have none  |
//! | `id`             | unique sample id                                           |
//! | `mask`           | PGM or `SSFM` mask, relative to the manifest's directory   |
//! | `global`         | optional `1 × l_G` f64 `SSFM` vector, same path rules      |
//! | `label`          | scene class index                                          |
//! | `split`          | `train` or `test`; stored, never recomputed                |

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::io::{read_global_vector, read_mask, write_bytes};
use crate::par;
use crate::ssf::extract_ssf;

pub const MANIFEST_FORMAT: &str = "ssf-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub num_classes: usize,
    pub num_categories: usize,
    pub void_value: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<PathBuf>,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(num_classes: usize, num_categories: usize, void_value: Option<u16>, base_dir: PathBuf) -> Self {
        DatasetManifest {
            header: ManifestHeader {
                format: MANIFEST_FORMAT.into(),
                version: 1,
                num_classes,
                num_categories,
                void_value,
            },
            entries: Vec::new(),
            base_dir,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_jsonl().as_bytes())
    }

    /// Structural checks: unique ids and labels in range.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if e.label >= self.header.num_classes {
                return Err(Error::ManifestLabel {
                    id: e.id.clone(),
                    label: e.label,
                    num_classes: self.header.num_classes,
                });
            }
        }
        Ok(())
    }

    /// Fails with [`Error::MissingFile`] for the first referenced path that
    /// does not exist.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in std::iter::once(&e.mask).chain(e.global.as_ref()) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::MissingFile(full));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::format(path, "empty manifest"))?;
    let header: ManifestHeader =
        serde_json::from_str(first).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.format != MANIFEST_FORMAT || header.version != 1 {
        return Err(Error::format(
            path,
            format!("unsupported manifest {:?} version {}", header.format, header.version),
        ));
    }
    if header.num_classes == 0 || header.num_categories == 0 {
        return Err(Error::format(path, "num_classes and num_categories must be >= 1"));
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let e: ManifestEntry =
            serde_json::from_str(line).map_err(|err| Error::format(path, format!("line {}: {err}", i + 1)))?;
        entries.push(e);
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = DatasetManifest {
        header,
        entries,
        base_dir,
    };
    m.validate()?;
    Ok(m)
}

/// Reads and validates a manifest, including existence of every referenced file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = parse_manifest(&text, path)?;
    m.check_files()?;
    Ok(m)
}

/// Loads every sample: masks are read and turned into feature matrices
/// (per-image work runs in parallel), global vectors are read as-is.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let h = &manifest.header;
    let loaded = par::map(&manifest.entries, |e| -> Result<Example> {
        let mask = read_mask(&manifest.resolve(&e.mask), h.num_categories, h.void_value)?;
        let ssf = extract_ssf(&mask).to_flat();
        let global = e
            .global
            .as_ref()
            .map(|p| read_global_vector(&manifest.resolve(p)))
            .transpose()?;
        Ok(Example {
            id: e.id.clone(),
            ssf,
            global,
            label: e.label,
            split: e.split,
        })
    });
    let examples = loaded.into_iter().collect::<Result<Vec<_>>>()?;
    let widths: HashSet<Option<usize>> = examples.iter().map(|e| e.global.as_ref().map(Vec::len)).collect();
    if widths.len() > 1 {
        return Err(Error::InvalidDimensions(format!(
            "global feature widths differ across the manifest: {widths:?}"
        )));
    }
    Ok(Dataset {
        num_classes: h.num_classes,
        num_categories: h.num_categories,
        examples,
    })
}
