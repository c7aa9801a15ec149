//! Datasets: manifests, the synthetic generator and mini-batching.

pub mod batch;
pub mod manifest;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use batch::{batch_iter, batch_indices};
pub use manifest::{load_dataset, load_manifest, DatasetManifest, ManifestEntry, ManifestHeader};
pub use synth::{generate_synthetic, ClassRecipe, GlobalSpec, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(crate::Error::Usage(format!("unknown split {other:?}"))),
        }
    }
}

/// One in-memory sample: its full `L × 5` feature matrix (row-major), an
/// optional global feature vector and its scene label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub ssf: Vec<f64>,
    pub global: Option<Vec<f64>>,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub num_categories: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Examples of one split, in manifest order.
    pub fn split(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    pub fn global_width(&self) -> Option<usize> {
        self.examples.iter().find_map(|e| e.global.as_ref().map(Vec::len))
    }
}
