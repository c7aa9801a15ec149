//! Seeded synthetic mask datasets.
//!
//! Each class has a layout recipe: a set of axis-aligned rectangular blobs,
//! one per category, on a void background. Samples jitter the blob centres
//! and extents in proportion to `noise` and sprinkle a few random pixels.
//! Classes may share a layout (`layout_of_class`) and may carry a
//! class-conditioned Gaussian global feature vector, which lets fusion
//! experiments split class information between the two branches.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use super::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::io::{write_f64_container, write_mask_container, write_mask_pgm};
use crate::mask::SegmentationMask;
use crate::ssf::{extract_ssf, SSF_COLUMNS};

/// A rectangle in normalized image coordinates, painted with `category`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub category: u16,
    pub cx: f64,
    pub cy: f64,
    /// Half width, as a fraction of the image width.
    pub rx: f64,
    /// Half height, as a fraction of the image height.
    pub ry: f64,
}

impl Blob {
    fn overlaps(&self, o: &Blob) -> bool {
        (self.cx - o.cx).abs() < self.rx + o.rx && (self.cy - o.cy).abs() < self.ry + o.ry
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecipe {
    pub blobs: Vec<Blob>,
}

impl ClassRecipe {
    /// Expected feature matrix (row-major `L × 5`) of a noiseless sample, from
    /// the continuous rectangle geometry.
    pub fn targets(&self, num_categories: usize) -> Vec<f64> {
        let mut t = vec![0.0; num_categories * SSF_COLUMNS];
        for b in &self.blobs {
            let row = &mut t[(b.category as usize - 1) * SSF_COLUMNS..][..SSF_COLUMNS];
            let twelve = 12f64.sqrt();
            row.copy_from_slice(&[4.0 * b.rx * b.ry, b.cx, b.cy, 2.0 * b.rx / twelve, 2.0 * b.ry / twelve]);
        }
        t
    }
}

/// Class-conditioned Gaussian global vectors: class `c` draws around the
/// centroid of group `group_of_class[c]` with standard deviation `spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSpec {
    pub width: usize,
    pub spread: f64,
    pub group_of_class: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub num_categories: usize,
    pub height: usize,
    pub width: usize,
    pub void_value: u16,
    /// Distinct layout recipes.
    pub recipes: Vec<ClassRecipe>,
    /// Recipe index used by each class.
    pub layout_of_class: Vec<usize>,
    /// In `[0, 1)`; 0 renders every sample exactly from its recipe.
    pub noise: f64,
    pub samples_per_class: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub global: Option<GlobalSpec>,
}

impl SynthSpec {
    /// One random, distinct recipe per class with 3–5 blobs each, placed in
    /// separate cells of a 3×3 grid so blobs never overlap.
    pub fn standard(
        num_classes: usize,
        num_categories: usize,
        side: usize,
        samples_per_class: usize,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_categories < 3 {
            return Err(Error::Recipe("standard recipes need at least 3 categories".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recipes: Vec<ClassRecipe> = Vec::with_capacity(num_classes);
        while recipes.len() < num_classes {
            let r = random_recipe(&mut rng, num_categories);
            if !recipes.contains(&r) {
                recipes.push(r);
            }
        }
        let spec = SynthSpec {
            num_classes,
            num_categories,
            height: side,
            width: side,
            void_value: 0,
            recipes,
            layout_of_class: (0..num_classes).collect(),
            noise,
            samples_per_class,
            train_fraction: 0.7,
            seed,
            global: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Adds class-conditioned global vectors, one centroid per class.
    pub fn with_globals(mut self, width: usize, spread: f64) -> Self {
        self.global = Some(GlobalSpec {
            width,
            spread,
            group_of_class: (0..self.num_classes).collect(),
        });
        self
    }

    /// Six classes whose identity is split between the branches: the mask
    /// layout encodes `class % 2` and the global vector encodes `class / 2`.
    /// Either branch alone can be right at most half the time.
    pub fn split_information(
        num_categories: usize,
        side: usize,
        samples_per_class: usize,
        noise: f64,
        global_width: usize,
        global_spread: f64,
        seed: u64,
    ) -> Result<Self> {
        let base = SynthSpec::standard(2, num_categories, side, samples_per_class, noise, seed)?;
        let spec = SynthSpec {
            num_classes: 6,
            layout_of_class: (0..6).map(|c| c % 2).collect(),
            global: Some(GlobalSpec {
                width: global_width,
                spread: global_spread,
                group_of_class: (0..6).map(|c| c / 2).collect(),
            }),
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Recipe(m));
        if self.num_classes == 0 || self.samples_per_class == 0 {
            return bad("need at least one class and one sample per class".into());
        }
        if self.height == 0 || self.width == 0 {
            return bad("image must be at least 1x1".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1)", self.noise));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad(format!("train fraction {} outside [0, 1]", self.train_fraction));
        }
        let l = self.num_categories;
        if self.void_value >= 1 && self.void_value as usize <= l {
            return bad(format!("void value {} collides with categories 1..={l}", self.void_value));
        }
        if self.layout_of_class.len() != self.num_classes
            || self.layout_of_class.iter().any(|&r| r >= self.recipes.len())
        {
            return bad("layout_of_class must map every class to a recipe".into());
        }
        for (i, r) in self.recipes.iter().enumerate() {
            if self.recipes[..i].contains(r) {
                return bad(format!("recipe {i} duplicates an earlier recipe"));
            }
            for (k, b) in r.blobs.iter().enumerate() {
                if b.category == 0 || b.category as usize > l {
                    return bad(format!("recipe {i}: blob category {} outside 1..={l}", b.category));
                }
                if b.rx <= 0.0 || b.ry <= 0.0 {
                    return bad(format!("recipe {i}: blob {k} has no extent"));
                }
                let eps = 1e-12;
                if b.cx - b.rx < -eps || b.cx + b.rx > 1.0 + eps || b.cy - b.ry < -eps || b.cy + b.ry > 1.0 + eps {
                    return bad(format!("recipe {i}: blob {k} exceeds the image"));
                }
                for (m, o) in r.blobs[..k].iter().enumerate() {
                    if o.category == b.category {
                        return bad(format!("recipe {i}: blobs {m} and {k} share category {}", b.category));
                    }
                    if o.overlaps(b) {
                        return bad(format!("recipe {i}: blobs {m} and {k} overlap"));
                    }
                }
            }
        }
        if let Some(g) = &self.global {
            if g.width == 0 || g.group_of_class.len() != self.num_classes || !(g.spread >= 0.0) {
                return bad("global spec needs width >= 1, spread >= 0 and one group per class".into());
            }
        }
        Ok(())
    }

    fn train_count(&self) -> usize {
        (self.samples_per_class as f64 * self.train_fraction).round() as usize
    }
}

fn random_recipe(rng: &mut ChaCha8Rng, num_categories: usize) -> ClassRecipe {
    let n_blobs = rng.gen_range(3..=5usize.min(num_categories));
    let mut cells: Vec<usize> = (0..9).collect();
    let mut cats: Vec<u16> = (1..=num_categories as u16).collect();
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        let cell = cells.swap_remove(rng.gen_range(0..cells.len()));
        let category = cats.swap_remove(rng.gen_range(0..cats.len()));
        let (gx, gy) = ((cell % 3) as f64 / 3.0, (cell / 3) as f64 / 3.0);
        let rx = rng.gen_range(0.05..0.15);
        let ry = rng.gen_range(0.05..0.15);
        let cx = gx + rng.gen_range(rx..(1.0 / 3.0 - rx));
        let cy = gy + rng.gen_range(ry..(1.0 / 3.0 - ry));
        blobs.push(Blob { category, cx, cy, rx, ry });
    }
    blobs.sort_by_key(|b| b.category);
    ClassRecipe { blobs }
}

/// Pixel span `[start, end)` of a normalized interval, at least one pixel wide.
fn span(center: f64, half: f64, size: usize) -> (usize, usize) {
    let s = ((center - half) * size as f64).round().clamp(0.0, size as f64 - 1.0) as usize;
    let e = ((center + half) * size as f64).round().clamp(0.0, size as f64) as usize;
    (s, e.max(s + 1))
}

fn render(spec: &SynthSpec, recipe: &ClassRecipe, rng: &mut ChaCha8Rng) -> Result<SegmentationMask> {
    let (h, w) = (spec.height, spec.width);
    let mut data = vec![spec.void_value; h * w];
    let jitter = |rng: &mut ChaCha8Rng, scale: f64| -> f64 {
        if spec.noise == 0.0 {
            0.0
        } else {
            spec.noise * scale * rng.gen_range(-1.0..1.0)
        }
    };
    for b in &recipe.blobs {
        let rx = b.rx * (1.0 + jitter(rng, 0.5));
        let ry = b.ry * (1.0 + jitter(rng, 0.5));
        let cx = (b.cx + jitter(rng, 0.1)).clamp(rx, 1.0 - rx);
        let cy = (b.cy + jitter(rng, 0.1)).clamp(ry, 1.0 - ry);
        let (c0, c1) = span(cx, rx, w);
        let (r0, r1) = span(cy, ry, h);
        for r in r0..r1 {
            data[r * w + c0..r * w + c1].iter_mut().for_each(|p| *p = b.category);
        }
    }
    if spec.noise > 0.0 {
        let flip = spec.noise * 0.05;
        for p in data.iter_mut() {
            if rng.gen_bool(flip) {
                *p = rng.gen_range(1..=spec.num_categories as u16);
            }
        }
    }
    SegmentationMask::new(h, w, spec.num_categories, Some(spec.void_value), data)
}

/// One generated sample.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub label: usize,
    pub split: Split,
    pub mask: SegmentationMask,
    pub global: Option<Vec<f64>>,
}

/// Generates every sample in memory, class-major, in manifest order.
pub fn synthesize(spec: &SynthSpec) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    let centroids: Option<Vec<Vec<f64>>> = spec.global.as_ref().map(|g| {
        let groups = g.group_of_class.iter().max().map_or(0, |m| m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        (0..groups)
            .map(|_| (0..g.width).map(|_| unit.sample(&mut rng)).collect())
            .collect()
    });
    let n_train = spec.train_count();
    let mut out = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for class in 0..spec.num_classes {
        let recipe = &spec.recipes[spec.layout_of_class[class]];
        for i in 0..spec.samples_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((class * spec.samples_per_class + i) as u64 + 1);
            let mask = render(spec, recipe, &mut rng)?;
            let global = match (&spec.global, &centroids) {
                (Some(g), Some(c)) => {
                    let centre = &c[g.group_of_class[class]];
                    let noise = Normal::new(0.0, g.spread.max(f64::MIN_POSITIVE)).expect("valid normal");
                    Some(centre.iter().map(|m| m + noise.sample(&mut rng)).collect())
                }
                _ => None,
            };
            out.push(SynthSample {
                id: format!("c{class}-{i:04}"),
                label: class,
                split: if i < n_train { Split::Train } else { Split::Test },
                mask,
                global,
            });
        }
    }
    Ok(out)
}

/// In-memory dataset with features already extracted.
pub fn synthetic_dataset(spec: &SynthSpec) -> Result<Dataset> {
    let examples = synthesize(spec)?
        .into_iter()
        .map(|s| Example {
            id: s.id,
            ssf: extract_ssf(&s.mask).to_flat(),
            global: s.global,
            label: s.label,
            split: s.split,
        })
        .collect();
    Ok(Dataset {
        num_classes: spec.num_classes,
        num_categories: spec.num_categories,
        examples,
    })
}

/// Writes masks (`masks/<id>.pgm`, or `.ssfm` when `L > 255`), global vectors
/// (`globals/<id>.ssfm`), `manifest.jsonl` and `synth.json` under `out_dir`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let samples = synthesize(spec)?;
    let mut manifest = DatasetManifest::new(
        spec.num_classes,
        spec.num_categories,
        Some(spec.void_value),
        out_dir.to_path_buf(),
    );
    let pgm = spec.num_categories <= 255 && spec.void_value <= 255;
    for s in &samples {
        let mask_rel = Path::new("masks").join(format!("{}.{}", s.id, if pgm { "pgm" } else { "ssfm" }));
        if pgm {
            write_mask_pgm(&out_dir.join(&mask_rel), &s.mask)?;
        } else {
            write_mask_container(&out_dir.join(&mask_rel), &s.mask)?;
        }
        let global_rel = match &s.global {
            Some(v) => {
                let rel = Path::new("globals").join(format!("{}.ssfm", s.id));
                write_f64_container(&out_dir.join(&rel), 1, v.len(), v)?;
                Some(rel)
            }
            None => None,
        };
        manifest.entries.push(ManifestEntry {
            id: s.id.clone(),
            mask: mask_rel,
            global: global_rel,
            label: s.label,
            split: s.split,
        });
    }
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes");
    crate::io::write_bytes(&out_dir.join("synth.json"), spec_json.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_spec_counts_and_split() {
        let spec = SynthSpec::standard(6, 8, 24, 10, 0.1, 3).unwrap();
        let s = synthesize(&spec).unwrap();
        assert_eq!(s.len(), 60);
        for class in 0..6 {
            let train = s.iter().filter(|x| x.label == class && x.split == Split::Train).count();
            assert_eq!(train, 7);
        }
    }

    #[test]
    fn blob_outside_image_is_rejected() {
        let mut spec = SynthSpec::standard(2, 4, 16, 2, 0.0, 1).unwrap();
        spec.recipes[0].blobs[0].cx = 0.95;
        spec.recipes[0].blobs[0].rx = 0.1;
        assert!(matches!(spec.validate(), Err(Error::Recipe(_))));
    }

    #[test]
    fn bad_noise_and_duplicate_recipes() {
        let mut spec = SynthSpec::standard(2, 4, 16, 2, 0.0, 1).unwrap();
        spec.noise = 1.0;
        assert!(spec.validate().is_err());
        spec.noise = 0.0;
        spec.recipes[1] = spec.recipes[0].clone();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn split_information_layout() {
        let spec = SynthSpec::split_information(6, 16, 4, 0.0, 8, 0.5, 2).unwrap();
        assert_eq!(spec.recipes.len(), 2);
        let s = synthesize(&spec).unwrap();
        // classes 0 and 2 share a layout, 0 and 1 share a global centroid group
        let m = |c: usize| s.iter().find(|x| x.label == c).unwrap().mask.clone();
        assert_eq!(m(0), m(2));
        assert_ne!(m(0), m(1));
        assert!(s.iter().all(|x| x.global.as_ref().map(Vec::len) == Some(8)));
    }
}
