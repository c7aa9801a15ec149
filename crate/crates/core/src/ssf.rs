//! Segmentation-based semantic features.
//!
//! For every category `n` in `1..=L` the extractor reports five normalized
//! statistics of the pixels labelled `n`:
//!
//! | column    | meaning                                   |
//! |-----------|-------------------------------------------|
//! | `pc`      | pixel count divided by the image area     |
//! | `mu_x`    | mean 1-based column divided by `w`        |
//! | `mu_y`    | mean 1-based row divided by `h`           |
//! | `sigma_x` | population std-dev of columns, over `w`   |
//! | `sigma_y` | population std-dev of rows, over `h`      |
//!
//! Categories with no pixels get an all-zero row. Void pixels belong to no
//! category but still count towards the image area.
//!
//! [`extract_ssf`] computes the whole matrix in one pass over the mask. The
//! step-by-step functions ([`compute_pixel_counts`], [`compute_mean_positions`],
//! [`compute_std_positions`] and the normalizers) follow the two-pass
//! definitions literally and are kept as a reference path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SegmentationMask;

/// Number of feature columns per category.
pub const SSF_COLUMNS: usize = 5;

/// Column names in canonical order.
pub const COLUMN_NAMES: [&str; SSF_COLUMNS] = ["pc", "mu_x", "mu_y", "sigma_x", "sigma_y"];

/// One category's normalized features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SsfRow {
    pub pc: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl SsfRow {
    pub fn as_array(&self) -> [f64; SSF_COLUMNS] {
        [self.pc, self.mu_x, self.mu_y, self.sigma_x, self.sigma_y]
    }

    pub fn from_array(a: [f64; SSF_COLUMNS]) -> Self {
        SsfRow {
            pc: a[0],
            mu_x: a[1],
            mu_y: a[2],
            sigma_x: a[3],
            sigma_y: a[4],
        }
    }
}

/// The `L × 5` feature matrix of one mask. Row `n - 1` describes category `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsfMatrix {
    rows: Vec<SsfRow>,
    raw_counts: Vec<u64>,
}

impl SsfMatrix {
    pub fn new(rows: Vec<SsfRow>, raw_counts: Vec<u64>) -> Result<Self> {
        if rows.is_empty() || rows.len() != raw_counts.len() {
            return Err(Error::InvalidDimensions(format!(
                "ssf matrix needs matching non-empty rows ({}) and counts ({})",
                rows.len(),
                raw_counts.len()
            )));
        }
        Ok(SsfMatrix { rows, raw_counts })
    }

    /// Builds a matrix from a row-major `L × 5` slice. Raw counts are unknown
    /// and reported as zero.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() % SSF_COLUMNS != 0 {
            return Err(Error::InvalidDimensions(format!(
                "flat ssf data must be a non-empty multiple of {SSF_COLUMNS}, got {}",
                values.len()
            )));
        }
        let rows: Vec<SsfRow> = values
            .chunks_exact(SSF_COLUMNS)
            .map(|c| SsfRow::from_array([c[0], c[1], c[2], c[3], c[4]]))
            .collect();
        let raw_counts = vec![0; rows.len()];
        Ok(SsfMatrix { rows, raw_counts })
    }

    pub fn num_categories(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[SsfRow] {
        &self.rows
    }

    /// Row of 1-based category `n`.
    pub fn category(&self, n: usize) -> &SsfRow {
        &self.rows[n - 1]
    }

    pub fn raw_counts(&self) -> &[u64] {
        &self.raw_counts
    }

    /// Row-major `L × 5` values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.as_array()).collect()
    }

    /// CSV with header `category,pc,mu_x,mu_y,sigma_x,sigma_y`; every value is
    /// printed with 17 significant digits so it parses back bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,pc,mu_x,mu_y,sigma_x,sigma_y\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row.as_array() {
                out.push(',');
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidDimensions(format!("ssf csv: {reason}"));
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "category,pc,mu_x,mu_y,sigma_x,sigma_y" => {}
            other => return Err(bad(format!("unexpected header {other:?}"))),
        }
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != SSF_COLUMNS + 1 {
                return Err(bad(format!("line {} has {} fields", i + 2, fields.len())));
            }
            for f in &fields[1..] {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
                );
            }
        }
        SsfMatrix::from_flat(&values)
    }
}

/// Which column groups of the feature matrix to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub pc: bool,
    pub ap: bool,
    pub sd: bool,
}

impl FeatureSubset {
    pub const PC: FeatureSubset = FeatureSubset { pc: true, ap: false, sd: false };
    pub const AP: FeatureSubset = FeatureSubset { pc: false, ap: true, sd: false };
    pub const SD: FeatureSubset = FeatureSubset { pc: false, ap: false, sd: true };
    pub const AP_SD: FeatureSubset = FeatureSubset { pc: false, ap: true, sd: true };
    pub const PC_AP: FeatureSubset = FeatureSubset { pc: true, ap: true, sd: false };
    pub const PC_SD: FeatureSubset = FeatureSubset { pc: true, ap: false, sd: true };
    pub const FULL: FeatureSubset = FeatureSubset { pc: true, ap: true, sd: true };

    /// The seven subsets in ablation-table order.
    pub const ABLATION_ORDER: [FeatureSubset; 7] = [
        Self::PC,
        Self::AP,
        Self::SD,
        Self::AP_SD,
        Self::PC_AP,
        Self::PC_SD,
        Self::FULL,
    ];

    pub fn new(pc: bool, ap: bool, sd: bool) -> Result<Self> {
        let s = FeatureSubset { pc, ap, sd };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pc || self.ap || self.sd {
            Ok(())
        } else {
            Err(Error::EmptySubset)
        }
    }

    /// Number of selected columns.
    pub fn width(&self) -> usize {
        self.pc as usize + 2 * self.ap as usize + 2 * self.sd as usize
    }

    /// Indices of the selected columns in canonical order.
    pub fn columns(&self) -> Vec<usize> {
        let mut cols = Vec::with_capacity(SSF_COLUMNS);
        if self.pc {
            cols.push(0);
        }
        if self.ap {
            cols.extend([1, 2]);
        }
        if self.sd {
            cols.extend([3, 4]);
        }
        cols
    }

    pub fn is_full(&self) -> bool {
        *self == Self::FULL
    }

    /// Short table label: `PC`, `AP&SD`, ... and `SSFs` for the full set.
    pub fn label(&self) -> String {
        if self.is_full() {
            return "SSFs".into();
        }
        let mut parts = Vec::new();
        if self.pc {
            parts.push("PC");
        }
        if self.ap {
            parts.push("AP");
        }
        if self.sd {
            parts.push("SD");
        }
        parts.join("&")
    }
}

impl Default for FeatureSubset {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    /// Accepts comma- or `&`-separated group names (`pc,ap`, `AP&SD`) and
    /// `ssfs`/`all` for the full set.
    fn from_str(s: &str) -> Result<Self> {
        let mut subset = FeatureSubset { pc: false, ap: false, sd: false };
        for part in s.split([',', '&']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "pc" => subset.pc = true,
                "ap" => subset.ap = true,
                "sd" => subset.sd = true,
                "ssfs" | "ssf" | "all" => subset = Self::FULL,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown feature group {other:?} (expected pc, ap, sd)"
                    )))
                }
            }
        }
        subset.validate()?;
        Ok(subset)
    }
}

/// A dense `rows × cols` matrix of selected features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Keeps the columns chosen by `subset`, in canonical order.
pub fn select_subset(ssf: &SsfMatrix, subset: FeatureSubset) -> Result<FeatureMatrix> {
    subset.validate()?;
    let cols = subset.columns();
    let mut data = Vec::with_capacity(ssf.num_categories() * cols.len());
    for row in ssf.rows() {
        let a = row.as_array();
        data.extend(cols.iter().map(|&c| a[c]));
    }
    Ok(FeatureMatrix {
        rows: ssf.num_categories(),
        cols: cols.len(),
        data,
    })
}

/// Same projection on a flat row-major `L × 5` slice.
pub fn select_columns_flat(flat: &[f64], subset: FeatureSubset, out: &mut Vec<f64>) {
    let cols = subset.columns();
    for row in flat.chunks_exact(SSF_COLUMNS) {
        out.extend(cols.iter().map(|&c| row[c]));
    }
}

/// Per-category pixel counts; index `n - 1` holds category `n`.
pub fn compute_pixel_counts(mask: &SegmentationMask) -> Vec<u64> {
    let l = mask.num_categories();
    let mut counts = vec![0u64; l];
    for &p in mask.data() {
        if let Some(slot) = category_slot(p, l) {
            counts[slot] += 1;
        }
    }
    counts
}

/// Divides counts by the full image area `h × w`.
pub fn normalize_pixel_counts(counts: &[u64], height: usize, width: usize) -> Result<Vec<f64>> {
    let area = height * width;
    if area == 0 {
        return Err(Error::InvalidDimensions(format!(
            "cannot normalize by a {height}x{width} area"
        )));
    }
    if let Some(c) = counts.iter().find(|&&c| c as usize > area) {
        return Err(Error::InvalidDimensions(format!(
            "count {c} exceeds image area {area}"
        )));
    }
    let area = area as f64;
    Ok(counts.iter().map(|&c| c as f64 / area).collect())
}

/// Unnormalized `(mean column, mean row)` per category using 1-based
/// coordinates; `(0, 0)` for absent categories.
pub fn compute_mean_positions(mask: &SegmentationMask, counts: &[u64]) -> Vec<(f64, f64)> {
    let l = mask.num_categories();
    let mut sums = vec![(0.0f64, 0.0f64); l];
    for (r, row) in mask.rows().enumerate() {
        let i = (r + 1) as f64;
        for (c, &p) in row.iter().enumerate() {
            if let Some(slot) = category_slot(p, l) {
                sums[slot].0 += (c + 1) as f64;
                sums[slot].1 += i;
            }
        }
    }
    sums.iter()
        .zip(counts)
        .map(|(&(sx, sy), &n)| {
            if n == 0 {
                (0.0, 0.0)
            } else {
                (sx / n as f64, sy / n as f64)
            }
        })
        .collect()
}

/// Unnormalized population standard deviations `(column, row)` around the
/// category means; `(0, 0)` for absent categories.
pub fn compute_std_positions(
    mask: &SegmentationMask,
    counts: &[u64],
    means: &[(f64, f64)],
) -> Vec<(f64, f64)> {
    let l = mask.num_categories();
    let mut sums = vec![(0.0f64, 0.0f64); l];
    for (r, row) in mask.rows().enumerate() {
        let i = (r + 1) as f64;
        for (c, &p) in row.iter().enumerate() {
            if let Some(slot) = category_slot(p, l) {
                let dx = (c + 1) as f64 - means[slot].0;
                let dy = i - means[slot].1;
                sums[slot].0 += dx * dx;
                sums[slot].1 += dy * dy;
            }
        }
    }
    sums.iter()
        .zip(counts)
        .map(|(&(sx, sy), &n)| {
            if n == 0 {
                (0.0, 0.0)
            } else {
                ((sx / n as f64).sqrt(), (sy / n as f64).sqrt())
            }
        })
        .collect()
}

/// Divides x components by `w` and y components by `h`. Used for both means
/// and deviations.
pub fn normalize_positions(pairs: &[(f64, f64)], height: usize, width: usize) -> Result<Vec<(f64, f64)>> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions(format!(
            "cannot normalize positions for a {height}x{width} mask"
        )));
    }
    let (h, w) = (height as f64, width as f64);
    Ok(pairs.iter().map(|&(x, y)| (x / w, y / h)).collect())
}

/// Composition of the step-by-step functions. Slower than [`extract_ssf`].
pub fn extract_ssf_multipass(mask: &SegmentationMask) -> SsfMatrix {
    let (h, w) = (mask.height(), mask.width());
    let counts = compute_pixel_counts(mask);
    let pc = normalize_pixel_counts(&counts, h, w).expect("mask dimensions are non-zero");
    let means = compute_mean_positions(mask, &counts);
    let stds = compute_std_positions(mask, &counts, &means);
    let means = normalize_positions(&means, h, w).expect("mask dimensions are non-zero");
    let stds = normalize_positions(&stds, h, w).expect("mask dimensions are non-zero");
    let rows = (0..counts.len())
        .map(|n| SsfRow {
            pc: pc[n],
            mu_x: means[n].0,
            mu_y: means[n].1,
            sigma_x: stds[n].0,
            sigma_y: stds[n].1,
        })
        .collect();
    SsfMatrix { rows, raw_counts: counts }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    count: u64,
    sum_x: u64,
    sum_y: u64,
    sum_xx: u64,
    sum_yy: u64,
}

/// Computes the feature matrix in a single pass over the pixels.
///
/// Moments are accumulated as exact integers; variances come from
/// `Σx²/n − μ²`, evaluated as `(n·Σx² − (Σx)²) / n²` in 128-bit arithmetic so
/// the radicand never goes negative and single-pixel categories give exactly 0.
pub fn extract_ssf(mask: &SegmentationMask) -> SsfMatrix {
    let l = mask.num_categories();
    let mut acc = vec![Moments::default(); l];
    for (r, row) in mask.rows().enumerate() {
        let i = (r + 1) as u64;
        let ii = i * i;
        for (c, &p) in row.iter().enumerate() {
            let slot = (p as usize).wrapping_sub(1);
            if slot < l {
                let j = (c + 1) as u64;
                let m = &mut acc[slot];
                m.count += 1;
                m.sum_x += j;
                m.sum_y += i;
                m.sum_xx += j * j;
                m.sum_yy += ii;
            }
        }
    }

    let (h, w) = (mask.height() as f64, mask.width() as f64);
    let area = h * w;
    let rows = acc
        .iter()
        .map(|m| {
            if m.count == 0 {
                return SsfRow::default();
            }
            let n = m.count as f64;
            SsfRow {
                pc: n / area,
                mu_x: m.sum_x as f64 / n / w,
                mu_y: m.sum_y as f64 / n / h,
                sigma_x: population_std(m.count, m.sum_x, m.sum_xx) / w,
                sigma_y: population_std(m.count, m.sum_y, m.sum_yy) / h,
            }
        })
        .collect();
    SsfMatrix {
        rows,
        raw_counts: acc.iter().map(|m| m.count).collect(),
    }
}

fn population_std(count: u64, sum: u64, sum_sq: u64) -> f64 {
    let n = count as u128;
    let numer = n * sum_sq as u128 - (sum as u128) * (sum as u128);
    let radicand = numer as f64 / (n * n) as f64;
    clamp_radicand(radicand).sqrt()
}

/// Rounding can push a zero variance slightly negative; anything down to
/// `-1e-9` is treated as zero.
fn clamp_radicand(r: f64) -> f64 {
    debug_assert!(r >= -1e-9, "variance radicand {r} is significantly negative");
    r.max(0.0)
}

/// Extracts every mask, spread over the rayon pool when the `parallel`
/// feature is on. Output order matches input order.
pub fn extract_batch(masks: &[SegmentationMask]) -> Vec<SsfMatrix> {
    crate::par::map(masks, extract_ssf)
}

pub fn extract_batch_sequential(masks: &[SegmentationMask]) -> Vec<SsfMatrix> {
    crate::par::map_sequential(masks, extract_ssf)
}

#[inline]
fn category_slot(p: u16, l: usize) -> Option<usize> {
    let slot = (p as usize).wrapping_sub(1);
    (slot < l).then_some(slot)
}
