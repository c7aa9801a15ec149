//! Semantic segmentation masks: an `h × w` grid of category indices in
//! `1..=L`, with an optional void index for unlabeled pixels.

use crate::error::{Error, Result};

/// Largest supported mask side. Keeps the integer moment accumulators of the
/// extractor far away from overflow.
pub const MAX_SIDE: usize = 16384;

/// Default index used for unlabeled pixels.
pub const DEFAULT_VOID: u16 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    height: usize,
    width: usize,
    num_categories: usize,
    void_value: Option<u16>,
    data: Vec<u16>,
}

impl SegmentationMask {
    /// Builds a mask from row-major data, validating every pixel.
    pub fn new(
        height: usize,
        width: usize,
        num_categories: usize,
        void_value: Option<u16>,
        data: Vec<u16>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!(
                "mask must be at least 1x1, got {height}x{width}"
            )));
        }
        if height > MAX_SIDE || width > MAX_SIDE {
            return Err(Error::InvalidDimensions(format!(
                "mask sides are limited to {MAX_SIDE}, got {height}x{width}"
            )));
        }
        if num_categories == 0 || num_categories > u16::MAX as usize {
            return Err(Error::InvalidDimensions(format!(
                "number of categories must be in 1..={}, got {num_categories}",
                u16::MAX
            )));
        }
        if let Some(v) = void_value {
            if v >= 1 && (v as usize) <= num_categories {
                return Err(Error::InvalidMask(format!(
                    "void value {v} collides with category range 1..={num_categories}"
                )));
            }
        }
        if data.len() != height * width {
            return Err(Error::InvalidMask(format!(
                "expected {} pixels for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        let mask = SegmentationMask {
            height,
            width,
            num_categories,
            void_value,
            data,
        };
        mask.validate()?;
        Ok(mask)
    }

    /// Convenience constructor from nested rows, mostly for tests and examples.
    pub fn from_rows(rows: &[&[u16]], num_categories: usize, void_value: Option<u16>) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidMask("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(height, width, num_categories, void_value, data)
    }

    /// A mask where every pixel carries `value`.
    pub fn filled(
        height: usize,
        width: usize,
        num_categories: usize,
        void_value: Option<u16>,
        value: u16,
    ) -> Result<Self> {
        Self::new(height, width, num_categories, void_value, vec![value; height * width])
    }

    fn validate(&self) -> Result<()> {
        let l = self.num_categories;
        for (index, &v) in self.data.iter().enumerate() {
            let in_range = v >= 1 && (v as usize) <= l;
            if !in_range && Some(v) != self.void_value {
                return Err(Error::InvalidPixel {
                    index,
                    value: v as u32,
                    num_categories: l,
                    void: match self.void_value {
                        Some(vv) => format!(" or void {vv}"),
                        None => String::new(),
                    },
                });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn void_value(&self) -> Option<u16> {
        self.void_value
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Pixel at 0-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }

    pub fn is_void(&self, value: u16) -> bool {
        Some(value) == self.void_value
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u16> {
        self.data.chunks_exact(self.width)
    }

    /// Number of void pixels.
    pub fn void_count(&self) -> usize {
        match self.void_value {
            Some(v) => self.data.iter().filter(|&&p| p == v).count(),
            None => 0,
        }
    }

    /// Left-right mirror.
    pub fn flip_horizontal(&self) -> SegmentationMask {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(row.iter().rev());
        }
        SegmentationMask { data, ..self.clone() }
    }

    /// Nearest-neighbour replication by an integer factor along both axes.
    pub fn upsample(&self, factor: usize) -> Result<SegmentationMask> {
        if factor == 0 {
            return Err(Error::InvalidDimensions("upsampling factor must be >= 1".into()));
        }
        let (h, w) = (self.height * factor, self.width * factor);
        let mut data = Vec::with_capacity(h * w);
        for row in self.rows() {
            let mut wide = Vec::with_capacity(w);
            for &p in row {
                wide.extend(std::iter::repeat(p).take(factor));
            }
            for _ in 0..factor {
                data.extend_from_slice(&wide);
            }
        }
        SegmentationMask::new(h, w, self.num_categories, self.void_value, data)
    }
}
