use crate::error::{Error, Result};

/// Single-channel intensity raster, row-major, nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Binary edge labels (1 = edge), row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Per-pixel edge probabilities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::dim(format!("raster must be at least 1x1, got {height}x{width}")));
    }
    if height * width != len {
        return Err(Error::dim(format!(
            "{height}x{width} raster needs {} values, got {len}",
            height * width
        )));
    }
    Ok(())
}

macro_rules! raster_accessors {
    ($t:ty, $elem:ty) => {
        impl $t {
            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            #[inline]
            pub fn get(&self, row: usize, col: usize) -> $elem {
                self.data[row * self.width + col]
            }
        }
    };
}

raster_accessors!(GrayImage, f64);
raster_accessors!(EdgeMap, u8);
raster_accessors!(ProbMap, f64);

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite intensity at index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && value.is_finite());
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { height, width, data }
    }

    /// Constructor for results that are finite by construction.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(height * width, data.len());
        Self { height, width, data }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Applies `f` to every pixel in row-major order.
    ///
    /// # Panics
    /// If `f` returns a non-finite value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "GrayImage::map produced a non-finite value");
        Self::from_raw(self.height, self.width, data)
    }
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::param(format!("edge label {} at index {i} is not 0/1", data[i])));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut map = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                map.data[r * width + c] = f(r, c) as u8;
            }
        }
        map
    }

    pub fn is_edge(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == 1
    }

    pub fn set(&mut self, row: usize, col: usize, edge: bool) {
        self.data[row * self.width + col] = edge as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Labels as 0.0 / 1.0.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

impl ProbMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(format!(
                "probability {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Binarise with `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> EdgeMap {
        EdgeMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&p| (p >= threshold) as u8).collect(),
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.height, self.width, self.data.clone())
    }
}

impl From<&EdgeMap> for ProbMap {
    fn from(map: &EdgeMap) -> Self {
        ProbMap {
            height: map.height,
            width: map.width,
            data: map.to_f64(),
        }
    }
}

impl From<&EdgeMap> for GrayImage {
    fn from(map: &EdgeMap) -> Self {
        GrayImage::from_raw(map.height, map.width, map.to_f64())
    }
}

/// Centre-anchored correlation kernel with odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::dim(format!("kernel dims must be odd, got {rows}x{cols}")));
        }
        if rows * cols != weights.len() {
            return Err(Error::dim(format!(
                "{rows}x{cols} kernel needs {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("kernel weights must be finite"));
        }
        Ok(Self { rows, cols, weights })
    }

    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Result<Self> {
        Self::new(rows.len(), C, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }
}
