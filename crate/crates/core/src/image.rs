//! Pixel images and their positive-field representation.
//!
//! A `p1 x p2` image is extended by whole-sample symmetric mirroring to an
//! `N1 x N2` grid with `Nj = 2(pj - 1)`, then lifted entrywise through `exp`.
//! The mirrored grid is double-even: invariant under `l -> (N - l) mod N` in
//! either axis, which is what makes all of its trigonometric moments real.

use ndarray::{Array2, ArrayView2, Zip};

use crate::spectral::GridDims;
use crate::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (rows, cols) = pixels.dim();
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidImage(format!(
                "image must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((rows, cols), f))
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((rows, cols), value))
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    /// Grid dimensions of the mirrored extension.
    pub fn grid_dims(&self) -> GridDims {
        GridDims::for_image(self.rows(), self.cols())
    }

    pub fn transpose(&self) -> Image {
        Image {
            pixels: self.pixels.t().to_owned(),
        }
    }
}

/// Strictly positive function on the periodic `N1 x N2` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    values: Array2<f64>,
}

impl GridField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field"));
        }
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonPositive("grid field"));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidImage("empty grid field".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(dims: GridDims, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((dims.rows, dims.cols), value))
    }

    pub fn dims(&self) -> GridDims {
        GridDims::new(self.values.nrows(), self.values.ncols())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation from double-even symmetry relative to the largest
    /// magnitude. Exactly zero for mirrored fields.
    pub fn symmetry_deviation(&self) -> f64 {
        symmetry_deviation(&self.values.view())
    }
}

/// Relative deviation of a grid function from double-even symmetry.
pub(crate) fn symmetry_deviation(grid: &ArrayView2<f64>) -> f64 {
    let (rows, cols) = grid.dim();
    let scale = grid.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..rows {
        let ri = (rows - i) % rows;
        for j in 0..cols {
            let cj = (cols - j) % cols;
            let v = grid[[i, j]];
            worst = worst.max((v - grid[[ri, j]]).abs()).max((v - grid[[i, cj]]).abs());
        }
    }
    worst / scale
}

/// Whole-sample symmetric extension of an arbitrary `p1 x p2` matrix to
/// `2(p1 - 1) x 2(p2 - 1)`. Row `i >= p1` copies row `N1 - i`.
pub fn mirror_matrix(x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (p1, p2) = x.dim();
    if p1 < 2 || p2 < 2 {
        return Err(Error::InvalidImage(format!(
            "mirroring needs at least 2x2, got {p1}x{p2}"
        )));
    }
    let dims = GridDims::for_image(p1, p2);
    let fold = |i: usize, p: usize, n: usize| if i < p { i } else { n - i };
    Ok(Array2::from_shape_fn((dims.rows, dims.cols), |(i, j)| {
        x[[fold(i, p1, dims.rows), fold(j, p2, dims.cols)]]
    }))
}

/// Mirrored extension of an image; entries stay in `[0, 1]`.
pub fn mirror(image: &Image) -> Array2<f64> {
    mirror_matrix(&image.pixels.view()).expect("valid images are at least 2x2")
}

/// `Φ = exp(Y)` entrywise.
pub fn lift(y: &Array2<f64>) -> Result<GridField> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lift input"));
    }
    GridField::new(y.mapv(f64::exp))
}

/// Inverse of `lift(mirror(.))`: log, crop to the leading `rows x cols`
/// block, clamp to `[0, 1]`.
pub fn unlift(phi: &GridField, rows: usize, cols: usize) -> Result<Image> {
    let expected = GridDims::for_image(rows, cols);
    if rows < 2 || cols < 2 || phi.dims() != expected {
        return Err(Error::DimensionMismatch {
            expected: format!("{expected} grid for a {rows}x{cols} image"),
            found: phi.dims().to_string(),
        });
    }
    let pixels = phi
        .values
        .slice(ndarray::s![..rows, ..cols])
        .mapv(|v| v.ln().clamp(0.0, 1.0));
    Image::new(pixels)
}

/// Peak signal-to-noise ratio in dB with unit peak; `+inf` when identical.
pub fn psnr(original: &Image, reconstructed: &Image) -> Result<f64> {
    if original.dim() != reconstructed.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", original.dim()),
            found: format!("{:?}", reconstructed.dim()),
        });
    }
    let mut sse = 0.0;
    Zip::from(&original.pixels)
        .and(&reconstructed.pixels)
        .for_each(|a, b| sse += (a - b) * (a - b));
    let mse = sse / original.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
