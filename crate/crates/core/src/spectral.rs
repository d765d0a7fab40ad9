//! Index sets, trigonometric moments and grid evaluation.
//!
//! Every grid function handled here is double-even, so its moments are real
//! and satisfy `c(k1, k2) = c(±k1, ±k2)`. Coefficient arrays therefore store
//! only the quadrant `0 <= kj <= nj`, shape `(n1 + 1, n2 + 1)`; the remaining
//! members of the index set are implied by the double-even extension.
//!
//! Both directions run as pruned separable FFTs: analysis transforms the
//! `N1/2 + 1` distinct rows and then only the `n2 + 1` retained columns;
//! synthesis mirrors that order.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::image::{symmetry_deviation, GridField};
use crate::{Error, Result};

/// Relative tolerance for imaginary residue and symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    /// Grid of the mirrored extension of a `p1 x p2` image.
    pub fn for_image(p1: usize, p2: usize) -> Self {
        Self::new(2 * p1.saturating_sub(1), 2 * p2.saturating_sub(1))
    }

    /// Image size whose mirrored extension has these dimensions.
    pub fn image_size(&self) -> (usize, usize) {
        (self.rows / 2 + 1, self.cols / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// The rectangular index set `|k1| <= n1, |k2| <= n2` on a fixed grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet {
    pub n1: usize,
    pub n2: usize,
    pub grid: GridDims,
}

impl IndexSet {
    /// Requires `2 nj < Nj`, which makes grid evaluation injective.
    pub fn new(n1: usize, n2: usize, grid: GridDims) -> Result<Self> {
        if grid.rows == 0 || grid.cols == 0 || 2 * n1 >= grid.rows || 2 * n2 >= grid.cols {
            return Err(Error::IndexSetTooLarge {
                n1,
                n2,
                rows: grid.rows,
                cols: grid.cols,
            });
        }
        Ok(Self { n1, n2, grid })
    }

    pub fn quadrant_dim(&self) -> (usize, usize) {
        (self.n1 + 1, self.n2 + 1)
    }

    pub fn quadrant_len(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    /// Size of the full index set.
    pub fn full_len(&self) -> usize {
        (2 * self.n1 + 1) * (2 * self.n2 + 1)
    }

    fn check_quadrant(&self, coeffs: &Array2<f64>, what: &str) -> Result<()> {
        if coeffs.dim() != self.quadrant_dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{what} of shape {:?}", self.quadrant_dim()),
                found: format!("{:?}", coeffs.dim()),
            });
        }
        Ok(())
    }

    fn check_grid(&self, dims: GridDims) -> Result<()> {
        if dims != self.grid {
            return Err(Error::DimensionMismatch {
                expected: format!("{} grid", self.grid),
                found: dims.to_string(),
            });
        }
        Ok(())
    }
}

/// Number of full-index-set members represented by quadrant entry `(k1, k2)`.
pub fn multiplicity(k1: usize, k2: usize) -> f64 {
    match (k1 > 0, k2 > 0) {
        (false, false) => 1.0,
        (true, true) => 4.0,
        _ => 2.0,
    }
}

/// `Σ_{k ∈ Λ} a_k b_k` for two quadrant arrays.
pub fn full_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.indexed_iter()
        .map(|((k1, k2), &v)| multiplicity(k1, k2) * v * b[[k1, k2]])
        .sum()
}

/// Trigonometric moments `c_k`, the compressed representation of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    coeffs: Array2<f64>,
    idx: IndexSet,
}

impl MomentSet {
    pub fn new(coeffs: Array2<f64>, idx: IndexSet) -> Result<Self> {
        idx.check_quadrant(&coeffs, "moments")?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("moments"));
        }
        if coeffs[[0, 0]] <= 0.0 {
            return Err(Error::InvalidMoments(format!(
                "c(0,0) = {} must be positive",
                coeffs[[0, 0]]
            )));
        }
        Ok(Self { coeffs, idx })
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn index_set(&self) -> IndexSet {
        self.idx
    }

    /// Mean of the underlying field.
    pub fn mean(&self) -> f64 {
        self.coeffs[[0, 0]]
    }

    pub fn into_coeffs(self) -> Array2<f64> {
        self.coeffs
    }
}

/// Coefficients `q_k` of `Q(ζ) = Σ_{k ∈ Λ} q_k ζ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPolynomial {
    coeffs: Array2<f64>,
    idx: IndexSet,
}

impl DualPolynomial {
    pub fn new(coeffs: Array2<f64>, idx: IndexSet) -> Result<Self> {
        idx.check_quadrant(&coeffs, "dual coefficients")?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual coefficients"));
        }
        Ok(Self { coeffs, idx })
    }

    pub fn constant(idx: IndexSet, q0: f64) -> Self {
        let mut coeffs = Array2::zeros(idx.quadrant_dim());
        coeffs[[0, 0]] = q0;
        Self { coeffs, idx }
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn index_set(&self) -> IndexSet {
        self.idx
    }

    pub fn into_coeffs(self) -> Array2<f64> {
        self.coeffs
    }
}

/// FFT plans for one index set. Plans are immutable and shared, so a kernel
/// can be used from several threads; each call allocates its own buffers.
#[derive(Clone)]
pub struct SpectralKernel {
    idx: IndexSet,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl fmt::Debug for SpectralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralKernel")
            .field("idx", &self.idx)
            .field("threads", &self.pool.as_ref().map_or(1, |p| p.current_num_threads()))
            .finish()
    }
}

impl SpectralKernel {
    pub fn new(idx: IndexSet) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            idx,
            row_fwd: planner.plan_fft_forward(idx.grid.cols),
            col_fwd: planner.plan_fft_forward(idx.grid.rows),
            row_inv: planner.plan_fft_inverse(idx.grid.cols),
            col_inv: planner.plan_fft_inverse(idx.grid.rows),
            pool: None,
        }
    }

    /// Kernel whose batched row/column transforms run on `threads` workers.
    pub fn with_threads(idx: IndexSet, threads: usize) -> Result<Self> {
        let mut kernel = Self::new(idx);
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("FFT thread pool: {e}")))?;
            kernel.pool = Some(Arc::new(pool));
        }
        Ok(kernel)
    }

    pub fn index_set(&self) -> IndexSet {
        self.idx
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex<f64>]) {
        let len = fft.len();
        match &self.pool {
            Some(pool) if buf.len() > len => {
                let batches = buf.len() / len;
                let per_task = batches.div_ceil(pool.current_num_threads()) * len;
                pool.install(|| buf.par_chunks_mut(per_task).for_each(|c| fft.process(c)));
            }
            _ => fft.process(buf),
        }
    }

    /// `(1/|N|) Σ_l ζ_l^k W(l)` on the quadrant, plus the relative imaginary
    /// residue. `grid` must be double-even; only rows `0..=N1/2` are read.
    fn analyze_raw(&self, grid: &ArrayView2<f64>) -> (Array2<f64>, f64) {
        let GridDims { rows, cols } = self.idx.grid;
        let (n1, n2) = (self.idx.n1, self.idx.n2);
        let half = rows / 2;

        let mut stage = Vec::with_capacity((half + 1) * cols);
        for i in 0..=half {
            stage.extend(grid.row(i).iter().map(|&v| Complex::new(v, 0.0)));
        }
        self.run(&self.row_fwd, &mut stage);

        let mut columns = vec![Complex::new(0.0, 0.0); (n2 + 1) * rows];
        for k2 in 0..=n2 {
            let col = &mut columns[k2 * rows..(k2 + 1) * rows];
            for (l1, slot) in col.iter_mut().enumerate() {
                let src = if l1 <= half { l1 } else { rows - l1 };
                *slot = stage[src * cols + k2];
            }
        }
        self.run(&self.col_fwd, &mut columns);

        let scale = 1.0 / self.idx.grid.len() as f64;
        let mut out = Array2::zeros((n1 + 1, n2 + 1));
        let (mut max_re, mut max_im) = (0.0_f64, 0.0_f64);
        for k1 in 0..=n1 {
            for k2 in 0..=n2 {
                let z = columns[k2 * rows + k1] * scale;
                out[[k1, k2]] = z.re;
                max_re = max_re.max(z.re.abs());
                max_im = max_im.max(z.im.abs());
            }
        }
        (out, relative_residue(max_re, max_im))
    }

    /// `Q(ζ_l) = Σ_{k ∈ Λ} q_k ζ_l^k` on the full grid, plus the relative
    /// imaginary residue.
    fn synthesize_raw(&self, coeffs: &ArrayView2<f64>) -> (Array2<f64>, f64) {
        let GridDims { rows, cols } = self.idx.grid;
        let (n1, n2) = (self.idx.n1, self.idx.n2);
        let half = rows / 2;

        let mut columns = vec![Complex::new(0.0, 0.0); (n2 + 1) * rows];
        for k2 in 0..=n2 {
            let col = &mut columns[k2 * rows..(k2 + 1) * rows];
            for k1 in 0..=n1 {
                let v = Complex::new(coeffs[[k1, k2]], 0.0);
                col[k1] = v;
                if k1 > 0 {
                    col[rows - k1] = v;
                }
            }
        }
        self.run(&self.col_inv, &mut columns);

        let mut stage = vec![Complex::new(0.0, 0.0); (half + 1) * cols];
        for l1 in 0..=half {
            let row = &mut stage[l1 * cols..(l1 + 1) * cols];
            for k2 in 0..=n2 {
                let v = columns[k2 * rows + l1];
                row[k2] = v;
                if k2 > 0 {
                    row[cols - k2] = v;
                }
            }
        }
        self.run(&self.row_inv, &mut stage);

        let (mut max_re, mut max_im) = (0.0_f64, 0.0_f64);
        for z in &stage {
            max_re = max_re.max(z.re.abs());
            max_im = max_im.max(z.im.abs());
        }
        let out = Array2::from_shape_fn((rows, cols), |(l1, l2)| {
            let src = if l1 <= half { l1 } else { rows - l1 };
            stage[src * cols + l2].re
        });
        (out, relative_residue(max_re, max_im))
    }

    /// Unchecked analysis for solver inner loops; input must be double-even.
    pub(crate) fn analyze(&self, grid: &ArrayView2<f64>) -> Array2<f64> {
        let (out, residue) = self.analyze_raw(grid);
        debug_assert!(residue <= SYMMETRY_TOL, "analysis residue {residue}");
        out
    }

    /// Unchecked synthesis for solver inner loops.
    pub(crate) fn synthesize(&self, coeffs: &ArrayView2<f64>) -> Array2<f64> {
        let (out, residue) = self.synthesize_raw(coeffs);
        debug_assert!(residue <= SYMMETRY_TOL, "synthesis residue {residue}");
        out
    }

    /// Quadrant of `(1/|N|) Σ_l ζ_l^k W(l)` for any real double-even `W`.
    pub fn truncate(&self, grid: &Array2<f64>) -> Result<Array2<f64>> {
        self.idx.check_grid(GridDims::new(grid.nrows(), grid.ncols()))?;
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        let deviation = symmetry_deviation(&grid.view());
        if deviation > SYMMETRY_TOL {
            return Err(Error::SymmetryViolation { deviation });
        }
        let (out, residue) = self.analyze_raw(&grid.view());
        if residue > SYMMETRY_TOL {
            return Err(Error::ImaginaryResidue { residue });
        }
        Ok(out)
    }

    pub fn moments(&self, field: &GridField) -> Result<MomentSet> {
        MomentSet::new(self.truncate(field.values())?, self.idx)
    }

    pub fn evaluate(&self, poly: &DualPolynomial) -> Result<Array2<f64>> {
        if poly.idx != self.idx {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", self.idx),
                found: format!("{:?}", poly.idx),
            });
        }
        let (out, residue) = self.synthesize_raw(&poly.coeffs.view());
        if residue > SYMMETRY_TOL {
            return Err(Error::ImaginaryResidue { residue });
        }
        Ok(out)
    }
}

fn relative_residue(max_re: f64, max_im: f64) -> f64 {
    if max_im == 0.0 {
        0.0
    } else {
        max_im / max_re.max(f64::MIN_POSITIVE)
    }
}

/// Trigonometric moments of a double-even positive field.
pub fn compute_moments(field: &GridField, idx: &IndexSet) -> Result<MomentSet> {
    SpectralKernel::new(*idx).moments(field)
}

/// Values of the dual polynomial at every grid point.
pub fn evaluate_on_grid(poly: &DualPolynomial) -> Result<Array2<f64>> {
    SpectralKernel::new(poly.idx).evaluate(poly)
}

/// Normalized moments of an arbitrary real double-even grid function. Left
/// inverse of [`evaluate_on_grid`] when `2n < N`.
pub fn truncate_to_index_set(grid: &Array2<f64>, idx: &IndexSet) -> Result<Array2<f64>> {
    SpectralKernel::new(*idx).truncate(grid)
}
