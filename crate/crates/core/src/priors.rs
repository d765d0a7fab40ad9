//! Prior fields `Ψ`.
//!
//! A low-rank prior is stored as a factor pair `M1 = U_r sqrt(D_r)` (`p1 x r`)
//! and `M2 = sqrt(D_r) V_rᵀ` (`r x p2`), so `M1 M2` is the best rank-`r`
//! approximation of the source image. The prior itself is the lifted mirror
//! of that product, built the same way as the field of an image.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::image::{lift, mirror_matrix, GridField, Image};
use crate::spectral::GridDims;
use crate::{Error, Result};

/// `Ψ ≡ 1`.
pub fn uniform_prior(dims: GridDims) -> GridField {
    GridField::constant(dims, 1.0).expect("constant one is a valid field")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    m1: Array2<f64>,
    m2: Array2<f64>,
}

impl SvdFactors {
    pub fn new(m1: Array2<f64>, m2: Array2<f64>) -> Result<Self> {
        if m1.ncols() != m2.nrows() {
            return Err(Error::DimensionMismatch {
                expected: format!("M2 with {} rows", m1.ncols()),
                found: format!("{} rows", m2.nrows()),
            });
        }
        if m1.iter().chain(m2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SVD factors"));
        }
        Ok(Self { m1, m2 })
    }

    pub fn rank(&self) -> usize {
        self.m1.ncols()
    }

    /// `(p1, p2)` of the approximated image.
    pub fn image_dim(&self) -> (usize, usize) {
        (self.m1.nrows(), self.m2.ncols())
    }

    pub fn m1(&self) -> &Array2<f64> {
        &self.m1
    }

    pub fn m2(&self) -> &Array2<f64> {
        &self.m2
    }

    /// Number of stored reals, `(p1 + p2) r`.
    pub fn parameter_count(&self) -> usize {
        self.m1.len() + self.m2.len()
    }

    pub fn product(&self) -> Array2<f64> {
        self.m1.dot(&self.m2)
    }

    /// Leading `rank` components; valid because components are sorted by singular value.
    pub fn truncated(&self, rank: usize) -> Self {
        let rank = rank.min(self.rank());
        Self {
            m1: self.m1.slice(ndarray::s![.., ..rank]).to_owned(),
            m2: self.m2.slice(ndarray::s![..rank, ..]).to_owned(),
        }
    }

    /// Factors rounded through `f32`, exactly as a container stores them.
    pub fn to_f32_precision(&self) -> Self {
        let round = |a: &Array2<f64>| a.mapv(|v| f64::from(v as f32));
        Self {
            m1: round(&self.m1),
            m2: round(&self.m2),
        }
    }
}

/// Rank-`r` factors of an image from its SVD, singular values in descending order.
pub fn svd_factors(image: &Image, rank: usize) -> Result<SvdFactors> {
    let (p1, p2) = image.dim();
    let max = p1.min(p2);
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let x = image.pixels();
    let svd = DMatrix::from_fn(p1, p2, |i, j| x[[i, j]]).svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(rank);

    let roots: Vec<f64> = order.iter().map(|&k| svd.singular_values[k].max(0.0).sqrt()).collect();
    let m1 = Array2::from_shape_fn((p1, rank), |(i, c)| u[(i, order[c])] * roots[c]);
    let m2 = Array2::from_shape_fn((rank, p2), |(c, j)| v_t[(order[c], j)] * roots[c]);
    SvdFactors::new(m1, m2)
}

/// `Ψ = exp(mirror(M1 M2))`, with the product clamped to `[0, 1]` when
/// `clamp` is set.
pub fn prior_from_factors(factors: &SvdFactors, dims: GridDims, clamp: bool) -> Result<GridField> {
    let (p1, p2) = factors.image_dim();
    if p1 < 2 || p2 < 2 || GridDims::for_image(p1, p2) != dims {
        return Err(Error::DimensionMismatch {
            expected: format!("factors for a {:?} image", dims.image_size()),
            found: format!("{p1}x{p2}"),
        });
    }
    let mut x = factors.product();
    if clamp {
        x.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
    lift(&mirror_matrix(&x.view())?)
}

/// Shared prior from the rank-`r` approximation of a similar image.
pub fn prior_from_similar_image(similar: &Image, rank: usize, dims: GridDims) -> Result<GridField> {
    if similar.grid_dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: format!("similar image of size {:?}", dims.image_size()),
            found: format!("{:?}", similar.dim()),
        });
    }
    prior_from_factors(&svd_factors(similar, rank)?, dims, true)
}
