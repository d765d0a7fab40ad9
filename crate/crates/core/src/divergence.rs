//! Alpha divergences between positive grid fields and their dual objectives.
//!
//! The family is indexed by `ν ∈ {1, 2, ...} ∪ {∞}` (Alpha parameter
//! `1 - 1/ν`). For a dual polynomial `Q` the moment-constrained minimizer has
//! the closed form
//!
//! * `Φ = Ψ / Q^ν` for finite `ν`, which requires `Q > 0` on the grid,
//! * `Φ = Ψ exp(-Q)` for `ν = ∞`, with no sign constraint.
//!
//! [`DualObjective`] evaluates the convex dual functional `J_ν`, its gradient
//! with respect to the stored quadrant coefficients, and Hessian-vector
//! products. The constant term of the Lagrangian is omitted, so `J_ν` values
//! are only meaningful up to an additive constant.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};

use crate::image::GridField;
use crate::spectral::{full_inner, multiplicity, DualPolynomial, IndexSet, MomentSet, SpectralKernel, SYMMETRY_TOL};
use crate::{Error, Result};

/// Grid values of `Q` below this are treated as outside the dual domain for finite `ν`.
pub const MIN_FEASIBLE_Q: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Nu {
    Finite(u16),
    Infinity,
}

impl Nu {
    pub fn finite(value: u16) -> Result<Self> {
        if value == 0 {
            return Err(Error::InvalidNu("finite nu must be >= 1".into()));
        }
        Ok(Nu::Finite(value))
    }

    /// Container code: `0` for infinity, otherwise the value itself.
    pub fn code(self) -> u16 {
        match self {
            Nu::Finite(v) => v,
            Nu::Infinity => 0,
        }
    }

    pub fn from_code(code: u16) -> Self {
        if code == 0 {
            Nu::Infinity
        } else {
            Nu::Finite(code)
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Nu::Infinity)
    }
}

impl fmt::Display for Nu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nu::Finite(v) => write!(f, "{v}"),
            Nu::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Nu {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Nu::Infinity),
            other => {
                let v: u16 = other
                    .parse()
                    .map_err(|_| Error::InvalidNu(format!("{s:?} is neither an integer nor \"inf\"")))?;
                Nu::finite(v)
            }
        }
    }
}

fn summand(phi: f64, psi: f64, nu: Nu) -> f64 {
    match nu {
        Nu::Finite(1) => psi * (psi / phi).ln() - psi + phi,
        Nu::Finite(v) => {
            let v = f64::from(v);
            let a = (v - 1.0) / v;
            v * v / (1.0 - v) * phi.powf(a) * psi.powf(1.0 / v) + v * phi + v / (v - 1.0) * psi
        }
        Nu::Infinity => phi * (phi / psi).ln() - phi + psi,
    }
}

/// Grid-averaged divergence `D_ν(Φ‖Ψ)`; nonnegative and zero iff `Φ = Ψ`.
pub fn alpha_divergence(phi: &GridField, psi: &GridField, nu: Nu) -> Result<f64> {
    if phi.dims() != psi.dims() {
        return Err(Error::DimensionMismatch {
            expected: psi.dims().to_string(),
            found: phi.dims().to_string(),
        });
    }
    let mut total = 0.0;
    Zip::from(phi.values())
        .and(psi.values())
        .for_each(|&a, &b| total += summand(a, b, nu));
    Ok(total / phi.values().len() as f64)
}

/// Smallest grid value, or an infeasibility error for finite `ν`.
fn check_feasible(q_grid: &Array2<f64>, nu: Nu) -> Result<f64> {
    let min_q = q_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if !min_q.is_finite() {
        return Err(Error::NonFinite("dual polynomial grid values"));
    }
    if !nu.is_infinite() && min_q < MIN_FEASIBLE_Q {
        return Err(Error::InfeasibleDual { min_q });
    }
    Ok(min_q)
}

fn stationary_values(q_grid: &Array2<f64>, psi: &Array2<f64>, nu: Nu) -> Array2<f64> {
    match nu {
        Nu::Finite(v) => {
            let v = i32::from(v);
            Zip::from(psi).and(q_grid).map_collect(|&p, &q| p / q.powi(v))
        }
        Nu::Infinity => Zip::from(psi).and(q_grid).map_collect(|&p, &q| p * (-q).exp()),
    }
}

/// The primal field attached to a dual polynomial.
pub fn stationary_field(q: &DualPolynomial, psi: &GridField, nu: Nu) -> Result<GridField> {
    let kernel = SpectralKernel::new(q.index_set());
    if psi.dims() != q.index_set().grid {
        return Err(Error::DimensionMismatch {
            expected: q.index_set().grid.to_string(),
            found: psi.dims().to_string(),
        });
    }
    let q_grid = kernel.evaluate(q)?;
    check_feasible(&q_grid, nu)?;
    GridField::new(stationary_values(&q_grid, psi.values(), nu))
}

/// The dual functional `J_ν` for fixed moments and prior.
#[derive(Clone, Debug)]
pub struct DualObjective {
    moments: MomentSet,
    prior: GridField,
    nu: Nu,
    kernel: SpectralKernel,
}

/// A feasible dual point with its cached grid evaluation, primal field and value.
#[derive(Clone, Debug)]
pub struct DualState {
    poly: DualPolynomial,
    q_grid: Array2<f64>,
    field: Array2<f64>,
    min_q: f64,
    value: f64,
}

impl DualState {
    pub fn poly(&self) -> &DualPolynomial {
        &self.poly
    }

    pub fn q_grid(&self) -> &Array2<f64> {
        &self.q_grid
    }

    /// Stationary primal field `Φ(Q)`.
    pub fn field(&self) -> &Array2<f64> {
        &self.field
    }

    pub fn min_q(&self) -> f64 {
        self.min_q
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn into_parts(self) -> (DualPolynomial, Array2<f64>) {
        (self.poly, self.field)
    }
}

impl DualObjective {
    pub fn new(moments: MomentSet, prior: GridField, nu: Nu) -> Result<Self> {
        let kernel = SpectralKernel::new(moments.index_set());
        Self::with_kernel(moments, prior, nu, kernel)
    }

    pub fn with_kernel(moments: MomentSet, prior: GridField, nu: Nu, kernel: SpectralKernel) -> Result<Self> {
        let idx = moments.index_set();
        if kernel.index_set() != idx {
            return Err(Error::DimensionMismatch {
                expected: format!("{idx:?}"),
                found: format!("{:?}", kernel.index_set()),
            });
        }
        if prior.dims() != idx.grid {
            return Err(Error::DimensionMismatch {
                expected: format!("{} prior", idx.grid),
                found: prior.dims().to_string(),
            });
        }
        let deviation = prior.symmetry_deviation();
        if deviation > SYMMETRY_TOL {
            return Err(Error::SymmetryViolation { deviation });
        }
        Ok(Self {
            moments,
            prior,
            nu,
            kernel,
        })
    }

    pub fn moments(&self) -> &MomentSet {
        &self.moments
    }

    pub fn prior(&self) -> &GridField {
        &self.prior
    }

    pub fn nu(&self) -> Nu {
        self.nu
    }

    pub fn index_set(&self) -> IndexSet {
        self.moments.index_set()
    }

    pub fn kernel(&self) -> &SpectralKernel {
        &self.kernel
    }

    /// Grid values of `Q` without any feasibility check.
    pub fn q_grid(&self, poly: &DualPolynomial) -> Array2<f64> {
        self.kernel.synthesize(&poly.coeffs().view())
    }

    pub fn state(&self, poly: DualPolynomial) -> Result<DualState> {
        if poly.index_set() != self.index_set() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", self.index_set()),
                found: format!("{:?}", poly.index_set()),
            });
        }
        let q_grid = self.q_grid(&poly);
        self.state_from_grid(poly, q_grid)
    }

    pub(crate) fn state_from_grid(&self, poly: DualPolynomial, q_grid: Array2<f64>) -> Result<DualState> {
        let min_q = check_feasible(&q_grid, self.nu)?;
        let psi = self.prior.values();
        let field = stationary_values(&q_grid, psi, self.nu);
        let mut acc = 0.0;
        match self.nu {
            Nu::Finite(1) => Zip::from(psi).and(&q_grid).for_each(|&p, &q| acc += p * (p / q).ln()),
            Nu::Finite(v) => {
                // Ψ/Q^(ν-1) = Φ·Q
                let scale = 1.0 / (f64::from(v) - 1.0);
                Zip::from(&field).and(&q_grid).for_each(|&f, &q| acc += scale * f * q);
            }
            Nu::Infinity => acc = field.sum(),
        }
        let value = acc / q_grid.len() as f64 + full_inner(poly.coeffs(), self.moments.coeffs());
        if !value.is_finite() {
            return Err(Error::NonFinite("dual value"));
        }
        Ok(DualState {
            poly,
            q_grid,
            field,
            min_q,
            value,
        })
    }

    pub fn value(&self, poly: &DualPolynomial) -> Result<f64> {
        Ok(self.state(poly.clone())?.value)
    }

    /// Moments of the stationary field `Φ(Q)`.
    pub fn field_moments(&self, state: &DualState) -> Array2<f64> {
        self.kernel.analyze(&state.field.view())
    }

    /// `c_k - m_k(Φ(Q))` on the quadrant; zero exactly at the optimum.
    pub fn moment_residual(&self, state: &DualState) -> Array2<f64> {
        self.moments.coeffs() - &self.field_moments(state)
    }

    /// Partial derivatives of `J_ν` with respect to the quadrant coefficients.
    /// Each entry stands for `multiplicity(k)` members of the full index set,
    /// so it is the moment residual scaled by that count.
    pub fn gradient(&self, state: &DualState) -> Array2<f64> {
        weight_by_multiplicity(self.moment_residual(state))
    }

    /// Grid weight `W` of the second variation `(1/|N|) Σ W δQ²`.
    pub fn hessian_weight(&self, state: &DualState) -> Array2<f64> {
        match self.nu {
            Nu::Finite(v) => {
                let v = f64::from(v);
                Zip::from(&state.field)
                    .and(&state.q_grid)
                    .map_collect(|&f, &q| v * f / q)
            }
            Nu::Infinity => state.field.clone(),
        }
    }

    /// Hessian applied to a quadrant direction, for a precomputed weight.
    pub fn hessian_product(&self, weight: &Array2<f64>, direction: &Array2<f64>) -> Array2<f64> {
        let mut dq = self.kernel.synthesize(&direction.view());
        dq *= weight;
        weight_by_multiplicity(self.kernel.analyze(&dq.view()))
    }
}

pub(crate) fn weight_by_multiplicity(mut quadrant: Array2<f64>) -> Array2<f64> {
    for ((k1, k2), v) in quadrant.indexed_iter_mut() {
        *v *= multiplicity(k1, k2);
    }
    quadrant
}
