//! Damped Newton method for the dual problem.
//!
//! Newton directions come from preconditioned conjugate gradients on
//! Hessian-vector products, each of which costs one grid synthesis and one
//! analysis. The Hessian is never formed. A backtracking line search enforces
//! Armijo decrease of `J_ν` and, for finite `ν`, strict positivity of `Q` on
//! the grid. Convergence is certified by the max-norm moment residual.

use ndarray::{Array2, Zip};

use crate::divergence::{alpha_divergence, DualObjective, DualState, Nu};
use crate::image::GridField;
use crate::spectral::{multiplicity, DualPolynomial, MomentSet, SpectralKernel};
use crate::{Error, Result};

/// Minimum grid value of `Q` accepted by the line search for finite `ν`.
pub const LINE_SEARCH_MIN_Q: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Max-norm of the moment residual at which the solve stops.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub backtrack_ratio: f64,
    pub armijo_c: f64,
    /// Relative residual target of the inner CG solve.
    pub cg_tol: f64,
    /// Inner iteration cap; `None` means the number of stored coefficients.
    pub cg_max_iter: Option<usize>,
    pub fft_threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 500,
            backtrack_ratio: 0.5,
            armijo_c: 1e-4,
            cg_tol: 1e-10,
            cg_max_iter: None,
            fft_threads: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        unit("grad_tol", self.grad_tol)?;
        unit("backtrack_ratio", self.backtrack_ratio)?;
        unit("armijo_c", self.armijo_c)?;
        unit("cg_tol", self.cg_tol)?;
        if self.max_iter == 0 || self.cg_max_iter == Some(0) || self.fft_threads == 0 {
            return Err(Error::InvalidConfig(
                "iteration and thread counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// Newton steps taken.
    pub iterations: usize,
    pub final_residual: f64,
    pub final_dual_value: f64,
    pub converged: bool,
    /// Moment residual at every accepted iterate, starting with the initial point.
    pub residual_history: Vec<f64>,
    /// `J_ν` at every accepted iterate; non-increasing.
    pub dual_value_history: Vec<f64>,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub poly: DualPolynomial,
    pub field: GridField,
    pub report: SolveReport,
}

/// Solve from the default start: `Q ≡ q0` chosen so the stationary field has
/// mean `c0` when the prior is flat.
pub fn solve_dual(moments: &MomentSet, prior: &GridField, nu: Nu, cfg: &SolverConfig) -> Result<Solution> {
    let idx = moments.index_set();
    let ratio = prior.mean() / moments.mean();
    let q0 = match nu {
        Nu::Finite(v) => ratio.powf(1.0 / f64::from(v)),
        Nu::Infinity => ratio.ln(),
    };
    solve_dual_from(DualPolynomial::constant(idx, q0), moments, prior, nu, cfg)
}

/// Solve from a caller-supplied feasible starting polynomial.
pub fn solve_dual_from(
    init: DualPolynomial,
    moments: &MomentSet,
    prior: &GridField,
    nu: Nu,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    let kernel = SpectralKernel::with_threads(moments.index_set(), cfg.fft_threads)?;
    let objective = DualObjective::with_kernel(moments.clone(), prior.clone(), nu, kernel)?;
    let (state, report) = newton(&objective, init, cfg)?;
    let (poly, field) = state.into_parts();
    Ok(Solution {
        poly,
        field: GridField::new(field)?,
        report,
    })
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

fn newton(objective: &DualObjective, init: DualPolynomial, cfg: &SolverConfig) -> Result<(DualState, SolveReport)> {
    let nu = objective.nu();
    let mut state = objective.state(init)?;
    let mut residual = objective.moment_residual(&state);
    let mut res_norm = max_abs(&residual);
    let mut report = SolveReport {
        residual_history: vec![res_norm],
        dual_value_history: vec![state.value()],
        ..Default::default()
    };
    let cg_cap = cfg.cg_max_iter.unwrap_or(objective.index_set().quadrant_len());

    while res_norm > cfg.grad_tol && report.iterations < cfg.max_iter {
        let gradient = crate::divergence::weight_by_multiplicity(residual.clone());
        let weight = objective.hessian_weight(&state);
        let (mut direction, cg_iters) = conjugate_gradient(objective, &weight, &gradient, cfg.cg_tol, cg_cap);
        report.cg_iterations += cg_iters;
        let mut slope = dot(&gradient, &direction);
        if slope >= 0.0 || slope.is_nan() {
            // not a descent direction; fall back to steepest descent
            direction = gradient.mapv(|g| -g);
            slope = -dot(&gradient, &gradient);
        }

        let current = state.poly().coeffs().clone();
        let noise_floor = 1e-13 * state.value().abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial = DualPolynomial::new(&current + &(&direction * step), objective.index_set())?;
            let q_grid = objective.q_grid(&trial);
            let min_q = q_grid.iter().copied().fold(f64::INFINITY, f64::min);
            if !nu.is_infinite() && (min_q < LINE_SEARCH_MIN_Q || min_q.is_nan()) {
                step *= cfg.backtrack_ratio;
                continue;
            }
            let Ok(candidate) = objective.state_from_grid(trial, q_grid) else {
                step *= cfg.backtrack_ratio;
                continue;
            };
            let decrease = candidate.value() - state.value();
            if decrease <= cfg.armijo_c * step * slope {
                accepted = Some((candidate, None));
                break;
            }
            // Near the optimum the predicted decrease drops below the
            // rounding noise of J; accept steps that still shrink the residual.
            if decrease <= noise_floor {
                let trial_residual = objective.moment_residual(&candidate);
                if max_abs(&trial_residual) < res_norm {
                    accepted = Some((candidate, Some(trial_residual)));
                    break;
                }
            }
            step *= cfg.backtrack_ratio;
        }

        let Some((next, known_residual)) = accepted else {
            break;
        };
        state = next;
        residual = known_residual.unwrap_or_else(|| objective.moment_residual(&state));
        res_norm = max_abs(&residual);
        report.iterations += 1;
        report.residual_history.push(res_norm);
        report.dual_value_history.push(state.value());
    }

    report.final_residual = res_norm;
    report.final_dual_value = state.value();
    report.converged = res_norm <= cfg.grad_tol;
    Ok((state, report))
}

/// Preconditioned CG for `H d = -g`. The diagonal preconditioner is the
/// Hessian diagonal for a flat weight, `mean(W) * multiplicity(k)`.
fn conjugate_gradient(
    objective: &DualObjective,
    weight: &Array2<f64>,
    gradient: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> (Array2<f64>, usize) {
    let mean_w = weight.mean().unwrap_or(1.0);
    let precond = Array2::from_shape_fn(gradient.dim(), |(k1, k2)| 1.0 / (mean_w * multiplicity(k1, k2)));

    let mut x = Array2::zeros(gradient.dim());
    let mut r = gradient.mapv(|g| -g);
    let mut z = &r * &precond;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol * dot(gradient, gradient).sqrt();
    let mut iters = 0;
    while iters < max_iter && dot(&r, &r).sqrt() > target {
        let hp = objective.hessian_product(weight, &p);
        let curvature = dot(&p, &hp);
        if curvature <= 0.0 || curvature.is_nan() {
            break;
        }
        let alpha = rz / curvature;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &hp);
        z = &r * &precond;
        let rz_next = dot(&r, &z);
        p = &z + &(&p * (rz_next / rz));
        rz = rz_next;
        iters += 1;
    }
    if iters == 0 {
        // degenerate curvature on the first step: use the preconditioned gradient
        x = gradient.mapv(|g| -g) * &precond;
    }
    (x, iters)
}

/// Optimality diagnostics for a dual point.
#[derive(Clone, Debug, PartialEq)]
pub struct DualityCertificate {
    /// Max-norm of `c - m(Φ(Q))`; infinite when `Q` is infeasible.
    pub moment_residual: f64,
    pub min_q: f64,
    /// `D_ν(Φ(Q)‖Ψ)`; infinite when `Q` is infeasible.
    pub divergence: f64,
}

pub fn verify_duality(q: &DualPolynomial, c: &MomentSet, psi: &GridField, nu: Nu) -> Result<DualityCertificate> {
    let objective = DualObjective::new(c.clone(), psi.clone(), nu)?;
    if q.index_set() != c.index_set() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", c.index_set()),
            found: format!("{:?}", q.index_set()),
        });
    }
    let q_grid = objective.q_grid(q);
    let min_q = q_grid.iter().copied().fold(f64::INFINITY, f64::min);
    match objective.state_from_grid(q.clone(), q_grid) {
        Ok(state) => {
            let moment_residual = max_abs(&objective.moment_residual(&state));
            let field = GridField::new(state.field().clone())?;
            Ok(DualityCertificate {
                moment_residual,
                min_q,
                divergence: alpha_divergence(&field, psi, nu)?,
            })
        }
        Err(Error::InfeasibleDual { .. }) => Ok(DualityCertificate {
            moment_residual: f64::INFINITY,
            min_q,
            divergence: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}
