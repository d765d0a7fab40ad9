//! Compression and reconstruction pipelines.
//!
//! * [`compress_sweep_nu`] stores the moments and the `ν` whose reconstruction
//!   scores the highest PSNR.
//! * [`compress_hybrid`] sweeps the SVD rank `r = 0..=r_max` at a fixed rate,
//!   sizing the moment set for each rank, and keeps the best configuration.
//! * [`reconstruct`] rebuilds the prior from a container and solves the dual.
//!
//! Sweeps score each candidate independently, optionally in parallel, and
//! reduce deterministically: highest PSNR wins, ties go to the earlier
//! candidate, and candidates whose solve does not converge are excluded.

pub mod container;
pub mod rate;

use std::time::Instant;

use rayon::prelude::*;

use crate::divergence::Nu;
use crate::image::{lift, mirror, psnr, unlift, GridField, Image};
use crate::priors::{prior_from_factors, svd_factors, uniform_prior, SvdFactors};
use crate::solver::{solve_dual, SolveReport, SolverConfig};
use crate::spectral::{DualPolynomial, IndexSet, SpectralKernel};
use crate::{Error, Result};

pub use container::{Container, PriorPayload};
pub use rate::{hybrid_rate, max_rank, moments_only_rate, size_from_rate, RateBudget};

#[derive(Clone, Debug)]
pub struct CodecOptions {
    pub solver: SolverConfig,
    /// Candidate solves evaluated concurrently.
    pub jobs: usize,
    /// Clamp low-rank products to `[0, 1]` before building the prior.
    pub clamp_prior: bool,
    /// Score reconstructions after rounding to `levels + 1` gray levels, i.e.
    /// exactly as a `levels`-maxval image file would store them.
    pub score_levels: Option<u16>,
}

impl Default for CodecOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            jobs: 1,
            clamp_prior: true,
            score_levels: None,
        }
    }
}

/// Prior used while compressing, and how the container records it.
#[derive(Clone, Debug)]
pub enum PriorSpec {
    Uniform,
    InlineSvd(SvdFactors),
    /// Shared prior stored outside the container under `name`.
    External {
        name: String,
        field: GridField,
    },
}

/// One scored configuration of a sweep.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub nu: Nu,
    pub rank: usize,
    pub n1: usize,
    pub n2: usize,
    /// `None` when the configuration was excluded.
    pub psnr: Option<f64>,
    pub report: Option<SolveReport>,
    pub failure: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct CompressionOutcome {
    pub container: Container,
    pub candidates: Vec<Candidate>,
    /// Index of the stored configuration in `candidates`.
    pub chosen: usize,
}

impl CompressionOutcome {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: Image,
    /// Reconstructed positive field before the final log and clamp.
    pub field: GridField,
    pub poly: DualPolynomial,
    pub report: SolveReport,
}

fn run_candidates<T: Send>(jobs: usize, count: usize, f: impl Fn(usize) -> T + Sync) -> Result<Vec<T>> {
    if jobs <= 1 || count <= 1 {
        return Ok((0..count).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("sweep thread pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

fn select_best(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if let Some(p) = c.psnr {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn factors_prior(factors: &SvdFactors, original: &Image, clamp: bool) -> Result<GridField> {
    // score with exactly the precision the decoder will see
    prior_from_factors(&factors.to_f32_precision(), original.grid_dims(), clamp)
}

/// Round to the lattice `k / levels`.
pub fn quantize(image: &Image, levels: u16) -> Image {
    let l = f64::from(levels.max(1));
    Image::new(image.pixels().mapv(|x| (x * l).round() / l)).expect("rounding stays in [0, 1]")
}

fn score(
    original: &Image,
    moments: &crate::spectral::MomentSet,
    prior: &GridField,
    nu: Nu,
    opts: &CodecOptions,
) -> (Option<f64>, Option<SolveReport>, Option<String>) {
    match solve_dual(moments, prior, nu, &opts.solver) {
        Ok(sol) if sol.report.converged => {
            let (p1, p2) = original.dim();
            let decoded = unlift(&sol.field, p1, p2).map(|img| match opts.score_levels {
                Some(levels) => quantize(&img, levels),
                None => img,
            });
            match decoded.and_then(|img| psnr(original, &img)) {
                Ok(p) => (Some(p), Some(sol.report), None),
                Err(e) => (None, Some(sol.report), Some(e.to_string())),
            }
        }
        Ok(sol) => {
            let msg = format!(
                "no convergence after {} iterations (residual {:.3e})",
                sol.report.iterations, sol.report.final_residual
            );
            (None, Some(sol.report), Some(msg))
        }
        Err(e) => (None, None, Some(e.to_string())),
    }
}

/// Moments-only compression with a `ν` sweep.
pub fn compress_sweep_nu(
    original: &Image,
    idx: &IndexSet,
    prior: &PriorSpec,
    candidates: &[Nu],
    opts: &CodecOptions,
) -> Result<CompressionOutcome> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("nu candidate list is empty".into()));
    }
    let dims = original.grid_dims();
    if idx.grid != dims {
        return Err(Error::DimensionMismatch {
            expected: format!("index set on a {dims} grid"),
            found: idx.grid.to_string(),
        });
    }
    let (prior_field, payload) = match prior {
        PriorSpec::Uniform => (uniform_prior(dims), PriorPayload::Uniform),
        PriorSpec::InlineSvd(f) => (factors_prior(f, original, opts.clamp_prior)?, PriorPayload::inline(f)),
        PriorSpec::External { name, field } => {
            if field.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dims} prior"),
                    found: field.dims().to_string(),
                });
            }
            (field.clone(), PriorPayload::External { name: name.clone() })
        }
    };

    let kernel = SpectralKernel::with_threads(*idx, opts.solver.fft_threads)?;
    let moments = kernel.moments(&lift(&mirror(original))?)?;

    let scored = run_candidates(opts.jobs, candidates.len(), |i| {
        let start = Instant::now();
        let nu = candidates[i];
        let (psnr, report, failure) = score(original, &moments, &prior_field, nu, opts);
        Candidate {
            nu,
            rank: payload.rank(),
            n1: idx.n1,
            n2: idx.n2,
            psnr,
            report,
            failure,
            seconds: start.elapsed().as_secs_f64(),
        }
    })?;
    let chosen = select_best(&scored).ok_or(Error::NoCandidateConverged)?;
    let container = Container::new(original.dim(), moments, scored[chosen].nu, payload)?;
    Ok(CompressionOutcome {
        container,
        candidates: scored,
        chosen,
    })
}

/// Hybrid moments + SVD compression over every rank `0..=r_max` at rate `cr`.
pub fn compress_hybrid(original: &Image, cr: f64, nu: Nu, opts: &CodecOptions) -> Result<CompressionOutcome> {
    let (p1, p2) = original.dim();
    let r_max = max_rank(cr, p1, p2)?.min(p1.min(p2));
    let ranks: Vec<usize> = (0..=r_max).collect();
    compress_hybrid_ranks(original, cr, nu, &ranks, opts)
}

/// Hybrid compression restricted to the given ranks (`0` means no factors).
pub fn compress_hybrid_ranks(
    original: &Image,
    cr: f64,
    nu: Nu,
    ranks: &[usize],
    opts: &CodecOptions,
) -> Result<CompressionOutcome> {
    if ranks.is_empty() {
        return Err(Error::InvalidConfig("rank list is empty".into()));
    }
    let (p1, p2) = original.dim();
    let dims = original.grid_dims();
    let top = ranks.iter().copied().max().unwrap_or(0);
    let full = if top > 0 {
        Some(svd_factors(original, top)?)
    } else {
        None
    };
    let field = lift(&mirror(original))?;

    let scored = run_candidates(opts.jobs, ranks.len(), |i| {
        let start = Instant::now();
        let rank = ranks[i];
        let mut cand = Candidate {
            nu,
            rank,
            n1: 0,
            n2: 0,
            psnr: None,
            report: None,
            failure: None,
            seconds: 0.0,
        };
        let attempt = || -> Result<_> {
            let (n1, n2) = size_from_rate(cr, p1, p2, rank)?;
            let idx = IndexSet::new(n1, n2, dims)?;
            let kernel = SpectralKernel::with_threads(idx, opts.solver.fft_threads)?;
            let moments = kernel.moments(&field)?;
            let factors = full.as_ref().filter(|_| rank > 0).map(|f| f.truncated(rank));
            let prior = match &factors {
                Some(f) => factors_prior(f, original, opts.clamp_prior)?,
                None => uniform_prior(dims),
            };
            Ok((idx, moments, prior, factors))
        };
        let built = attempt();
        match &built {
            Ok((idx, moments, prior, _)) => {
                cand.n1 = idx.n1;
                cand.n2 = idx.n2;
                let (psnr, report, failure) = score(original, moments, prior, nu, opts);
                cand.psnr = psnr;
                cand.report = report;
                cand.failure = failure;
            }
            Err(e) => cand.failure = Some(e.to_string()),
        }
        cand.seconds = start.elapsed().as_secs_f64();
        (cand, built.ok().map(|(_, m, _, f)| (m, f)))
    })?;

    let (candidates, parts): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let chosen = select_best(&candidates).ok_or(Error::NoCandidateConverged)?;
    let (moments, factors) = parts
        .into_iter()
        .nth(chosen)
        .flatten()
        .expect("scored candidates were built");
    let payload = match &factors {
        Some(f) => PriorPayload::inline(f),
        None => PriorPayload::Uniform,
    };
    let container = Container::new(original.dim(), moments, nu, payload)?;
    Ok(CompressionOutcome {
        container,
        candidates,
        chosen,
    })
}

/// The prior field a container decodes against. `external_prior` is required
/// for external-reference containers.
pub fn decode_prior(container: &Container, external_prior: Option<&GridField>, clamp: bool) -> Result<GridField> {
    let dims = container.index_set().grid;
    match container.prior() {
        PriorPayload::Uniform => Ok(uniform_prior(dims)),
        PriorPayload::InlineSvd { .. } => {
            let factors = container
                .prior()
                .factors()
                .ok_or_else(|| Error::InvalidConfig("container factors are malformed".into()))?;
            prior_from_factors(&factors, dims, clamp)
        }
        PriorPayload::External { name } => {
            let field = external_prior.ok_or_else(|| Error::MissingPrior(name.clone()))?;
            if field.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dims} prior for {name:?}"),
                    found: field.dims().to_string(),
                });
            }
            Ok(field.clone())
        }
    }
}

/// Decode a container. `external_prior` is required for external-reference containers.
pub fn reconstruct(
    container: &Container,
    external_prior: Option<&GridField>,
    opts: &CodecOptions,
) -> Result<Reconstruction> {
    let (p1, p2) = container.image_dim();
    let prior = decode_prior(container, external_prior, opts.clamp_prior)?;
    let sol = solve_dual(container.moments(), &prior, container.nu(), &opts.solver)?;
    let image = unlift(&sol.field, p1, p2)?;
    Ok(Reconstruction {
        image,
        field: sol.field,
        poly: sol.poly,
        report: sol.report,
    })
}
