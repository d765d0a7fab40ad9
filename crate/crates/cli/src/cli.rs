use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mcc_core::codec::{hybrid_rate, max_rank, moments_only_rate, size_from_rate};
use mcc_core::{
    compress_hybrid, compress_hybrid_ranks, compress_sweep_nu, decode_prior, prior_from_similar_image, psnr,
    reconstruct, verify_duality, CodecOptions, CompressionOutcome, Container, GridDims, GridField, IndexSet, Nu,
    PriorPayload, PriorSpec, SolverConfig,
};

use crate::error::{CliError, Result};
use crate::io::{read_image, write_atomic, write_image, ImageFormat};
use crate::report::{
    format_psnr, write_report, CandidateRow, CertificateSummary, CompressReport, ContainerSummary, ReconstructReport,
    SolveSummary,
};

/// Environment variable capping the threads used inside each FFT pass.
pub const FFT_THREADS_VAR: &str = "MCC_FFT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "mcc",
    version,
    about = "Compress grayscale images into trigonometric moments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moments-only compression, keeping the best ν from a candidate list.
    Compress(CompressArgs),
    /// Moments plus a rank-r SVD factor pair at a target compression rate.
    Hybrid(HybridArgs),
    /// Decode a container into an image.
    Reconstruct(ReconstructArgs),
    /// Print the PSNR between two images of equal size.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Stop once every moment is matched to within this tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Moment orders: `N` or `N1,N2`.
    #[arg(long, value_parser = parse_orders, conflicts_with = "cr", required_unless_present = "cr")]
    pub n: Option<(usize, usize)>,
    /// Target compression rate; sizes a square moment set.
    #[arg(long)]
    pub cr: Option<f64>,
    /// Candidate ν values, e.g. `1,2,inf`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub nu: Vec<Nu>,
    /// Similar image whose low-rank approximation is the shared prior.
    #[arg(long)]
    pub prior_image: Option<PathBuf>,
    #[arg(long, default_value_t = 15, requires = "prior_image")]
    pub prior_rank: usize,
    /// Reference stored in the container; defaults to the prior file stem.
    #[arg(long, requires = "prior_image")]
    pub prior_ref: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write a JSON run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Sweep,
    Fixed(usize),
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub cr: f64,
    #[arg(long, default_value = "1")]
    pub nu: Nu,
    /// SVD rank, or `sweep` for every rank the budget allows.
    #[arg(long = "r", value_parser = parse_rank, default_value = "sweep")]
    pub rank: RankChoice,
    /// Use the low-rank product as is instead of clamping it to [0, 1].
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output image, `.pgm` or `.png`.
    #[arg(long)]
    pub out: PathBuf,
    /// Similar image for containers that reference a shared prior.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub prior_rank: usize,
    /// Print the moment residual, min Q and divergence of the solution.
    #[arg(long)]
    pub verify: bool,
    /// Must match the flag used when the container was made.
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub reference: PathBuf,
    pub candidate: PathBuf,
}

fn parse_orders(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<usize>().map_err(|_| format!("{t:?} is not a moment order"));
    match parts.as_slice() {
        [n] => num(n).map(|n| (n, n)),
        [a, b] => Ok((num(a)?, num(b)?)),
        _ => Err(format!("expected N or N1,N2, got {s:?}")),
    }
}

fn parse_rank(s: &str) -> Result<RankChoice, String> {
    if s.eq_ignore_ascii_case("sweep") {
        return Ok(RankChoice::Sweep);
    }
    s.parse()
        .map(RankChoice::Fixed)
        .map_err(|_| format!("expected a rank or \"sweep\", got {s:?}"))
}

fn fft_threads() -> Result<usize> {
    match std::env::var(FFT_THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{FFT_THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(1),
    }
}

fn codec_options(solver: &SolverArgs, jobs: usize, clamp_prior: bool) -> Result<CodecOptions> {
    let cfg = SolverConfig {
        grad_tol: solver.grad_tol,
        max_iter: solver.max_iter,
        fft_threads: fft_threads()?,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(CodecOptions {
        solver: cfg,
        jobs,
        clamp_prior,
        // candidates are judged by the 8-bit image the decoder writes
        score_levels: Some(255),
    })
}

fn shared_prior(path: &Path, rank: usize, dims: GridDims) -> Result<GridField> {
    let similar = read_image(path)?;
    if similar.grid_dims() != dims {
        return Err(CliError::Usage(format!(
            "prior image {} is {}x{}, the image is {}x{}",
            path.display(),
            similar.rows(),
            similar.cols(),
            dims.image_size().0,
            dims.image_size().1
        )));
    }
    Ok(prior_from_similar_image(&similar, rank, dims)?)
}

fn print_candidates(outcome: &CompressionOutcome) {
    for (i, c) in outcome.candidates.iter().enumerate() {
        let mark = if i == outcome.chosen { '*' } else { ' ' };
        let score = match (c.psnr, &c.failure) {
            (Some(p), _) => format_psnr(p),
            (None, Some(why)) => format!("excluded ({why})"),
            (None, None) => "excluded".into(),
        };
        println!(
            "{mark} nu={:<4} r={:<3} n={}x{}  {score}",
            c.nu.to_string(),
            c.rank,
            c.n1,
            c.n2
        );
    }
}

fn container_summary(path: &Path, container: &Container, bytes: usize, rate: f64) -> ContainerSummary {
    let (rows, cols) = container.image_dim();
    let idx = container.index_set();
    ContainerSummary {
        path: path.display().to_string(),
        bytes,
        rows,
        cols,
        n1: idx.n1,
        n2: idx.n2,
        nu: container.nu().to_string(),
        nu_code: container.nu().code(),
        prior_mode: container.prior().mode(),
        rank: container.rank(),
        parameters: container.parameter_count(),
        rate,
    }
}

fn finish_compress(
    command: &'static str,
    input: &Path,
    out: &Path,
    report: Option<&Path>,
    outcome: &CompressionOutcome,
    rate: f64,
    start: Instant,
) -> Result<()> {
    let bytes = outcome.container.serialize();
    write_atomic(out, &bytes)?;
    print_candidates(outcome);
    println!(
        "wrote {} ({} bytes, {} parameters, rate {:.4})",
        out.display(),
        bytes.len(),
        outcome.container.parameter_count(),
        rate
    );
    if let Some(path) = report {
        let doc = CompressReport {
            command,
            input: input.display().to_string(),
            candidates: outcome.candidates.iter().map(CandidateRow::from).collect(),
            chosen: outcome.chosen,
            container: container_summary(out, &outcome.container, bytes.len(), rate),
            seconds: start.elapsed().as_secs_f64(),
        };
        write_report(path, &doc)?;
    }
    Ok(())
}

pub fn compress(args: &CompressArgs) -> Result<()> {
    let start = Instant::now();
    let image = read_image(&args.input)?;
    let (p1, p2) = image.dim();
    let (n1, n2) = match (args.n, args.cr) {
        (Some(n), _) => n,
        (None, Some(cr)) => size_from_rate(cr, p1, p2, 0)?,
        (None, None) => return Err(CliError::Usage("one of --n or --cr is required".into())),
    };
    let idx = IndexSet::new(n1, n2, image.grid_dims())?;
    let opts = codec_options(&args.solver, args.jobs, true)?;
    let prior = match &args.prior_image {
        Some(path) => {
            let name = match &args.prior_ref {
                Some(name) => name.clone(),
                None => path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| CliError::Usage(format!("cannot name prior {}", path.display())))?,
            };
            PriorSpec::External {
                name,
                field: shared_prior(path, args.prior_rank, image.grid_dims())?,
            }
        }
        None => PriorSpec::Uniform,
    };
    let outcome = compress_sweep_nu(&image, &idx, &prior, &args.nu, &opts)?;
    let rate = moments_only_rate(n1, n2, p1, p2);
    finish_compress(
        "compress",
        &args.input,
        &args.out,
        args.report.as_deref(),
        &outcome,
        rate,
        start,
    )
}

pub fn hybrid(args: &HybridArgs) -> Result<()> {
    let start = Instant::now();
    let image = read_image(&args.input)?;
    let (p1, p2) = image.dim();
    let opts = codec_options(&args.solver, args.jobs, !args.no_clamp)?;
    let outcome = match args.rank {
        RankChoice::Sweep => compress_hybrid(&image, args.cr, args.nu, &opts)?,
        RankChoice::Fixed(r) => {
            let r_max = max_rank(args.cr, p1, p2)?;
            if r > r_max || r > p1.min(p2) {
                return Err(CliError::Usage(format!(
                    "rank {r} does not fit rate {}: at most {} for a {p1}x{p2} image",
                    args.cr,
                    r_max.min(p1.min(p2))
                )));
            }
            size_from_rate(args.cr, p1, p2, r)?;
            compress_hybrid_ranks(&image, args.cr, args.nu, &[r], &opts)?
        }
    };
    let chosen = outcome.chosen();
    let rate = hybrid_rate(chosen.n1, chosen.n2, p1, p2, chosen.rank);
    finish_compress(
        "hybrid",
        &args.input,
        &args.out,
        args.report.as_deref(),
        &outcome,
        rate,
        start,
    )
}

pub fn reconstruct_cmd(args: &ReconstructArgs) -> Result<()> {
    let start = Instant::now();
    if ImageFormat::from_path(&args.out).is_none() {
        return Err(CliError::Usage(format!(
            "{}: output must end in .pgm or .png",
            args.out.display()
        )));
    }
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let container = Container::deserialize(&bytes)?;
    let dims = container.index_set().grid;
    let external = match (container.prior(), &args.prior) {
        (PriorPayload::External { .. }, Some(path)) => Some(shared_prior(path, args.prior_rank, dims)?),
        (PriorPayload::External { name }, None) => {
            return Err(CliError::Usage(format!(
                "container references shared prior {name:?}; pass it with --prior"
            )))
        }
        (_, Some(path)) => {
            eprintln!("mcc: container carries its own prior; ignoring {}", path.display());
            None
        }
        (_, None) => None,
    };
    let opts = codec_options(&args.solver, 1, !args.no_clamp)?;
    let rec = reconstruct(&container, external.as_ref(), &opts)?;
    if !rec.report.converged {
        return Err(CliError::NotConverged(format!(
            "residual {:.3e} after {} iterations",
            rec.report.final_residual, rec.report.iterations
        )));
    }
    write_image(&args.out, &rec.image)?;
    println!(
        "wrote {} ({}x{}, nu={}, {} Newton steps, residual {:.3e})",
        args.out.display(),
        rec.image.rows(),
        rec.image.cols(),
        container.nu(),
        rec.report.iterations,
        rec.report.final_residual
    );

    let certificate = if args.verify {
        let prior = decode_prior(&container, external.as_ref(), opts.clamp_prior)?;
        let cert = verify_duality(&rec.poly, container.moments(), &prior, container.nu())?;
        println!("moment residual: {:.3e}", cert.moment_residual);
        println!("min Q: {:.6e}", cert.min_q);
        println!("divergence: {:.6e}", cert.divergence);
        Some(cert)
    } else {
        None
    };
    if let Some(path) = &args.report {
        let doc = ReconstructReport {
            command: "reconstruct",
            input: args.input.display().to_string(),
            output: args.out.display().to_string(),
            nu: container.nu().to_string(),
            solve: SolveSummary::from(&rec.report),
            residual_history: rec.report.residual_history.clone(),
            certificate: certificate.as_ref().map(CertificateSummary::from),
            seconds: start.elapsed().as_secs_f64(),
        };
        write_report(path, &doc)?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let a = read_image(&args.reference)?;
    let b = read_image(&args.candidate)?;
    println!("{}", format_psnr(psnr(&a, &b)?));
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Compress(a) => compress(a),
        Command::Hybrid(a) => hybrid(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Eval(a) => eval(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn order_and_rank_tokens() {
        assert_eq!(parse_orders("8"), Ok((8, 8)));
        assert_eq!(parse_orders("8, 5"), Ok((8, 5)));
        assert!(parse_orders("8,5,2").is_err());
        assert!(parse_orders("x").is_err());
        assert_eq!(parse_rank("sweep"), Ok(RankChoice::Sweep));
        assert_eq!(parse_rank("3"), Ok(RankChoice::Fixed(3)));
        assert!(parse_rank("-1").is_err());
    }

    #[test]
    fn nu_lists_parse() {
        let cli = Cli::try_parse_from([
            "mcc", "compress", "--input", "a.pgm", "--out", "a.mcc", "--n", "4", "--nu", "1,inf,3",
        ])
        .unwrap();
        let Command::Compress(args) = cli.command else { panic!() };
        assert_eq!(args.nu, vec![Nu::Finite(1), Nu::Infinity, Nu::Finite(3)]);
        assert!(
            Cli::try_parse_from(["mcc", "compress", "--input", "a", "--out", "b", "--n", "4", "--cr", "0.9"]).is_err()
        );
        assert!(Cli::try_parse_from(["mcc", "compress", "--input", "a", "--out", "b"]).is_err());
        assert!(
            Cli::try_parse_from(["mcc", "compress", "--input", "a", "--out", "b", "--n", "4", "--nu", "0"]).is_err()
        );
    }
}
