//! JSON run reports.
//!
//! PSNR values are numbers, except a perfect reconstruction which is the
//! string `"inf"`; an excluded candidate has `null`.

use std::path::Path;

use mcc_core::{Candidate, DualityCertificate, SolveReport};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::io::write_atomic;

pub fn psnr_value(psnr: Option<f64>) -> Value {
    match psnr {
        Some(p) if p.is_infinite() => Value::String("inf".into()),
        Some(p) => serde_json::Number::from_f64(p).map_or(Value::Null, Value::Number),
        None => Value::Null,
    }
}

/// `"inf"` or `"12.345 dB"`.
pub fn format_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.3} dB")
    }
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub residual: f64,
    pub dual_value: f64,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            cg_iterations: r.cg_iterations,
            residual: r.final_residual,
            dual_value: r.final_dual_value,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CandidateRow {
    pub nu: String,
    pub rank: usize,
    pub n1: usize,
    pub n2: usize,
    pub psnr: Value,
    pub solve: Option<SolveSummary>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl From<&Candidate> for CandidateRow {
    fn from(c: &Candidate) -> Self {
        Self {
            nu: c.nu.to_string(),
            rank: c.rank,
            n1: c.n1,
            n2: c.n2,
            psnr: psnr_value(c.psnr),
            solve: c.report.as_ref().map(SolveSummary::from),
            error: c.failure.clone(),
            seconds: c.seconds,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ContainerSummary {
    pub path: String,
    pub bytes: usize,
    pub rows: usize,
    pub cols: usize,
    pub n1: usize,
    pub n2: usize,
    pub nu: String,
    pub nu_code: u16,
    pub prior_mode: u8,
    pub rank: usize,
    pub parameters: usize,
    pub rate: f64,
}

#[derive(Debug, Serialize)]
pub struct CompressReport {
    pub command: &'static str,
    pub input: String,
    pub candidates: Vec<CandidateRow>,
    pub chosen: usize,
    pub container: ContainerSummary,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct CertificateSummary {
    pub moment_residual: f64,
    pub min_q: f64,
    pub divergence: f64,
}

impl From<&DualityCertificate> for CertificateSummary {
    fn from(c: &DualityCertificate) -> Self {
        Self {
            moment_residual: c.moment_residual,
            min_q: c.min_q,
            divergence: c.divergence,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReconstructReport {
    pub command: &'static str,
    pub input: String,
    pub output: String,
    pub nu: String,
    pub solve: SolveSummary,
    pub residual_history: Vec<f64>,
    pub certificate: Option<CertificateSummary>,
    pub seconds: f64,
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(format!("report: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
