//! Compression-rate bookkeeping.
//!
//! Moments-only containers count `(n1 + 1)(n2 + 1) + 1` stored parameters
//! (the extra one is `ν`); hybrid containers count
//! `(n1 + 1)(n2 + 1) + (p1 + p2) r`. Square sizing for a target rate solves
//! the hybrid count for `n1 = n2`.

use crate::{Error, Result};

fn check_rate(cr: f64, p1: usize, p2: usize) -> Result<()> {
    if !(cr > 0.0 && cr < 1.0) {
        return Err(Error::InfeasibleBudget(format!("rate {cr} must lie in (0, 1)")));
    }
    if p1 < 2 || p2 < 2 {
        return Err(Error::InfeasibleBudget(format!("image {p1}x{p2} is smaller than 2x2")));
    }
    Ok(())
}

fn radicand(cr: f64, p1: usize, p2: usize, rank: usize) -> f64 {
    (1.0 - cr) * (p1 * p2) as f64 - ((p1 + p2) * rank) as f64
}

/// `n1 = n2 = round(sqrt((1 - cr) p1 p2 - (p1 + p2) r))`.
pub fn size_from_rate(cr: f64, p1: usize, p2: usize, rank: usize) -> Result<(usize, usize)> {
    check_rate(cr, p1, p2)?;
    let rad = radicand(cr, p1, p2, rank);
    if rad < 0.0 {
        return Err(Error::InfeasibleBudget(format!(
            "rank {rank} leaves no room for moments at rate {cr}"
        )));
    }
    let n = rad.sqrt().round() as usize;
    // 2n < 2(p - 1)
    if n + 1 >= p1 || n + 1 >= p2 {
        return Err(Error::InfeasibleBudget(format!(
            "rate {cr} asks for n = {n}, too many moments for a {p1}x{p2} image"
        )));
    }
    Ok((n, n))
}

/// Largest rank whose sizing radicand is nonnegative.
pub fn max_rank(cr: f64, p1: usize, p2: usize) -> Result<usize> {
    check_rate(cr, p1, p2)?;
    if radicand(cr, p1, p2, 0) < 0.0 {
        return Err(Error::InfeasibleBudget(format!("rate {cr} is infeasible")));
    }
    let mut r = ((1.0 - cr) * (p1 * p2) as f64 / (p1 + p2) as f64).floor() as usize;
    while r > 0 && radicand(cr, p1, p2, r) < 0.0 {
        r -= 1;
    }
    while radicand(cr, p1, p2, r + 1) >= 0.0 {
        r += 1;
    }
    Ok(r)
}

/// Rate of a moments-only container, counting the stored `ν`.
pub fn moments_only_rate(n1: usize, n2: usize, p1: usize, p2: usize) -> f64 {
    1.0 - ((n1 + 1) * (n2 + 1) + 1) as f64 / (p1 * p2) as f64
}

/// Rate of a hybrid container.
pub fn hybrid_rate(n1: usize, n2: usize, p1: usize, p2: usize, rank: usize) -> f64 {
    1.0 - ((p1 + p2) * rank + (n1 + 1) * (n2 + 1)) as f64 / (p1 * p2) as f64
}

/// A target rate resolved to concrete sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBudget {
    pub cr: f64,
    pub p1: usize,
    pub p2: usize,
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
}

impl RateBudget {
    pub fn new(cr: f64, p1: usize, p2: usize, rank: usize) -> Result<Self> {
        let (n1, n2) = size_from_rate(cr, p1, p2, rank)?;
        Ok(Self {
            cr,
            p1,
            p2,
            n1,
            n2,
            rank,
        })
    }

    /// Rate actually achieved after rounding `n`.
    pub fn achieved_rate(&self) -> f64 {
        hybrid_rate(self.n1, self.n2, self.p1, self.p2, self.rank)
    }
}
