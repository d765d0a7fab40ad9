//! Reference implementations shared by the integration tests. Everything here
//! works from first principles (direct sums, dense linear algebra) and only
//! borrows plain data types from the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use mcc_core::{GridDims, GridField, Image, Nu};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Whole-sample symmetric extension to `2(p1 - 1) x 2(p2 - 1)`.
pub fn mirror_oracle(x: &Array2<f64>) -> Array2<f64> {
    let (p1, p2) = x.dim();
    let (n1, n2) = (2 * (p1 - 1), 2 * (p2 - 1));
    let fold = |i: usize, n: usize, p: usize| if i < p { i } else { n - i };
    Array2::from_shape_fn((n1, n2), |(i, j)| x[[fold(i, n1, p1), fold(j, n2, p2)]])
}

pub fn random_image(rng: &mut ChaCha8Rng, p1: usize, p2: usize) -> Image {
    Image::from_fn(p1, p2, |_| rng.gen()).unwrap()
}

/// Positive double-even field `exp(scale * mirror(u) + shift)` with `u` uniform on `[0, 1]`.
pub fn random_field(rng: &mut ChaCha8Rng, p1: usize, p2: usize, scale: f64, shift: f64) -> GridField {
    let u = Array2::from_shape_fn((p1, p2), |_| rng.gen::<f64>());
    GridField::new(mirror_oracle(&u).mapv(|v| (scale * v + shift).exp())).unwrap()
}

/// Smooth shapes, an edge, a texture and mild noise; values in `[0, 1]`.
pub fn synthetic_image(p1: usize, p2: usize, seed: u64) -> Image {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen(), rng.gen(), rng.gen_range(0.05..0.2), rng.gen_range(-0.4..0.5)))
        .collect();
    let noise = Array2::from_shape_fn((p1, p2), |_| rng.gen_range(-0.02..0.02));
    Image::from_fn(p1, p2, |(i, j)| {
        let (y, x) = (i as f64 / p1 as f64, j as f64 / p2 as f64);
        let mut v = 0.35 + 0.1 * (2.0 * PI * (3.0 * x + 2.0 * y)).sin();
        for &(cy, cx, w, a) in &blobs {
            v += a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp();
        }
        if x > 0.6 && y < 0.45 {
            v += 0.25;
        }
        (v + noise[[i, j]]).clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Quadrant moments by direct summation,
/// `c_k = |N|^-1 Σ_ℓ Φ(ℓ) exp(-2πi (k1 ℓ1 / N1 + k2 ℓ2 / N2))`.
/// Returns the real parts and the largest imaginary part seen.
pub fn direct_moments(field: &Array2<f64>, n1: usize, n2: usize) -> (Array2<f64>, f64) {
    let (g1, g2) = field.dim();
    let total = (g1 * g2) as f64;
    // inner sums over ℓ2 for each row and k2, then over ℓ1
    let mut inner = vec![vec![(0.0, 0.0); n2 + 1]; g1];
    for (l1, row) in inner.iter_mut().enumerate() {
        for (k2, acc) in row.iter_mut().enumerate() {
            for l2 in 0..g2 {
                let t = -2.0 * PI * (k2 * l2) as f64 / g2 as f64;
                acc.0 += field[[l1, l2]] * t.cos();
                acc.1 += field[[l1, l2]] * t.sin();
            }
        }
    }
    let mut imag = 0.0_f64;
    let re = Array2::from_shape_fn((n1 + 1, n2 + 1), |(k1, k2)| {
        let (mut a, mut b) = (0.0, 0.0);
        for (l1, row) in inner.iter().enumerate() {
            let t = -2.0 * PI * (k1 * l1) as f64 / g1 as f64;
            let (c, s) = (t.cos(), t.sin());
            a += row[k2].0 * c - row[k2].1 * s;
            b += row[k2].0 * s + row[k2].1 * c;
        }
        imag = imag.max((b / total).abs());
        a / total
    });
    (re, imag)
}

/// `Q(ℓ) = Σ_{k ∈ Λ} q_|k| exp(2πi (k1 ℓ1 / N1 + k2 ℓ2 / N2))` over the full index set.
pub fn direct_eval(q: &Array2<f64>, dims: GridDims) -> Array2<f64> {
    let (n1, n2) = (q.nrows() - 1, q.ncols() - 1);
    Array2::from_shape_fn((dims.rows, dims.cols), |(l1, l2)| {
        let mut acc = 0.0;
        for k1 in -(n1 as i64)..=n1 as i64 {
            for k2 in -(n2 as i64)..=n2 as i64 {
                let t =
                    2.0 * PI * (k1 as f64 * l1 as f64 / dims.rows as f64 + k2 as f64 * l2 as f64 / dims.cols as f64);
                acc += q[[k1.unsigned_abs() as usize, k2.unsigned_abs() as usize]] * t.cos();
            }
        }
        acc
    })
}

/// Members of the full index set represented by quadrant entry `(k1, k2)`.
pub fn count_of(k1: usize, k2: usize) -> f64 {
    (if k1 == 0 { 1.0 } else { 2.0 }) * (if k2 == 0 { 1.0 } else { 2.0 })
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `10 log10(1 / MSE)`.
pub fn psnr_oracle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mse = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Reconstructed pixels: `clamp(log Φ)` on the leading `p1 x p2` block.
pub fn unlift_oracle(field: &Array2<f64>, p1: usize, p2: usize) -> Array2<f64> {
    Array2::from_shape_fn((p1, p2), |(i, j)| field[[i, j]].ln().clamp(0.0, 1.0))
}

/// Pointwise divergence summand with its first two derivatives in `φ`.
fn summand(phi: f64, psi: f64, nu: Nu) -> (f64, f64, f64) {
    match nu {
        Nu::Finite(1) => (psi * (psi / phi).ln() - psi + phi, 1.0 - psi / phi, psi / (phi * phi)),
        Nu::Finite(v) => {
            let v = f64::from(v);
            let r = (psi / phi).powf(1.0 / v);
            let value = v * v / (1.0 - v) * phi * r + v * phi + v / (v - 1.0) * psi;
            (value, v * (1.0 - r), r / phi)
        }
        Nu::Infinity => (phi * (phi / psi).ln() - phi + psi, (phi / psi).ln(), 1.0 / phi),
    }
}

/// Orthonormal basis of the real linear functionals `Φ ↦ Re c_k, Im c_k`
/// for every `k` in the full index set, as rows.
fn constraint_rows(dims: GridDims, n1: usize, n2: usize) -> DMatrix<f64> {
    let len = dims.rows * dims.cols;
    let mut rows = Vec::new();
    for k1 in -(n1 as i64)..=n1 as i64 {
        for k2 in -(n2 as i64)..=n2 as i64 {
            for part in 0..2 {
                rows.push(DVector::from_fn(len, |l, _| {
                    let (l1, l2) = (l / dims.cols, l % dims.cols);
                    let t = 2.0
                        * PI
                        * (k1 as f64 * l1 as f64 / dims.rows as f64 + k2 as f64 * l2 as f64 / dims.cols as f64);
                    if part == 0 {
                        t.cos()
                    } else {
                        t.sin()
                    }
                }));
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), len, |r, c| rows[r][c]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-9 * top)
        .collect();
    DMatrix::from_fn(keep.len(), len, |r, c| v_t[(keep[r], c)])
}

/// Brute-force primal solution: minimise `Σ_ℓ d_ν(Φ(ℓ), Ψ(ℓ))` over every grid
/// value subject to `Φ` sharing the moments of `target` on the full index set.
/// Equality-constrained Newton from the feasible point `target`, with the KKT
/// system solved densely.
pub fn primal_oracle(target: &Array2<f64>, psi: &Array2<f64>, n1: usize, n2: usize, nu: Nu) -> Array2<f64> {
    let (g1, g2) = target.dim();
    let a = constraint_rows(GridDims::new(g1, g2), n1, n2);
    let m = a.nrows();
    let len = g1 * g2;
    let psi: Vec<f64> = psi.iter().copied().collect();
    let mut phi: Vec<f64> = target.iter().copied().collect();
    let objective = |phi: &[f64]| phi.iter().zip(&psi).map(|(&f, &p)| summand(f, p, nu).0).sum::<f64>();

    for _ in 0..200 {
        let (g, h): (Vec<f64>, Vec<f64>) = phi
            .iter()
            .zip(&psi)
            .map(|(&f, &p)| {
                let (_, d1, d2) = summand(f, p, nu);
                (d1, d2)
            })
            .unzip();
        // [H Aᵀ; A 0] [dx; λ] = [-g; 0]
        let mut kkt = DMatrix::zeros(len + m, len + m);
        let mut rhs = DVector::zeros(len + m);
        for i in 0..len {
            kkt[(i, i)] = h[i];
            rhs[i] = -g[i];
        }
        for r in 0..m {
            for c in 0..len {
                kkt[(len + r, c)] = a[(r, c)];
                kkt[(c, len + r)] = a[(r, c)];
            }
        }
        let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
        let dx: Vec<f64> = sol.iter().take(len).copied().collect();
        let decrement: f64 = dx.iter().zip(&h).map(|(d, hh)| d * d * hh).sum();
        if decrement < 1e-30 {
            break;
        }
        let f0 = objective(&phi);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&dx).map(|(f, d)| f + t * d).collect();
            if trial.iter().all(|&v| v > 0.0) && objective(&trial) <= f0 - 0.25 * t * decrement + 1e-14 * f0.abs() {
                phi = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Array2::from_shape_vec((g1, g2), phi).unwrap();
            }
        }
    }
    Array2::from_shape_vec((g1, g2), phi).unwrap()
}

/// Random feasible quadrant coefficients around `q0` (`min Q >= q0 / 2` for finite `ν`).
pub fn random_poly(rng: &mut ChaCha8Rng, n1: usize, n2: usize, q0: f64, nu: Nu) -> Array2<f64> {
    let mut q: Array2<f64> = Array2::from_shape_fn((n1 + 1, n2 + 1), |_| rng.gen_range(-1.0..1.0));
    q[[0, 0]] = 0.0;
    let spread: f64 = q.indexed_iter().map(|((a, b), v)| count_of(a, b) * v.abs()).sum();
    let budget = if nu.is_infinite() { 1.0 } else { 0.5 * q0.abs() };
    let scale = rng.gen_range(0.2..1.0) * budget / spread.max(1e-300);
    q.mapv_inplace(|v| v * scale);
    q[[0, 0]] = q0;
    q
}
