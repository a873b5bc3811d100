//! Optimal code structure for quantized gradient coding.
//!
//! Each worker `i` carries a cost coefficient `c_i` that combines its
//! straggler probability and quantization noise. The residual-error-minimal
//! unbiased code gives worker `i` a target row mass `Y_i` inversely
//! proportional to `c_i`, realized sparsely by laying the masses out as
//! contiguous segments on the partition axis and reading off overlaps with
//! the unit partition cells. Physical encoding and decoding coefficients are
//! recovered from the effective weights by an arbitrary nonzero per-worker
//! split, which does not affect the error bound.

use crate::error::{Error, Result};
use crate::quantizer::variance_coeff;
use crate::sparse::SparseMatrix;
use crate::straggler::WorkerProfile;
use rand::Rng;

/// Entries of alpha smaller than this are floating-point boundary slivers;
/// they are dropped and their mass folded back into the same column.
const ALPHA_SLIVER: f64 = 1e-12;

/// Per-worker cost coefficient `p/(1-p) + eta * phi/(1-p)`.
///
/// `eta = 1` recovers the plain form `(p + phi) / (1 - p)`; other values
/// rebalance straggler error against quantization error.
pub fn cost_coeff(p: f64, phi_z: f64, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::DegenerateWorker(p));
    }
    if !(eta > 0.0) || phi_z < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "cost_coeff needs eta > 0 and phi >= 0, got eta={eta}, phi={phi_z}"
        )));
    }
    Ok(p / (1.0 - p) + eta * phi_z / (1.0 - p))
}

/// Balancing value of `eta`: mean straggler probability divided by the
/// variance coefficient at the per-worker average bit width.
///
/// Non-integer `z_tot / k` uses the floor. With the returned value,
/// `eta * variance_coeff(z_tot / k, l)` equals the mean of `p`.
pub fn balance_eta(profiles: &[WorkerProfile], z_tot: u64, l: usize) -> Result<f64> {
    let k = profiles.len();
    if z_tot < 2 * k as u64 {
        return Err(Error::InfeasibleBudget { z_tot, k });
    }
    let mean_p = profiles.iter().map(|w| w.p).sum::<f64>() / k as f64;
    let z_avg = (z_tot / k as u64) as u32;
    Ok(mean_p / variance_coeff(z_avg, l)?)
}

/// Optimal row masses `Y_i = c_i^{-1} * n / sum_j c_j^{-1}`.
pub fn target_masses(c: &[f64], n: usize) -> Result<Vec<f64>> {
    if let Some(&bad) = c.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidCost(bad));
    }
    let inv_sum: f64 = c.iter().map(|v| 1.0 / v).sum();
    Ok(c.iter().map(|v| n as f64 / (v * inv_sum)).collect())
}

/// Contiguous-segment construction of the effective-weight matrix.
///
/// Worker `i` owns the segment `[R_{i-1}, R_i]` of cumulative masses on the
/// axis `[0, n]`; `alpha[i][j]` is the overlap of that segment with the unit
/// cell `[j-1, j]` of partition `j`. Row sums equal the masses, column sums
/// equal one, and at most `n + k - 1` entries are nonzero.
pub fn segment_construction(masses: &[f64], n: usize) -> Result<SparseMatrix> {
    let k = masses.len();
    if let Some(&bad) = masses.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidCost(bad));
    }
    let sum: f64 = masses.iter().sum();
    if (sum - n as f64).abs() > 1e-9 {
        return Err(Error::MassMismatch { sum, n });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    let mut dropped: Vec<(usize, f64)> = Vec::new();
    let mut lo = 0.0f64;
    for (i, &mass) in masses.iter().enumerate() {
        let hi = (lo + mass).min(n as f64);
        let j_start = lo.floor() as usize;
        let j_end = (hi.ceil() as usize).min(n);
        for j in j_start..j_end {
            let cell_lo = j as f64;
            let cell_hi = cell_lo + 1.0;
            let overlap = (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0);
            if overlap > ALPHA_SLIVER {
                rows[i].push((j, overlap));
            } else if overlap > 0.0 {
                dropped.push((j, overlap));
            }
        }
        lo = hi;
    }
    let mut alpha = SparseMatrix::from_rows(n, rows);
    // Fold dropped sliver mass into the largest surviving entry of the same
    // column so column sums stay exact.
    for (j, val) in dropped {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..k {
            let v = alpha.get(i, j);
            if v > 0.0 && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        if let Some((i, v)) = best {
            alpha.set(i, j, v + val);
        }
    }
    Ok(alpha)
}

/// A complete code: effective weights, target masses, encoding matrix,
/// decoding vector, and the cost coefficients the structure was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeDesign {
    /// Effective weights `alpha[i][j] = tilde_w[i] * a[i][j]`, k x n.
    pub alpha: SparseMatrix,
    /// Target row masses of `alpha`.
    pub masses: Vec<f64>,
    /// Encoding coefficients, k x n.
    pub a: SparseMatrix,
    /// First-moment decoding coefficients.
    pub w: Vec<f64>,
    /// Effective decoders `(1 - p_i) * w_i`.
    pub tilde_w: Vec<f64>,
    /// Cost coefficients used for the structure; empty for schemes that do
    /// not optimize one.
    pub c: Vec<f64>,
    /// Partition count.
    pub n: usize,
    /// Worker count.
    pub k: usize,
}

impl CodeDesign {
    /// Average number of workers holding each partition.
    pub fn load(&self) -> f64 {
        self.a.nnz() as f64 / self.n as f64
    }

    /// Row sums of the encoding matrix.
    pub fn encoding_row_sums(&self) -> Vec<f64> {
        self.a.row_sums()
    }

    /// Largest deviation of `sum_i (1-p_i) w_i a[i][j]` from one over all
    /// partitions; zero for an unbiased code.
    pub fn unbiasedness_residual(&self, profiles: &[WorkerProfile]) -> f64 {
        let mut col = vec![0.0f64; self.n];
        for (i, j, v) in self.a.iter() {
            col[j] += (1.0 - profiles[i].p) * self.w[i] * v;
        }
        col.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest deviation of `alpha[i][j]` from `tilde_w[i] * a[i][j]`.
    pub fn consistency_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, j, v) in self.a.iter() {
            worst = worst.max((self.alpha.get(i, j) - self.tilde_w[i] * v).abs());
        }
        worst
    }

    /// Wrap an explicit `(A, w)` pair, deriving the effective weights.
    pub fn from_encoding(
        a: SparseMatrix,
        w: Vec<f64>,
        profiles: &[WorkerProfile],
        c: Vec<f64>,
    ) -> Self {
        let k = a.rows();
        let n = a.cols();
        let tilde_w: Vec<f64> = profiles
            .iter()
            .zip(&w)
            .map(|(prof, &wi)| (1.0 - prof.p) * wi)
            .collect();
        let alpha = a.map_rows(|i, _, v| tilde_w[i] * v);
        let masses = alpha.row_sums();
        Self {
            alpha,
            masses,
            a,
            w,
            tilde_w,
            c,
            n,
            k,
        }
    }
}

/// Recover physical coefficients from an effective-weight matrix using the
/// given per-worker split `tilde_w` (each entry must be nonzero).
pub fn realize_code_with_weights(
    alpha: SparseMatrix,
    profiles: &[WorkerProfile],
    c: Vec<f64>,
    tilde_w: Vec<f64>,
) -> Result<CodeDesign> {
    let k = alpha.rows();
    let n = alpha.cols();
    if profiles.len() != k || tilde_w.len() != k {
        return Err(Error::InvalidArgument(format!(
            "expected {k} profiles and weights, got {} and {}",
            profiles.len(),
            tilde_w.len()
        )));
    }
    if tilde_w.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "effective decoders must be nonzero and finite".into(),
        ));
    }
    let a = alpha.map_rows(|i, _, v| v / tilde_w[i]);
    let w: Vec<f64> = profiles
        .iter()
        .zip(&tilde_w)
        .map(|(prof, &tw)| tw / (1.0 - prof.p))
        .collect();
    let masses = alpha.row_sums();
    Ok(CodeDesign {
        alpha,
        masses,
        a,
        w,
        tilde_w,
        c,
        n,
        k,
    })
}

/// Recover physical coefficients with effective decoders drawn uniformly
/// from `[0.5, 1.5]`. Only the structure of `alpha` affects the error bound,
/// so any nonzero draw is valid; bounding away from zero keeps the encoding
/// coefficients well conditioned.
pub fn realize_code<R: Rng + ?Sized>(
    alpha: SparseMatrix,
    profiles: &[WorkerProfile],
    c: Vec<f64>,
    rng: &mut R,
) -> Result<CodeDesign> {
    let tilde_w: Vec<f64> = (0..alpha.rows()).map(|_| rng.gen_range(0.5..1.5)).collect();
    realize_code_with_weights(alpha, profiles, c, tilde_w)
}

/// Closed-form residual error bound `n^2 C / sum_i c_i^{-1}` for an
/// optimally structured code.
pub fn residual_error_bound(c: &[f64], n: usize, grad_bound: f64) -> f64 {
    let inv_sum: f64 = c.iter().map(|v| 1.0 / v).sum();
    (n * n) as f64 * grad_bound / inv_sum
}

/// Bound on the estimator's second moment: `n^2 C (1 + 1 / sum_i c_i^{-1})`.
pub fn estimator_second_moment_bound(c: &[f64], n: usize, grad_bound: f64) -> f64 {
    let inv_sum: f64 = c.iter().map(|v| 1.0 / v).sum();
    (n * n) as f64 * grad_bound * (1.0 + 1.0 / inv_sum)
}

/// Variance-reduced second-moment decoder.
///
/// Minimizes `lambda * Bias(v) + Var(v)` over all decoders; the solution is
/// `v_i = n * lambda / ((p_i + phi_i) * s_i * (1 + lambda * sum_m c_m^{-1}))`
/// with `s_i` the encoding row sum and the sum taken over workers that carry
/// signal. Workers with an empty row get `v_i = 0`. As `lambda` grows, the
/// decoder approaches the unbiased one.
pub fn two_track_decoder(
    design: &CodeDesign,
    p: &[f64],
    phi: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let row_sums = design.a.row_sums();
    let inv_sum: f64 = (0..design.k)
        .filter(|&i| row_sums[i] > 0.0)
        .map(|i| (1.0 - p[i]) / (p[i] + phi[i]))
        .sum();
    let denom = 1.0 + lambda * inv_sum;
    Ok((0..design.k)
        .map(|i| {
            if row_sums[i] > 0.0 {
                design.n as f64 * lambda / ((p[i] + phi[i]) * row_sums[i] * denom)
            } else {
                0.0
            }
        })
        .collect())
}

/// Squared-bias and variance terms of the second-moment decoding objective.
///
/// Bias is the squared sum over partitions of the column residuals
/// `1 - sum_i (1-p_i) v_i a[i][j]`; variance is
/// `sum_i (1-p_i)(p_i + phi_i) v_i^2 s_i^2`.
pub fn second_moment_objective(
    design: &CodeDesign,
    p: &[f64],
    phi: &[f64],
    v: &[f64],
) -> (f64, f64) {
    let mut col = vec![0.0f64; design.n];
    for (i, j, a) in design.a.iter() {
        col[j] += (1.0 - p[i]) * v[i] * a;
    }
    let bias_root: f64 = col.iter().map(|s| 1.0 - s).sum();
    let row_sums = design.a.row_sums();
    let variance: f64 = (0..design.k)
        .map(|i| (1.0 - p[i]) * (p[i] + phi[i]) * v[i] * v[i] * row_sums[i] * row_sums[i])
        .sum();
    (bias_root * bias_root, variance)
}

/// Build the full optimal design for the given profiles, per-worker variance
/// coefficients, and error-balance factor.
pub fn build_optimal_design<R: Rng + ?Sized>(
    profiles: &[WorkerProfile],
    phi: &[f64],
    eta: f64,
    n: usize,
    rng: &mut R,
) -> Result<CodeDesign> {
    let c: Vec<f64> = profiles
        .iter()
        .zip(phi)
        .map(|(w, &ph)| cost_coeff(w.p, ph, eta))
        .collect::<Result<_>>()?;
    let masses = target_masses(&c, n)?;
    let alpha = segment_construction(&masses, n)?;
    realize_code(alpha, profiles, c, rng)
}
