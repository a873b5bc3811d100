//! Residual-bit allocation across heterogeneous workers.
//!
//! Every worker needs two mandatory bits per coordinate (sign plus one
//! magnitude bit); the residual budget `Z_res = Z_tot - 2k` is distributed to
//! maximize the separable utility `F(r) = sum_i h_i(r_i)` with
//! `h_i(r) = (1 - p_i) / (p_i + phi(r + 2))`. The module provides an exact
//! dynamic program, an exhaustive oracle for validating it, and a
//! low-complexity hybrid that combines a water-filling relaxation, equal
//! splits over the most reliable workers, and one-bit local search.

use crate::error::{Error, Result};
use crate::straggler::WorkerProfile;

/// An integer residual-bit allocation and its utility value.
#[derive(Debug, Clone, PartialEq)]
pub struct BitAllocation {
    /// Residual bits per worker, in profile order.
    pub r: Vec<u32>,
    /// The residual budget the allocation exhausts.
    pub z_res: u32,
    /// Utility `F(r)` of the allocation.
    pub objective: f64,
}

impl BitAllocation {
    /// Per-worker bit widths `z_i = r_i + 2`.
    pub fn bit_widths(&self) -> Vec<u32> {
        self.r.iter().map(|&r| r + 2).collect()
    }
}

/// Worker utility `h(r) = (1 - p) / (p + phi(r + 2))`.
///
/// Strictly increasing in `r` and strictly decreasing in `p`.
pub fn utility(p: f64, r: u32, l: usize) -> f64 {
    (1.0 - p) / (p + phi_cont(r as f64, l))
}

/// Marginal gain of one more residual bit, `h(r+1) - h(r)`.
pub fn marginal_gain(p: f64, r: u32, l: usize) -> f64 {
    utility(p, r + 1, l) - utility(p, r, l)
}

/// `phi(r + 2)` extended to real `r`: `l / (4 (2^(r+1) - 1)^2)`.
fn phi_cont(r: f64, l: usize) -> f64 {
    let q = (r + 1.0).exp2() - 1.0;
    l as f64 / (4.0 * q * q)
}

/// Utility lookup table `h[i][r]` for `r` in `0..=z_res + 1`. The level
/// count follows `q(r+1) = 2 q(r) + 1`, so the table needs no
/// exponentiation.
fn utility_table(profiles: &[WorkerProfile], l: usize, z_res: u32) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .map(|w| {
            let mut q = 1.0f64;
            (0..=z_res + 1)
                .map(|_| {
                    let h = (1.0 - w.p) / (w.p + l as f64 / (4.0 * q * q));
                    q = 2.0 * q + 1.0;
                    h
                })
                .collect()
        })
        .collect()
}

fn objective_from_table(table: &[Vec<f64>], r: &[u32]) -> f64 {
    r.iter()
        .enumerate()
        .map(|(i, &ri)| table[i][ri as usize])
        .sum()
}

/// Recompute `F(r)` from scratch.
pub fn objective_of(profiles: &[WorkerProfile], l: usize, r: &[u32]) -> f64 {
    r.iter()
        .zip(profiles)
        .map(|(&ri, w)| utility(w.p, ri, l))
        .sum()
}

/// Exact solver via dynamic programming over `V[i][r]`, the best utility of
/// the first `i` workers under budget `r`.
///
/// Runs in `O(k * z_res^2)` time and `O(k * z_res)` space for the
/// backpointers. Ties in the inner maximization break toward the smallest
/// per-worker allocation, so results are deterministic.
pub fn dp_allocate(profiles: &[WorkerProfile], l: usize, z_res: u32) -> BitAllocation {
    let k = profiles.len();
    let budget = z_res as usize;
    let table = utility_table(profiles, l, z_res);

    let mut prev = vec![f64::NEG_INFINITY; budget + 1];
    prev[0] = 0.0;
    let mut cur = vec![f64::NEG_INFINITY; budget + 1];
    let mut back = vec![vec![0u32; budget + 1]; k];

    for i in 0..k {
        let h = &table[i];
        for r in 0..=budget {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0u32;
            for a in 0..=r {
                let base = prev[r - a];
                if base == f64::NEG_INFINITY {
                    continue;
                }
                let v = base + h[a];
                if v > best {
                    best = v;
                    best_a = a as u32;
                }
            }
            cur[r] = best;
            back[i][r] = best_a;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut r = vec![0u32; k];
    let mut remaining = budget;
    for i in (0..k).rev() {
        let a = back[i][remaining];
        r[i] = a;
        remaining -= a as usize;
    }
    debug_assert_eq!(remaining, 0);
    let objective = objective_from_table(&table, &r);
    BitAllocation { r, z_res, objective }
}

/// Global optimum by enumerating every weak composition of the budget.
/// Only feasible for small instances; the composition count is guarded.
pub fn exhaustive_oracle(
    profiles: &[WorkerProfile],
    l: usize,
    z_res: u32,
) -> Result<BitAllocation> {
    const LIMIT: f64 = 1e7;
    let k = profiles.len();
    let compositions = binomial(z_res as u64 + k as u64 - 1, k as u64 - 1);
    if compositions > LIMIT {
        return Err(Error::InstanceTooLarge {
            compositions,
            limit: LIMIT,
        });
    }
    let table = utility_table(profiles, l, z_res);
    let mut best_r = vec![0u32; k];
    let mut best_f = f64::NEG_INFINITY;
    let mut current = vec![0u32; k];
    enumerate(&table, 0, z_res, 0.0, &mut current, &mut best_f, &mut best_r);
    Ok(BitAllocation {
        r: best_r,
        z_res,
        objective: best_f,
    })
}

fn enumerate(
    table: &[Vec<f64>],
    i: usize,
    remaining: u32,
    acc: f64,
    current: &mut Vec<u32>,
    best_f: &mut f64,
    best_r: &mut Vec<u32>,
) {
    if i + 1 == table.len() {
        let f = acc + table[i][remaining as usize];
        if f > *best_f {
            *best_f = f;
            current[i] = remaining;
            best_r.copy_from_slice(current);
        }
        return;
    }
    for a in 0..=remaining {
        current[i] = a;
        enumerate(
            table,
            i + 1,
            remaining - a,
            acc + table[i][a as usize],
            current,
            best_f,
            best_r,
        );
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k.min(n));
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
        if acc > 1e18 {
            return acc;
        }
    }
    acc
}

/// Continuous slope of the utility in `r`, written with `y = 2^(r+1)` and
/// `q = y - 1` as `8 l ln2 (1-p) y q / (4 p q^2 + l)^2`.
struct SlopeCurve {
    coeff: f64,
    p4: f64,
    l: f64,
    peak_r: f64,
    slope_peak: f64,
    slope_budget: f64,
    slope_zero: f64,
}

impl SlopeCurve {
    fn new(p: f64, l: usize, budget: f64) -> Self {
        let mut curve = Self {
            coeff: 8.0 * l as f64 * std::f64::consts::LN_2 * (1.0 - p),
            p4: 4.0 * p,
            l: l as f64,
            peak_r: 0.0,
            slope_peak: 0.0,
            slope_budget: 0.0,
            slope_zero: 0.0,
        };
        // The slope peaks where its log-derivative vanishes, which in
        // q = 2^(r+1) - 1 is the cubic 2 p4 q^3 + 3 p4 q^2 - 2 l q - l = 0;
        // a few Newton steps from q = sqrt(l / p4) pin it down without any
        // exponentials.
        curve.peak_r = if curve.p4 <= 1e-12 {
            budget
        } else {
            let lf = curve.l;
            let mut q = (lf / curve.p4).sqrt().max(1.0);
            for _ in 0..24 {
                let g = 2.0 * curve.p4 * q * q * q + 3.0 * curve.p4 * q * q - 2.0 * lf * q - lf;
                let dg = 6.0 * curve.p4 * q * q + 6.0 * curve.p4 * q - 2.0 * lf;
                let next = q - g / dg;
                if !next.is_finite() || next <= 0.0 {
                    break;
                }
                let done = (next - q).abs() <= 1e-9 * q;
                q = next;
                if done {
                    break;
                }
            }
            ((q + 1.0).log2() - 1.0).clamp(0.0, budget)
        };
        curve.slope_peak = curve.slope(curve.peak_r);
        curve.slope_budget = curve.slope(budget);
        curve.slope_zero = curve.slope(0.0);
        curve
    }

    #[inline]
    fn slope(&self, r: f64) -> f64 {
        let y = (r + 1.0).exp2();
        let q = y - 1.0;
        let d = self.p4 * q * q + self.l;
        self.coeff * y * q / (d * d)
    }

    /// Slope and its logarithmic derivative in one evaluation (a single
    /// reciprocal serves both).
    #[inline]
    fn slope_with_logderiv(&self, r: f64) -> (f64, f64) {
        let y = (r + 1.0).exp2();
        let q = y - 1.0;
        let d = self.p4 * q * q + self.l;
        let inv = 1.0 / (q * d);
        let s = self.coeff * y * q * (q * inv) * (q * inv);
        let dln = std::f64::consts::LN_2 * (1.0 + y * d * inv - 4.0 * self.p4 * q * q * y * inv);
        (s, dln)
    }

    /// Largest `r` in `[0, budget]` whose slope still reaches `lambda`,
    /// clamped to zero when even the peak falls short. Bracket-protected
    /// Newton on the decreasing branch, warm-started from the caller's
    /// previous solution; `bracket` carries the caller's accumulated bounds
    /// on the root so refinement work is shared across calls.
    fn allocation_at(
        &self,
        lambda: f64,
        budget: f64,
        bracket: (f64, f64),
        tol_r: f64,
        warm: &mut f64,
    ) -> f64 {
        if lambda <= self.slope_budget {
            return budget;
        }
        if lambda >= self.slope_peak {
            return 0.0;
        }
        let mut lo = bracket.0.max(self.peak_r);
        let mut hi = bracket.1.min(budget);
        if hi < lo {
            hi = lo;
        }
        let mut r = warm.clamp(lo, hi);
        for _ in 0..40 {
            let (s, dln) = self.slope_with_logderiv(r);
            if s >= lambda {
                lo = r;
            } else {
                hi = r;
            }
            if (s - lambda).abs() <= 1e-4 * lambda || hi - lo <= tol_r {
                break;
            }
            // Newton step on s(r) - lambda; s' = s * dln.
            let next = r - (s - lambda) / (s * dln);
            r = if next.is_finite() && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        let out = 0.5 * (lo + hi);
        *warm = out;
        out
    }
}

/// Water level bisection over precomputed curves. Returns the continuous
/// allocation, or `None` when the bracket fails to enclose the budget.
///
/// The spec'd bracket is `[min_i slope(budget), max_i slope(0)]`, bisected
/// for 60 iterations. Per-worker allocations are monotone in the water
/// level, so each worker carries a shrinking interval and stops being
/// re-solved once its interval is narrower than the rounding can see.
fn lagrangian_core(curves: &[SlopeCurve], budget: u32) -> Option<Vec<f64>> {
    let b = budget as f64;
    let lambda_hi = curves.iter().map(|c| c.slope_zero).fold(0.0, f64::max);
    let mut warm: Vec<f64> = curves.iter().map(|c| c.peak_r).collect();
    let probe: Vec<f64> = curves
        .iter()
        .zip(&mut warm)
        .map(|(c, w)| c.allocation_at(lambda_hi, b, (0.0, b), 1e-2, w))
        .collect();
    let mut scratch = WaterfillScratch::default();
    lagrangian_core_with_probe(curves, budget, lambda_hi, &probe, &warm, &mut scratch)
}

/// The bisection body, with the allocations at the top of the lambda
/// bracket supplied by the caller (they depend only on the most reliable
/// worker, so prefix sweeps can share them).
fn lagrangian_core_with_probe(
    curves: &[SlopeCurve],
    budget: u32,
    lambda_hi: f64,
    probe: &[f64],
    warm_init: &[f64],
    scratch: &mut WaterfillScratch,
) -> Option<Vec<f64>> {
    let kappa = curves.len();
    let b = budget as f64;
    if budget == 0 {
        return Some(vec![0.0; kappa]);
    }
    if kappa == 1 {
        return Some(vec![b]);
    }
    let lambda_lo = curves
        .iter()
        .map(|c| c.slope_budget)
        .fold(f64::INFINITY, f64::min);

    // At lambda_lo every slope(budget) clears the level, so the upper end of
    // the bracket is kappa * budget >= budget by construction; the probe
    // checks the lower end.
    if probe.iter().sum::<f64>() > b {
        return None;
    }
    scratch.reset(kappa, probe, warm_init, b);
    let WaterfillScratch {
        warm,
        r_min,
        r_max,
        fresh,
        active,
    } = scratch;

    // Coarser than anything largest-remainder rounding can distinguish; the
    // one-bit local search cleans up the last fractions regardless. Workers
    // whose interval has collapsed leave the active list, and the loop ends
    // early once the water level itself is pinned to the same resolution.
    const FREEZE: f64 = 1e-3;
    let mut frozen_sum = 0.0f64;
    let mut out: Vec<f64> = vec![f64::NAN; kappa];
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let mut sum = frozen_sum;
        for &i in active.iter() {
            let v = curves[i].allocation_at(mid, b, (r_min[i], r_max[i]), 3e-4, &mut warm[i]);
            fresh[i] = v;
            sum += v;
        }
        if sum >= b {
            lo = mid;
            for &i in active.iter() {
                r_max[i] = fresh[i];
            }
        } else {
            hi = mid;
            for &i in active.iter() {
                r_min[i] = fresh[i];
            }
        }
        active.retain(|&i| {
            if r_max[i] - r_min[i] <= FREEZE {
                let v = 0.5 * (r_min[i] + r_max[i]);
                out[i] = v;
                frozen_sum += v;
                false
            } else {
                true
            }
        });
        if active.is_empty() || hi - lo <= 1e-3 * lo {
            break;
        }
    }
    for &i in active.iter() {
        out[i] = curves[i].allocation_at(lo, b, (r_min[i], r_max[i]), 3e-4, &mut warm[i]);
    }
    Some(out)
}

/// Reusable buffers for the water-level bisection.
#[derive(Default)]
struct WaterfillScratch {
    warm: Vec<f64>,
    r_min: Vec<f64>,
    r_max: Vec<f64>,
    fresh: Vec<f64>,
    active: Vec<usize>,
}

impl WaterfillScratch {
    /// Reset interval state for a new sweep. Warm starts persist across
    /// sweeps: consecutive active sets have nearby water levels, so the
    /// previous sweep's roots are excellent initial guesses.
    fn reset(&mut self, kappa: usize, probe: &[f64], warm_init: &[f64], b: f64) {
        if self.warm.len() > kappa {
            self.warm.truncate(kappa);
        } else {
            let start = self.warm.len();
            self.warm.extend_from_slice(&warm_init[start..kappa]);
        }
        self.r_min.clear();
        self.r_min.extend_from_slice(probe);
        self.r_max.clear();
        self.r_max.resize(kappa, b);
        self.fresh.clear();
        self.fresh.resize(kappa, 0.0);
        self.active.clear();
        self.active.extend(0..kappa);
    }
}

/// Water-filling allocation over `subset` (indices into `profiles`) via the
/// continuous relaxation: bisect the water level `lambda` for 60 iterations
/// between the smallest end-of-budget slope and the largest zero-bit slope,
/// then round by largest remainder. Returns the integer allocation (aligned
/// with `subset`) and whether the bracket failed and the equal split was
/// used instead.
pub fn lagrangian_allocate(
    subset: &[usize],
    profiles: &[WorkerProfile],
    l: usize,
    budget: u32,
) -> (Vec<u32>, bool) {
    let kappa = subset.len();
    assert!(kappa > 0, "subset must be nonempty");
    let b = budget as f64;
    let curves: Vec<SlopeCurve> = subset
        .iter()
        .map(|&i| SlopeCurve::new(profiles[i].p, l, b))
        .collect();
    match lagrangian_core(&curves, budget) {
        Some(cont) => (round_to_budget(&cont, subset, profiles, l, budget), false),
        None => (equal_allocate(subset, budget), true),
    }
}

/// Largest-remainder rounding to an exact integer budget, with any leftover
/// deficit or surplus fixed one bit at a time at the worker with the best
/// marginal gain (or smallest marginal loss).
fn round_to_budget(
    cont: &[f64],
    subset: &[usize],
    profiles: &[WorkerProfile],
    l: usize,
    budget: u32,
) -> Vec<u32> {
    let kappa = cont.len();
    let mut r: Vec<u32> = cont.iter().map(|&x| x.floor() as u32).collect();
    let mut assigned: u32 = r.iter().sum();

    if assigned < budget {
        let mut order: Vec<usize> = (0..kappa).collect();
        order.sort_by(|&a, &b| {
            let ra = cont[a] - cont[a].floor();
            let rb = cont[b] - cont[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &pos in order.iter().take((budget - assigned) as usize) {
            r[pos] += 1;
            assigned += 1;
        }
    }
    while assigned < budget {
        let best = (0..kappa)
            .max_by(|&a, &b| {
                let ga = marginal_gain(profiles[subset[a]].p, r[a], l);
                let gb = marginal_gain(profiles[subset[b]].p, r[b], l);
                ga.partial_cmp(&gb).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        r[best] += 1;
        assigned += 1;
    }
    while assigned > budget {
        let best = (0..kappa)
            .filter(|&i| r[i] >= 1)
            .min_by(|&a, &b| {
                let la = marginal_gain(profiles[subset[a]].p, r[a] - 1, l);
                let lb = marginal_gain(profiles[subset[b]].p, r[b] - 1, l);
                la.partial_cmp(&lb).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        r[best] -= 1;
        assigned -= 1;
    }
    r
}

/// Uniform split over a subset: the first `budget mod kappa` workers in the
/// given order receive the ceiling, the rest the floor.
pub fn equal_allocate(subset: &[usize], budget: u32) -> Vec<u32> {
    let kappa = subset.len() as u32;
    let base = budget / kappa;
    let extra = (budget % kappa) as usize;
    (0..subset.len())
        .map(|pos| base + u32::from(pos < extra))
        .collect()
}

/// Steepest-ascent one-bit swaps until no swap strictly improves `F`.
///
/// A swap moves one bit from a donor with `r >= 1` to any other worker and
/// is accepted only for strictly positive gain, so `F` never decreases and
/// the loop terminates; a hard cap of `10 * k * z_res` rounds guards the
/// worst case.
pub fn local_search_refine(r: &[u32], profiles: &[WorkerProfile], l: usize) -> Vec<u32> {
    let z_res: u32 = r.iter().sum();
    let table = utility_table(profiles, l, z_res);
    local_search_with_table(r, &table)
}

fn local_search_with_table(r: &[u32], table: &[Vec<f64>]) -> Vec<u32> {
    let mut out = r.to_vec();
    let k = table.len();
    let mut up = vec![0.0; k];
    let mut down = vec![0.0; k];
    local_search_in_place(&mut out, table, &mut up, &mut down);
    out
}

/// The swap loop itself, reusing caller-provided gain buffers.
fn local_search_in_place(r: &mut [u32], table: &[Vec<f64>], up: &mut [f64], down: &mut [f64]) {
    let k = table.len();
    let z_res: u32 = r.iter().sum();
    if k < 2 || z_res == 0 {
        return;
    }
    for i in 0..k {
        up[i] = table[i][r[i] as usize + 1] - table[i][r[i] as usize];
        down[i] = if r[i] >= 1 {
            table[i][r[i] as usize - 1] - table[i][r[i] as usize]
        } else {
            f64::NEG_INFINITY
        };
    }

    let cap = 10 * k * z_res as usize;
    for _ in 0..cap {
        // Top-two receivers and donors are enough to find the best pair with
        // distinct indices.
        let ((rc1, rc2), (dn1, dn2)) = top_two_pair(&up, &down);
        let candidates = [(rc1, dn1), (rc1, dn2), (rc2, dn1)];
        let mut best: Option<(usize, usize, f64)> = None;
        for &(i, j) in &candidates {
            if i == usize::MAX || j == usize::MAX || i == j {
                continue;
            }
            let gain = up[i] + down[j];
            if gain > best.map_or(0.0, |(_, _, g)| g) {
                best = Some((i, j, gain));
            }
        }
        let Some((i, j, _)) = best else { break };
        r[i] += 1;
        r[j] -= 1;
        for idx in [i, j] {
            let ri = r[idx] as usize;
            up[idx] = table[idx][ri + 1] - table[idx][ri];
            down[idx] = if ri >= 1 {
                table[idx][ri - 1] - table[idx][ri]
            } else {
                f64::NEG_INFINITY
            };
        }
    }
}

fn top_two_pair(up: &[f64], down: &[f64]) -> ((usize, usize), (usize, usize)) {
    let (mut u1, mut u2) = (usize::MAX, usize::MAX);
    let (mut d1, mut d2) = (usize::MAX, usize::MAX);
    for i in 0..up.len() {
        let v = up[i];
        if v != f64::NEG_INFINITY {
            if u1 == usize::MAX || v > up[u1] {
                u2 = u1;
                u1 = i;
            } else if u2 == usize::MAX || v > up[u2] {
                u2 = i;
            }
        }
        let w = down[i];
        if w != f64::NEG_INFINITY {
            if d1 == usize::MAX || w > down[d1] {
                d2 = d1;
                d1 = i;
            } else if d2 == usize::MAX || w > down[d2] {
                d2 = i;
            }
        }
    }
    ((u1, u2), (d1, d2))
}

/// Low-complexity hybrid allocation.
///
/// Workers are sorted by reliability; for every active-set size `kappa` the
/// water-filling and equal-split candidates over the top `kappa` workers are
/// computed, the better one refined by one-bit local search, and the best
/// refined candidate across all `kappa` returned (smallest `kappa` wins
/// ties). Workers outside the active set keep the mandatory two bits.
pub fn proposed_allocate(profiles: &[WorkerProfile], l: usize, z_res: u32) -> BitAllocation {
    let k = profiles.len();
    let table = utility_table(profiles, l, z_res);
    if z_res == 0 || k == 0 {
        let r = vec![0u32; k];
        let objective = objective_from_table(&table, &r);
        return BitAllocation { r, z_res, objective };
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        profiles[a]
            .p
            .partial_cmp(&profiles[b].p)
            .unwrap()
            .then(a.cmp(&b))
    });

    let kappa_max = k.min(z_res as usize);
    // The slope curves depend only on (p, budget), so they are shared by
    // every active-set prefix.
    let curves: Vec<SlopeCurve> = order
        .iter()
        .map(|&i| SlopeCurve::new(profiles[i].p, l, z_res as f64))
        .collect();
    // The most reliable worker has the largest zero-bit slope, so the top
    // of the water-level bracket is shared by every prefix and the probe
    // there can be computed once.
    let b = z_res as f64;
    let lambda_hi = curves
        .first()
        .map(|c| c.slope_zero)
        .unwrap_or(0.0);
    let mut probe_warm: Vec<f64> = curves.iter().map(|c| c.peak_r).collect();
    let probe: Vec<f64> = curves
        .iter()
        .zip(&mut probe_warm)
        .map(|(c, w)| c.allocation_at(lambda_hi, b, (0.0, b), 1e-2, w))
        .collect();
    let mut scratch = WaterfillScratch::default();
    let mut lag_full = vec![0u32; k];
    let mut eq_full = vec![0u32; k];
    let mut up = vec![0.0f64; k];
    let mut down = vec![0.0f64; k];
    let mut best_r: Vec<u32> = vec![0; k];
    let mut best_f = f64::NEG_INFINITY;
    for kappa in 1..=kappa_max {
        let subset = &order[..kappa];
        let lag = match lagrangian_core_with_probe(
            &curves[..kappa],
            z_res,
            lambda_hi,
            &probe[..kappa],
            &probe_warm[..kappa],
            &mut scratch,
        ) {
            Some(cont) => round_to_budget(&cont, subset, profiles, l, z_res),
            None => equal_allocate(subset, z_res),
        };
        let eq = equal_allocate(subset, z_res);

        lag_full.fill(0);
        eq_full.fill(0);
        for (pos, &worker) in subset.iter().enumerate() {
            lag_full[worker] = lag[pos];
            eq_full[worker] = eq[pos];
        }
        let candidate = if objective_from_table(&table, &lag_full)
            >= objective_from_table(&table, &eq_full)
        {
            &mut lag_full
        } else {
            &mut eq_full
        };
        local_search_in_place(candidate, &table, &mut up, &mut down);
        let f = objective_from_table(&table, candidate);
        if f > best_f {
            best_f = f;
            best_r.copy_from_slice(candidate);
        }
    }
    BitAllocation {
        r: best_r,
        z_res,
        objective: best_f,
    }
}

/// Myopic baseline: repeatedly grant one bit to the worker with the largest
/// marginal gain, ties to the lowest index.
pub fn greedy_allocate(profiles: &[WorkerProfile], l: usize, z_res: u32) -> BitAllocation {
    let k = profiles.len();
    let table = utility_table(profiles, l, z_res);
    let mut r = vec![0u32; k];
    let mut gains: Vec<f64> = (0..k).map(|i| table[i][1] - table[i][0]).collect();
    for _ in 0..z_res {
        let mut best = 0usize;
        for i in 1..k {
            if gains[i] > gains[best] {
                best = i;
            }
        }
        r[best] += 1;
        let rb = r[best] as usize;
        gains[best] = table[best][rb + 1] - table[best][rb];
    }
    let objective = objective_from_table(&table, &r);
    BitAllocation { r, z_res, objective }
}

/// Equal bit widths over the whole fleet for a total budget: everyone gets
/// `floor(z_tot / k)` bits and the most reliable workers take the remainder.
pub fn equal_bit_widths(profiles: &[WorkerProfile], z_tot: u64) -> Result<Vec<u32>> {
    let k = profiles.len();
    if z_tot < 2 * k as u64 {
        return Err(Error::InfeasibleBudget { z_tot, k });
    }
    let base = (z_tot / k as u64) as u32;
    let extra = (z_tot % k as u64) as usize;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        profiles[a]
            .p
            .partial_cmp(&profiles[b].p)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut z = vec![base; k];
    for &worker in order.iter().take(extra) {
        z[worker] += 1;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::straggler::sample_profiles;
    use rand::Rng;

    fn profiles_from(ps: &[f64]) -> Vec<WorkerProfile> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| WorkerProfile::from_prob(i, p).unwrap())
            .collect()
    }

    #[test]
    fn utility_examples() {
        assert!((utility(0.1, 0, 4) - 0.818182).abs() < 1e-6);
        assert!((utility(0.1, 2, 4) - 7.474576).abs() < 1e-6);
        assert!((utility(0.5, 1, 4) - 0.818182).abs() < 1e-6);
    }

    #[test]
    fn utility_monotone_in_r_and_p() {
        for r in 0..20 {
            assert!(utility(0.3, r + 1, 16) > utility(0.3, r, 16));
        }
        for &r in &[0u32, 3, 10] {
            assert!(utility(0.31, r, 16) < utility(0.3, r, 16));
        }
    }

    #[test]
    fn dp_matches_hand_enumeration() {
        let profiles = profiles_from(&[0.1, 0.5]);
        let alloc = dp_allocate(&profiles, 4, 2);
        assert_eq!(alloc.r, vec![2, 0]);
        assert!((alloc.objective - 7.807910).abs() < 1e-6);

        let zero = dp_allocate(&profiles, 4, 0);
        assert_eq!(zero.r, vec![0, 0]);
        assert!((zero.objective - objective_of(&profiles, 4, &[0, 0])).abs() < 1e-12);

        let single = dp_allocate(&profiles_from(&[0.4]), 8, 7);
        assert_eq!(single.r, vec![7]);
    }

    #[test]
    fn exhaustive_matches_dp_small_grid() {
        for seed in 0..10u64 {
            let mut rng = substream(seed, &[1]);
            for k in 1..=4usize {
                let ps: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..0.95)).collect();
                let profiles = profiles_from(&ps);
                for z_res in [0u32, 1, 3, 6, 9] {
                    let dp = dp_allocate(&profiles, 4, z_res);
                    let ex = exhaustive_oracle(&profiles, 4, z_res).unwrap();
                    assert!(
                        (dp.objective - ex.objective).abs() <= 1e-12 * ex.objective.abs().max(1.0),
                        "k={k} z={z_res}: dp {} vs exhaustive {}",
                        dp.objective,
                        ex.objective
                    );
                }
            }
        }
    }

    #[test]
    fn exhaustive_guard_rejects_large_instances() {
        let profiles = sample_profiles(40, 0.1, 2.0, 1.1, 5).unwrap();
        assert!(matches!(
            exhaustive_oracle(&profiles, 4, 200),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn dp_objective_monotone_in_budget() {
        let profiles = sample_profiles(6, 0.1, 2.0, 1.1, 9).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for z_res in 0..=30u32 {
            let f = dp_allocate(&profiles, 64, z_res).objective;
            assert!(f >= prev - 1e-12, "budget {z_res} lost utility");
            prev = f;
        }
    }

    /// The marginal-gain sequence rises and then falls (a single peak,
    /// possibly at r = 0).
    #[test]
    fn marginal_gains_are_unimodal() {
        for &l in &[8usize, 64, 1024] {
            for &p in &[0.01, 0.1, 0.5, 0.9] {
                let gains: Vec<f64> = (0..=20).map(|r| marginal_gain(p, r, l)).collect();
                let peak = gains
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                for w in gains[..peak].windows(2) {
                    assert!(w[0] < w[1], "increasing up to the peak (p={p}, l={l})");
                }
                for w in gains[peak..].windows(2) {
                    assert!(w[0] > w[1], "decreasing past the peak (p={p}, l={l})");
                }
            }
        }
    }

    #[test]
    fn equal_allocate_examples() {
        assert_eq!(equal_allocate(&[0, 1, 2], 7), vec![3, 2, 2]);
        assert_eq!(equal_allocate(&[0, 1, 2], 6), vec![2, 2, 2]);
        assert_eq!(equal_allocate(&[0, 1, 2], 0), vec![0, 0, 0]);
    }

    #[test]
    fn lagrangian_symmetric_split() {
        let profiles = profiles_from(&[0.4, 0.4, 0.4]);
        let (alloc, fell_back) = lagrangian_allocate(&[0, 1, 2], &profiles, 64, 9);
        assert_eq!(alloc.iter().sum::<u32>(), 9);
        if !fell_back {
            assert_eq!(alloc, vec![3, 3, 3]);
        }
        let (single, _) = lagrangian_allocate(&[1], &profiles, 64, 9);
        assert_eq!(single, vec![9]);
    }

    #[test]
    fn lagrangian_never_beats_dp() {
        for seed in 0..100u64 {
            let profiles = sample_profiles(3, 0.1, 2.0, 1.1, seed).unwrap();
            let budget = 6 + (seed % 7) as u32;
            let (alloc, _) = lagrangian_allocate(&[0, 1, 2], &profiles, 256, budget);
            let f = objective_of(&profiles, 256, &alloc);
            let dp = dp_allocate(&profiles, 256, budget);
            assert!(
                f <= dp.objective + 1e-9,
                "seed {seed}: lagrangian {f} beat dp {}",
                dp.objective
            );
        }
    }

    #[test]
    fn local_search_examples() {
        let profiles = profiles_from(&[0.1, 0.5]);
        let refined = local_search_refine(&[1, 1], &profiles, 4);
        assert_eq!(refined, vec![2, 0]);

        // A global optimum admits no improving swap.
        let dp = dp_allocate(&profiles, 4, 2);
        assert_eq!(local_search_refine(&dp.r, &profiles, 4), dp.r);
    }

    #[test]
    fn local_search_never_decreases_objective() {
        for seed in 0..50u64 {
            let mut rng = substream(seed, &[2]);
            let k = rng.gen_range(2..=8);
            let profiles = sample_profiles(k, 0.1, 2.0, 1.1, seed).unwrap();
            let budget = rng.gen_range(0..=20u32);
            let mut r = vec![0u32; k];
            for _ in 0..budget {
                let i = rng.gen_range(0..k);
                r[i] += 1;
            }
            let before = objective_of(&profiles, 128, &r);
            let refined = local_search_refine(&r, &profiles, 128);
            assert_eq!(refined.iter().sum::<u32>(), budget);
            let after = objective_of(&profiles, 128, &refined);
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn proposed_examples() {
        let profiles = profiles_from(&[0.1, 0.5]);
        let alloc = proposed_allocate(&profiles, 4, 2);
        assert_eq!(alloc.r, vec![2, 0]);
        assert!((alloc.objective - 7.807910).abs() < 1e-6);

        let zero = proposed_allocate(&profiles, 4, 0);
        assert_eq!(zero.r, vec![0, 0]);
    }

    #[test]
    fn proposed_tracks_dp_on_default_instances() {
        let mut hits = 0usize;
        let total = 40usize;
        for seed in 0..total as u64 {
            let profiles = sample_profiles(10, 0.1, 2.0, 1.1, seed).unwrap();
            for z_res in [10u32, 50] {
                let dp = dp_allocate(&profiles, 1024, z_res);
                let prop = proposed_allocate(&profiles, 1024, z_res);
                assert!(prop.objective <= dp.objective + 1e-9);
                if prop.objective / dp.objective >= 0.99 {
                    hits += 1;
                }
            }
        }
        assert!(
            hits >= 2 * total * 95 / 100,
            "proposed matched dp on only {hits}/{} budget-instances",
            2 * total
        );
    }

    #[test]
    fn proposed_at_least_equal_split_when_budget_covers_everyone() {
        for seed in 0..20u64 {
            let profiles = sample_profiles(5, 0.1, 2.0, 1.1, seed).unwrap();
            let z_res = 12u32;
            let all: Vec<usize> = {
                let mut o: Vec<usize> = (0..5).collect();
                o.sort_by(|&a, &b| profiles[a].p.partial_cmp(&profiles[b].p).unwrap());
                o
            };
            let eq = equal_allocate(&all, z_res);
            let mut eq_full = vec![0u32; 5];
            for (pos, &w) in all.iter().enumerate() {
                eq_full[w] = eq[pos];
            }
            let f_eq = objective_of(&profiles, 64, &eq_full);
            let prop = proposed_allocate(&profiles, 64, z_res);
            assert!(prop.objective >= f_eq - 1e-12);
        }
    }

    #[test]
    fn greedy_examples() {
        // Small l puts r = 0 in the concave regime, where ties alternate and
        // symmetric workers split the budget evenly.
        let profiles = profiles_from(&[0.3, 0.3]);
        let alloc = greedy_allocate(&profiles, 4, 6);
        assert_eq!(alloc.r.iter().sum::<u32>(), 6);
        assert_eq!(alloc.r, vec![3, 3], "symmetric instances split evenly");

        let zero = greedy_allocate(&profiles, 4, 0);
        assert_eq!(zero.r, vec![0, 0]);
    }

    #[test]
    fn greedy_gets_trapped_where_dp_is_not() {
        // Transition-regime instance: the myopic rule keeps feeding the
        // worker whose marginal happens to be largest and ends up
        // concentrating, while the optimum splits the budget.
        let profiles = sample_profiles(3, 0.05, 3.0, 1.3, 0).unwrap();
        let dp = dp_allocate(&profiles, 256, 6);
        let greedy = greedy_allocate(&profiles, 256, 6);
        assert!(
            greedy.objective < 0.95 * dp.objective,
            "greedy {} vs dp {}",
            greedy.objective,
            dp.objective
        );
        let proposed = proposed_allocate(&profiles, 256, 6);
        assert!((proposed.objective - dp.objective).abs() <= 1e-9 * dp.objective);
    }

    #[test]
    fn equal_bit_widths_assigns_remainder_to_reliable_workers() {
        let profiles = profiles_from(&[0.7, 0.2, 0.5]);
        let z = equal_bit_widths(&profiles, 11).unwrap();
        assert_eq!(z.iter().sum::<u32>(), 11);
        assert_eq!(z[1], 4, "most reliable worker takes the remainder");
        assert!(z.iter().max().unwrap() - z.iter().min().unwrap() <= 1);
        assert!(equal_bit_widths(&profiles, 5).is_err());
    }
}
