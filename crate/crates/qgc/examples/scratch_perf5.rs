use qgc::straggler::{WorkerProfile, sample_profiles};

use std::time::Instant;

use std::cell::Cell;

thread_local! { static EVALS: Cell<u64> = Cell::new(0); static VISITS: Cell<u64> = Cell::new(0); static ITERS: Cell<u64> = Cell::new(0); }

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
        // The slope is unimodal in r, so its log-derivative changes sign
        // exactly once; bisect on that sign to find the peak.
        let (mut lo, mut hi) = (0.0f64, budget);
        if curve.slope_with_logderiv(0.0).1 <= 0.0 {
            hi = 0.0;
        } else if curve.slope_with_logderiv(budget).1 >= 0.0 {
            lo = budget;
        } else {
            for _ in 0..18 {
                let mid = 0.5 * (lo + hi);
                if curve.slope_with_logderiv(mid).1 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        curve.peak_r = 0.5 * (lo + hi);
        curve.slope_peak = curve.slope(curve.peak_r);
        curve.slope_budget = curve.slope(budget);
        curve.slope_zero = curve.slope(0.0);
        curve
    }

    #[inline]
    fn slope(&self, r: f64) -> f64 {
        EVALS.with(|e| e.set(e.get()+1)); let y = (r + 1.0).exp2();
        let q = y - 1.0;
        let d = self.p4 * q * q + self.l;
        self.coeff * y * q / (d * d)
    }

    /// Slope and its logarithmic derivative in one evaluation.
    #[inline]
    fn slope_with_logderiv(&self, r: f64) -> (f64, f64) {
        EVALS.with(|e| e.set(e.get()+1)); let y = (r + 1.0).exp2();
        let q = y - 1.0;
        let d = self.p4 * q * q + self.l;
        let s = self.coeff * y * q / (d * d);
        let dln = std::f64::consts::LN_2 * (1.0 + y / q - 4.0 * self.p4 * q * y / d);
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
        VISITS.with(|e| e.set(e.get()+1)); let mut r = warm.clamp(lo, hi);
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

/// The bisection body, with the allocations at the top of the lambda
/// bracket supplied by the caller (they depend only on the most reliable
/// worker, so prefix sweeps can share them).
fn lagrangian_core_with_probe(
    curves: &[SlopeCurve],
    budget: u32,
    lambda_hi: f64,
    probe: &[f64],
    mut warm: Vec<f64>,
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
    let mut r_min = probe.to_vec();
    let mut r_max = vec![b; kappa];
    if r_min.iter().sum::<f64>() > b {
        return None;
    }

    // Coarser than anything largest-remainder rounding can distinguish;
    // the one-bit local search cleans up the last fractions regardless.
    // Coarser than anything largest-remainder rounding can distinguish; the
    // one-bit local search cleans up the last fractions regardless. Workers
    // whose interval has collapsed leave the active list.
    const FREEZE: f64 = 1e-3;
    let mut active: Vec<usize> = (0..kappa).collect();
    let mut frozen_sum = 0.0f64;
    let mut out: Vec<f64> = vec![f64::NAN; kappa];
    let mut fresh = vec![0.0f64; kappa];
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    for _ in 0..60 { ITERS.with(|e| e.set(e.get()+1));
        let mid = 0.5 * (lo + hi);
        let mut sum = frozen_sum;
        for &i in &active {
            let v = curves[i].allocation_at(mid, b, (r_min[i], r_max[i]), 3e-4, &mut warm[i]);
            fresh[i] = v;
            sum += v;
        }
        if sum >= b {
            lo = mid;
            for &i in &active {
                r_max[i] = fresh[i];
            }
        } else {
            hi = mid;
            for &i in &active {
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
        if active.is_empty() {
            break;
        }
    }
    for &i in &active {
        out[i] = curves[i].allocation_at(lo, b, (r_min[i], r_max[i]), 3e-4, &mut warm[i]);
    }
    Some(out)
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

fn local_search_with_table(r: &[u32], table: &[Vec<f64>]) -> Vec<u32> {
    let k = table.len();
    let z_res: u32 = r.iter().sum();
    if k < 2 || z_res == 0 {
        return r.to_vec();
    }
    let mut r = r.to_vec();
    let mut up: Vec<f64> = (0..k)
        .map(|i| table[i][r[i] as usize + 1] - table[i][r[i] as usize])
        .collect();
    let mut down: Vec<f64> = (0..k)
        .map(|i| {
            if r[i] >= 1 {
                table[i][r[i] as usize - 1] - table[i][r[i] as usize]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let cap = 10 * k * z_res as usize;
    for _ in 0..cap {
        // Top-two receivers and donors are enough to find the best pair with
        // distinct indices.
        let (rc1, rc2) = top_two(&up);
        let (dn1, dn2) = top_two(&down);
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
    r
}

fn top_two(values: &[f64]) -> (usize, usize) {
    let (mut first, mut second) = (usize::MAX, usize::MAX);
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if first == usize::MAX || v > values[first] {
            second = first;
            first = i;
        } else if second == usize::MAX || v > values[second] {
            second = i;
        }
    }
    (first, second)
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

fn main() {
    let profiles = sample_profiles(10, 0.1, 2.0, 1.1, 3).unwrap();
    let l = 1024usize;
    let z = 50u32;
    let k = 10usize;
    let reps = 2000u64;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a,&b| profiles[a].p.partial_cmp(&profiles[b].p).unwrap().then(a.cmp(&b)));
    let mut t_table = 0.0; let mut t_curves = 0.0; let mut t_probe = 0.0; let mut t_core = 0.0; let mut t_round = 0.0; let mut t_refine = 0.0; let mut t_misc = 0.0;
    for _ in 0..reps {
        let t0 = Instant::now();
        let table = utility_table(&profiles, l, z);
        t_table += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let curves: Vec<SlopeCurve> = order.iter().map(|&i| SlopeCurve::new(profiles[i].p, l, z as f64)).collect();
        t_curves += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let b = z as f64;
        let lambda_hi = curves[0].slope_zero;
        let mut probe_warm: Vec<f64> = curves.iter().map(|c| c.peak_r).collect();
        let probe: Vec<f64> = curves.iter().zip(&mut probe_warm).map(|(c, w)| c.allocation_at(lambda_hi, b, (0.0, b), 1e-2, w)).collect();
        t_probe += t0.elapsed().as_secs_f64();
        let mut best_f = f64::NEG_INFINITY; let mut best_r = vec![0u32; k];
        for kappa in 1..=10usize {
            let subset = &order[..kappa];
            let t0 = Instant::now();
            let lag_cont = lagrangian_core_with_probe(&curves[..kappa], z, lambda_hi, &probe[..kappa], probe_warm[..kappa].to_vec());
            t_core += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let lag = match lag_cont { Some(c) => round_to_budget(&c, subset, &profiles, l, z), None => equal_allocate(subset, z) };
            let eq = equal_allocate(subset, z);
            t_round += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let expand = |alloc: &[u32]| { let mut full = vec![0u32; k]; for (pos, &w) in subset.iter().enumerate() { full[w] = alloc[pos]; } full };
            let lag_full = expand(&lag); let eq_full = expand(&eq);
            let cand = if objective_from_table(&table, &lag_full) >= objective_from_table(&table, &eq_full) { lag_full } else { eq_full };
            t_misc += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let refined = local_search_with_table(&cand, &table);
            t_refine += t0.elapsed().as_secs_f64();
            let f = objective_from_table(&table, &refined);
            if f > best_f { best_f = f; best_r = refined; }
        }
        std::hint::black_box((best_f, best_r));
    }
    let sc = 1e6 / reps as f64;
    println!("table {:6.1} curves {:6.1} probe {:6.1} core {:6.1} round {:6.1} refine {:6.1} misc {:6.1}",
        t_table*sc, t_curves*sc, t_probe*sc, t_core*sc, t_round*sc, t_refine*sc, t_misc*sc);
    EVALS.with(|e| println!("evals/call: {}", e.get()/reps));
    VISITS.with(|e| println!("visits/call: {}", e.get()/reps));
    ITERS.with(|e| println!("bisect iters/call: {}", e.get()/reps));
}
