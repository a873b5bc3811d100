//! Executable acceptance suite.
//!
//! Every check pins its own parameters and seeds, measures the quantities it
//! needs, and reports pass/fail with the measured values, so the whole
//! battery can run from a fresh checkout via the CLI (`verify`) or the
//! integration tests.

use crate::baselines::{build_scheme, EtaChoice, SchemeSpec};
use crate::bitalloc::{dp_allocate, exhaustive_oracle, proposed_allocate};
use crate::design::{
    cost_coeff, residual_error_bound, second_moment_objective, segment_construction,
    target_masses, two_track_decoder,
};
use crate::loss::{make_logistic, make_quadratic, LossModel};
use crate::quantizer::{pack, quantize, unpack, variance_coeff, dequantize};
use crate::rng::{purpose, substream};
use crate::sim::{
    calibrate_c, monte_carlo_residual, run_experiment, uncoded_gd_trajectory, LrSchedule,
    Optimizer, TrainConfig,
};
use crate::straggler::{sample_profiles, WorkerProfile};
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

/// Master seed used by the acceptance suite unless overridden.
pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:2} {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.details
        )
    }
}

fn finish(
    id: usize,
    name: &'static str,
    started: Instant,
    passed: bool,
    details: String,
) -> CheckResult {
    CheckResult {
        id,
        name,
        passed,
        details,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Run the full battery in order.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        criterion_1_dp_optimality(seed),
        criterion_2_low_complexity_allocation(seed),
        criterion_3_structure(seed),
        criterion_4_residual_bound(seed),
        criterion_5_quantizer_contract(seed),
        criterion_6_strongly_convex_rate(seed),
        criterion_7_smooth_rate(seed),
        criterion_8_two_track(seed),
        criterion_9_convergence_ordering(seed),
        criterion_10_bits_accounting(seed),
    ]
}

/// 1. The dynamic program matches exhaustive enumeration exactly on the
/// small-instance grid.
pub fn criterion_1_dp_optimality(seed: u64) -> CheckResult {
    let started = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut cases = 0usize;
    for k in 1..=4usize {
        for profile_seed in 0..50u64 {
            let profiles =
                sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[1, k as u64, profile_seed]))
                    .expect("valid defaults");
            for &l in &[4usize, 36] {
                for z_res in 0..=12u32 {
                    let dp = dp_allocate(&profiles, l, z_res);
                    let ex = exhaustive_oracle(&profiles, l, z_res).expect("small instance");
                    let rel =
                        (dp.objective - ex.objective).abs() / ex.objective.abs().max(1.0);
                    worst_rel = worst_rel.max(rel);
                    cases += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let passed = worst_rel < 1e-12 && elapsed < 30.0;
    finish(
        1,
        "dp_matches_exhaustive",
        started,
        passed,
        format!("{cases} cases, worst relative gap {worst_rel:.2e}, {elapsed:.1}s (< 30s)"),
    )
}

/// 2. The hybrid allocation stays within 1% of the optimum on at least 95 of
/// 100 default instances per budget and beats the DP on wall time at the
/// larger budget.
pub fn criterion_2_low_complexity_allocation(seed: u64) -> CheckResult {
    let started = Instant::now();
    let l = 1024usize;
    let instances = 100usize;
    let mut hits = [0usize; 2];
    let mut worst_ratio = [f64::INFINITY; 2];
    let mut dp_time = 0.0f64;
    let mut prop_time = 0.0f64;
    for inst in 0..instances as u64 {
        let profiles =
            sample_profiles(10, 0.1, 2.0, 1.1, subseed_for(seed, &[2, inst])).expect("defaults");
        for (slot, &z_res) in [10u32, 50].iter().enumerate() {
            let t0 = Instant::now();
            let dp = dp_allocate(&profiles, l, z_res);
            let t_dp = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let prop = proposed_allocate(&profiles, l, z_res);
            let t_prop = t1.elapsed().as_secs_f64();
            if z_res == 50 {
                dp_time += t_dp;
                prop_time += t_prop;
            }
            let ratio = prop.objective / dp.objective;
            worst_ratio[slot] = worst_ratio[slot].min(ratio);
            if ratio >= 0.99 {
                hits[slot] += 1;
            }
        }
    }
    let passed = hits[0] >= 95 && hits[1] >= 95 && prop_time < dp_time;
    finish(
        2,
        "hybrid_allocation_quality",
        started,
        passed,
        format!(
            "ratio>=0.99 on {}/100 (Z=10, worst {:.4}) and {}/100 (Z=50, worst {:.4}); \
             wall time proposed {:.1}ms vs dp {:.1}ms at Z=50",
            hits[0],
            worst_ratio[0],
            hits[1],
            worst_ratio[1],
            prop_time * 1e3,
            dp_time * 1e3
        ),
    )
}

/// 3. Structural laws of the segment construction on 200 random instances,
/// plus the closed-form optimality identity.
pub fn criterion_3_structure(seed: u64) -> CheckResult {
    let started = Instant::now();
    let mut rng = substream(seed, &[3]);
    let mut worst_row = 0.0f64;
    let mut worst_col = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut structural_ok = true;
    for _ in 0..200 {
        let k = rng.gen_range(1..=20usize);
        let n = rng.gen_range(k.max(2)..=200usize);
        let profiles = sample_profiles(k, 0.1, 2.0, 1.1, rng.gen()).expect("defaults");
        let c: Vec<f64> = profiles
            .iter()
            .map(|w| {
                let z = rng.gen_range(2..=10u32);
                cost_coeff(w.p, variance_coeff(z, 64).unwrap(), 1.0).unwrap()
            })
            .collect();
        let masses = target_masses(&c, n).unwrap();
        let alpha = segment_construction(&masses, n).unwrap();

        for (sum, y) in alpha.row_sums().iter().zip(&masses) {
            worst_row = worst_row.max((sum - y).abs());
        }
        for sum in alpha.col_sums() {
            worst_col = worst_col.max((sum - 1.0).abs());
        }
        if alpha.nnz() > n + k - 1 {
            structural_ok = false;
        }
        let load = alpha.nnz() as f64 / n as f64;
        if load > 1.0 + (k as f64 - 1.0) / n as f64 + 1e-12 {
            structural_ok = false;
        }
        let obj: f64 = masses.iter().zip(&c).map(|(y, ci)| ci * y * y).sum();
        let closed = (n * n) as f64 / c.iter().map(|v| 1.0 / v).sum::<f64>();
        worst_identity = worst_identity.max((obj - closed).abs() / closed.max(1.0));
    }
    let passed =
        structural_ok && worst_row < 1e-9 && worst_col < 1e-9 && worst_identity < 1e-9;
    finish(
        3,
        "segment_structure_laws",
        started,
        passed,
        format!(
            "row err {worst_row:.2e}, col err {worst_col:.2e}, identity err {worst_identity:.2e}, \
             nnz/load bounds {}",
            if structural_ok { "ok" } else { "violated" }
        ),
    )
}

/// 4. Monte Carlo residual error within the closed-form bound and additive
/// straggler/quantization split on 20 random designs.
pub fn criterion_4_residual_bound(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l) = (10usize, 20usize, 64usize);
    let grad_bound = 1.0f64;
    let results: Vec<(bool, bool, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|idx| {
            let profiles =
                sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[4, idx])).expect("defaults");
            let alloc = proposed_allocate(&profiles, l, 30);
            let z = alloc.bit_widths();
            let phi: Vec<f64> = z.iter().map(|&zi| variance_coeff(zi, l).unwrap()).collect();
            let c: Vec<f64> = profiles
                .iter()
                .zip(&phi)
                .map(|(w, &ph)| cost_coeff(w.p, ph, 1.0).unwrap())
                .collect();
            let masses = target_masses(&c, n).unwrap();
            let alpha = segment_construction(&masses, n).unwrap();
            let mut rng = substream(seed, &[4, idx, 1]);
            let design = crate::design::realize_code(alpha, &profiles, c, &mut rng).unwrap();
            let gradients: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let scale = grad_bound.sqrt() * rng.gen_range(0.7..1.0) / norm;
                    raw.iter().map(|v| v * scale).collect()
                })
                .collect();
            let stats = monte_carlo_residual(
                &design,
                &profiles,
                &z,
                &gradients,
                100_000,
                subseed_for(seed, &[4, idx, 2]),
            )
            .unwrap();
            let bound = residual_error_bound(&design.c, n, grad_bound);
            let bound_ok = stats.total_mse <= bound + 3.0 * stats.total_se;
            let defect = stats.total_mse - stats.straggler_mse - stats.quant_mse;
            let split_ok = defect.abs() <= 4.0 * stats.split_se.max(1e-12);
            (bound_ok, split_ok, stats.total_mse / bound, defect.abs())
        })
        .collect();
    let bound_fails = results.iter().filter(|r| !r.0).count();
    let split_fails = results.iter().filter(|r| !r.1).count();
    let worst_util = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let passed = bound_fails == 0 && split_fails == 0;
    finish(
        4,
        "residual_bound_monte_carlo",
        started,
        passed,
        format!(
            "20 designs x 1e5 draws: bound violations {bound_fails}, split violations \
             {split_fails}, worst mse/bound {worst_util:.3}"
        ),
    )
}

/// 5. Quantizer contract: unbiasedness, variance bound, exact wire trips.
pub fn criterion_5_quantizer_contract(seed: u64) -> CheckResult {
    let started = Instant::now();
    let l = 16usize;
    let draws = 100_000usize;
    let cases: Vec<(u32, u64)> = (2..=8u32).flat_map(|z| (0..20u64).map(move |v| (z, v))).collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(z, vec_idx)| {
            let mut rng = substream(seed, &[5, z as u64, vec_idx]);
            let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let norm_sq: f64 = x.iter().map(|v| v * v).sum();
            let phi = variance_coeff(z, l).unwrap();
            let mut sum = vec![0.0f64; l];
            let mut sumsq = vec![0.0f64; l];
            let mut err_acc = 0.0f64;
            for _ in 0..draws {
                let msg = quantize(&x, z, &mut rng).unwrap();
                let y = dequantize(&msg);
                let mut err = 0.0;
                for m in 0..l {
                    sum[m] += y[m];
                    sumsq[m] += y[m] * y[m];
                    let d = y[m] - x[m];
                    err += d * d;
                }
                err_acc += err;
            }
            for m in 0..l {
                let mean = sum[m] / draws as f64;
                let var = (sumsq[m] / draws as f64 - mean * mean).max(0.0);
                let se = (var / draws as f64).sqrt().max(1e-12);
                if (mean - x[m]).abs() > 4.0 * se {
                    return Some(format!(
                        "bias at z={z} vec={vec_idx} coord={m}: {:.3e} vs 4se {:.3e}",
                        (mean - x[m]).abs(),
                        4.0 * se
                    ));
                }
            }
            let mse = err_acc / draws as f64;
            if mse > 1.05 * phi * norm_sq {
                return Some(format!(
                    "variance at z={z} vec={vec_idx}: {mse:.4e} > {:.4e}",
                    1.05 * phi * norm_sq
                ));
            }
            // Bit-exact wire trip on a fresh message.
            let msg = quantize(&x, z, &mut rng).unwrap();
            if unpack(&pack(&msg), z, l).unwrap() != msg {
                return Some(format!("wire trip mismatch at z={z} vec={vec_idx}"));
            }
            None
        })
        .collect();
    let passed = failures.is_empty();
    finish(
        5,
        "quantizer_contract",
        started,
        passed,
        if failures.is_empty() {
            format!("{} (z, vector) cases x {draws} draws all clean", cases.len())
        } else {
            format!("{} failures; first: {}", failures.len(), failures[0])
        },
    )
}

fn proposed_scheme_for(
    profiles: &[WorkerProfile],
    n: usize,
    l: usize,
    z_tot: u64,
    seed: u64,
) -> crate::baselines::SchemeInstance {
    build_scheme(
        &SchemeSpec::parse("proposed").unwrap(),
        profiles,
        n,
        l,
        z_tot,
        EtaChoice::One,
        seed,
    )
    .expect("feasible scheme")
}

/// 6. Strongly convex rate: trial-mean distance to the optimum under the
/// 1/(lambda t) schedule stays below the closed-form bound at every probe
/// horizon.
pub fn criterion_6_strongly_convex_rate(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l) = (10usize, 20usize, 32usize);
    let mut rng = substream(seed, &[6, purpose::LOSS]);
    let loss = LossModel::Quadratic(make_quadratic(n, l, 1.0, &mut rng).unwrap());
    let profiles = sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[6, 1])).unwrap();
    let z_tot = 2 * k as u64 + 50;
    let scheme = proposed_scheme_for(&profiles, n, l, z_tot, subseed_for(seed, &[6, 2]));
    let design = scheme.design.as_ref().unwrap();

    let warmup = uncoded_gd_trajectory(&loss, 1.0 / loss.smoothness(), 200);
    let grad_bound = calibrate_c(&loss, &warmup);
    let inv_sum: f64 = design.c.iter().map(|v| 1.0 / v).sum();
    let factor = 1.0 + 1.0 / inv_sum;

    let config = TrainConfig {
        iterations: 10_000,
        schedule: LrSchedule::InvLambdaT { lambda: 1.0 },
        optimizer: Optimizer::Gd,
        trials: 50,
        master_seed: subseed_for(seed, &[6, 3]),
    };
    let series = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
    let dist = series.mean_dist_sq.as_ref().unwrap();

    let mut details = String::new();
    let mut passed = true;
    for &horizon in &[10usize, 100, 1_000, 10_000] {
        let bound = 4.0 * (n * n) as f64 * grad_bound * factor / horizon as f64;
        let measured = dist[horizon];
        if measured > bound {
            passed = false;
        }
        details.push_str(&format!("T={horizon}: {measured:.3e}<={bound:.3e} "));
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 300.0 {
        passed = false;
    }
    finish(
        6,
        "strongly_convex_rate",
        started,
        passed,
        format!("{details}({elapsed:.0}s < 300s)"),
    )
}

/// 7. Smooth (logistic) rate: the running-average squared gradient norm
/// stays under the closed-form bound for both schedules and trends to zero.
pub fn criterion_7_smooth_rate(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l, spp) = (10usize, 10usize, 10usize, 20usize);
    let mut rng = substream(seed, &[7, purpose::LOSS]);
    let loss = LossModel::Logistic(make_logistic(n, l, spp, 0.0, &mut rng).unwrap());
    let profiles = sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[7, 1])).unwrap();
    let z_tot = 2 * k as u64 + 50;
    let scheme = proposed_scheme_for(&profiles, n, l, z_tot, subseed_for(seed, &[7, 2]));
    let design = scheme.design.as_ref().unwrap();

    let warmup = uncoded_gd_trajectory(&loss, 1.0 / loss.smoothness(), 200);
    let grad_bound = calibrate_c(&loss, &warmup);
    let loss_floor = crate::sim::reference_min_loss(&loss, 100_000);
    let initial_loss = {
        let mut grads = vec![0.0; n * l];
        loss.eval(&vec![0.0; l], &mut grads)
    };
    let inv_sum: f64 = design.c.iter().map(|v| 1.0 / v).sum();
    let factor = 1.0 + 1.0 / inv_sum;
    let mu = loss.smoothness();
    let nsq_c = (n * n) as f64 * grad_bound;

    let running_avg = |grad_sq: &[f64], horizon: usize| -> f64 {
        grad_sq[..=horizon].iter().sum::<f64>() / (horizon as f64 + 1.0)
    };

    // Constant schedule, horizon 1e3.
    let const_cfg = TrainConfig {
        iterations: 1_000,
        schedule: LrSchedule::ConstSqrt,
        optimizer: Optimizer::Gd,
        trials: 50,
        master_seed: subseed_for(seed, &[7, 3]),
    };
    let const_series = run_experiment(&scheme, &profiles, &loss, &const_cfg).unwrap();
    let lhs_const = running_avg(&const_series.mean_grad_sq, 1_000);
    let rhs_const =
        (initial_loss - loss_floor + 0.5 * mu * nsq_c * factor) / (1_000f64 + 1.0).sqrt();

    // Decaying schedule, horizon 1e4; prefixes give the shorter horizons.
    let decay_cfg = TrainConfig {
        iterations: 10_000,
        schedule: LrSchedule::DecaySqrt,
        optimizer: Optimizer::Gd,
        trials: 50,
        master_seed: subseed_for(seed, &[7, 4]),
    };
    let decay_series = run_experiment(&scheme, &profiles, &loss, &decay_cfg).unwrap();
    let decay_bound = |horizon: usize| -> f64 {
        let t1 = horizon as f64 + 1.0;
        (initial_loss - loss_floor + mu * nsq_c * (1.0 + 0.5 * t1.ln()) * factor) / t1.sqrt()
    };
    let lhs_decay = running_avg(&decay_series.mean_grad_sq, 1_000);
    let rhs_decay = decay_bound(1_000);

    let avg_100 = running_avg(&decay_series.mean_grad_sq, 100);
    let avg_10000 = running_avg(&decay_series.mean_grad_sq, 10_000);
    let trend_ok = avg_100 >= 2.0 * avg_10000;

    let passed = lhs_const <= rhs_const && lhs_decay <= rhs_decay && trend_ok;
    finish(
        7,
        "smooth_rate",
        started,
        passed,
        format!(
            "const: {lhs_const:.3e}<={rhs_const:.3e}; decay: {lhs_decay:.3e}<={rhs_decay:.3e}; \
             trend {avg_100:.3e} -> {avg_10000:.3e} ({}x)",
            avg_100 / avg_10000
        ),
    )
}

/// 8. Two-track decoder dominance, closed form and Monte Carlo.
pub fn criterion_8_two_track(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l) = (10usize, 20usize, 32usize);
    let lambdas = [0.1, 1.0, 10.0];
    let failures: Vec<String> = (0..50u64)
        .into_par_iter()
        .filter_map(|idx| {
            let profiles =
                sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[8, idx])).unwrap();
            let p: Vec<f64> = profiles.iter().map(|w| w.p).collect();
            let mut rng = substream(seed, &[8, idx, 1]);
            let z: Vec<u32> = (0..k).map(|_| rng.gen_range(2..=9u32)).collect();
            let phi: Vec<f64> = z.iter().map(|&zi| variance_coeff(zi, l).unwrap()).collect();
            let c: Vec<f64> = p
                .iter()
                .zip(&phi)
                .map(|(&pi, &ph)| cost_coeff(pi, ph, 1.0).unwrap())
                .collect();
            let masses = target_masses(&c, n).unwrap();
            let alpha = segment_construction(&masses, n).unwrap();
            let design = crate::design::realize_code(alpha, &profiles, c, &mut rng).unwrap();
            let (_, var_w) = second_moment_objective(&design, &p, &phi, &design.w);
            let mut decoders = Vec::new();
            for &lambda in &lambdas {
                let v = two_track_decoder(&design, &p, &phi, lambda).unwrap();
                let (bias_v, var_v) = second_moment_objective(&design, &p, &phi, &v);
                if var_v > var_w * (1.0 + 1e-12)
                    || lambda * bias_v + var_v > var_w * (1.0 + 1e-12)
                {
                    return Some(format!(
                        "closed form failed at design {idx}, lambda {lambda}"
                    ));
                }
                decoders.push(v);
            }

            // Monte Carlo: variance of the second-moment input under each
            // decoder versus the unbiased one, on shared draws.
            let gradients: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                    raw.iter().map(|v| v / norm).collect()
                })
                .collect();
            let draws = 10_000usize;
            let mut acc: Vec<Vec<f64>> = vec![vec![0.0; l]; 4];
            let mut acc_sq: Vec<f64> = vec![0.0; 4];
            let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(draws); 4];
            for trial in 0..draws as u64 {
                let mut srng = substream(seed, &[8, idx, 2, trial]);
                let indicators = crate::straggler::sample_indicators(&profiles, &mut srng);
                let mut per_decoder: Vec<Vec<f64>> = vec![vec![0.0; l]; 4];
                for i in 0..k {
                    if !indicators[i] || design.a.row(i).is_empty() {
                        continue;
                    }
                    let mut f_i = vec![0.0; l];
                    for &(j, coeff) in design.a.row(i) {
                        for (acc, &v) in f_i.iter_mut().zip(&gradients[j]) {
                            *acc += coeff * v;
                        }
                    }
                    let mut qrng = substream(seed, &[8, idx, 3, trial, i as u64]);
                    let msg = quantize(&f_i, z[i], &mut qrng).unwrap();
                    for (d, decoder) in decoders.iter().enumerate() {
                        crate::quantizer::dequantize_into(&msg, decoder[i], &mut per_decoder[d]);
                    }
                    crate::quantizer::dequantize_into(&msg, design.w[i], &mut per_decoder[3]);
                }
                for d in 0..4 {
                    samples[d].push(per_decoder[d].clone());
                    for (a, &v) in acc[d].iter_mut().zip(&per_decoder[d]) {
                        *a += v;
                    }
                }
            }
            for d in 0..4 {
                let mean: Vec<f64> = acc[d].iter().map(|v| v / draws as f64).collect();
                acc_sq[d] = samples[d]
                    .iter()
                    .map(|s| {
                        s.iter()
                            .zip(&mean)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / draws as f64;
            }
            for d in 0..3 {
                if acc_sq[d] > acc_sq[3] * (1.0 + 1e-9) {
                    return Some(format!(
                        "monte carlo variance failed at design {idx}, lambda {}",
                        lambdas[d]
                    ));
                }
            }
            None
        })
        .collect();
    let passed = failures.is_empty();
    finish(
        8,
        "two_track_dominance",
        started,
        passed,
        if failures.is_empty() {
            "50 designs x {0.1, 1, 10}: closed-form and Monte Carlo dominance hold".to_string()
        } else {
            format!("{} failures; first: {}", failures.len(), failures[0])
        },
    )
}

/// 9. Qualitative convergence ordering on the quadratic benchmark.
pub fn criterion_9_convergence_ordering(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l) = (10usize, 20usize, 2048usize);
    let seeds = 20usize;
    let trials = 10usize;
    let schemes = ["ideal_sgd", "proposed", "osgc_equalbits", "bgc:d=2"];
    let mut pass_counts = [0usize; 2];
    for (slot, &z_res) in [k as u64, 5 * k as u64].iter().enumerate() {
        let z_tot = 2 * k as u64 + z_res;
        let per_seed: Vec<bool> = (0..seeds as u64)
            .into_par_iter()
            .map(|master| {
                let mut rng = substream(seed, &[9, slot as u64, master, purpose::LOSS]);
                let loss = LossModel::Quadratic(make_quadratic(n, l, 1.0, &mut rng).unwrap());
                let profiles =
                    sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[9, master])).unwrap();
                let mut finals = Vec::new();
                for name in &schemes {
                    let spec = SchemeSpec::parse(name).unwrap();
                    let scheme = build_scheme(
                        &spec,
                        &profiles,
                        n,
                        l,
                        z_tot,
                        EtaChoice::One,
                        subseed_for(seed, &[9, slot as u64, master, 1]),
                    )
                    .unwrap();
                    let config = TrainConfig {
                        iterations: 1_000,
                        schedule: LrSchedule::InvLambdaT { lambda: 1.0 },
                        optimizer: Optimizer::Gd,
                        trials,
                        master_seed: subseed_for(seed, &[9, slot as u64, master, 2]),
                    };
                    let series = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
                    finals.push(series.final_loss());
                }
                let (ideal, proposed, osgc, bgc) = (finals[0], finals[1], finals[2], finals[3]);
                ideal <= proposed && proposed <= osgc && proposed <= bgc
            })
            .collect();
        pass_counts[slot] = per_seed.iter().filter(|&&ok| ok).count();
    }
    let passed = pass_counts[0] * 5 >= seeds * 4 && pass_counts[1] * 5 >= seeds * 4;
    finish(
        9,
        "convergence_ordering",
        started,
        passed,
        format!(
            "ordering held on {}/{seeds} seeds at Z_res=k and {}/{seeds} at Z_res=5k (need 80%)",
            pass_counts[0], pass_counts[1]
        ),
    )
}

/// 10. Bits accounting: an eighth of the uncoded budget, and better
/// loss-per-bit than the Bernoulli baseline.
pub fn criterion_10_bits_accounting(seed: u64) -> CheckResult {
    let started = Instant::now();
    let (k, n, l) = (10usize, 20usize, 64usize);
    let z_tot = 4 * k as u64;
    let horizon = 1_000usize;
    let seeds = 20usize;
    let results: Vec<(bool, bool)> = (0..seeds as u64)
        .into_par_iter()
        .map(|master| {
            let mut rng = substream(seed, &[10, master, purpose::LOSS]);
            let loss = LossModel::Quadratic(make_quadratic(n, l, 1.0, &mut rng).unwrap());
            let profiles =
                sample_profiles(k, 0.1, 2.0, 1.1, subseed_for(seed, &[10, master])).unwrap();
            let mut series = Vec::new();
            for name in &["proposed", "bgc:d=2"] {
                let spec = SchemeSpec::parse(name).unwrap();
                let scheme = build_scheme(
                    &spec,
                    &profiles,
                    n,
                    l,
                    z_tot,
                    EtaChoice::One,
                    subseed_for(seed, &[10, master, 1]),
                )
                .unwrap();
                let config = TrainConfig {
                    iterations: horizon,
                    schedule: LrSchedule::InvLambdaT { lambda: 1.0 },
                    optimizer: Optimizer::Gd,
                    trials: 10,
                    master_seed: subseed_for(seed, &[10, master, 2]),
                };
                series.push(run_experiment(&scheme, &profiles, &loss, &config).unwrap());
            }
            let uncoded_bits = (horizon * k * l * 32) as f64;
            let proposed_bits = *series[0].mean_cum_bits.last().unwrap();
            let bits_ok = proposed_bits < uncoded_bits / 8.0;

            let budget = series[0]
                .mean_cum_bits
                .last()
                .unwrap()
                .min(*series[1].mean_cum_bits.last().unwrap());
            let dominance = match (series[0].loss_at_bits(budget), series[1].loss_at_bits(budget))
            {
                (Some(a), Some(b)) => a <= b,
                _ => false,
            };
            (bits_ok, dominance)
        })
        .collect();
    let bits_ok = results.iter().all(|r| r.0);
    let dominance_count = results.iter().filter(|r| r.1).count();
    let passed = bits_ok && dominance_count * 5 >= seeds * 4;
    finish(
        10,
        "bits_accounting",
        started,
        passed,
        format!(
            "cum bits < uncoded/8 on all seeds: {bits_ok}; loss-per-bit dominance on \
             {dominance_count}/{seeds} seeds (need 80%)"
        ),
    )
}

fn subseed_for(seed: u64, tags: &[u64]) -> u64 {
    crate::rng::subseed(seed, tags)
}
