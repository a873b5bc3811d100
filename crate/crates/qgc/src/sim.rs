//! Parameter-server training loop under sampled stragglers and quantization.
//!
//! Each iteration computes partition gradients, encodes one message per
//! assigned worker, quantizes it at that worker's bit width, samples which
//! workers make the deadline, and decodes the surviving messages into a
//! gradient estimate for the optimizer. Trials run in parallel on disjoint
//! random streams keyed by `(master seed, trial)`, so results do not depend
//! on thread scheduling.
//!
//! Bit widths above the wire format's 32-bit cap are transmitted (and
//! accounted) at 32 bits; the variance difference is below single-precision
//! resolution.

use crate::baselines::SchemeInstance;
use crate::design::{two_track_decoder, CodeDesign};
use crate::error::{Error, Result};
use crate::loss::LossModel;
use crate::quantizer::{dequantize_into, quantize, variance_coeff, MAX_BIT_WIDTH};
use crate::rng::{purpose, substream};
use crate::straggler::{sample_indicators, WorkerProfile};
use rayon::prelude::*;

/// Learning-rate schedules. Update indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// `1 / (lambda * t)`, for strongly convex losses.
    InvLambdaT { lambda: f64 },
    /// Constant `1 / sqrt(T + 1)`, fixed by the final horizon.
    ConstSqrt,
    /// Decaying `1 / sqrt(t)`.
    DecaySqrt,
    Fixed(f64),
}

impl LrSchedule {
    pub fn rate(&self, update: usize, horizon: usize) -> f64 {
        match *self {
            LrSchedule::InvLambdaT { lambda } => 1.0 / (lambda * update as f64),
            LrSchedule::ConstSqrt => 1.0 / ((horizon as f64 + 1.0).sqrt()),
            LrSchedule::DecaySqrt => 1.0 / (update as f64).sqrt(),
            LrSchedule::Fixed(gamma) => gamma,
        }
    }
}

/// Optimizer choices for the decoded gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Gd,
    /// Mini-batch SGD; each partition samples this fraction of its rows.
    Sgd { batch_fraction: f64 },
    /// Adam with bias correction. `two_track_lambda` switches the second
    /// moment to the variance-reduced decoder with that bias weight; `None`
    /// squares the first-moment estimate as usual.
    Adam {
        two_track_lambda: Option<f64>,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam(two_track_lambda: Option<f64>) -> Self {
        Optimizer::Adam {
            two_track_lambda,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub schedule: LrSchedule,
    pub optimizer: Optimizer,
    pub trials: usize,
    pub master_seed: u64,
}

/// Metrics of one iterate: row `t` describes the model after `t` updates and
/// the transmission that produced it.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_sq: f64,
    pub dist_sq: Option<f64>,
    /// Bits transmitted during this update (zero for the initial row).
    pub bits: u64,
    pub stragglers: usize,
}

/// One trial's trajectory, rows `0..=T`.
#[derive(Debug, Clone)]
pub struct RunSeries {
    pub records: Vec<IterRecord>,
}

/// Trial-averaged metrics.
#[derive(Debug, Clone)]
pub struct MetricsSeries {
    pub iterations: Vec<usize>,
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    pub mean_grad_sq: Vec<f64>,
    pub mean_dist_sq: Option<Vec<f64>>,
    /// Mean cumulative bits transmitted up to and including each row.
    pub mean_cum_bits: Vec<f64>,
    pub mean_stragglers: Vec<f64>,
    pub trials: usize,
}

impl MetricsSeries {
    /// Mean loss at the last row whose cumulative bits stay within `budget`.
    pub fn loss_at_bits(&self, budget: f64) -> Option<f64> {
        let idx = self
            .mean_cum_bits
            .iter()
            .rposition(|&b| b <= budget + 1e-9)?;
        Some(self.mean_loss[idx])
    }

    pub fn final_loss(&self) -> f64 {
        *self.mean_loss.last().unwrap()
    }
}

/// Gradient-norm bound estimate: 1.1 times the largest squared partition
/// gradient over the sample points, floored away from zero.
pub fn calibrate_c(loss: &LossModel, beta_samples: &[Vec<f64>]) -> f64 {
    let n = loss.partitions();
    let l = loss.dim();
    let mut grads = vec![0.0; n * l];
    let mut worst: f64 = 0.0;
    for beta in beta_samples {
        loss.eval(beta, &mut grads);
        for j in 0..n {
            let sq: f64 = grads[j * l..(j + 1) * l].iter().map(|v| v * v).sum();
            worst = worst.max(sq);
        }
    }
    (1.1 * worst).max(1e-12)
}

/// Plain gradient-descent trajectory (no coding, no quantization) from the
/// origin; returns every iterate including the start. Used to calibrate the
/// gradient bound and as the reference run for loss floors.
pub fn uncoded_gd_trajectory(loss: &LossModel, gamma: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = loss.partitions();
    let l = loss.dim();
    let mut beta = vec![0.0; l];
    let mut grads = vec![0.0; n * l];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(beta.clone());
    for _ in 0..steps {
        loss.eval(&beta, &mut grads);
        for m in 0..l {
            let g: f64 = (0..n).map(|j| grads[j * l + m]).sum();
            beta[m] -= gamma * g;
        }
        out.push(beta.clone());
    }
    out
}

/// Minimum loss seen along a long uncoded reference run; stands in for the
/// optimal value when no closed form exists.
pub fn reference_min_loss(loss: &LossModel, steps: usize) -> f64 {
    let n = loss.partitions();
    let l = loss.dim();
    let gamma = 1.0 / loss.smoothness();
    let mut beta = vec![0.0; l];
    let mut grads = vec![0.0; n * l];
    let mut best = f64::INFINITY;
    for _ in 0..=steps {
        let lv = loss.eval(&beta, &mut grads);
        best = best.min(lv);
        for m in 0..l {
            let g: f64 = (0..n).map(|j| grads[j * l + m]).sum();
            beta[m] -= gamma * g;
        }
    }
    best
}

/// Decoded estimates from one communication round.
pub struct RoundOutput {
    /// First-moment estimate `sum_i I_i w_i q_i`.
    pub first: Vec<f64>,
    /// Second-moment input `sum_i I_i v_i q_i` when a second decoder is given.
    pub second: Option<Vec<f64>>,
    pub bits: u64,
    pub stragglers: usize,
}

/// Encode, quantize, drop stragglers, and decode one round.
///
/// `grads` is the flattened `n x l` partition-gradient matrix. Workers with
/// empty assignments transmit nothing. Quantizer streams are keyed by
/// `(trial, iteration, worker)` so distinct workers can be simulated in any
/// order.
pub fn simulate_round(
    design: &CodeDesign,
    bit_widths: &[u32],
    second_decoder: Option<&[f64]>,
    grads: &[f64],
    indicators: &[bool],
    master_seed: u64,
    trial: u64,
    iteration: u64,
) -> Result<RoundOutput> {
    let l = grads.len() / design.n;
    let mut first = vec![0.0; l];
    let mut second = second_decoder.map(|_| vec![0.0; l]);
    let mut bits = 0u64;
    let mut f_i = vec![0.0; l];
    for i in 0..design.k {
        let row = design.a.row(i);
        if row.is_empty() || !indicators[i] {
            continue;
        }
        f_i.fill(0.0);
        for &(j, coeff) in row {
            let g_j = &grads[j * l..(j + 1) * l];
            for (acc, &g) in f_i.iter_mut().zip(g_j) {
                *acc += coeff * g;
            }
        }
        let z = bit_widths[i].min(MAX_BIT_WIDTH);
        let mut qrng = substream(master_seed, &[purpose::QUANTIZER, trial, iteration, i as u64]);
        let msg = quantize(&f_i, z, &mut qrng)?;
        bits += msg.wire_bits();
        dequantize_into(&msg, design.w[i], &mut first);
        if let (Some(sec), Some(v)) = (second.as_mut(), second_decoder) {
            dequantize_into(&msg, v[i], sec);
        }
    }
    let stragglers = indicators.iter().filter(|&&up| !up).count();
    Ok(RoundOutput {
        first,
        second,
        bits,
        stragglers,
    })
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

/// One full trial. Row `t` records the model after `t` updates together with
/// the bits spent on update `t`.
pub fn run_single_trial(
    scheme: &SchemeInstance,
    profiles: &[WorkerProfile],
    loss: &LossModel,
    config: &TrainConfig,
    trial: u64,
) -> Result<RunSeries> {
    let l = loss.dim();
    let n = loss.partitions();
    let horizon = config.iterations;
    let mut beta = vec![0.0; l];
    let mut grads = vec![0.0; n * l];
    let mut enc_grads = vec![0.0; n * l];
    let mut records = Vec::with_capacity(horizon + 1);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: vec![0.0; l],
            v: vec![0.0; l],
            step: 0,
        }),
        _ => None,
    };
    // The variance-reduced second-moment decoder is fixed for the whole run.
    let second_decoder: Option<Vec<f64>> = match (&config.optimizer, &scheme.design) {
        (
            Optimizer::Adam {
                two_track_lambda: Some(lambda),
                ..
            },
            Some(design),
        ) => {
            let p: Vec<f64> = profiles.iter().map(|w| w.p).collect();
            let phi: Vec<f64> = scheme
                .bit_widths
                .iter()
                .map(|&z| variance_coeff(z.min(MAX_BIT_WIDTH), l))
                .collect::<Result<_>>()?;
            Some(two_track_decoder(design, &p, &phi, *lambda)?)
        }
        _ => None,
    };

    let mut pending_bits = 0u64;
    let mut pending_stragglers = 0usize;
    for t in 0..=horizon {
        let loss_value = loss.eval(&beta, &mut grads);
        if !loss_value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: t });
        }
        let mut grad_sq = 0.0;
        for m in 0..l {
            let g: f64 = (0..n).map(|j| grads[j * l + m]).sum();
            grad_sq += g * g;
        }
        let dist_sq = loss.optimum().map(|star| {
            beta.iter()
                .zip(star)
                .map(|(b, s)| (b - s) * (b - s))
                .sum::<f64>()
        });
        records.push(IterRecord {
            iteration: t,
            loss: loss_value,
            grad_sq,
            dist_sq,
            bits: pending_bits,
            stragglers: pending_stragglers,
        });
        if t == horizon {
            break;
        }

        let update = t + 1;
        let enc: &[f64] = if let Optimizer::Sgd { batch_fraction } = config.optimizer {
            let mut rng = substream(
                config.master_seed,
                &[purpose::MINIBATCH, trial, update as u64],
            );
            loss.minibatch_grads(&beta, batch_fraction, &mut rng, &mut enc_grads);
            &enc_grads
        } else {
            &grads
        };

        let (estimate, second_input, bits, stragglers) = match &scheme.design {
            None => {
                // Centralized reference: exact gradient, conventional
                // full-precision transmission from every worker.
                let mut g = vec![0.0; l];
                for m in 0..l {
                    g[m] = (0..n).map(|j| enc[j * l + m]).sum();
                }
                let bits = profiles.len() as u64 * 32 * l as u64;
                (g.clone(), Some(g), bits, 0)
            }
            Some(design) => {
                let mut srng = substream(
                    config.master_seed,
                    &[purpose::STRAGGLERS, trial, update as u64],
                );
                let indicators = sample_indicators(profiles, &mut srng);
                let round = simulate_round(
                    design,
                    &scheme.bit_widths,
                    second_decoder.as_deref(),
                    enc,
                    &indicators,
                    config.master_seed,
                    trial,
                    update as u64,
                )?;
                let second = round.second.unwrap_or_else(|| round.first.clone());
                (round.first, Some(second), round.bits, round.stragglers)
            }
        };

        let gamma = config.schedule.rate(update, horizon);
        match (&config.optimizer, adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, eps, .. }, Some(state)) => {
                state.step += 1;
                let sec = second_input.expect("second-moment input always present");
                for m in 0..l {
                    state.m[m] = beta1 * state.m[m] + (1.0 - beta1) * estimate[m];
                    state.v[m] = beta2 * state.v[m] + (1.0 - beta2) * sec[m] * sec[m];
                    let m_hat = state.m[m] / (1.0 - beta1.powi(state.step as i32));
                    let v_hat = state.v[m] / (1.0 - beta2.powi(state.step as i32));
                    beta[m] -= gamma * m_hat / (v_hat.sqrt() + eps);
                }
            }
            _ => {
                for (b, g) in beta.iter_mut().zip(&estimate) {
                    *b -= gamma * g;
                }
            }
        }
        pending_bits = bits;
        pending_stragglers = stragglers;
    }
    Ok(RunSeries { records })
}

/// Run independent trials in parallel and average the metrics pointwise.
pub fn run_experiment(
    scheme: &SchemeInstance,
    profiles: &[WorkerProfile],
    loss: &LossModel,
    config: &TrainConfig,
) -> Result<MetricsSeries> {
    let runs: Vec<RunSeries> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| run_single_trial(scheme, profiles, loss, config, trial))
        .collect::<Result<_>>()?;
    Ok(aggregate(&runs, loss.optimum().is_some()))
}

fn aggregate(runs: &[RunSeries], has_optimum: bool) -> MetricsSeries {
    let trials = runs.len();
    let rows = runs[0].records.len();
    let mut mean_loss = vec![0.0; rows];
    let mut se_loss = vec![0.0; rows];
    let mut mean_grad_sq = vec![0.0; rows];
    let mut mean_dist_sq = vec![0.0; rows];
    let mut mean_cum_bits = vec![0.0; rows];
    let mut mean_stragglers = vec![0.0; rows];
    for run in runs {
        let mut cum_bits = 0u64;
        for (t, rec) in run.records.iter().enumerate() {
            cum_bits += rec.bits;
            mean_loss[t] += rec.loss;
            mean_grad_sq[t] += rec.grad_sq;
            if let Some(d) = rec.dist_sq {
                mean_dist_sq[t] += d;
            }
            mean_cum_bits[t] += cum_bits as f64;
            mean_stragglers[t] += rec.stragglers as f64;
        }
    }
    let inv = 1.0 / trials as f64;
    for v in mean_loss
        .iter_mut()
        .chain(mean_grad_sq.iter_mut())
        .chain(mean_dist_sq.iter_mut())
        .chain(mean_cum_bits.iter_mut())
        .chain(mean_stragglers.iter_mut())
    {
        *v *= inv;
    }
    for t in 0..rows {
        let var: f64 = runs
            .iter()
            .map(|run| {
                let d = run.records[t].loss - mean_loss[t];
                d * d
            })
            .sum::<f64>()
            / trials as f64;
        se_loss[t] = (var / trials as f64).sqrt();
    }
    MetricsSeries {
        iterations: (0..rows).collect(),
        mean_loss,
        se_loss,
        mean_grad_sq,
        mean_dist_sq: has_optimum.then_some(mean_dist_sq),
        mean_cum_bits,
        mean_stragglers,
        trials,
    }
}

/// Monte Carlo estimates of the residual error at a fixed gradient set.
#[derive(Debug, Clone)]
pub struct ResidualStats {
    /// Mean of `||g - g_hat||^2` over the draws.
    pub total_mse: f64,
    /// Standard error of `total_mse`.
    pub total_se: f64,
    /// Mean squared error with quantization disabled (straggling only).
    pub straggler_mse: f64,
    /// Mean squared error of quantization on top of straggling.
    pub quant_mse: f64,
    /// Standard error of the additivity defect
    /// `total - straggler - quant` (zero in expectation).
    pub split_se: f64,
    /// Per-coordinate empirical bias of the estimator.
    pub bias: Vec<f64>,
    /// Per-coordinate standard errors of the bias estimate.
    pub bias_se: Vec<f64>,
}

/// Estimate the residual error of a design at fixed partition gradients,
/// decomposed into its straggler and quantization parts (measured on coupled
/// draws, so the parts sum to the total in expectation).
pub fn monte_carlo_residual(
    design: &CodeDesign,
    profiles: &[WorkerProfile],
    bit_widths: &[u32],
    gradients: &[Vec<f64>],
    trials: usize,
    master_seed: u64,
) -> Result<ResidualStats> {
    let l = gradients[0].len();
    let n = design.n;
    let mut g = vec![0.0; l];
    for gj in gradients {
        for (acc, &v) in g.iter_mut().zip(gj) {
            *acc += v;
        }
    }
    // Encoded messages are fixed across draws.
    let mut encoded: Vec<Option<Vec<f64>>> = vec![None; design.k];
    for i in 0..design.k {
        let row = design.a.row(i);
        if row.is_empty() {
            continue;
        }
        let mut f_i = vec![0.0; l];
        for &(j, coeff) in row {
            for (acc, &v) in f_i.iter_mut().zip(&gradients[j]) {
                *acc += coeff * v;
            }
        }
        encoded[i] = Some(f_i);
    }
    let _ = n;

    let chunk: Vec<(f64, f64, f64, Vec<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut srng = substream(master_seed, &[purpose::STRAGGLERS, trial]);
            let indicators = sample_indicators(profiles, &mut srng);
            let mut decoded = vec![0.0; l];
            let mut unquantized = vec![0.0; l];
            for i in 0..design.k {
                let Some(f_i) = &encoded[i] else { continue };
                if !indicators[i] {
                    continue;
                }
                for (acc, &v) in unquantized.iter_mut().zip(f_i) {
                    *acc += design.w[i] * v;
                }
                let z = bit_widths[i].min(MAX_BIT_WIDTH);
                let mut qrng =
                    substream(master_seed, &[purpose::QUANTIZER, trial, i as u64]);
                let msg = quantize(f_i, z, &mut qrng).expect("finite encoded gradient");
                dequantize_into(&msg, design.w[i], &mut decoded);
            }
            let total: f64 = g
                .iter()
                .zip(&decoded)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let strag: f64 = g
                .iter()
                .zip(&unquantized)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let quant: f64 = unquantized
                .iter()
                .zip(&decoded)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (total, strag, quant, decoded)
        })
        .collect();

    let nf = trials as f64;
    let total_mse = chunk.iter().map(|c| c.0).sum::<f64>() / nf;
    let straggler_mse = chunk.iter().map(|c| c.1).sum::<f64>() / nf;
    let quant_mse = chunk.iter().map(|c| c.2).sum::<f64>() / nf;
    let total_var = chunk
        .iter()
        .map(|c| (c.0 - total_mse) * (c.0 - total_mse))
        .sum::<f64>()
        / nf;
    let split_mean = total_mse - straggler_mse - quant_mse;
    let split_var = chunk
        .iter()
        .map(|c| {
            let d = (c.0 - c.1 - c.2) - split_mean;
            d * d
        })
        .sum::<f64>()
        / nf;
    let mut bias = vec![0.0; l];
    for c in &chunk {
        for (b, &v) in bias.iter_mut().zip(&c.3) {
            *b += v;
        }
    }
    for (b, &gv) in bias.iter_mut().zip(&g) {
        *b = *b / nf - gv;
    }
    let mut bias_se = vec![0.0; l];
    for (m, se) in bias_se.iter_mut().enumerate() {
        let mean = bias[m] + g[m];
        let var = chunk
            .iter()
            .map(|c| (c.3[m] - mean) * (c.3[m] - mean))
            .sum::<f64>()
            / nf;
        *se = (var / nf).sqrt();
    }
    Ok(ResidualStats {
        total_mse,
        total_se: (total_var / nf).sqrt(),
        straggler_mse,
        quant_mse,
        split_se: (split_var / nf).sqrt(),
        bias,
        bias_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{build_scheme, EtaChoice, SchemeSpec};
    use crate::design::{residual_error_bound, realize_code_with_weights, segment_construction, target_masses};
    use crate::loss::make_quadratic;
    use crate::straggler::sample_profiles;

    fn quadratic(seed: u64) -> LossModel {
        let mut rng = substream(seed, &[purpose::LOSS]);
        LossModel::Quadratic(make_quadratic(8, 16, 1.0, &mut rng).unwrap())
    }

    fn perfect_profiles(k: usize) -> Vec<WorkerProfile> {
        (0..k)
            .map(|i| WorkerProfile::from_prob(i, 0.0).unwrap())
            .collect()
    }

    #[test]
    fn coded_run_matches_uncoded_gd_without_noise() {
        // Perfect workers at 24-bit precision track exact gradient descent.
        let loss = quadratic(1);
        let profiles = perfect_profiles(4);
        let spec = SchemeSpec::parse("proposed").unwrap();
        let z_tot = 24 * 4u64;
        let scheme = build_scheme(&spec, &profiles, 8, 16, z_tot, EtaChoice::One, 5).unwrap();
        let config = TrainConfig {
            iterations: 100,
            schedule: LrSchedule::Fixed(0.2),
            optimizer: Optimizer::Gd,
            trials: 1,
            master_seed: 5,
        };
        let run = run_single_trial(&scheme, &profiles, &loss, &config, 0).unwrap();

        let reference = uncoded_gd_trajectory(&loss, 0.2, 100);
        let coded_final = &run.records[100];
        let mut ref_grads = vec![0.0; 8 * 16];
        let ref_loss = loss.eval(&reference[100], &mut ref_grads);
        assert!(
            (coded_final.loss - ref_loss).abs() <= 1e-4 * ref_loss.abs().max(1.0),
            "coded {} vs reference {}",
            coded_final.loss,
            ref_loss
        );
    }

    #[test]
    fn all_stragglers_leave_model_unchanged() {
        let loss = quadratic(2);
        let profiles = sample_profiles(3, 0.1, 2.0, 1.1, 3).unwrap();
        let spec = SchemeSpec::parse("proposed").unwrap();
        let scheme = build_scheme(&spec, &profiles, 8, 16, 12, EtaChoice::One, 3).unwrap();
        let design = scheme.design.as_ref().unwrap();
        let mut grads = vec![0.0; 8 * 16];
        loss.eval(&vec![0.4; 16], &mut grads);
        let round = simulate_round(
            design,
            &scheme.bit_widths,
            None,
            &grads,
            &[false, false, false],
            3,
            0,
            1,
        )
        .unwrap();
        assert!(round.first.iter().all(|&v| v == 0.0));
        assert_eq!(round.bits, 0);
        assert_eq!(round.stragglers, 3);
    }

    #[test]
    fn bits_follow_the_accounting_law() {
        let loss = quadratic(4);
        let profiles = sample_profiles(2, 0.5, 1.5, 1.5, 7).unwrap();
        let spec = SchemeSpec::parse("proposed").unwrap();
        let scheme = build_scheme(&spec, &profiles, 8, 16, 14, EtaChoice::One, 7).unwrap();
        let z = &scheme.bit_widths;
        let per_worker: Vec<u64> = z.iter().map(|&zi| 32 + 16 * zi as u64).collect();
        let allowed: Vec<u64> = vec![
            0,
            per_worker[0],
            per_worker[1],
            per_worker[0] + per_worker[1],
        ];
        let config = TrainConfig {
            iterations: 50,
            schedule: LrSchedule::Fixed(0.05),
            optimizer: Optimizer::Gd,
            trials: 1,
            master_seed: 7,
        };
        let run = run_single_trial(&scheme, &profiles, &loss, &config, 0).unwrap();
        for rec in &run.records[1..] {
            assert!(
                allowed.contains(&rec.bits),
                "iteration {} transmitted {} bits",
                rec.iteration,
                rec.bits
            );
        }
    }

    #[test]
    fn experiments_are_deterministic_and_single_trial_consistent() {
        let loss = quadratic(5);
        let profiles = sample_profiles(4, 0.1, 2.0, 1.1, 11).unwrap();
        let spec = SchemeSpec::parse("proposed").unwrap();
        let scheme = build_scheme(&spec, &profiles, 8, 16, 20, EtaChoice::One, 11).unwrap();
        let config = TrainConfig {
            iterations: 30,
            schedule: LrSchedule::InvLambdaT { lambda: 1.0 },
            optimizer: Optimizer::Gd,
            trials: 4,
            master_seed: 11,
        };
        let a = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
        let b = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
        assert_eq!(a.mean_loss, b.mean_loss);
        assert_eq!(a.mean_cum_bits, b.mean_cum_bits);

        let single = TrainConfig { trials: 1, ..config };
        let exp = run_experiment(&scheme, &profiles, &loss, &single).unwrap();
        let run = run_single_trial(&scheme, &profiles, &loss, &single, 0).unwrap();
        for (t, rec) in run.records.iter().enumerate() {
            assert_eq!(exp.mean_loss[t], rec.loss);
        }
    }

    #[test]
    fn ideal_gd_descends_monotonically() {
        let loss = quadratic(6);
        let profiles = sample_profiles(4, 0.1, 2.0, 1.1, 12).unwrap();
        let spec = SchemeSpec::parse("ideal_sgd").unwrap();
        let scheme = build_scheme(&spec, &profiles, 8, 16, 16, EtaChoice::One, 12).unwrap();
        let gamma = 1.0 / loss.smoothness();
        let config = TrainConfig {
            iterations: 60,
            schedule: LrSchedule::Fixed(gamma),
            optimizer: Optimizer::Gd,
            trials: 1,
            master_seed: 12,
        };
        let series = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
        for w in series.mean_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
        // Exact gradients: cumulative bits grow by k*l*32 per iteration.
        let per_iter = 4.0 * 16.0 * 32.0;
        for (t, &cb) in series.mean_cum_bits.iter().enumerate() {
            assert_eq!(cb, per_iter * t as f64);
        }
    }

    #[test]
    fn adam_two_track_limit_matches_single_track() {
        let loss = quadratic(7);
        let profiles = sample_profiles(4, 0.1, 2.0, 1.1, 13).unwrap();
        let spec = SchemeSpec::parse("proposed").unwrap();
        let scheme = build_scheme(&spec, &profiles, 8, 16, 20, EtaChoice::One, 13).unwrap();
        let base = TrainConfig {
            iterations: 40,
            schedule: LrSchedule::Fixed(0.05),
            optimizer: Optimizer::adam(Some(1e12)),
            trials: 1,
            master_seed: 13,
        };
        let two_track = run_single_trial(&scheme, &profiles, &loss, &base, 0).unwrap();
        let single_cfg = TrainConfig {
            optimizer: Optimizer::adam(None),
            ..base
        };
        let single = run_single_trial(&scheme, &profiles, &loss, &single_cfg, 0).unwrap();
        for (a, b) in two_track.records.iter().zip(&single.records) {
            assert!(
                (a.loss - b.loss).abs() <= 1e-8 * b.loss.abs().max(1.0),
                "iteration {}: {} vs {}",
                a.iteration,
                a.loss,
                b.loss
            );
        }
    }

    #[test]
    fn adam_stays_put_on_zero_gradients() {
        // A zero loss everywhere: gradient is identically zero.
        let rows: Vec<(usize, usize, f64, f64)> = (0..4).map(|m| (0usize, m, 1.0, 0.0)).collect();
        let q = crate::loss::QuadraticLoss::from_rows(1, 4, &rows).unwrap();
        let loss = LossModel::Quadratic(q);
        let profiles = perfect_profiles(2);
        let spec = SchemeSpec::parse("proposed").unwrap();
        let scheme = build_scheme(&spec, &profiles, 1, 4, 12, EtaChoice::One, 2).unwrap();
        let config = TrainConfig {
            iterations: 5,
            schedule: LrSchedule::Fixed(0.1),
            optimizer: Optimizer::adam(None),
            trials: 1,
            master_seed: 2,
        };
        // Start at the optimum (zero): gradients are zero, so the model must
        // not move.
        let run = run_single_trial(&scheme, &profiles, &loss, &config, 0).unwrap();
        for rec in &run.records {
            assert_eq!(rec.loss, 0.0);
            assert_eq!(rec.dist_sq, Some(0.0));
        }
    }

    #[test]
    fn residual_nearly_zero_for_perfect_high_precision_fleet() {
        let profiles = perfect_profiles(4);
        let c = vec![1.0; 4];
        let masses = target_masses(&c, 8).unwrap();
        let alpha = segment_construction(&masses, 8).unwrap();
        let design = realize_code_with_weights(alpha, &profiles, c, vec![1.0; 4]).unwrap();
        let mut rng = substream(31, &[0]);
        let gradients: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let g_norm_sq: f64 = {
            let mut g = vec![0.0; 16];
            for gj in &gradients {
                for (a, &b) in g.iter_mut().zip(gj) {
                    *a += b;
                }
            }
            g.iter().map(|v| v * v).sum()
        };
        let stats =
            monte_carlo_residual(&design, &profiles, &[24; 4], &gradients, 2000, 31).unwrap();
        assert!(stats.total_mse < 1e-6 * g_norm_sq);
    }

    #[test]
    fn residual_respects_bound_and_split() {
        let profiles = sample_profiles(6, 0.1, 2.0, 1.1, 41).unwrap();
        let l = 24usize;
        let z = vec![4u32; 6];
        let phi: Vec<f64> = z.iter().map(|&zi| variance_coeff(zi, l).unwrap()).collect();
        let c: Vec<f64> = profiles
            .iter()
            .zip(&phi)
            .map(|(w, &ph)| (w.p + ph) / (1.0 - w.p))
            .collect();
        let masses = target_masses(&c, 10).unwrap();
        let alpha = segment_construction(&masses, 10).unwrap();
        let mut rng = substream(42, &[0]);
        let design = crate::design::realize_code(alpha, &profiles, c.clone(), &mut rng).unwrap();

        let grad_bound = 1.0f64;
        let gradients: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                let target = grad_bound.sqrt() * rng.gen_range(0.7..1.0);
                raw.iter().map(|v| v * target / norm).collect()
            })
            .collect();
        let stats =
            monte_carlo_residual(&design, &profiles, &z, &gradients, 20_000, 43).unwrap();
        let bound = residual_error_bound(&design.c, 10, grad_bound);
        assert!(
            stats.total_mse <= bound + 3.0 * stats.total_se,
            "mse {} exceeds bound {} (se {})",
            stats.total_mse,
            bound,
            stats.total_se
        );
        let defect = stats.total_mse - stats.straggler_mse - stats.quant_mse;
        assert!(
            defect.abs() <= 4.0 * stats.split_se.max(1e-12),
            "split defect {defect} vs se {}",
            stats.split_se
        );
        // Unbiasedness, coordinate-wise.
        for m in 0..l {
            assert!(
                stats.bias[m].abs() <= 4.0 * stats.bias_se[m].max(1e-12),
                "bias at {m}: {} (se {})",
                stats.bias[m],
                stats.bias_se[m]
            );
        }
    }

    use crate::rng::substream;
    use rand::Rng;
}
