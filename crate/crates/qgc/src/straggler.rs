//! Heterogeneous straggler model.
//!
//! Worker `i` misses the per-iteration deadline independently with
//! probability `p_i`. Under the shifted-exponential delay model with
//! straggling parameter `psi_i` and deadline `tau_th >= 1`, that probability
//! is `exp(-psi_i * (tau_th - 1))`.

use crate::error::{Error, Result};
use crate::rng::{purpose, substream};
use rand::Rng;

/// Per-worker straggling profile.
///
/// Profiles with `p = 1` are rejected: such a worker never reports and every
/// decoding coefficient downstream would divide by `1 - p`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerProfile {
    /// Worker index, 0-based.
    pub id: usize,
    /// Straggling parameter of the delay model, when the profile came from one.
    pub psi: Option<f64>,
    /// Probability of missing the deadline, in `[0, 1)`.
    pub p: f64,
}

impl WorkerProfile {
    /// Build from an explicit straggler probability.
    pub fn from_prob(id: usize, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::DegenerateWorker(p));
        }
        Ok(Self { id, psi: None, p })
    }

    /// Build from the shifted-exponential model; `tau_th = 1` gives `p = 1`
    /// and is rejected.
    pub fn from_straggling(id: usize, psi: f64, tau_th: f64) -> Result<Self> {
        let p = straggler_prob(psi, tau_th)?;
        if p >= 1.0 {
            return Err(Error::DegenerateModel(tau_th));
        }
        Ok(Self {
            id,
            psi: Some(psi),
            p,
        })
    }
}

/// Straggler probability `exp(-psi * (tau_th - 1))` for `psi > 0`, `tau_th >= 1`.
pub fn straggler_prob(psi: f64, tau_th: f64) -> Result<f64> {
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::InvalidStragglingParam(psi));
    }
    if !(tau_th >= 1.0) || !tau_th.is_finite() {
        return Err(Error::InvalidThreshold(tau_th));
    }
    Ok((-psi * (tau_th - 1.0)).exp())
}

/// Draw `k` profiles with `psi_i` i.i.d. uniform on `[psi_min, psi_max]`.
pub fn sample_profiles(
    k: usize,
    psi_min: f64,
    psi_max: f64,
    tau_th: f64,
    master_seed: u64,
) -> Result<Vec<WorkerProfile>> {
    if !(psi_min > 0.0) || psi_min > psi_max {
        return Err(Error::InvalidStragglingParam(psi_min));
    }
    if !(tau_th > 1.0) {
        return Err(Error::DegenerateModel(tau_th));
    }
    let mut rng = substream(master_seed, &[purpose::PROFILES]);
    (0..k)
        .map(|id| {
            let psi = if psi_min == psi_max {
                psi_min
            } else {
                rng.gen_range(psi_min..=psi_max)
            };
            WorkerProfile::from_straggling(id, psi, tau_th)
        })
        .collect()
}

/// Sample per-worker availability indicators: `true` with probability `1 - p_i`,
/// independent across workers.
pub fn sample_indicators<R: Rng + ?Sized>(profiles: &[WorkerProfile], rng: &mut R) -> Vec<bool> {
    profiles.iter().map(|w| rng.gen::<f64>() >= w.p).collect()
}

/// Convenience: the `p` vector of a profile slice.
pub fn probs(profiles: &[WorkerProfile]) -> Vec<f64> {
    profiles.iter().map(|w| w.p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straggler_prob_examples() {
        assert!((straggler_prob(2.0, 1.1).unwrap() - 0.818731).abs() < 1e-6);
        assert!((straggler_prob(0.1, 1.1).unwrap() - 0.990050).abs() < 1e-6);
        // tau_th = 1 is degenerate: the bare formula gives 1, but a profile
        // built from it is rejected.
        assert_eq!(straggler_prob(5.0, 1.0).unwrap(), 1.0);
        assert!(WorkerProfile::from_straggling(0, 5.0, 1.0).is_err());
        assert!(matches!(
            straggler_prob(5.0, 0.9),
            Err(Error::InvalidThreshold(_))
        ));
    }

    #[test]
    fn profile_from_prob_rejects_one() {
        assert!(WorkerProfile::from_prob(0, 1.0).is_err());
        assert!(WorkerProfile::from_prob(0, -0.1).is_err());
        assert_eq!(WorkerProfile::from_prob(3, 0.25).unwrap().p, 0.25);
    }

    #[test]
    fn sample_profiles_default_range() {
        let profiles = sample_profiles(10, 0.1, 2.0, 1.1, 7).unwrap();
        assert_eq!(profiles.len(), 10);
        for w in &profiles {
            assert!(w.p >= 0.818730 && w.p <= 0.990050, "p={} out of range", w.p);
        }
        // Point distribution.
        let single = sample_profiles(1, 1.0, 1.0, 2.0, 7).unwrap();
        assert!((single[0].p - (-1.0f64).exp()).abs() < 1e-15);
        // Determinism.
        let again = sample_profiles(10, 0.1, 2.0, 1.1, 7).unwrap();
        assert_eq!(profiles, again);
        assert!(sample_profiles(10, 0.1, 2.0, 1.0, 7).is_err());
    }

    #[test]
    fn indicators_all_present_when_p_zero() {
        let profiles: Vec<_> = (0..4)
            .map(|i| WorkerProfile::from_prob(i, 0.0).unwrap())
            .collect();
        let mut rng = substream(1, &[purpose::STRAGGLERS]);
        assert_eq!(sample_indicators(&profiles, &mut rng), vec![true; 4]);
    }

    #[test]
    fn indicator_means_match_probs() {
        let n = 100_000usize;
        let probs = [0.5, 0.1, 0.9, 0.0];
        let profiles: Vec<_> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| WorkerProfile::from_prob(i, p).unwrap())
            .collect();
        let mut rng = substream(99, &[purpose::STRAGGLERS]);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            for (c, up) in counts.iter_mut().zip(sample_indicators(&profiles, &mut rng)) {
                *c += usize::from(up);
            }
        }
        for (i, &p) in probs.iter().enumerate() {
            let mean = counts[i] as f64 / n as f64;
            let expect = 1.0 - p;
            let se = (expect * p / n as f64).sqrt();
            assert!(
                (mean - expect).abs() <= 4.0 * se.max(1e-9),
                "worker {i}: mean {mean} vs {expect}"
            );
            if p == 0.5 {
                assert!((mean - 0.5).abs() <= 0.005);
            }
        }
    }

    #[test]
    fn indicators_are_pairwise_independent() {
        let n = 100_000usize;
        let profiles: Vec<_> = [0.3, 0.6, 0.85]
            .iter()
            .enumerate()
            .map(|(i, &p)| WorkerProfile::from_prob(i, p).unwrap())
            .collect();
        let mut rng = substream(123, &[purpose::STRAGGLERS]);
        let mut sums = [0.0f64; 3];
        let mut cross = [[0.0f64; 3]; 3];
        for _ in 0..n {
            let ind = sample_indicators(&profiles, &mut rng);
            for a in 0..3 {
                sums[a] += f64::from(u8::from(ind[a]));
                for b in (a + 1)..3 {
                    cross[a][b] += f64::from(u8::from(ind[a] && ind[b]));
                }
            }
        }
        let tol = 4.0 / (n as f64).sqrt();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let cov = cross[a][b] / n as f64 - (sums[a] / n as f64) * (sums[b] / n as f64);
                assert!(cov.abs() < tol, "cov({a},{b}) = {cov}");
            }
        }
    }
}
