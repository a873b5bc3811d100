//! Comparison coding schemes and scheme assembly.
//!
//! Besides the jointly optimized design, the simulator runs an ideal
//! centralized reference, disjoint-assignment SGD, Bernoulli gradient
//! coding, pairwise-replicated stochastic gradient coding, and the
//! straggler-only optimal structure with naive equal bit allocation. Biased
//! estimators are run through the same decoder path; their bias is a
//! measured quantity, not an error.

use crate::bitalloc::{equal_bit_widths, proposed_allocate};
use crate::design::{
    build_optimal_design, realize_code, segment_construction, target_masses, CodeDesign,
};
use crate::error::{Error, Result};
use crate::quantizer::variance_coeff;
use crate::rng::{purpose, substream};
use crate::sparse::SparseMatrix;
use crate::straggler::WorkerProfile;
use rand::Rng;

/// Which code a simulation run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeKind {
    /// Centralized updates with the true gradient; immune to stragglers.
    IdealSgd,
    /// Disjoint partitions, unit coefficients, no mitigation.
    IsSgd,
    /// Bernoulli encoding mask with expected load `d`, unit decoders.
    Bgc { d: f64 },
    /// Round-robin replication with degree `d`, coefficients `1/(d (1-p_i))`.
    Sgc { d: usize },
    /// Straggler-only optimal structure plus equal bit widths.
    OsgcEqualBits,
    /// Jointly optimized structure and bit allocation.
    Proposed,
}

/// A parsed scheme selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
}

impl SchemeSpec {
    /// Parse strings like `proposed`, `bgc:d=2`, `sgc:d=3`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, params) = match text.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (text, None),
        };
        let kind = match name {
            "ideal_sgd" | "sgd" => SchemeKind::IdealSgd,
            "is_sgd" => SchemeKind::IsSgd,
            "bgc" => {
                let d = parse_param(params, "d")?;
                if !(d > 0.0) {
                    return Err(Error::InvalidSchemeParam(format!("bgc needs d > 0, got {d}")));
                }
                SchemeKind::Bgc { d }
            }
            "sgc" => {
                let d = parse_param(params, "d")? as usize;
                if d == 0 {
                    return Err(Error::InvalidSchemeParam("sgc needs d >= 1".into()));
                }
                SchemeKind::Sgc { d }
            }
            "osgc_equalbits" | "osgc" => SchemeKind::OsgcEqualBits,
            "proposed" => SchemeKind::Proposed,
            "ehd" | "od" => {
                return Err(Error::UnknownScheme(format!(
                    "{name} (this baseline is intentionally not implemented)"
                )))
            }
            other => return Err(Error::UnknownScheme(other.to_string())),
        };
        Ok(Self { kind })
    }

    pub fn label(&self) -> String {
        match &self.kind {
            SchemeKind::IdealSgd => "ideal_sgd".into(),
            SchemeKind::IsSgd => "is_sgd".into(),
            SchemeKind::Bgc { d } => format!("bgc_d{d}"),
            SchemeKind::Sgc { d } => format!("sgc_d{d}"),
            SchemeKind::OsgcEqualBits => "osgc_equalbits".into(),
            SchemeKind::Proposed => "proposed".into(),
        }
    }
}

fn parse_param(params: Option<&str>, key: &str) -> Result<f64> {
    let params = params.ok_or_else(|| {
        Error::InvalidSchemeParam(format!("missing parameter block, expected {key}=VALUE"))
    })?;
    for part in params.split(',') {
        if let Some((k, v)) = part.split_once('=') {
            if k.trim() == key {
                return v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidSchemeParam(format!("bad value for {key}: {v}")));
            }
        }
    }
    Err(Error::InvalidSchemeParam(format!("missing parameter {key}")))
}

/// Disjoint contiguous assignment: partition `j` (1-based) goes to worker
/// `ceil(j k / n)` with unit coefficients. The estimator is biased whenever
/// any worker can straggle.
pub fn issgd_design(profiles: &[WorkerProfile], n: usize) -> Result<CodeDesign> {
    let k = profiles.len();
    if k > n {
        return Err(Error::InfeasibleAssignment { k, n });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for j in 1..=n {
        let worker = (j * k).div_ceil(n);
        rows[worker - 1].push((j - 1, 1.0));
    }
    let a = SparseMatrix::from_rows(n, rows);
    Ok(CodeDesign::from_encoding(a, vec![1.0; k], profiles, Vec::new()))
}

/// Bernoulli gradient coding: every entry of the encoding mask is one with
/// probability `d / k`, decoders fixed to one.
pub fn bgc_design<R: Rng + ?Sized>(
    profiles: &[WorkerProfile],
    n: usize,
    d: f64,
    rng: &mut R,
) -> Result<CodeDesign> {
    let k = profiles.len();
    if !(d > 0.0) || d > k as f64 {
        return Err(Error::InvalidSchemeParam(format!(
            "bgc needs 0 < d <= k, got d={d}, k={k}"
        )));
    }
    let rate = d / k as f64;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for row in rows.iter_mut() {
        for j in 0..n {
            if rng.gen::<f64>() < rate {
                row.push((j, 1.0));
            }
        }
    }
    let a = SparseMatrix::from_rows(n, rows);
    Ok(CodeDesign::from_encoding(a, vec![1.0; k], profiles, Vec::new()))
}

/// Stochastic gradient coding with per-partition replication degrees:
/// partition `j` lands on workers `(j + t) mod k` for `t < d_j` and carries
/// the coefficient `1/(d_j (1 - p_i))`, keeping the estimator unbiased under
/// unit decoders.
pub fn sgc_design(
    profiles: &[WorkerProfile],
    n: usize,
    replication: &[usize],
) -> Result<CodeDesign> {
    let k = profiles.len();
    if replication.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} replication degrees, got {}",
            replication.len()
        )));
    }
    if let Some(&d) = replication.iter().find(|&&d| d == 0 || d > k) {
        return Err(Error::InfeasibleReplication { d, k });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for (j, &d) in replication.iter().enumerate() {
        for t in 0..d {
            let worker = (j + t) % k;
            let coeff = 1.0 / (d as f64 * (1.0 - profiles[worker].p));
            rows[worker].push((j, coeff));
        }
    }
    let a = SparseMatrix::from_rows(n, rows);
    Ok(CodeDesign::from_encoding(a, vec![1.0; k], profiles, Vec::new()))
}

/// Straggler-only optimal structure (`c_i = p_i / (1 - p_i)`, quantization
/// ignored) with equal bit widths; the mismatch this induces is what the
/// joint design removes.
pub fn osgc_equalbits_design<R: Rng + ?Sized>(
    profiles: &[WorkerProfile],
    n: usize,
    z_tot: u64,
    rng: &mut R,
) -> Result<(CodeDesign, Vec<u32>)> {
    let z = equal_bit_widths(profiles, z_tot)?;
    let c: Vec<f64> = profiles.iter().map(|w| w.p / (1.0 - w.p)).collect();
    let masses = target_masses(&c, n)?;
    let alpha = segment_construction(&masses, n)?;
    let design = realize_code(alpha, profiles, c, rng)?;
    Ok((design, z))
}

/// A scheme instantiated for a concrete fleet and budget: the code (absent
/// for the centralized reference) plus per-worker bit widths.
#[derive(Debug, Clone)]
pub struct SchemeInstance {
    pub spec: SchemeSpec,
    pub design: Option<CodeDesign>,
    pub bit_widths: Vec<u32>,
}

impl SchemeInstance {
    pub fn label(&self) -> String {
        self.spec.label()
    }
}

/// Error-balance factor applied to the cost coefficients of the proposed
/// design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    /// Plain costs `(p + phi) / (1 - p)`.
    One,
    /// Match the quantization term to the mean straggler probability.
    Balance,
    Fixed(f64),
}

impl EtaChoice {
    pub fn resolve(&self, profiles: &[WorkerProfile], z_tot: u64, l: usize) -> Result<f64> {
        match self {
            EtaChoice::One => Ok(1.0),
            EtaChoice::Balance => crate::design::balance_eta(profiles, z_tot, l),
            EtaChoice::Fixed(v) => {
                if *v > 0.0 {
                    Ok(*v)
                } else {
                    Err(Error::InvalidArgument(format!("eta must be positive, got {v}")))
                }
            }
        }
    }
}

/// Instantiate a scheme for the given fleet, partition count, model
/// dimension, and total bit budget. Randomized constructions draw from
/// streams keyed by the master seed so instances are reproducible.
pub fn build_scheme(
    spec: &SchemeSpec,
    profiles: &[WorkerProfile],
    n: usize,
    l: usize,
    z_tot: u64,
    eta: EtaChoice,
    master_seed: u64,
) -> Result<SchemeInstance> {
    let k = profiles.len();
    let mut rng = substream(master_seed, &[purpose::CODE_WEIGHTS]);
    let instance = match &spec.kind {
        SchemeKind::IdealSgd => SchemeInstance {
            spec: spec.clone(),
            design: None,
            bit_widths: Vec::new(),
        },
        SchemeKind::IsSgd => SchemeInstance {
            spec: spec.clone(),
            design: Some(issgd_design(profiles, n)?),
            bit_widths: equal_bit_widths(profiles, z_tot)?,
        },
        SchemeKind::Bgc { d } => SchemeInstance {
            spec: spec.clone(),
            design: Some(bgc_design(profiles, n, *d, &mut rng)?),
            bit_widths: equal_bit_widths(profiles, z_tot)?,
        },
        SchemeKind::Sgc { d } => SchemeInstance {
            spec: spec.clone(),
            design: Some(sgc_design(profiles, n, &vec![*d; n])?),
            bit_widths: equal_bit_widths(profiles, z_tot)?,
        },
        SchemeKind::OsgcEqualBits => {
            let (design, z) = osgc_equalbits_design(profiles, n, z_tot, &mut rng)?;
            SchemeInstance {
                spec: spec.clone(),
                design: Some(design),
                bit_widths: z,
            }
        }
        SchemeKind::Proposed => {
            if z_tot < 2 * k as u64 {
                return Err(Error::InfeasibleBudget { z_tot, k });
            }
            let z_res = (z_tot - 2 * k as u64) as u32;
            let alloc = proposed_allocate(profiles, l, z_res);
            let z = alloc.bit_widths();
            let phi: Vec<f64> = z
                .iter()
                .map(|&zi| variance_coeff(zi.min(crate::quantizer::MAX_BIT_WIDTH), l))
                .collect::<Result<_>>()?;
            let eta = eta.resolve(profiles, z_tot, l)?;
            let design = build_optimal_design(profiles, &phi, eta, n, &mut rng)?;
            SchemeInstance {
                spec: spec.clone(),
                design: Some(design),
                bit_widths: z,
            }
        }
    };
    Ok(instance)
}
