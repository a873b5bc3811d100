//! Synthetic losses with known convexity constants.
//!
//! Both models expose per-partition gradients that sum to the full gradient,
//! a strong-convexity constant, and a smoothness constant. The quadratic has
//! a closed-form optimum; the logistic does not.

use crate::error::{Error, Result};
use rand::Rng;

/// One least-squares row `0.5 (sigma * beta[coord] - target)^2`.
#[derive(Debug, Clone)]
struct QuadRow {
    coord: usize,
    sigma: f64,
    target: f64,
}

/// Sum of per-coordinate least-squares terms split across partitions.
///
/// Every coordinate appears in a small number of rows, so the Hessian is
/// diagonal and the optimum, strong convexity, and smoothness are exact.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    dim: usize,
    partitions: Vec<Vec<QuadRow>>,
    optimum: Vec<f64>,
    lambda: f64,
    mu: f64,
}

impl QuadraticLoss {
    /// Build from explicit rows `(partition, coord, sigma, target)`.
    pub fn from_rows(n: usize, l: usize, rows: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let mut partitions: Vec<Vec<QuadRow>> = vec![Vec::new(); n];
        let mut hessian = vec![0.0f64; l];
        let mut rhs = vec![0.0f64; l];
        for &(part, coord, sigma, target) in rows {
            if part >= n || coord >= l {
                return Err(Error::InvalidArgument(format!(
                    "row ({part}, {coord}) out of bounds for n={n}, l={l}"
                )));
            }
            partitions[part].push(QuadRow { coord, sigma, target });
            hessian[coord] += sigma * sigma;
            rhs[coord] += sigma * target;
        }
        if hessian.iter().any(|&h| h <= 0.0) {
            return Err(Error::InvalidArgument(
                "every coordinate needs at least one row with nonzero sigma".into(),
            ));
        }
        let optimum: Vec<f64> = rhs.iter().zip(&hessian).map(|(r, h)| r / h).collect();
        let lambda = hessian.iter().cloned().fold(f64::INFINITY, f64::min);
        let mu = hessian.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            dim: l,
            partitions,
            optimum,
            lambda,
            mu,
        })
    }
}

/// Random well-conditioned quadratic: each coordinate gets two rows with
/// conflicting targets assigned to different partitions, with the diagonal
/// Hessian spread over `[lambda_target, 3 lambda_target]` and its minimum
/// pinned at `lambda_target`.
pub fn make_quadratic<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    lambda_target: f64,
    rng: &mut R,
) -> Result<QuadraticLoss> {
    if n == 0 || l == 0 || !(lambda_target > 0.0) {
        return Err(Error::InvalidArgument(
            "make_quadratic needs n, l >= 1 and lambda_target > 0".into(),
        ));
    }
    let mut rows = Vec::with_capacity(2 * l);
    for m in 0..l {
        let kappa = if m == 0 { 1.0 } else { rng.gen_range(1.0..3.0) };
        let h = lambda_target * kappa;
        let split: f64 = rng.gen_range(0.3..0.7);
        let sigma0 = (h * split).sqrt();
        let sigma1 = (h * (1.0 - split)).sqrt();
        let beta_true: f64 = rng.gen_range(-1.0..1.0);
        let offset: f64 = rng.gen_range(-0.3..0.3);
        rows.push(((2 * m) % n, m, sigma0, sigma0 * beta_true + offset));
        rows.push(((2 * m + 1) % n, m, sigma1, sigma1 * beta_true - offset));
    }
    QuadraticLoss::from_rows(n, l, &rows)
}

/// Binary logistic regression over synthetic Gaussian blobs, split into
/// contiguous partitions, with an optional ridge term that supplies strong
/// convexity.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    dim: usize,
    n: usize,
    samples_per_partition: usize,
    /// Flattened samples, row-major `S x l`.
    x: Vec<f64>,
    y: Vec<f64>,
    ridge: f64,
    mu: f64,
}

/// Draw a logistic instance: class means at `+/- 0.8 u` for a random unit
/// vector `u`, unit Gaussian noise, balanced labels.
pub fn make_logistic<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    samples_per_partition: usize,
    ridge: f64,
    rng: &mut R,
) -> Result<LogisticLoss> {
    if n == 0 || l == 0 || samples_per_partition == 0 || ridge < 0.0 {
        return Err(Error::InvalidArgument(
            "make_logistic needs n, l, samples_per_partition >= 1 and ridge >= 0".into(),
        ));
    }
    let total = n * samples_per_partition;
    let mut mean: Vec<f64> = (0..l).map(|_| standard_normal(rng)).collect();
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for v in &mut mean {
        *v *= 0.8 / norm;
    }
    let mut x = Vec::with_capacity(total * l);
    let mut y = Vec::with_capacity(total);
    for s in 0..total {
        let label = if s % 2 == 0 { 1.0 } else { -1.0 };
        y.push(label);
        for &mval in mean.iter() {
            x.push(label * mval + standard_normal(rng));
        }
    }
    let mu = 0.25 * gram_spectral_norm(&x, total, l) + ridge;
    Ok(LogisticLoss {
        dim: l,
        n,
        samples_per_partition,
        x,
        y,
        ridge,
        mu,
    })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw wasted, which is fine for setup code.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Largest eigenvalue of `X^T X` by power iteration.
fn gram_spectral_norm(x: &[f64], rows: usize, cols: usize) -> f64 {
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut value = 0.0;
    for _ in 0..300 {
        // w = X^T (X v)
        let mut xv = vec![0.0; rows];
        for (r, out) in xv.iter_mut().enumerate() {
            let row = &x[r * cols..(r + 1) * cols];
            *out = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let mut w = vec![0.0; cols];
        for (r, &val) in xv.iter().enumerate() {
            let row = &x[r * cols..(r + 1) * cols];
            for (wj, &xj) in w.iter_mut().zip(row) {
                *wj += val * xj;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if (next - value).abs() <= 1e-12 * next.max(1.0) {
            value = next;
            break;
        }
        value = next;
    }
    value
}

#[inline]
fn log1p_exp(t: f64) -> f64 {
    // ln(1 + e^t), stable for large |t|.
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A loss a simulation run can train on.
#[derive(Debug, Clone)]
pub enum LossModel {
    Quadratic(QuadraticLoss),
    Logistic(LogisticLoss),
}

impl LossModel {
    pub fn dim(&self) -> usize {
        match self {
            LossModel::Quadratic(q) => q.dim,
            LossModel::Logistic(g) => g.dim,
        }
    }

    pub fn partitions(&self) -> usize {
        match self {
            LossModel::Quadratic(q) => q.partitions.len(),
            LossModel::Logistic(g) => g.n,
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match self {
            LossModel::Quadratic(q) => q.lambda,
            LossModel::Logistic(g) => g.ridge,
        }
    }

    pub fn smoothness(&self) -> f64 {
        match self {
            LossModel::Quadratic(q) => q.mu,
            LossModel::Logistic(g) => g.mu,
        }
    }

    /// Known minimizer, when the model has one in closed form.
    pub fn optimum(&self) -> Option<&[f64]> {
        match self {
            LossModel::Quadratic(q) => Some(&q.optimum),
            LossModel::Logistic(_) => None,
        }
    }

    /// Full loss value plus per-partition gradients written into `grads`
    /// (flattened `n x l`, row per partition).
    pub fn eval(&self, beta: &[f64], grads: &mut [f64]) -> f64 {
        let l = self.dim();
        let n = self.partitions();
        debug_assert_eq!(grads.len(), n * l);
        grads.fill(0.0);
        match self {
            LossModel::Quadratic(q) => {
                let mut loss = 0.0;
                for (j, rows) in q.partitions.iter().enumerate() {
                    let g = &mut grads[j * l..(j + 1) * l];
                    for row in rows {
                        let resid = row.sigma * beta[row.coord] - row.target;
                        loss += 0.5 * resid * resid;
                        g[row.coord] += row.sigma * resid;
                    }
                }
                loss
            }
            LossModel::Logistic(lg) => {
                let mut loss = 0.0;
                let spp = lg.samples_per_partition;
                for j in 0..n {
                    let g = &mut grads[j * l..(j + 1) * l];
                    for s in j * spp..(j + 1) * spp {
                        let row = &lg.x[s * l..(s + 1) * l];
                        let margin =
                            lg.y[s] * row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                        loss += log1p_exp(-margin);
                        let weight = -lg.y[s] * sigmoid(-margin);
                        for (gi, &xi) in g.iter_mut().zip(row) {
                            *gi += weight * xi;
                        }
                    }
                    if lg.ridge > 0.0 {
                        let scale = lg.ridge / n as f64;
                        loss += 0.5 * scale * beta.iter().map(|b| b * b).sum::<f64>();
                        for (gi, &b) in g.iter_mut().zip(beta) {
                            *gi += scale * b;
                        }
                    }
                }
                loss
            }
        }
    }

    /// Loss contribution of a single partition.
    pub fn partition_loss(&self, j: usize, beta: &[f64]) -> f64 {
        match self {
            LossModel::Quadratic(q) => q.partitions[j]
                .iter()
                .map(|row| {
                    let resid = row.sigma * beta[row.coord] - row.target;
                    0.5 * resid * resid
                })
                .sum(),
            LossModel::Logistic(lg) => {
                let l = lg.dim;
                let spp = lg.samples_per_partition;
                let mut loss = 0.0;
                for s in j * spp..(j + 1) * spp {
                    let row = &lg.x[s * l..(s + 1) * l];
                    let margin = lg.y[s] * row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                    loss += log1p_exp(-margin);
                }
                if lg.ridge > 0.0 {
                    loss += 0.5 * (lg.ridge / lg.n as f64)
                        * beta.iter().map(|b| b * b).sum::<f64>();
                }
                loss
            }
        }
    }

    /// Unbiased mini-batch partition gradients: each partition samples a
    /// fraction of its rows uniformly with replacement and rescales so the
    /// estimator stays unbiased. Deterministic terms (the ridge) are kept
    /// exact.
    pub fn minibatch_grads<R: Rng + ?Sized>(
        &self,
        beta: &[f64],
        fraction: f64,
        rng: &mut R,
        grads: &mut [f64],
    ) {
        let l = self.dim();
        let n = self.partitions();
        debug_assert_eq!(grads.len(), n * l);
        grads.fill(0.0);
        match self {
            LossModel::Quadratic(q) => {
                for (j, rows) in q.partitions.iter().enumerate() {
                    let g = &mut grads[j * l..(j + 1) * l];
                    if rows.is_empty() {
                        continue;
                    }
                    let batch = ((rows.len() as f64 * fraction).ceil() as usize).max(1);
                    let scale = rows.len() as f64 / batch as f64;
                    for _ in 0..batch {
                        let row = &rows[rng.gen_range(0..rows.len())];
                        let resid = row.sigma * beta[row.coord] - row.target;
                        g[row.coord] += scale * row.sigma * resid;
                    }
                }
            }
            LossModel::Logistic(lg) => {
                let spp = lg.samples_per_partition;
                let batch = ((spp as f64 * fraction).ceil() as usize).max(1);
                let scale = spp as f64 / batch as f64;
                for j in 0..n {
                    let g = &mut grads[j * l..(j + 1) * l];
                    for _ in 0..batch {
                        let s = j * spp + rng.gen_range(0..spp);
                        let row = &lg.x[s * l..(s + 1) * l];
                        let margin =
                            lg.y[s] * row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                        let weight = -scale * lg.y[s] * sigmoid(-margin);
                        for (gi, &xi) in g.iter_mut().zip(row) {
                            *gi += weight * xi;
                        }
                    }
                    if lg.ridge > 0.0 {
                        let rscale = lg.ridge / n as f64;
                        for (gi, &b) in g.iter_mut().zip(beta) {
                            *gi += rscale * b;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn full_gradient(loss: &LossModel, beta: &[f64]) -> Vec<f64> {
        let l = loss.dim();
        let n = loss.partitions();
        let mut grads = vec![0.0; n * l];
        loss.eval(beta, &mut grads);
        let mut g = vec![0.0; l];
        for j in 0..n {
            for m in 0..l {
                g[m] += grads[j * l + m];
            }
        }
        g
    }

    /// Central differences of a single partition's loss, step 1e-5.
    fn numeric_partition_grad(loss: &LossModel, beta: &[f64], j: usize) -> Vec<f64> {
        let l = loss.dim();
        let eps = 1e-5;
        let mut out = vec![0.0; l];
        let mut point = beta.to_vec();
        for m in 0..l {
            point[m] = beta[m] + eps;
            let fp = loss.partition_loss(j, &point);
            point[m] = beta[m] - eps;
            let fm = loss.partition_loss(j, &point);
            out[m] = (fp - fm) / (2.0 * eps);
            point[m] = beta[m];
        }
        out
    }

    fn partition_grad(loss: &LossModel, beta: &[f64], j: usize) -> Vec<f64> {
        let l = loss.dim();
        let n = loss.partitions();
        let mut grads = vec![0.0; n * l];
        loss.eval(beta, &mut grads);
        grads[j * l..(j + 1) * l].to_vec()
    }

    #[test]
    fn quadratic_identity_instance() {
        let rows: Vec<(usize, usize, f64, f64)> = (0..4).map(|m| (0usize, m, 1.0, 0.0)).collect();
        let q = QuadraticLoss::from_rows(1, 4, &rows).unwrap();
        let loss = LossModel::Quadratic(q);
        assert_eq!(loss.optimum().unwrap(), &[0.0; 4]);
        assert_eq!(loss.strong_convexity(), 1.0);
        assert_eq!(loss.smoothness(), 1.0);
    }

    #[test]
    fn quadratic_gradient_vanishes_at_optimum() {
        let mut rng = substream(7, &[0]);
        let loss = LossModel::Quadratic(make_quadratic(6, 12, 1.0, &mut rng).unwrap());
        let beta_star = loss.optimum().unwrap().to_vec();
        let g = full_gradient(&loss, &beta_star);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-9, "gradient norm at optimum: {norm}");
        assert!((loss.strong_convexity() - 1.0).abs() < 1e-12);
        assert!(loss.smoothness() <= 3.0 + 1e-12);
    }

    #[test]
    fn quadratic_partition_grads_match_finite_differences() {
        let mut rng = substream(8, &[0]);
        let loss = LossModel::Quadratic(make_quadratic(5, 8, 1.0, &mut rng).unwrap());
        let beta: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for j in 0..loss.partitions() {
            let analytic = partition_grad(&loss, &beta, j);
            let numeric = numeric_partition_grad(&loss, &beta, j);
            for m in 0..8 {
                assert!(
                    (analytic[m] - numeric[m]).abs() < 1e-5,
                    "partition {j} coord {m}: {} vs {}",
                    analytic[m],
                    numeric[m]
                );
            }
        }
    }

    #[test]
    fn logistic_partition_grads_match_finite_differences_at_zero() {
        let mut rng = substream(9, &[0]);
        let loss = LossModel::Logistic(make_logistic(4, 6, 10, 0.0, &mut rng).unwrap());
        let beta = vec![0.0; 6];
        for j in 0..loss.partitions() {
            let analytic = partition_grad(&loss, &beta, j);
            let numeric = numeric_partition_grad(&loss, &beta, j);
            for m in 0..6 {
                assert!(
                    (analytic[m] - numeric[m]).abs() < 1e-5,
                    "partition {j} coord {m}: {} vs {}",
                    analytic[m],
                    numeric[m]
                );
            }
        }
    }

    #[test]
    fn logistic_all_labels_equal_keeps_gradient_direction() {
        // With every label +1 the per-sample weight -sigmoid(-margin) is
        // always negative, so the gradient keeps pointing against the sample
        // mean no matter where beta is.
        let mut rng = substream(10, &[0]);
        let mut lg = make_logistic(2, 4, 8, 0.0, &mut rng).unwrap();
        for label in lg.y.iter_mut() {
            *label = 1.0;
        }
        let l = lg.dim;
        let total = lg.y.len();
        let mut sample_mean = vec![0.0f64; l];
        for s in 0..total {
            for m in 0..l {
                sample_mean[m] += lg.x[s * l + m] / total as f64;
            }
        }
        let loss = LossModel::Logistic(lg);
        for scale in [0.0, 0.5, 2.0, -1.0] {
            let beta: Vec<f64> = sample_mean.iter().map(|v| v * scale).collect();
            let g = full_gradient(&loss, &beta);
            let proj: f64 = g.iter().zip(&sample_mean).map(|(a, b)| a * b).sum();
            assert!(proj < 0.0, "projection {proj} at scale {scale}");
        }
    }

    #[test]
    fn logistic_ridge_sets_strong_convexity() {
        let mut rng = substream(11, &[0]);
        let loss = LossModel::Logistic(make_logistic(3, 5, 6, 0.7, &mut rng).unwrap());
        assert_eq!(loss.strong_convexity(), 0.7);
        assert!(loss.smoothness() > 0.7);
    }

    #[test]
    fn minibatch_full_fraction_with_replacement_is_unbiased() {
        let mut rng = substream(12, &[0]);
        let loss = LossModel::Quadratic(make_quadratic(4, 6, 1.0, &mut rng).unwrap());
        let beta: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = loss.partitions();
        let l = loss.dim();
        let mut exact = vec![0.0; n * l];
        loss.eval(&beta, &mut exact);

        let trials = 20_000;
        let mut acc = vec![0.0; n * l];
        let mut batch = vec![0.0; n * l];
        for _ in 0..trials {
            loss.minibatch_grads(&beta, 0.5, &mut rng, &mut batch);
            for (a, b) in acc.iter_mut().zip(&batch) {
                *a += b;
            }
        }
        for (idx, (a, e)) in acc.iter().zip(&exact).enumerate() {
            let mean = a / trials as f64;
            assert!(
                (mean - e).abs() < 0.05 * e.abs().max(1.0),
                "entry {idx}: {mean} vs {e}"
            );
        }
    }
}
