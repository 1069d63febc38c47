//! Heavy-tail robust mean estimators: the scalar truncated mean, the
//! truncated score-vector fit for linear markets, per-cell truncated means
//! for Hölder markets, and plain least squares as a baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::CellGrid;

/// Parameters of the truncation level `τ = (u·n/log_term)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationConfig {
    pub u: f64,
    pub p: f64,
    pub log_term: f64,
}

impl TruncationConfig {
    pub fn new(u: f64, p: f64, log_term: f64) -> Result<Self> {
        if !(u.is_finite() && u > 0.0) {
            return Err(Error::InvalidArgument(format!("u must be positive, got {u}")));
        }
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (1, 2], got {p}")));
        }
        if !(log_term.is_finite() && log_term > 0.0) {
            return Err(Error::InvalidArgument(format!("log_term must be positive, got {log_term}")));
        }
        Ok(Self { u, p, log_term })
    }

    /// `u = (bound + σ_p)^p`.
    pub fn from_bounds(bound: f64, sigma_p: f64, p: f64, log_term: f64) -> Result<Self> {
        Self::new((bound + sigma_p).powf(p), p, log_term)
    }

    pub fn threshold(&self, n: usize) -> f64 {
        (self.u * n as f64 / self.log_term).powf(1.0 / self.p)
    }
}

/// Mean of `samples` with entries above `tau` in magnitude replaced by 0,
/// plus the fraction replaced.
pub fn truncate_at(samples: &[f64], tau: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    let mut dropped = 0usize;
    for &y in samples {
        if y.abs() <= tau {
            sum += y;
        } else {
            dropped += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((sum / n, dropped as f64 / n))
}

pub fn truncated_mean(samples: &[f64], cfg: &TruncationConfig) -> Result<f64> {
    Ok(truncate_at(samples, cfg.threshold(samples.len()))?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// `Σ̂⁻¹μ̂`, or `None` when `Σ̂` is below the eigenvalue floor.
    pub estimate: Option<Vec<f64>>,
    pub gram: DMatrix<f64>,
    pub score_mean: Vec<f64>,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub truncation_fraction: Vec<f64>,
}

fn check_design(contexts: &[Vec<f64>], responses: &[f64]) -> Result<usize> {
    if contexts.len() != responses.len() {
        return Err(Error::DimensionMismatch { expected: contexts.len(), actual: responses.len() });
    }
    let first = contexts.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidArgument("contexts must have at least one coordinate".into()));
    }
    if let Some(x) = contexts.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    Ok(d)
}

fn gram_matrix(contexts: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let mut gram = DMatrix::zeros(d, d);
    for x in contexts {
        for i in 0..d {
            for j in i..d {
                gram[(i, j)] += x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    gram
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let b = DVector::from_column_slice(rhs);
    let x = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => gram.clone().lu().solve(&b)?,
    };
    Some(x.iter().copied().collect())
}

/// Truncated score-vector fit: `μ̂_j` is the truncated mean of `x_j·Y` with
/// the shared threshold `τ(n)`, `Σ̂ = n⁻¹Σ x xᵀ`, and `φ̂ = Σ̂⁻¹μ̂`.
pub fn fit_linear(contexts: &[Vec<f64>], responses: &[f64], cfg: &TruncationConfig, eigen_floor: f64) -> Result<LinearFit> {
    let d = check_design(contexts, responses)?;
    let n = contexts.len();
    let tau = cfg.threshold(n);
    let mut score_mean = vec![0.0; d];
    let mut dropped = vec![0usize; d];
    for (x, &y) in contexts.iter().zip(responses) {
        for j in 0..d {
            let s = x[j] * y;
            if s.abs() <= tau {
                score_mean[j] += s;
            } else {
                dropped[j] += 1;
            }
        }
    }
    let nf = n as f64;
    score_mean.iter_mut().for_each(|m| *m /= nf);
    let gram = gram_matrix(contexts, d) / nf;
    let min_eig = min_eigenvalue(&gram);
    let estimate = if min_eig >= eigen_floor && min_eig > 0.0 { solve_spd(&gram, &score_mean) } else { None };
    Ok(LinearFit {
        estimate,
        gram,
        score_mean,
        min_eigenvalue: min_eig,
        threshold: tau,
        truncation_fraction: dropped.into_iter().map(|c| c as f64 / nf).collect(),
    })
}

/// Ordinary least squares on the raw responses.
pub fn fit_ols(contexts: &[Vec<f64>], responses: &[f64]) -> Result<Vec<f64>> {
    let d = check_design(contexts, responses)?;
    let gram = gram_matrix(contexts, d);
    let mut rhs = vec![0.0; d];
    for (x, &y) in contexts.iter().zip(responses) {
        for j in 0..d {
            rhs[j] += x[j] * y;
        }
    }
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) || min_eigenvalue(&gram) <= 1e-12 * scale {
        return Err(Error::SingularGram);
    }
    solve_spd(&gram, &rhs).ok_or(Error::SingularGram)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEstimates {
    pub grid: CellGrid,
    pub estimates: Vec<f64>,
    pub counts: Vec<usize>,
    pub truncation_fraction: Vec<f64>,
}

impl CellEstimates {
    pub fn is_empty_cell(&self, cell: usize) -> bool {
        self.counts[cell] == 0
    }

    /// Estimate for the cell containing `x`; `None` for an empty cell.
    pub fn estimate_at(&self, x: &[f64]) -> Result<Option<f64>> {
        let cell = self.grid.locate(x)?;
        Ok((!self.is_empty_cell(cell)).then(|| self.estimates[cell]))
    }

    pub fn empty_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }
}

/// Per-cell truncated means; each cell's threshold uses its own count `n_j`.
pub fn fit_cells(contexts: &[Vec<f64>], responses: &[f64], side: f64, cfg: &TruncationConfig) -> Result<CellEstimates> {
    let d = check_design(contexts, responses)?;
    let grid = CellGrid::new(d, side)?;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); grid.cell_count()];
    for (x, &y) in contexts.iter().zip(responses) {
        buckets[grid.locate(x)?].push(y);
    }
    let mut estimates = vec![0.0; grid.cell_count()];
    let mut counts = vec![0; grid.cell_count()];
    let mut truncation_fraction = vec![0.0; grid.cell_count()];
    for (j, ys) in buckets.iter().enumerate() {
        counts[j] = ys.len();
        if ys.is_empty() {
            continue;
        }
        let (m, frac) = truncate_at(ys, cfg.threshold(ys.len()))?;
        estimates[j] = m;
        truncation_fraction[j] = frac;
    }
    Ok(CellEstimates { grid, estimates, counts, truncation_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{ContextMode, ContextSampler};
    use crate::noise::NoiseModel;
    use proptest::prelude::*;

    #[test]
    fn forced_threshold_drops_outlier() {
        // τ = (100·3/3)^{1/2} = 10.
        let cfg = TruncationConfig::new(100.0, 2.0, 3.0).unwrap();
        assert!((cfg.threshold(3) - 10.0).abs() < 1e-12);
        assert!((truncated_mean(&[1.0, 2.0, 100.0], &cfg).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_arithmetic() {
        let cfg = TruncationConfig::new(1.0, 1.5, 1e4f64.ln()).unwrap();
        let oracle = (100.0 / 9.210_340_371_976_184f64).powf(2.0 / 3.0);
        assert!((cfg.threshold(100) - oracle).abs() < 1e-12);
        // The commonly quoted 4.9049 is a rounding of the same expression.
        assert!((cfg.threshold(100) - 4.9049).abs() < 2e-3);
    }

    #[test]
    fn inactive_truncation_is_sample_mean() {
        let cfg = TruncationConfig::new(1e6, 1.5, 1.0).unwrap();
        let xs = [0.3, -1.2, 4.0, 2.5];
        let mean = xs.iter().sum::<f64>() / 4.0;
        assert!((truncated_mean(&xs, &cfg).unwrap() - mean).abs() < 1e-15);
        assert!(matches!(truncated_mean(&[], &cfg), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn raising_threshold_moves_toward_mean(
            ys in prop::collection::vec(0.0f64..100.0, 1..40),
            t1 in 0.0f64..100.0,
            dt in 0.0f64..100.0,
            sign in prop::bool::ANY,
        ) {
            // For one-signed samples the excluded mass only shrinks.
            let ys: Vec<f64> = ys.into_iter().map(|y| if sign { y } else { -y }).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let (lo, _) = truncate_at(&ys, t1).unwrap();
            let (hi, _) = truncate_at(&ys, t1 + dt).unwrap();
            prop_assert!((hi - mean).abs() <= (lo - mean).abs() + 1e-12);
            let max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            let (all, frac) = truncate_at(&ys, max).unwrap();
            prop_assert!((all - mean).abs() <= 1e-12);
            prop_assert_eq!(frac, 0.0);
        }
    }

    fn linear_data(n: usize, phi: &[f64], noise: Option<&NoiseModel>, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let ctx = ContextSampler::new(phi.len(), ContextMode::Parametric).unwrap();
        let xs = ctx.sample_n(n, seed);
        let mut rng = crate::rng::seeded(seed ^ 0xABCD);
        let ys = xs
            .iter()
            .map(|x| {
                let m: f64 = x.iter().zip(phi).map(|(a, b)| a * b).sum();
                match noise {
                    Some(z) => m + 0.5 * (z.draw(&mut rng) + z.draw(&mut rng)),
                    None => m,
                }
            })
            .collect();
        (xs, ys)
    }

    #[test]
    fn noiseless_linear_recovery() {
        let phi = [0.5, -0.3];
        let (xs, ys) = linear_data(200, &phi, None, 3);
        let cfg = TruncationConfig::new(1e3, 1.5, 1.0).unwrap();
        let fit = fit_linear(&xs, &ys, &cfg, 1e-3).unwrap();
        assert!(fit.truncation_fraction.iter().all(|&f| f == 0.0));
        let est = fit.estimate.unwrap();
        for (a, b) in est.iter().zip(&phi) {
            assert!((a - b).abs() <= 1e-10);
        }
        let ols = fit_ols(&xs, &ys).unwrap();
        for (a, b) in ols.iter().zip(&phi) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn eigen_floor_fallback() {
        let xs = vec![vec![0.3, 0.4]];
        let cfg = TruncationConfig::new(1.0, 1.5, 1.0).unwrap();
        let fit = fit_linear(&xs, &[1.0], &cfg, 1e-3).unwrap();
        assert!(fit.estimate.is_none());
        assert!(fit.min_eigenvalue < 1e-12);
        assert!(matches!(fit_linear(&xs, &[1.0, 2.0], &cfg, 0.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ols_single_point_and_singular() {
        assert!((fit_ols(&[vec![1.0]], &[3.0]).unwrap()[0] - 3.0).abs() < 1e-15);
        assert!(matches!(fit_ols(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 2.0]), Err(Error::SingularGram)));
    }

    #[test]
    fn linear_error_bound_holds_for_most_seeds() {
        let phi = [0.5, -0.3];
        let (d, n, horizon) = (2usize, 100_000usize, 1usize << 17);
        let noise = NoiseModel::student_t(1.8, 1.5).unwrap();
        let sigma = noise.moment_bound();
        let lambda = ContextSampler::new(d, ContextMode::Parametric).unwrap().min_eigenvalue();
        let log_term = ((d * horizon) as f64).ln();
        let cfg = TruncationConfig::from_bounds(1.0, sigma, 1.5, log_term).unwrap();
        let bound = 4.0 * (d as f64).sqrt() * (1.0 + sigma) * (2.0 / lambda) * (log_term / n as f64).powf(1.0 / 3.0);
        let hits = (0..20u64)
            .filter(|&seed| {
                let (xs, ys) = linear_data(n, &phi, Some(&noise), 100 + seed);
                let est = fit_linear(&xs, &ys, &cfg, lambda / 2.0).unwrap().estimate.unwrap();
                let err = est.iter().zip(&phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                err <= bound
            })
            .count();
        assert!(hits >= 18, "{hits}/20 within {bound}");
    }

    #[test]
    fn noiseless_cells() {
        let cfg = TruncationConfig::new(1.0, 1.5, 1.0).unwrap();
        let xs = vec![vec![0.1], vec![0.2], vec![0.8]];
        let fit = fit_cells(&xs, &[1.0; 3], 0.5, &cfg).unwrap();
        assert_eq!(fit.counts, vec![2, 1]);
        assert_eq!(fit.estimates, vec![1.0, 1.0]);
        let sparse = fit_cells(&[vec![0.1]], &[1.0], 0.5, &cfg).unwrap();
        assert!(sparse.is_empty_cell(1));
        assert_eq!(sparse.estimate_at(&[0.9]).unwrap(), None);
    }

    #[test]
    fn cell_error_bound_holds_for_most_seeds() {
        let (n, side, horizon) = (100_000usize, 0.25, 100_000usize);
        let noise = NoiseModel::student_t(1.8, 1.5).unwrap();
        let sigma = noise.moment_bound();
        let cells = 4.0;
        let log_term = (cells * horizon as f64).ln();
        let cfg = TruncationConfig::from_bounds(0.0, sigma, 1.5, log_term).unwrap();
        let ctx = ContextSampler::new(1, ContextMode::Uniform).unwrap();
        let hits = (0..20u64)
            .filter(|&seed| {
                let xs = ctx.sample_n(n, seed);
                let mut rng = crate::rng::seeded(seed + 1000);
                let ys: Vec<f64> = (0..n).map(|_| noise.draw(&mut rng)).collect();
                let fit = fit_cells(&xs, &ys, side, &cfg).unwrap();
                let min_n = *fit.counts.iter().min().unwrap() as f64;
                let bound = 4.0 * cfg.u.powf(1.0 / 1.5) * (log_term / min_n).powf(1.0 / 3.0);
                fit.estimates.iter().fold(0.0f64, |m, e| m.max(e.abs())) <= bound
            })
            .count();
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn gram_concentration() {
        let (d, n) = (2usize, 10_000usize);
        let ctx = ContextSampler::new(d, ContextMode::Uniform).unwrap();
        let truth = ctx.second_moment();
        let bound = 4.0 * (d as f64 * ((d * n) as f64).ln() / n as f64).sqrt();
        for seed in 0..20 {
            let xs = ctx.sample_n(n, seed);
            let diff = gram_matrix(&xs, d) / n as f64 - &truth;
            let op = SymmetricEigen::new(diff).eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            assert!(op <= bound, "seed {seed}: {op} > {bound}");
        }
    }

    #[test]
    fn ols_breaks_under_infinite_variance() {
        let phi = [0.5, -0.3];
        let (d, n) = (2usize, 10_000usize);
        let noise = NoiseModel::student_t(1.5, 1.25).unwrap();
        let sigma = noise.moment_bound();
        let lambda = ContextSampler::new(d, ContextMode::Parametric).unwrap().min_eigenvalue();
        let cfg = TruncationConfig::from_bounds(1.0, sigma, 1.25, ((d * 2 * n) as f64).ln()).unwrap();
        let mut robust = Vec::new();
        let mut ols = Vec::new();
        let err = |e: &[f64]| e.iter().zip(&phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for seed in 0..50 {
            let (xs, ys) = linear_data(n, &phi, Some(&noise), 500 + seed);
            robust.push(err(&fit_linear(&xs, &ys, &cfg, lambda / 2.0).unwrap().estimate.unwrap()));
            ols.push(err(&fit_ols(&xs, &ys).unwrap()));
        }
        let q95 = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[(0.95 * (v.len() - 1) as f64).round() as usize]
        };
        let (r, o) = (q95(&mut robust), q95(&mut ols));
        assert!(o > r, "ols {o} vs truncated {r}");
    }
}
