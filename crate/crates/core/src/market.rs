//! Market value functions `m: [0,1]^d → ℝ` and context distributions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearMarket {
    phi: Vec<f64>,
    bound: f64,
}

impl LinearMarket {
    pub fn new(phi: Vec<f64>, bound: f64) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::InvalidArgument("coefficient vector must be non-empty".into()));
        }
        if phi.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        let norm = l2(&phi);
        if norm > bound {
            return Err(Error::InvalidArgument(format!("||phi|| = {norm} exceeds the bound {bound}")));
        }
        Ok(Self { phi, bound })
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// `m_θ(x) = Σ_j θ_j ε ψ_j(x)` with one bump per cell of a regular grid.
///
/// The bump is `ψ(x) = max(0, 1 - ((2/h)‖x - c_j‖_∞)^β)` for `β ≤ 1`. A single
/// bump is `(β, (2/h)^β)`-Hölder; two opposite-signed neighbours across a
/// shared face pick up a further `2^{1-β}`, so the mixture is
/// `(β, L_H)`-Hölder when `ε ≤ L_H (h/2)^β / 2^{1-β}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpMixture {
    grid: CellGrid,
    signs: Vec<i8>,
    amplitude: f64,
    beta: f64,
    holder_constant: f64,
}

impl BumpMixture {
    pub fn max_amplitude(side: f64, beta: f64, holder_constant: f64) -> f64 {
        holder_constant * (0.5 * side).powf(beta) / 2f64.powf(1.0 - beta)
    }

    pub fn new(dim: usize, side: f64, signs: Vec<i8>, amplitude: f64, beta: f64, holder_constant: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bump mixtures need smoothness in (0, 1]; a literal Hölder ratio with beta = {beta} > 1 admits only constants"
            )));
        }
        let grid = CellGrid::new(dim, side)?;
        if !grid.is_exact() {
            return Err(Error::InvalidArgument(format!("1/h must be an integer for a bump grid, got h = {side}")));
        }
        if signs.len() != grid.cell_count() {
            return Err(Error::DimensionMismatch { expected: grid.cell_count(), actual: signs.len() });
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        let cap = Self::max_amplitude(side, beta, holder_constant);
        if !(amplitude >= 0.0 && amplitude <= cap * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "amplitude {amplitude} violates the Hölder budget L_H (h/2)^beta / 2^(1-beta) = {cap}"
            )));
        }
        Ok(Self { grid, signs, amplitude, beta, holder_constant })
    }

    pub fn random_signs(dim: usize, side: f64, amplitude: f64, beta: f64, holder_constant: f64, seed: u64) -> Result<Self> {
        let grid = CellGrid::new(dim, side)?;
        let mut rng = seeded(seed);
        let signs = (0..grid.cell_count()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::new(dim, side, signs, amplitude, beta, holder_constant)
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let cell = self.grid.locate(x).expect("dimension checked");
        let h = self.grid.side();
        let center = self.grid.center(cell);
        let dist = x.iter().zip(&center).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let psi = (1.0 - (2.0 * dist / h).powf(self.beta)).max(0.0);
        f64::from(self.signs[cell]) * self.amplitude * psi
    }
}

/// Piecewise-linear interpolant on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidArgument("need at least two knots with one value each".into()));
        }
        if knots[0] != 0.0 || *knots.last().expect("len ≥ 2") != 1.0 {
            return Err(Error::InvalidArgument("knots must start at 0 and end at 1".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("values must be finite".into()));
        }
        Ok(Self { knots, values })
    }

    /// Lipschitz constant: the steepest segment.
    pub fn lipschitz(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => return self.values[i],
            Err(i) => i.clamp(1, self.knots.len() - 1),
        };
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (x - k0) / (k1 - k0)
    }
}

pub type MarketFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied function with declared smoothness.
#[derive(Clone)]
pub struct HolderMarket {
    pub dim: usize,
    pub beta: f64,
    pub holder_constant: f64,
    pub sup_bound: f64,
    pub function: MarketFn,
}

impl fmt::Debug for HolderMarket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HolderMarket")
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("holder_constant", &self.holder_constant)
            .field("sup_bound", &self.sup_bound)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Market {
    Linear(LinearMarket),
    Bumps(BumpMixture),
    PiecewiseLinear(PiecewiseLinear),
    Constant { dim: usize, value: f64 },
    Holder(HolderMarket),
}

impl Market {
    pub fn dim(&self) -> usize {
        match self {
            Market::Linear(m) => m.phi.len(),
            Market::Bumps(m) => m.grid.dim(),
            Market::PiecewiseLinear(_) => 1,
            Market::Constant { dim, .. } => *dim,
            Market::Holder(m) => m.dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        if let Some(c) = x.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidArgument(format!("context coordinate {c} outside [0, 1]")));
        }
        Ok(match self {
            Market::Linear(m) => dot(&m.phi, x),
            Market::Bumps(m) => m.eval_unchecked(x),
            Market::PiecewiseLinear(m) => m.eval_unchecked(x[0]),
            Market::Constant { value, .. } => *value,
            Market::Holder(m) => (m.function)(x),
        })
    }

    /// Declared `(β, L_H)`.
    pub fn holder(&self) -> (f64, f64) {
        match self {
            Market::Linear(m) => (1.0, l2(&m.phi)),
            Market::Bumps(m) => (m.beta, m.holder_constant),
            Market::PiecewiseLinear(m) => (1.0, m.lipschitz()),
            Market::Constant { .. } => (1.0, 0.0),
            Market::Holder(m) => (m.beta, m.holder_constant),
        }
    }

    /// Declared bound on `sup |m|` (`B` for linear markets).
    pub fn sup_bound(&self) -> f64 {
        match self {
            Market::Linear(m) => m.bound,
            Market::Bumps(m) => m.amplitude,
            Market::PiecewiseLinear(m) => m.values.iter().map(|v| v.abs()).fold(0.0, f64::max),
            Market::Constant { value, .. } => value.abs(),
            Market::Holder(m) => m.sup_bound,
        }
    }

    pub fn linear_coefficients(&self) -> Option<&[f64]> {
        match self {
            Market::Linear(m) => Some(&m.phi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub beta: f64,
    pub holder_constant: f64,
    pub max_ratio: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Largest sampled `|m(x) - m(x')| / ‖x - x'‖^β`. Half of the pairs are
/// uniform on the cube, half are local perturbations at random scales
/// between `1` and `1e-4`.
pub fn holder_certify(market: &Market, n_pairs: usize, seed: u64) -> Result<HolderReport> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
    }
    let (beta, lh) = market.holder();
    let d = market.dim();
    let mut rng = seeded(seed);
    let mut max_ratio = 0.0f64;
    for i in 0..n_pairs {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = if i % 2 == 0 {
            (0..d).map(|_| rng.random::<f64>()).collect()
        } else {
            let scale = 10f64.powf(-4.0 * rng.random::<f64>());
            x.iter().map(|c| (c + scale * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0)).collect()
        };
        let dist = l2(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        let ratio = (market.eval(&x)? - market.eval(&y)?).abs() / dist.powf(beta);
        max_ratio = max_ratio.max(ratio);
    }
    Ok(HolderReport {
        beta,
        holder_constant: lh,
        max_ratio,
        pairs: n_pairs,
        pass: max_ratio <= lh * (1.0 + 1e-9),
    })
}

const SUP_GRID_POINTS: usize = 1 << 14;

/// `max |m|` over a deterministic design of 2^14 points: a regular grid for
/// `d ≤ 2`, a Halton sequence above.
pub fn sup_on_grid(market: &Market) -> Result<f64> {
    let d = market.dim();
    let mut best = 0.0f64;
    match d {
        1 => {
            for i in 0..SUP_GRID_POINTS {
                let x = i as f64 / (SUP_GRID_POINTS - 1) as f64;
                best = best.max(market.eval(&[x])?.abs());
            }
        }
        2 => {
            let side = 128;
            for i in 0..side {
                for j in 0..side {
                    let x = [i as f64 / (side - 1) as f64, j as f64 / (side - 1) as f64];
                    best = best.max(market.eval(&x)?.abs());
                }
            }
        }
        _ => {
            let primes = first_primes(d);
            for i in 1..=SUP_GRID_POINTS {
                let x: Vec<f64> = primes.iter().map(|&b| radical_inverse(i, b)).collect();
                best = best.max(market.eval(&x)?.abs());
            }
        }
    }
    Ok(best)
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

fn first_primes(n: usize) -> Vec<usize> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2;
    while primes.len() < n {
        if primes.iter().all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// Uniform on `[0,1]^d`.
    #[default]
    Uniform,
    /// Uniform on `[0,1]^d` scaled by `1/√d`, so `‖x‖₂ ≤ 1`.
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextSampler {
    dim: usize,
    mode: ContextMode,
    min_eigenvalue: f64,
}

impl ContextSampler {
    pub fn new(dim: usize, mode: ContextMode) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("context dimension must be at least 1".into()));
        }
        let sigma = Self::second_moment_of(dim, mode);
        let min_eigenvalue = SymmetricEigen::new(sigma).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { dim, mode, min_eigenvalue })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> ContextMode {
        self.mode
    }

    fn scale(dim: usize, mode: ContextMode) -> f64 {
        match mode {
            ContextMode::Uniform => 1.0,
            ContextMode::Parametric => 1.0 / (dim as f64).sqrt(),
        }
    }

    fn second_moment_of(dim: usize, mode: ContextMode) -> DMatrix<f64> {
        let s2 = Self::scale(dim, mode).powi(2);
        DMatrix::from_fn(dim, dim, |i, j| s2 * if i == j { 1.0 / 3.0 } else { 0.25 })
    }

    /// `Σ = E[x xᵀ]`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        Self::second_moment_of(self.dim, self.mode)
    }

    /// Smallest eigenvalue `λ` of `Σ`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Lower bound `μ₀` on the density over the whole cube, when one exists.
    pub fn density_floor(&self) -> Option<f64> {
        match self.mode {
            ContextMode::Uniform => Some(1.0),
            ContextMode::Parametric if self.dim == 1 => Some(1.0),
            ContextMode::Parametric => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let s = Self::scale(self.dim, self.mode);
        (0..self.dim).map(|_| s * rng.random::<f64>()).collect()
    }

    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng: ChaCha8Rng = seeded(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> Market {
        Market::PiecewiseLinear(PiecewiseLinear::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.0]).unwrap())
    }

    #[test]
    fn linear_evaluation() {
        let m = Market::Linear(LinearMarket::new(vec![1.0, -2.0], 3.0).unwrap());
        assert_eq!(m.eval(&[0.5, 0.25]).unwrap(), 0.0);
        assert!(matches!(m.eval(&[0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(LinearMarket::new(vec![1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn bump_center_and_boundary() {
        let h = 0.25;
        let eps = BumpMixture::max_amplitude(h, 1.0, 1.0);
        let signs = vec![1, -1, 1, -1];
        let m = Market::Bumps(BumpMixture::new(1, h, signs, eps, 1.0, 1.0).unwrap());
        assert!((m.eval(&[0.125]).unwrap() - eps).abs() < 1e-15);
        assert!((m.eval(&[0.375]).unwrap() + eps).abs() < 1e-15);
        assert_eq!(m.eval(&[0.25]).unwrap(), 0.0);
        assert_eq!(m.eval(&[0.5]).unwrap(), 0.0);
        assert_eq!(m.eval(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn bump_amplitude_over_budget_rejected() {
        let h = 0.25;
        let over = 1.0 * h; // L_H h^β
        assert!(BumpMixture::new(1, h, vec![1; 4], over, 1.0, 1.0).is_err());
        assert!(BumpMixture::new(1, h, vec![1; 4], 0.1, 1.5, 1.0).is_err());
        assert!(BumpMixture::new(1, 0.3, vec![1; 4], 0.01, 1.0, 1.0).is_err());
    }

    #[test]
    fn holder_certification() {
        let c = Market::Constant { dim: 2, value: 3.0 };
        let r = holder_certify(&c, 1000, 1).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);

        let identity = Market::PiecewiseLinear(PiecewiseLinear::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap());
        let r = holder_certify(&identity, 10_000, 2).unwrap();
        assert!(r.max_ratio <= 1.0 + 1e-12 && r.pass);

        for (beta, d) in [(1.0, 1), (0.5, 1), (1.0, 2), (0.7, 2)] {
            let h = 0.25;
            let eps = BumpMixture::max_amplitude(h, beta, 2.0);
            let m = Market::Bumps(BumpMixture::random_signs(d, h, eps, beta, 2.0, 5).unwrap());
            let r = holder_certify(&m, 10_000, 3).unwrap();
            assert!(r.pass, "beta={beta} d={d}: {r:?}");
        }
        assert!(holder_certify(&tent(), 10_000, 4).unwrap().pass);
    }

    #[test]
    fn sup_grid() {
        assert!((sup_on_grid(&tent()).unwrap() - 0.5).abs() < 1e-3);
        let lin = Market::Linear(LinearMarket::new(vec![0.5, -0.3, 0.2], 1.0).unwrap());
        let s = sup_on_grid(&lin).unwrap();
        assert!(s <= 0.7 + 1e-12 && s > 0.6);
    }

    #[test]
    fn uniform_context_moments() {
        let s = ContextSampler::new(3, ContextMode::Uniform).unwrap();
        assert!((s.min_eigenvalue() - 1.0 / 12.0).abs() < 1e-12);
        let p = ContextSampler::new(2, ContextMode::Parametric).unwrap();
        assert!((p.min_eigenvalue() - 1.0 / 24.0).abs() < 1e-12);
        assert_eq!(p.density_floor(), None);
        assert_eq!(s.density_floor(), Some(1.0));
    }

    #[test]
    fn parametric_contexts_in_unit_ball() {
        let p = ContextSampler::new(2, ContextMode::Parametric).unwrap();
        let max = p.sample_n(1_000_000, 8).iter().map(|x| l2(x)).fold(0.0, f64::max);
        assert!(max <= 1.0);
    }

    #[test]
    fn uniform_cell_occupancy() {
        let s = ContextSampler::new(1, ContextMode::Uniform).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 10];
        for x in s.sample_n(n, 12) {
            counts[((x[0] * 10.0) as usize).min(9)] += 1;
        }
        let expected = n as f64 / 10.0;
        let sd = (n as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sd, "{counts:?}");
        }
        assert_eq!(s.sample_n(5, 3), s.sample_n(5, 3));
    }

    #[test]
    fn linear_markets_respect_bound() {
        let m = Market::Linear(LinearMarket::new(vec![0.5, -0.3], 1.0).unwrap());
        let ctx = ContextSampler::new(2, ContextMode::Parametric).unwrap();
        for x in ctx.sample_n(100_000, 1) {
            assert!(m.eval(&x).unwrap().abs() <= m.sup_bound());
        }
    }
}
