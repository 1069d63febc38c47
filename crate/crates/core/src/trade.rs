//! Gain-of-trade mechanics and the closed-form expected-gain quantities.
//!
//! With `V = m + ξ`, `W = m + ζ` and a price `m + δ`, the expected gain is
//! `h(δ) = E[(ξ - ζ) 1{ζ ≤ δ ≤ ξ} + (ζ - ξ) 1{ξ ≤ δ ≤ ζ}]`. It is maximised at
//! `δ = 0`, with `h'(δ) = -δ (f_ξ(δ) + f_ζ(δ))`, so the regret of an offset is
//! `h(0) - h(δ) = ∫_0^|δ| s (f_ξ(±s) + f_ζ(±s)) ds ≤ L δ²`.

use rand::Rng;
use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::noise::NoiseModel;
use crate::quadrature::{integrate, QuadratureSpec};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainParams {
    pub price: f64,
    pub valuation_v: f64,
    pub valuation_w: f64,
}

/// `|v - w|` when the price lies between the valuations (inclusive), else 0.
#[inline]
pub fn gain(price: f64, v: f64, w: f64) -> f64 {
    let (lo, hi) = if v <= w { (v, w) } else { (w, v) };
    if lo <= price && price <= hi {
        hi - lo
    } else {
        0.0
    }
}

pub fn gain_of_trade(params: &GainParams) -> Result<f64> {
    ensure_finite("price", params.price)?;
    ensure_finite("valuation_v", params.valuation_v)?;
    ensure_finite("valuation_w", params.valuation_w)?;
    Ok(gain(params.price, params.valuation_v, params.valuation_w))
}

/// `Ψ(δ) = E[(ξ - δ)⁺]` and `Φ(δ) = E[(δ - ξ)⁺]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneSided {
    pub psi: f64,
    pub phi: f64,
}

pub fn one_sided_expectations(noise: &NoiseModel, delta: f64, spec: &QuadratureSpec) -> Result<OneSided> {
    ensure_finite("delta", delta)?;
    let psi = noise.integrate_against(|x| x - delta, delta, f64::INFINITY, 1.0, spec)?;
    let phi = noise.integrate_against(|x| delta - x, f64::NEG_INFINITY, delta, 1.0, spec)?;
    Ok(OneSided { psi, phi })
}

/// `2 · max(σ_p(ξ), σ_p(ζ))`, an upper bound on the expected gain at the
/// optimal price and hence on any single round's regret.
pub fn gain_upper_bound(noise_xi: &NoiseModel, noise_zeta: &NoiseModel) -> f64 {
    2.0 * noise_xi.moment_bound().max(noise_zeta.moment_bound())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// The expected-gain curve `δ ↦ h(δ)` for a buyer/seller noise pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedGainCurve {
    noise_xi: NoiseModel,
    noise_zeta: NoiseModel,
    quadrature: QuadratureSpec,
    cuts: Vec<f64>,
}

impl ExpectedGainCurve {
    pub fn new(noise_xi: NoiseModel, noise_zeta: NoiseModel) -> Result<Self> {
        for n in [&noise_xi, &noise_zeta] {
            let l = n.density_bound();
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidArgument(format!("{}: density bound must be positive and finite", n.name())));
            }
            let p = n.moment_order();
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidArgument(format!("{}: moment order {p} outside (1, 2]", n.name())));
            }
        }
        let mut cuts: Vec<f64> = noise_xi.breakpoints();
        cuts.extend(noise_zeta.breakpoints());
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        Ok(Self {
            noise_xi,
            noise_zeta,
            quadrature: QuadratureSpec::default(),
            cuts,
        })
    }

    pub fn with_quadrature(mut self, spec: QuadratureSpec) -> Self {
        self.quadrature = spec;
        self
    }

    pub fn noise_xi(&self) -> &NoiseModel {
        &self.noise_xi
    }

    pub fn noise_zeta(&self) -> &NoiseModel {
        &self.noise_zeta
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    /// `L = max(L_ξ, L_ζ)`.
    pub fn density_bound(&self) -> f64 {
        self.noise_xi.density_bound().max(self.noise_zeta.density_bound())
    }

    #[inline]
    pub fn summed_density(&self, x: f64) -> f64 {
        self.noise_xi.density(x) + self.noise_zeta.density(x)
    }

    pub fn h_prime(&self, delta: f64) -> f64 {
        -delta * self.summed_density(delta)
    }

    /// `h(0) - h(δ)` as the integral of `s (f_ξ + f_ζ)` from 0 to `δ`.
    pub fn expected_regret_of_offset(&self, delta: f64) -> Result<f64> {
        ensure_finite("delta", delta)?;
        if delta == 0.0 {
            return Ok(0.0);
        }
        let sign = delta.signum();
        let reach = delta.abs();
        let cuts: Vec<f64> = self.cuts.iter().map(|c| c * sign).filter(|c| *c > 0.0 && *c < reach).collect();
        let value = integrate(
            |s| s * self.summed_density(sign * s),
            0.0,
            reach,
            &cuts,
            None,
            &self.quadrature,
        )?;
        let cap = self.density_bound() * delta * delta;
        if value > cap + 10.0 * self.quadrature.abs_tol {
            return Err(Error::Numeric(format!(
                "regret {value} at offset {delta} exceeds the self-bounding cap {cap}"
            )));
        }
        Ok(value.max(0.0))
    }

    /// `h(δ)` assembled from one-sided expectations and tail probabilities,
    /// independently of the derivative formula:
    /// `h = F_ζ Ψ_ξ + S_ξ Φ_ζ + S_ζ Φ_ξ + F_ξ Ψ_ζ`.
    pub fn expected_gain(&self, delta: f64) -> Result<f64> {
        let xi = one_sided_expectations(&self.noise_xi, delta, &self.quadrature)?;
        let zeta = one_sided_expectations(&self.noise_zeta, delta, &self.quadrature)?;
        let f_xi = self.noise_xi.cdf(delta);
        let f_zeta = self.noise_zeta.cdf(delta);
        Ok(f_zeta * xi.psi + (1.0 - f_xi) * zeta.phi + (1.0 - f_zeta) * xi.phi + f_xi * zeta.psi)
    }

    /// Unbiased Monte-Carlo estimate of `h(δ)` in noise coordinates.
    pub fn expected_gain_monte_carlo(&self, delta: f64, n_samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
        ensure_finite("delta", delta)?;
        if n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        let mut rng_xi = stream_rng(seed, Stream::Xi);
        let mut rng_zeta = stream_rng(seed, Stream::Zeta);
        let sx = self.noise_xi.sampler();
        let sz = self.noise_zeta.sampler();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n_samples {
            let g = gain(delta, sx.draw(&mut rng_xi), sz.draw(&mut rng_zeta));
            sum += g;
            sum_sq += g * g;
        }
        let n = n_samples as f64;
        let mean = sum / n;
        let var = if n_samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Ok(MonteCarloEstimate {
            estimate: mean,
            std_error: (var / n).sqrt(),
        })
    }

    /// Draws one `(ξ, ζ)` pair; used by the realized-regret bookkeeping.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng_xi: &mut R, rng_zeta: &mut R) -> (f64, f64) {
        (self.noise_xi.draw(rng_xi), self.noise_zeta.draw(rng_zeta))
    }
}

/// The default offset grid: 41 equally spaced points on `[-3, 3]` plus the
/// support edges of both noise models that fall inside it.
pub fn offset_grid(curve: &ExpectedGainCurve) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..41).map(|i| -3.0 + 6.0 * i as f64 / 40.0).collect();
    for n in [curve.noise_xi(), curve.noise_zeta()] {
        let (lo, hi) = n.support();
        grid.extend([lo, hi].into_iter().filter(|x| x.is_finite() && x.abs() <= 3.0));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Outcome of the self-bounding property suite for one noise pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub noise_xi: String,
    pub noise_zeta: String,
    pub density_bound: f64,
    /// `max_δ (regret(δ) - L δ²)`; the bound holds when this is `≤ tol`.
    pub self_bound_worst_excess: f64,
    /// `max |FD h - h'|` over the derivative checkpoints.
    pub derivative_worst_error: f64,
    /// `max |Ψ - Φ + δ|` over the grid, both noises.
    pub identity_worst_error: f64,
    pub sign_ok: bool,
    pub monotone_ok: bool,
    pub pass: bool,
}

pub const SELF_BOUND_TOL: f64 = 1e-8;
pub const DERIVATIVE_TOL: f64 = 1e-5;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const DERIVATIVE_CHECKPOINTS: [f64; 4] = [-1.0, -0.1, 0.1, 1.0];
const FD_STEP: f64 = 1e-3;

/// Central difference of the quadrature route to `h`.
pub fn finite_difference_h(curve: &ExpectedGainCurve, delta: f64) -> Result<f64> {
    Ok((curve.expected_gain(delta + FD_STEP)? - curve.expected_gain(delta - FD_STEP)?) / (2.0 * FD_STEP))
}

pub fn verify_lemma(curve: &ExpectedGainCurve) -> Result<LemmaReport> {
    let grid = offset_grid(curve);
    let l = curve.density_bound();

    let mut excess = f64::NEG_INFINITY;
    let mut monotone_ok = true;
    let mut sign_ok = true;
    let mut identity = 0.0f64;
    // Walk outward from 0 on each side to check monotone growth in |δ|.
    for side in [-1.0, 1.0] {
        let mut prev: Option<f64> = None;
        let mut pts: Vec<f64> = grid.iter().copied().filter(|d| d * side >= 0.0).collect();
        pts.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        for d in pts {
            let r = curve.expected_regret_of_offset(d)?;
            excess = excess.max(r - l * d * d);
            if let Some(pr) = prev {
                if r + 1e-12 < pr {
                    monotone_ok = false;
                }
            }
            if r < 0.0 {
                monotone_ok = false;
            }
            prev = Some(r);
            let hp = curve.h_prime(d);
            if hp * d > 0.0 || (d != 0.0 && curve.summed_density(d) > 0.0 && hp * d >= 0.0) {
                sign_ok = false;
            }
        }
    }
    for d in &grid {
        for n in [curve.noise_xi(), curve.noise_zeta()] {
            let os = one_sided_expectations(n, *d, curve.quadrature())?;
            identity = identity.max((os.psi - os.phi + d).abs());
        }
    }
    let mut derivative = 0.0f64;
    for d in DERIVATIVE_CHECKPOINTS {
        derivative = derivative.max((finite_difference_h(curve, d)? - curve.h_prime(d)).abs());
    }
    let pass = excess <= SELF_BOUND_TOL
        && derivative <= DERIVATIVE_TOL
        && identity <= IDENTITY_TOL
        && sign_ok
        && monotone_ok;
    Ok(LemmaReport {
        noise_xi: curve.noise_xi().name(),
        noise_zeta: curve.noise_zeta().name(),
        density_bound: l,
        self_bound_worst_excess: excess,
        derivative_worst_error: derivative,
        identity_worst_error: identity,
        sign_ok,
        monotone_ok,
        pass,
    })
}
