//! Lower-bound ingredients: the smoothed moment-matching pair, its exact
//! KL divergence, the reverse self-bounding constant, and the bandwidth and
//! amplitude bookkeeping of the Assouad construction.
//!
//! The atomic skeleton is `P₀ = δ₀` and `P₁ = (1-q)δ₀ + qδ_b` with
//! `q = (ε/σ_p)^{p/(p-1)}` and `b = ε/q`. `P₀` is centred, the mean gap is
//! `qb = ε`, and the p-th moment of `P₁` is `q b^p = σ_p^p` exactly. Each atom
//! is then replaced by a uniform bump of width `1/L`.
//!
//! Weights near 1 lose their complement in floating point (`1 - 1e-18 == 1`),
//! so each skeleton also carries exact log-weights, and divergences are
//! assembled from those.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{loglog_fit, theoretical_exponent, Setting};
use crate::market::BumpMixture;
use crate::noise::{Atom, SmoothedTwoPoint};
use crate::policy::bandwidth_exponent;
use crate::trade::ExpectedGainCurve;

/// A finite discrete law with log-weights kept alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skeleton {
    pub atoms: Vec<Atom>,
    pub log_weights: Vec<f64>,
}

impl Skeleton {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let log_weights = atoms.iter().map(|a| a.weight.ln()).collect();
        Self::with_log_weights(atoms, log_weights)
    }

    fn with_log_weights(atoms: Vec<Atom>, log_weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        if atoms.windows(2).any(|w| w[1].location <= w[0].location) {
            return Err(Error::InvalidArgument("atom locations must be strictly increasing".into()));
        }
        if atoms.iter().any(|a| !(a.weight > 0.0 && a.weight <= 1.0)) {
            return Err(Error::InvalidArgument("atom weights must lie in (0, 1]".into()));
        }
        Ok(Self { atoms, log_weights })
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.location).sum()
    }

    pub fn abs_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.location.abs().powf(p)).sum()
    }
}

/// `KL(P ‖ Q)` over atoms; infinite when `P` charges an atom `Q` lacks.
pub fn kl_discrete(p: &Skeleton, q: &Skeleton) -> f64 {
    let mut kl = 0.0;
    for (a, lw) in p.atoms.iter().zip(&p.log_weights) {
        match q.atoms.iter().position(|b| b.location == a.location) {
            Some(j) => kl += a.weight * (lw - q.log_weights[j]),
            None => return f64::INFINITY,
        }
    }
    kl
}

/// Elementary intervals of the common refinement of two smoothed laws, each
/// with the index of the covering bump in either law.
fn refinement(p: &SmoothedTwoPoint, q: &SmoothedTwoPoint) -> Vec<(f64, f64, Option<usize>, Option<usize>)> {
    let bumps = |d: &SmoothedTwoPoint| -> Vec<(f64, f64)> {
        let half = 0.5 * d.width();
        d.atoms().iter().map(|a| (a.location - half, a.location + half)).collect()
    };
    let (bp, bq) = (bumps(p), bumps(q));
    let mut cuts: Vec<f64> = bp.iter().chain(&bq).flat_map(|&(lo, hi)| [lo, hi]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let cover = |b: &[(f64, f64)], lo: f64, hi: f64| b.iter().position(|&(a, z)| a <= lo && hi <= z);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1], cover(&bp, w[0], w[1]), cover(&bq, w[0], w[1])))
        .collect()
}

/// Piecewise-constant `KL(P ‖ Q)` integrated over the common refinement.
pub fn kl_piecewise(p: &SmoothedTwoPoint, lp: &[f64], q: &SmoothedTwoPoint, lq: &[f64]) -> f64 {
    let (cap_p, cap_q) = (p.density_cap(), q.density_cap());
    let mut kl = 0.0;
    for (lo, hi, i, j) in refinement(p, q) {
        let Some(i) = i else { continue };
        let Some(j) = j else { return f64::INFINITY };
        let mass = p.atoms()[i].weight * cap_p * (hi - lo);
        kl += mass * ((lp[i] - lq[j]) + (cap_p.ln() - cap_q.ln()));
    }
    kl
}

/// `KL(P⊗P ‖ Q⊗Q)` summed directly over the product refinement.
pub fn kl_piecewise_product(p: &SmoothedTwoPoint, lp: &[f64], q: &SmoothedTwoPoint, lq: &[f64]) -> f64 {
    let (cap_p, cap_q) = (p.density_cap(), q.density_cap());
    let mut cells = Vec::new();
    for (lo, hi, i, j) in refinement(p, q) {
        let Some(i) = i else { continue };
        let Some(j) = j else { return f64::INFINITY };
        let mass = p.atoms()[i].weight * cap_p * (hi - lo);
        cells.push((mass, (lp[i] - lq[j]) + (cap_p.ln() - cap_q.ln())));
    }
    let mut kl = 0.0;
    for &(ma, ra) in &cells {
        for &(mb, rb) in &cells {
            kl += ma * mb * (ra + rb);
        }
    }
    kl
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPointPair {
    pub epsilon: f64,
    pub p: f64,
    pub sigma_p: f64,
    pub density_cap: f64,
    pub q: f64,
    /// Location of the far atom of `P₁`; `None` when `ε = 0`.
    pub far_atom: Option<f64>,
    /// `(2ε)^{1/(p-1)}`, reported for the non-overlap condition only.
    pub gamma: f64,
    pub atomic_p0: Skeleton,
    pub atomic_p1: Skeleton,
    pub smoothed_p0: SmoothedTwoPoint,
    pub smoothed_p1: SmoothedTwoPoint,
}

pub fn build_pair(epsilon: f64, p: f64, sigma_p: f64, density_cap: f64) -> Result<TwoPointPair> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, 2], got {p}")));
    }
    if !(sigma_p.is_finite() && sigma_p > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_p must be positive, got {sigma_p}")));
    }
    if !(density_cap.is_finite() && density_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {density_cap}")));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let limit = density_cap.powf(p - 1.0) / 2.0;
    if epsilon >= limit {
        return Err(Error::Infeasible(format!("epsilon {epsilon} must be below L^(p-1)/2 = {limit}")));
    }
    let gamma = (2.0 * epsilon).powf(1.0 / (p - 1.0));
    let origin = Atom { location: 0.0, weight: 1.0 };
    let atomic_p0 = Skeleton::with_log_weights(vec![origin], vec![0.0])?;
    let smoothed_p0 = SmoothedTwoPoint::new(vec![origin], density_cap)?;
    if epsilon == 0.0 {
        return Ok(TwoPointPair {
            epsilon,
            p,
            sigma_p,
            density_cap,
            q: 0.0,
            far_atom: None,
            gamma,
            atomic_p1: atomic_p0.clone(),
            smoothed_p1: smoothed_p0.clone(),
            atomic_p0,
            smoothed_p0,
        });
    }
    let q = (epsilon / sigma_p).powf(p / (p - 1.0));
    if q >= 1.0 {
        return Err(Error::Infeasible(format!(
            "moment budget too small: q = (epsilon/sigma_p)^(p/(p-1)) = {q} ≥ 1"
        )));
    }
    let b = epsilon / q;
    if b < 1.0 / density_cap {
        return Err(Error::BumpOverlap(format!("far atom at {b} is closer than the bump width 1/L = {}", 1.0 / density_cap)));
    }
    let atoms = vec![Atom { location: 0.0, weight: 1.0 - q }, Atom { location: b, weight: q }];
    let atomic_p1 = Skeleton::with_log_weights(atoms.clone(), vec![(-q).ln_1p(), q.ln()])?;
    let smoothed_p1 = SmoothedTwoPoint::new(atoms, density_cap)?;
    Ok(TwoPointPair {
        epsilon,
        p,
        sigma_p,
        density_cap,
        q,
        far_atom: Some(b),
        gamma,
        atomic_p0,
        atomic_p1,
        smoothed_p0,
        smoothed_p1,
    })
}

pub fn kl_atomic(pair: &TwoPointPair) -> f64 {
    kl_discrete(&pair.atomic_p0, &pair.atomic_p1)
}

pub fn kl_smoothed(pair: &TwoPointPair) -> f64 {
    kl_piecewise(
        &pair.smoothed_p0,
        &pair.atomic_p0.log_weights,
        &pair.smoothed_p1,
        &pair.atomic_p1.log_weights,
    )
}

/// KL of one full-feedback observation `(V, W)` under the product law.
pub fn kl_product(pair: &TwoPointPair) -> f64 {
    kl_piecewise_product(
        &pair.smoothed_p0,
        &pair.atomic_p0.log_weights,
        &pair.smoothed_p1,
        &pair.atomic_p1.log_weights,
    )
}

pub const KL_TOL: f64 = 1e-12;
pub const MEAN_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCertification {
    pub mean_gap_atomic: f64,
    pub mean_gap_smoothed: f64,
    pub mean_p0_smoothed: f64,
    pub kl_atomic: f64,
    pub kl_smoothed: f64,
    pub kl_product: f64,
    pub moment_p0_smoothed: f64,
    pub moment_p1_smoothed: f64,
    pub moment_p1_atomic: f64,
    pub moment_budget: f64,
    pub density_max_p0: f64,
    pub density_max_p1: f64,
    pub mean_gap_ok: bool,
    pub kl_ok: bool,
    pub moments_ok: bool,
    pub density_ok: bool,
    pub kl_doubling_ok: bool,
    pub pass: bool,
}

/// Mean of a smoothed law assembled bump by bump from its pieces.
fn piecewise_mean(d: &SmoothedTwoPoint) -> f64 {
    let width = d.width();
    d.pieces()
        .into_iter()
        .filter(|&(_, _, f)| f > 0.0)
        .map(|(lo, hi, f)| f * width * 0.5 * (lo + hi))
        .sum()
}

pub fn certify_pair(pair: &TwoPointPair) -> PairCertification {
    let gap_atomic = pair.atomic_p1.mean() - pair.atomic_p0.mean();
    let mean_p0 = piecewise_mean(&pair.smoothed_p0);
    let gap_smoothed = piecewise_mean(&pair.smoothed_p1) - mean_p0;
    let (ka, ks, kp) = (kl_atomic(pair), kl_smoothed(pair), kl_product(pair));
    let budget = 2.0 * pair.sigma_p.powf(pair.p);
    let m0 = pair.smoothed_p0.abs_moment(pair.p);
    let m1 = pair.smoothed_p1.abs_moment(pair.p);
    let dmax = |d: &SmoothedTwoPoint| d.pieces().iter().map(|x| x.2).fold(0.0, f64::max);
    let (d0, d1) = (dmax(&pair.smoothed_p0), dmax(&pair.smoothed_p1));
    let mean_gap_ok = (gap_atomic - pair.epsilon).abs() <= MEAN_GAP_TOL
        && (gap_smoothed - pair.epsilon).abs() <= MEAN_GAP_TOL
        && mean_p0.abs() <= MEAN_GAP_TOL;
    let kl_ok = ka.is_finite() && (ks - ka).abs() <= KL_TOL;
    let moments_ok = m0 <= budget && m1 <= budget;
    let density_ok = d0 <= pair.density_cap && d1 <= pair.density_cap;
    let kl_doubling_ok = (kp - 2.0 * ks).abs() <= KL_TOL;
    PairCertification {
        mean_gap_atomic: gap_atomic,
        mean_gap_smoothed: gap_smoothed,
        mean_p0_smoothed: mean_p0,
        kl_atomic: ka,
        kl_smoothed: ks,
        kl_product: kp,
        moment_p0_smoothed: m0,
        moment_p1_smoothed: m1,
        moment_p1_atomic: pair.atomic_p1.abs_moment(pair.p),
        moment_budget: budget,
        density_max_p0: d0,
        density_max_p1: d1,
        mean_gap_ok,
        kl_ok,
        moments_ok,
        density_ok,
        kl_doubling_ok,
        pass: mean_gap_ok && kl_ok && moments_ok && density_ok && kl_doubling_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlPoint {
    pub epsilon: f64,
    pub q: f64,
    pub kl_atomic: f64,
    pub kl_smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlSweep {
    pub p: f64,
    pub sigma_p: f64,
    pub density_cap: f64,
    pub points: Vec<KlPoint>,
    pub slope: f64,
    pub expected_slope: f64,
}

/// `n` log-spaced gaps from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn kl_sweep(p: f64, sigma_p: f64, density_cap: f64, epsilons: &[f64]) -> Result<KlSweep> {
    let points = epsilons
        .iter()
        .map(|&e| {
            let pair = build_pair(e, p, sigma_p, density_cap)?;
            Ok(KlPoint { epsilon: e, q: pair.q, kl_atomic: kl_atomic(&pair), kl_smoothed: kl_smoothed(&pair) })
        })
        .collect::<Result<Vec<_>>>()?;
    let line = loglog_fit(&points.iter().map(|k| (k.epsilon, k.kl_smoothed)).collect::<Vec<_>>())?;
    Ok(KlSweep { p, sigma_p, density_cap, points, slope: line.slope, expected_slope: p / (p - 1.0) })
}

pub const SELF_BOUND_GRID: usize = 2001;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseSelfBound {
    pub epsilon: f64,
    pub c0: f64,
    pub regret_plus: f64,
    pub regret_minus: f64,
    pub lower_bound: f64,
    pub holds: bool,
}

/// `c₀ = inf_{|s| ≤ ε} (f_ξ + f_ζ)(s)/2` on a grid, and the check
/// `regret(±ε) ≥ c₀ε²`.
pub fn reverse_selfbound_constant(curve: &ExpectedGainCurve, epsilon: f64) -> Result<ReverseSelfBound> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut c0 = f64::INFINITY;
    for i in 0..SELF_BOUND_GRID {
        let s = -epsilon + 2.0 * epsilon * i as f64 / (SELF_BOUND_GRID - 1) as f64;
        c0 = c0.min(0.5 * curve.summed_density(s));
    }
    if !(c0 > 0.0) {
        return Err(Error::Degenerate(format!("summed density vanishes inside [-{epsilon}, {epsilon}]; c0 = 0")));
    }
    let regret_plus = curve.expected_regret_of_offset(epsilon)?;
    let regret_minus = curve.expected_regret_of_offset(-epsilon)?;
    let lower_bound = c0 * epsilon * epsilon;
    let slack = 10.0 * curve.quadrature().abs_tol;
    Ok(ReverseSelfBound {
        epsilon,
        c0,
        regret_plus,
        regret_minus,
        lower_bound,
        holds: regret_plus >= lower_bound - slack && regret_minus >= lower_bound - slack,
    })
}

/// Optional noise-dependent part of an Assouad plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanNoise {
    pub density_cap: f64,
    pub sigma_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssouadPlan {
    pub horizon: usize,
    pub p: f64,
    pub beta: f64,
    pub d: usize,
    pub holder_constant: f64,
    pub mu0: f64,
    pub bandwidth_exponent: f64,
    pub h: f64,
    /// `L_H h^β`.
    pub epsilon: f64,
    /// Largest amplitude the bump profile admits at this `h`.
    pub bump_amplitude: f64,
    pub cells: f64,
    /// `μ₀ T h^d / 2`.
    pub samples_per_cell: f64,
    pub predicted_exponent: f64,
    /// `ε (T h^d)^{(p-1)/p}`; equals `L_H` when both constraints are active.
    pub barrier_constant: f64,
    pub constraints_active: bool,
    pub c0: Option<f64>,
    pub c0_error: Option<String>,
    /// `(c₀/4) T ε²`.
    pub regret_lower_bound: Option<f64>,
    pub pair: Option<PairCertification>,
    pub pair_error: Option<String>,
    /// `n · KL((V,W))` for one cell.
    pub n_kl: Option<f64>,
    /// Le Cam: `½(1 - √(n·KL/2))`.
    pub testing_error_bound: Option<f64>,
    /// `n · KL ≤ 1/2`, i.e. testing error at least 1/4.
    pub le_cam_target_met: Option<bool>,
}

#[allow(clippy::too_many_arguments)]
pub fn plan_assouad(
    horizon: usize,
    p: f64,
    beta: f64,
    d: usize,
    holder_constant: f64,
    mu0: f64,
    noise: Option<PlanNoise>,
    curve: Option<&ExpectedGainCurve>,
) -> Result<AssouadPlan> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
    }
    if !(holder_constant.is_finite() && holder_constant > 0.0) {
        return Err(Error::InvalidArgument(format!("L_H must be positive, got {holder_constant}")));
    }
    if !(mu0.is_finite() && mu0 > 0.0) {
        return Err(Error::InvalidArgument(format!("mu0 must be positive, got {mu0}")));
    }
    let e = bandwidth_exponent(p, beta, d)?;
    let t = horizon as f64;
    let h = t.powf(-e);
    let epsilon = holder_constant * h.powf(beta);
    let th = t * h.powi(d as i32);
    let barrier_constant = epsilon * th.powf((p - 1.0) / p);
    let predicted_exponent = theoretical_exponent(Setting::Nonparametric, p, beta, d)?.value;
    let samples_per_cell = mu0 * th / 2.0;

    let (c0, c0_error) = match curve.map(|c| reverse_selfbound_constant(c, epsilon)) {
        Some(Ok(r)) => (Some(r.c0), None),
        Some(Err(err)) => (None, Some(err.to_string())),
        None => (None, None),
    };
    let (mut pair, mut pair_error, mut n_kl, mut testing_error_bound, mut le_cam_target_met) = (None, None, None, None, None);
    if let Some(nz) = noise {
        match build_pair(epsilon, p, nz.sigma_p, nz.density_cap) {
            Ok(pr) => {
                let cert = certify_pair(&pr);
                let nk = samples_per_cell * cert.kl_product;
                n_kl = Some(nk);
                testing_error_bound = Some(0.5 * (1.0 - (nk / 2.0).sqrt()));
                le_cam_target_met = Some(nk <= 0.5);
                pair = Some(cert);
            }
            Err(err) => pair_error = Some(err.to_string()),
        }
    }
    Ok(AssouadPlan {
        horizon,
        p,
        beta,
        d,
        holder_constant,
        mu0,
        bandwidth_exponent: e,
        h,
        epsilon,
        bump_amplitude: if beta <= 1.0 { BumpMixture::max_amplitude(h, beta, holder_constant) } else { f64::NAN },
        cells: h.powi(-(d as i32)),
        samples_per_cell,
        predicted_exponent,
        barrier_constant,
        constraints_active: (barrier_constant - holder_constant).abs() <= 1e-9 * holder_constant,
        c0,
        c0_error,
        regret_lower_bound: c0.map(|c| c / 4.0 * t * epsilon * epsilon),
        pair,
        pair_error,
        n_kl,
        testing_error_bound,
        le_cam_target_met,
    })
}

pub const REMARK3_BETAS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParametricLimit {
    pub p: f64,
    pub d: usize,
    pub exponent: f64,
    /// `(β, nonparametric exponent)` along [`REMARK3_BETAS`].
    pub nonparametric: Vec<(f64, f64)>,
    /// The nonparametric exponents decrease towards `(2-p)/p` from above.
    pub monotone: bool,
    pub final_gap: f64,
}

pub fn remark3_parametric_exponent(p: f64, d: usize) -> Result<ParametricLimit> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, 2), got {p}")));
    }
    let exponent = (2.0 - p) / p;
    let nonparametric = REMARK3_BETAS
        .iter()
        .map(|&b| Ok((b, theoretical_exponent(Setting::Nonparametric, p, b, d)?.value)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = nonparametric.windows(2).all(|w| w[1].1 <= w[0].1) && nonparametric.iter().all(|x| x.1 >= exponent);
    let final_gap = nonparametric.last().expect("non-empty").1 - exponent;
    Ok(ParametricLimit { p, d, exponent, nonparametric, monotone, final_gap })
}
