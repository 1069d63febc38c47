//! Zero-mean valuation noise with bounded density and a finite moment of
//! some order `p ∈ (1, 2]`.
//!
//! Every model exposes its exact density and cdf, a sampler, and the three
//! declared constants the pricing algorithms rely on: the density bound `L`,
//! the moment order `p`, and the moment bound `σ_p ≥ (E|ξ|^p)^{1/p}`.
//! [`NoiseModel::certify`] checks the declarations numerically.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureSpec, TailDecay};
use crate::rng::seeded;

/// One atom of a smoothed discrete distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A discrete distribution whose atoms are replaced by uniform bumps of
/// width `1/L`, each on the half-open interval `[x - 1/(2L), x + 1/(2L))`.
///
/// The bumps are symmetric about their atoms, so the mean equals the atomic
/// mean exactly; the density on a bump is `weight · L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedTwoPoint {
    atoms: Vec<Atom>,
    density_cap: f64,
}

impl SmoothedTwoPoint {
    pub fn new(atoms: Vec<Atom>, density_cap: f64) -> Result<Self> {
        if !(density_cap.is_finite() && density_cap > 0.0) {
            return Err(Error::InvalidArgument(format!("density cap must be positive, got {density_cap}")));
        }
        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.weight != 0.0).collect();
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        for a in &atoms {
            if !a.location.is_finite() || !a.weight.is_finite() || a.weight < 0.0 || a.weight > 1.0 {
                return Err(Error::InvalidArgument(format!("bad atom {a:?}")));
            }
        }
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("atom weights sum to {mass}, expected 1")));
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        let width = 1.0 / density_cap;
        for w in atoms.windows(2) {
            if w[1].location - w[0].location < width * (1.0 - 1e-12) {
                return Err(Error::BumpOverlap(format!(
                    "atoms at {} and {} are closer than the bump width {width}",
                    w[0].location, w[1].location
                )));
            }
        }
        Ok(Self { atoms, density_cap })
    }

    /// A single atom at `location`: the uniform law on a width-`1/L` window.
    pub fn point(location: f64, density_cap: f64) -> Result<Self> {
        Self::new(vec![Atom { location, weight: 1.0 }], density_cap)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density_cap(&self) -> f64 {
        self.density_cap
    }

    pub fn width(&self) -> f64 {
        1.0 / self.density_cap
    }

    fn bump(&self, a: &Atom) -> (f64, f64) {
        let half = 0.5 * self.width();
        (a.location - half, a.location + half)
    }

    pub fn density(&self, x: f64) -> f64 {
        for a in &self.atoms {
            let (lo, hi) = self.bump(a);
            if x >= lo && x < hi {
                return a.weight * self.density_cap;
            }
        }
        0.0
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for a in &self.atoms {
            let (lo, hi) = self.bump(a);
            if x >= hi {
                acc += a.weight;
            } else if x > lo {
                acc += a.weight * (x - lo) * self.density_cap;
            }
        }
        acc.min(1.0)
    }

    pub fn max_density(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).fold(0.0, f64::max) * self.density_cap
    }

    /// Mean of the atomic skeleton, which the smoothing preserves.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.location).sum()
    }

    /// `E|X|^p` of the smoothed law, in closed form.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let half = 0.5 * self.width();
        self.atoms.iter().map(|a| a.weight * bump_abs_moment(a.location, half, p)).sum()
    }

    /// `E|X|^p` of the atomic skeleton.
    pub fn atomic_abs_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.location.abs().powf(p)).sum()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.atoms
            .iter()
            .flat_map(|a| {
                let (lo, hi) = self.bump(a);
                [lo, hi]
            })
            .collect()
    }

    pub fn support(&self) -> (f64, f64) {
        let first = self.bump(&self.atoms[0]).0;
        let last = self.bump(self.atoms.last().expect("non-empty")).1;
        (first, last)
    }

    /// Constant pieces `(lo, hi, density)` covering the support, including
    /// zero-density gaps between bumps.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.atoms.len());
        let mut prev_hi: Option<f64> = None;
        for a in &self.atoms {
            let (lo, hi) = self.bump(a);
            if let Some(p) = prev_hi {
                if lo > p {
                    out.push((p, lo, 0.0));
                }
            }
            out.push((lo, hi, a.weight * self.density_cap));
            prev_hi = Some(hi);
        }
        out
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.atoms.last().expect("non-empty");
        for a in &self.atoms {
            acc += a.weight;
            if u < acc {
                chosen = a;
                break;
            }
        }
        let offset: f64 = rng.random();
        chosen.location + (offset - 0.5) * self.width()
    }
}

/// `E|c + U|^p` for `U` uniform on `[-r, r]`.
fn bump_abs_moment(c: f64, r: f64, p: f64) -> f64 {
    let c_abs = c.abs();
    let ratio = r / c_abs;
    if c_abs > r && ratio < 1e-3 {
        // The closed form cancels catastrophically for far atoms; expand
        // E(1 + y)^p with y uniform on [-ratio, ratio] instead.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=4 {
            let j = 2.0 * k as f64;
            term *= (p - j + 2.0) * (p - j + 1.0) / (j * (j - 1.0)) * ratio * ratio;
            sum += term / (j + 1.0);
        }
        return c_abs.powf(p) * sum;
    }
    let antideriv = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
    (antideriv(c + r) - antideriv(c - r)) / (2.0 * r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    StudentT { nu: f64 },
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
    SmoothedTwoPoint { distribution: SmoothedTwoPoint },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    density_bound: f64,
    moment_order: f64,
    moment_bound: f64,
}

fn student_t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln()
}

fn check_order(p: f64) -> Result<()> {
    if p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("moment order must lie in (1, 2], got {p}")))
    }
}

impl NoiseModel {
    /// Student-t with `nu > 1` degrees of freedom; `σ_p` is computed by
    /// quadrature for the requested order `p < nu`.
    pub fn student_t(nu: f64, p: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 1.0) {
            return Err(Error::InvalidArgument(format!("Student-t needs nu > 1 for a finite mean, got {nu}")));
        }
        check_order(p)?;
        let mut model = Self {
            kind: NoiseKind::StudentT { nu },
            density_bound: student_t_log_norm(nu).exp(),
            moment_order: p,
            moment_bound: 0.0,
        };
        model.moment_bound = model.pth_moment(p)?.powf(1.0 / p);
        Ok(model)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian { sigma },
            density_bound: 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()),
            moment_order: 2.0,
            moment_bound: sigma,
        })
    }

    /// Uniform on `[-half_width, half_width]`.
    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self {
            kind: NoiseKind::Uniform { half_width },
            density_bound: 0.5 / half_width,
            moment_order: 2.0,
            moment_bound: half_width / 3f64.sqrt(),
        })
    }

    /// Wraps a smoothed discrete law; its skeleton must be centred.
    pub fn smoothed(distribution: SmoothedTwoPoint) -> Result<Self> {
        let mean = distribution.mean();
        if mean.abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("noise must be zero-mean, skeleton mean is {mean}")));
        }
        let density_bound = distribution.max_density();
        let moment_bound = distribution.abs_moment(2.0).sqrt();
        Ok(Self {
            kind: NoiseKind::SmoothedTwoPoint { distribution },
            density_bound,
            moment_order: 2.0,
            moment_bound,
        })
    }

    /// Re-declares the moment order and recomputes `σ_p` for it.
    pub fn with_moment_order(mut self, p: f64) -> Result<Self> {
        check_order(p)?;
        self.moment_bound = self.pth_moment(p)?.powf(1.0 / p);
        self.moment_order = p;
        Ok(self)
    }

    /// Overrides the declared constants without checking them; use
    /// [`certify`](Self::certify) to test a declaration.
    pub fn declare(mut self, density_bound: f64, moment_order: f64, moment_bound: f64) -> Self {
        self.density_bound = density_bound;
        self.moment_order = moment_order;
        self.moment_bound = moment_bound;
        self
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            NoiseKind::StudentT { nu } => format!("student-t({nu})"),
            NoiseKind::Uniform { half_width } => format!("uniform(-{half_width},{half_width})"),
            NoiseKind::Gaussian { sigma } => format!("gaussian(0,{sigma})"),
            NoiseKind::SmoothedTwoPoint { distribution } => {
                format!("smoothed-two-point({} atoms, L={})", distribution.atoms().len(), distribution.density_cap())
            }
        }
    }

    pub fn density_bound(&self) -> f64 {
        self.density_bound
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn moment_bound(&self) -> f64 {
        self.moment_bound
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::StudentT { nu } => {
                (student_t_log_norm(*nu) - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
            }
            NoiseKind::Uniform { half_width } => {
                if x.abs() <= *half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            NoiseKind::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            NoiseKind::SmoothedTwoPoint { distribution } => distribution.density(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::StudentT { nu } => {
                if x.is_infinite() {
                    return if x > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
                if x < 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
            NoiseKind::Uniform { half_width } => ((x + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
            NoiseKind::Gaussian { sigma } => 0.5 * erfc(-x / (sigma * std::f64::consts::SQRT_2)),
            NoiseKind::SmoothedTwoPoint { distribution } => distribution.cdf(x),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            NoiseKind::StudentT { .. } | NoiseKind::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            NoiseKind::Uniform { half_width } => (-half_width, *half_width),
            NoiseKind::SmoothedTwoPoint { distribution } => distribution.support(),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            NoiseKind::StudentT { .. } | NoiseKind::Gaussian { .. } => Vec::new(),
            NoiseKind::Uniform { half_width } => vec![-half_width, *half_width],
            NoiseKind::SmoothedTwoPoint { distribution } => distribution.breakpoints(),
        }
    }

    /// Polynomial decay exponent of the density tails, if any.
    pub fn tail_index(&self) -> Option<f64> {
        match &self.kind {
            NoiseKind::StudentT { nu } => Some(*nu),
            _ => None,
        }
    }

    fn density_decay(&self) -> TailDecay {
        self.tail_index().map(|nu| nu + 1.0)
    }

    /// Locations of the density maximum (or of each plateau).
    pub fn mode_points(&self) -> Vec<f64> {
        match &self.kind {
            NoiseKind::SmoothedTwoPoint { distribution } => distribution.atoms().iter().map(|a| a.location).collect(),
            _ => vec![0.0],
        }
    }

    /// `∫_lo^hi g(x) f(x) dx` where `|g(x)| = O(|x|^growth)`.
    pub fn integrate_against(
        &self,
        g: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        growth: f64,
        spec: &QuadratureSpec,
    ) -> Result<f64> {
        let (s_lo, s_hi) = self.support();
        let (a, b) = (lo.max(s_lo), hi.min(s_hi));
        if a >= b {
            return Ok(0.0);
        }
        let mut cuts = self.breakpoints();
        cuts.extend(self.mode_points());
        let decay = self.density_decay().map(|k| k - growth);
        integrate(|x| g(x) * self.density(x), a, b, &cuts, decay, spec)
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64, growth: f64, spec: &QuadratureSpec) -> Result<f64> {
        self.integrate_against(g, f64::NEG_INFINITY, f64::INFINITY, growth, spec)
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.expect(|_| 1.0, 0.0, &QuadratureSpec::default())
    }

    pub fn mean(&self) -> Result<f64> {
        self.expect(|x| x, 1.0, &QuadratureSpec::default())
    }

    /// `E|ξ|^p` by quadrature.
    pub fn pth_moment(&self, p: f64) -> Result<f64> {
        self.pth_moment_with(p, &QuadratureSpec::default())
    }

    pub fn pth_moment_with(&self, p: f64, spec: &QuadratureSpec) -> Result<f64> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!("moment order must be positive, got {p}")));
        }
        if let Some(nu) = self.tail_index() {
            if p >= nu {
                return Err(Error::DivergentMoment { order: p, tail_index: nu });
            }
        }
        self.expect(|x| x.abs().powf(p), p, spec)
    }

    /// The `prob`-quantile, by bisection on the cdf.
    pub fn quantile(&self, prob: f64) -> f64 {
        let (s_lo, s_hi) = self.support();
        let mut lo = if s_lo.is_finite() { s_lo } else { -1.0 };
        let mut hi = if s_hi.is_finite() { s_hi } else { 1.0 };
        while self.cdf(lo) > prob {
            lo *= 2.0;
        }
        while self.cdf(hi) < prob {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < prob {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sampler(&self) -> NoiseSampler {
        match &self.kind {
            NoiseKind::StudentT { nu } => NoiseSampler::StudentT(StudentT::new(*nu).expect("validated nu")),
            NoiseKind::Gaussian { sigma } => NoiseSampler::Gaussian(Normal::new(0.0, *sigma).expect("validated sigma")),
            NoiseKind::Uniform { half_width } => NoiseSampler::Uniform(*half_width),
            NoiseKind::SmoothedTwoPoint { distribution } => NoiseSampler::Smoothed(distribution.clone()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().draw(rng)
    }

    /// `n` i.i.d. draws from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng: ChaCha8Rng = seeded(seed);
        let sampler = self.sampler();
        (0..n).map(|_| sampler.draw(&mut rng)).collect()
    }

    /// Numerically checks the declared `(L, p, σ_p)` and the zero-mean
    /// requirement.
    pub fn certify(&self) -> CertificationReport {
        const GRID: usize = 10_000;
        let mut failures = Vec::new();
        let spec = QuadratureSpec::default();

        let mean = self.mean();
        let mass = self.total_mass();
        let lo = self.quantile(5e-6);
        let hi = self.quantile(1.0 - 5e-6);
        let mut sup = 0.0f64;
        let mut sup_at = 0.0;
        let mut probe = |x: f64| {
            let d = self.density(x);
            if d > sup {
                sup = d;
                sup_at = x;
            }
        };
        for i in 0..GRID {
            probe(lo + (hi - lo) * i as f64 / (GRID - 1) as f64);
        }
        for m in self.mode_points() {
            probe(m);
        }
        let order_ok = self.moment_order > 1.0 && self.moment_order <= 2.0;
        let moment = self.pth_moment_with(self.moment_order, &spec);

        let mean_value = match &mean {
            Ok(m) => *m,
            Err(e) => {
                failures.push(format!("mean: {e}"));
                f64::NAN
            }
        };
        let mass_value = match &mass {
            Ok(m) => *m,
            Err(e) => {
                failures.push(format!("normalisation: {e}"));
                f64::NAN
            }
        };
        let moment_value = match &moment {
            Ok(m) => *m,
            Err(e) => {
                failures.push(format!("moment: {e}"));
                f64::NAN
            }
        };

        let mean_ok = mean_value.abs() <= 1e-8;
        let mass_ok = (mass_value - 1.0).abs() <= 1e-8;
        let density_ok = sup <= self.density_bound * (1.0 + 1e-12);
        let moment_ok = moment_value <= self.moment_bound.powf(self.moment_order) + 10.0 * spec.abs_tol;

        if !mean_ok {
            failures.push(format!("mean {mean_value:e} is not zero"));
        }
        if !mass_ok {
            failures.push(format!("density integrates to {mass_value}"));
        }
        if !density_ok {
            failures.push(format!("density reaches {sup} > declared bound {}", self.density_bound));
        }
        if !order_ok {
            failures.push(format!("moment order {} outside (1, 2]", self.moment_order));
        }
        if !moment_ok {
            failures.push(format!(
                "E|x|^{} = {moment_value} exceeds declared sigma_p^p = {}",
                self.moment_order,
                self.moment_bound.powf(self.moment_order)
            ));
        }

        CertificationReport {
            model: self.name(),
            declared_density_bound: self.density_bound,
            declared_moment_order: self.moment_order,
            declared_moment_bound: self.moment_bound,
            mean: mean_value,
            total_mass: mass_value,
            density_sup: sup,
            density_sup_location: sup_at,
            pth_moment: moment_value,
            pass: failures.is_empty(),
            failures,
        }
    }
}

/// A sampler built once per model so hot loops avoid re-validating
/// distribution parameters.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    StudentT(StudentT<f64>),
    Gaussian(Normal<f64>),
    Uniform(f64),
    Smoothed(SmoothedTwoPoint),
}

impl NoiseSampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::StudentT(d) => d.sample(rng),
            NoiseSampler::Gaussian(d) => d.sample(rng),
            NoiseSampler::Uniform(r) => {
                let u: f64 = rng.random();
                (2.0 * u - 1.0) * r
            }
            NoiseSampler::Smoothed(d) => d.draw(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub model: String,
    pub declared_density_bound: f64,
    pub declared_moment_order: f64,
    pub declared_moment_bound: f64,
    pub mean: f64,
    pub total_mass: f64,
    pub density_sup: f64,
    pub density_sup_location: f64,
    pub pth_moment: f64,
    pub pass: bool,
    pub failures: Vec<String>,
}
