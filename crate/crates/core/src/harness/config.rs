//! TOML experiment configuration.
//!
//! ```toml
//! horizons = [4096, 16384, 65536]
//! replications = 20
//! seed = 2026
//! regret_mode = "both"          # analytic | realized | both
//!
//! [noise.xi]
//! kind = "student-t"
//! nu = 1.8
//! p = 1.5
//!
//! [noise.zeta]
//! kind = "gaussian"
//! sigma = 1.0
//!
//! [market]
//! kind = "linear"
//! phi = [0.5, -0.3]
//! bound = 1.0
//!
//! [context]
//! mode = "parametric"           # uniform | parametric
//!
//! [[policy]]
//! kind = "parametric"
//!
//! [[policy]]
//! kind = "oracle"
//! ```
//!
//! Noise kinds: `student-t {nu, p}`, `gaussian {sigma}`,
//! `uniform {half_width}`, `smoothed-two-point {locations, weights,
//! density_cap}`; every kind accepts an optional `moment_order` that
//! re-declares `p` and recomputes `σ_p`.
//!
//! Market kinds: `linear {phi, bound}`, `piecewise-linear {knots, values}`,
//! `constant {dim, value}`, `bump-mixture {dim, side, beta,
//! holder_constant, amplitude?, signs? | sign_seed?}`.
//!
//! Policy kinds: `parametric {bound?, sigma_p?, p?, eigen_floor?}`,
//! `nonparametric {sup_bound?, sigma_p?, p?, beta?, bandwidth?}`,
//! `oracle`, `fixed {price}`, `ols-epoch`; all accept an optional `name`.
//! Unset hyperparameters default to the certified noise and market
//! constants, and `bandwidth` defaults to the theoretical rule.
//!
//! Optional sections: `[quadrature] {abs_tol, max_subdivisions}`,
//! `[output] {timing}` and `[certification] {holder_pairs}`. Unknown keys are
//! rejected everywhere.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::market::{BumpMixture, ContextMode, LinearMarket, Market, PiecewiseLinear};
use crate::noise::{Atom, NoiseModel, SmoothedTwoPoint};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretMode {
    Analytic,
    Realized,
    #[default]
    Both,
}

impl RegretMode {
    pub fn analytic(self) -> bool {
        matches!(self, RegretMode::Analytic | RegretMode::Both)
    }

    pub fn realized(self) -> bool {
        matches!(self, RegretMode::Realized | RegretMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    StudentT {
        nu: f64,
        p: f64,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        moment_order: Option<f64>,
    },
    Uniform {
        half_width: f64,
        #[serde(default)]
        moment_order: Option<f64>,
    },
    SmoothedTwoPoint {
        locations: Vec<f64>,
        weights: Vec<f64>,
        density_cap: f64,
        #[serde(default)]
        moment_order: Option<f64>,
    },
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseModel> {
        let (model, order) = match self {
            NoiseSpec::StudentT { nu, p } => (NoiseModel::student_t(*nu, *p)?, None),
            NoiseSpec::Gaussian { sigma, moment_order } => (NoiseModel::gaussian(*sigma)?, *moment_order),
            NoiseSpec::Uniform { half_width, moment_order } => (NoiseModel::uniform(*half_width)?, *moment_order),
            NoiseSpec::SmoothedTwoPoint { locations, weights, density_cap, moment_order } => {
                if locations.len() != weights.len() {
                    return Err(Error::Config("smoothed-two-point: locations and weights differ in length".into()));
                }
                let atoms = locations.iter().zip(weights).map(|(&location, &weight)| Atom { location, weight }).collect();
                (NoiseModel::smoothed(SmoothedTwoPoint::new(atoms, *density_cap)?)?, *moment_order)
            }
        };
        match order {
            Some(p) => model.with_moment_order(p),
            None => Ok(model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisePair {
    pub xi: NoiseSpec,
    pub zeta: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarketSpec {
    Linear {
        phi: Vec<f64>,
        bound: f64,
    },
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Constant {
        dim: usize,
        value: f64,
    },
    BumpMixture {
        dim: usize,
        side: f64,
        beta: f64,
        holder_constant: f64,
        /// Defaults to the largest amplitude the Hölder budget allows.
        #[serde(default)]
        amplitude: Option<f64>,
        #[serde(default)]
        signs: Option<Vec<i8>>,
        #[serde(default)]
        sign_seed: Option<u64>,
    },
}

impl MarketSpec {
    pub fn build(&self) -> Result<Market> {
        Ok(match self {
            MarketSpec::Linear { phi, bound } => Market::Linear(LinearMarket::new(phi.clone(), *bound)?),
            MarketSpec::PiecewiseLinear { knots, values } => {
                Market::PiecewiseLinear(PiecewiseLinear::new(knots.clone(), values.clone())?)
            }
            MarketSpec::Constant { dim, value } => {
                if *dim == 0 || !value.is_finite() {
                    return Err(Error::Config("constant market needs dim ≥ 1 and a finite value".into()));
                }
                Market::Constant { dim: *dim, value: *value }
            }
            MarketSpec::BumpMixture { dim, side, beta, holder_constant, amplitude, signs, sign_seed } => {
                let eps = amplitude.unwrap_or_else(|| BumpMixture::max_amplitude(*side, *beta, *holder_constant));
                let bumps = match (signs, sign_seed) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("bump-mixture: give either signs or sign_seed, not both".into()))
                    }
                    (Some(s), None) => BumpMixture::new(*dim, *side, s.clone(), eps, *beta, *holder_constant)?,
                    (None, seed) => {
                        BumpMixture::random_signs(*dim, *side, eps, *beta, *holder_constant, seed.unwrap_or(0))?
                    }
                };
                Market::Bumps(bumps)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    #[serde(default)]
    pub mode: ContextMode,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Parametric {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        bound: Option<f64>,
        #[serde(default)]
        sigma_p: Option<f64>,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        eigen_floor: Option<f64>,
    },
    Nonparametric {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sup_bound: Option<f64>,
        #[serde(default)]
        sigma_p: Option<f64>,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    Oracle {
        #[serde(default)]
        name: Option<String>,
    },
    Fixed {
        #[serde(default)]
        name: Option<String>,
        price: f64,
    },
    OlsEpoch {
        #[serde(default)]
        name: Option<String>,
    },
}

impl PolicySpec {
    pub fn kind_label(&self) -> &'static str {
        match self {
            PolicySpec::Parametric { .. } => "parametric",
            PolicySpec::Nonparametric { .. } => "nonparametric",
            PolicySpec::Oracle { .. } => "oracle",
            PolicySpec::Fixed { .. } => "fixed",
            PolicySpec::OlsEpoch { .. } => "ols-epoch",
        }
    }

    pub fn name(&self) -> String {
        let explicit = match self {
            PolicySpec::Parametric { name, .. }
            | PolicySpec::Nonparametric { name, .. }
            | PolicySpec::Oracle { name }
            | PolicySpec::Fixed { name, .. }
            | PolicySpec::OlsEpoch { name } => name.clone(),
        };
        explicit.unwrap_or_else(|| self.kind_label().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Fill the `runtime_ms` summary column. Off by default so that reruns
    /// are byte-identical.
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationSpec {
    #[serde(default = "default_holder_pairs")]
    pub holder_pairs: usize,
}

fn default_holder_pairs() -> usize {
    10_000
}

impl Default for CertificationSpec {
    fn default() -> Self {
        Self { holder_pairs: default_holder_pairs() }
    }
}

fn default_seed() -> u64 {
    2026
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizons: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub regret_mode: RegretMode,
    pub noise: NoisePair,
    pub market: MarketSpec,
    #[serde(default)]
    pub context: ContextSpec,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub certification: CertificationSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_shape()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks that need no numerics; certification happens in
    /// [`Experiment::build`](super::Experiment::build).
    pub fn validate_shape(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("horizon list is empty".into()));
        }
        if let Some(t) = self.horizons.iter().find(|&&t| t < 2) {
            return Err(Error::Config(format!("horizons must be at least 2, got {t}")));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one [[policy]] is required".into()));
        }
        let mut names: Vec<String> = self.policies.iter().map(PolicySpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate policy name {:?}; set `name` to disambiguate", w[0])));
        }
        if !(self.quadrature.abs_tol > 0.0) || self.quadrature.max_subdivisions == 0 {
            return Err(Error::Config("quadrature needs abs_tol > 0 and max_subdivisions ≥ 1".into()));
        }
        if self.certification.holder_pairs == 0 {
            return Err(Error::Config("certification.holder_pairs must be at least 1".into()));
        }
        Ok(())
    }
}
