//! Experiment runner: the context/price/feedback loop, analytic and
//! realized regret accounting, horizon sweeps and rate fits.
//!
//! Every replication owns three sequential streams (contexts, ξ, ζ) derived
//! from the root seed, so all policies and all horizons of a sweep see the
//! same contexts and valuations round by round. Realized regret compares the
//! oracle and the policy on the same `(V, W)` draw.

mod config;
mod output;
mod rate;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    CertificationSpec, ContextSpec, ExperimentConfig, MarketSpec, NoisePair, NoiseSpec, OutputSpec, PolicySpec,
    RegretMode,
};
pub use output::{format_float, read_summary_csv, write_trace_csv, SummaryRow, SweepSummary};
pub use rate::{fit_rate, loglog_fit, theoretical_exponent, Exponent, LogLogLine, RateFit, Setting};

use crate::error::{Error, Result};
use crate::market::{holder_certify, sup_on_grid, ContextSampler, HolderReport, Market};
use crate::noise::CertificationReport;
use crate::policy::{BandwidthRule, NonparametricParams, ParametricParams, PolicyKind, PolicyState};
use crate::rng::{SeedTree, Stream};
use crate::trade::{gain, ExpectedGainCurve};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentCertification {
    pub noise_xi: CertificationReport,
    pub noise_zeta: CertificationReport,
    pub holder: HolderReport,
    pub sup_on_grid: f64,
    pub declared_sup_bound: f64,
}

/// A validated, certified experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    curve: ExpectedGainCurve,
    market: Arc<Market>,
    contexts: ContextSampler,
    certification: ExperimentCertification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub epoch: usize,
    pub x: Vec<f64>,
    pub price: f64,
    pub v: f64,
    pub w: f64,
    pub delta: f64,
    pub inst_regret_analytic: Option<f64>,
    pub cum_regret_analytic: Option<f64>,
    pub inst_regret_realized: Option<f64>,
    pub cum_regret_realized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    pub policy: String,
    pub horizon: usize,
    pub replication: usize,
    pub seed: u64,
    pub dim: usize,
    pub records: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub policy: String,
    pub horizon: usize,
    pub replication: usize,
    pub seed: u64,
    pub final_regret_analytic: Option<f64>,
    pub final_regret_realized: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub trace: Option<RegretTrace>,
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate_shape()?;
        let xi = config.noise.xi.build()?;
        let zeta = config.noise.zeta.build()?;
        let cert_xi = xi.certify();
        let cert_zeta = zeta.certify();
        for c in [&cert_xi, &cert_zeta] {
            if !c.pass {
                return Err(Error::Config(format!("noise {} failed certification: {}", c.model, c.failures.join("; "))));
            }
        }
        let curve = ExpectedGainCurve::new(xi, zeta)?.with_quadrature(config.quadrature);
        let market = config.market.build()?;
        let holder = holder_certify(&market, config.certification.holder_pairs, config.seed)?;
        if !holder.pass {
            return Err(Error::Config(format!(
                "market failed the Hölder check: ratio {} > L_H = {}",
                holder.max_ratio, holder.holder_constant
            )));
        }
        let sup = sup_on_grid(&market)?;
        let declared = market.sup_bound();
        if sup > declared * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Config(format!("market sup {sup} on the grid exceeds its declared bound {declared}")));
        }
        let contexts = ContextSampler::new(market.dim(), config.context.mode)?;
        let exp = Self {
            certification: ExperimentCertification {
                noise_xi: cert_xi,
                noise_zeta: cert_zeta,
                holder,
                sup_on_grid: sup,
                declared_sup_bound: declared,
            },
            config,
            curve,
            market: Arc::new(market),
            contexts,
        };
        // Surface hyperparameter errors before any simulation starts.
        for i in 0..exp.config.policies.len() {
            for &t in &exp.config.horizons {
                exp.policy_state(i, t)?;
            }
        }
        Ok(exp)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::build(ExperimentConfig::from_toml_str(text)?)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn curve(&self) -> &ExpectedGainCurve {
        &self.curve
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn contexts(&self) -> &ContextSampler {
        &self.contexts
    }

    pub fn certification(&self) -> &ExperimentCertification {
        &self.certification
    }

    pub fn policy_names(&self) -> Vec<String> {
        self.config.policies.iter().map(PolicySpec::name).collect()
    }

    pub fn policy_index(&self, name: &str) -> Result<usize> {
        self.policy_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no policy named {name:?}")))
    }

    /// `p` and `σ_p` valid for both noise models: the smaller declared
    /// order and the larger declared bound.
    fn noise_constants(&self) -> (f64, f64) {
        let (a, b) = (self.curve.noise_xi(), self.curve.noise_zeta());
        (a.moment_order().min(b.moment_order()), a.moment_bound().max(b.moment_bound()))
    }

    pub fn policy_state(&self, index: usize, horizon: usize) -> Result<PolicyState> {
        let spec = self
            .config
            .policies
            .get(index)
            .ok_or_else(|| Error::Config(format!("policy index {index} out of range")))?;
        let (p_noise, sigma_noise) = self.noise_constants();
        let dim = self.market.dim();
        let kind = match spec {
            PolicySpec::Parametric { bound, sigma_p, p, eigen_floor, .. } => PolicyKind::Parametric(ParametricParams {
                dim,
                bound: bound.unwrap_or_else(|| self.market.sup_bound()),
                sigma_p: sigma_p.unwrap_or(sigma_noise),
                p: p.unwrap_or(p_noise),
                eigen_floor: eigen_floor.unwrap_or(self.contexts.min_eigenvalue() / 2.0),
            }),
            PolicySpec::Nonparametric { sup_bound, sigma_p, p, beta, bandwidth, .. } => {
                let p = p.unwrap_or(p_noise);
                let beta = beta.unwrap_or(self.market.holder().0);
                let rule = bandwidth.map_or(BandwidthRule::Theory, BandwidthRule::Manual);
                PolicyKind::Nonparametric(NonparametricParams {
                    dim,
                    sup_bound: sup_bound.unwrap_or_else(|| self.market.sup_bound()),
                    sigma_p: sigma_p.unwrap_or(sigma_noise),
                    p,
                    bandwidth: rule.resolve(p, beta, dim, horizon)?,
                })
            }
            PolicySpec::Oracle { .. } => PolicyKind::Oracle(Arc::clone(&self.market)),
            PolicySpec::Fixed { price, .. } => PolicyKind::Fixed(*price),
            PolicySpec::OlsEpoch { .. } => PolicyKind::OlsEpoch { dim },
        };
        PolicyState::new(kind, horizon)
    }

    pub fn seeds(&self) -> SeedTree {
        SeedTree::new(self.config.seed)
    }

    /// One `(policy, horizon, replication)` cell.
    pub fn simulate(&self, policy: usize, horizon: usize, replication: usize, keep_trace: bool) -> Result<RunOutcome> {
        let started = self.config.output.timing.then(Instant::now);
        let mode = self.config.regret_mode;
        let mut state = self.policy_state(policy, horizon)?;
        let tree = self.seeds();
        let mut rng_x = tree.stream(replication, Stream::Contexts);
        let mut rng_xi = tree.stream(replication, Stream::Xi);
        let mut rng_zeta = tree.stream(replication, Stream::Zeta);
        let sampler_xi = self.curve.noise_xi().sampler();
        let sampler_zeta = self.curve.noise_zeta().sampler();

        let mut cum_analytic = 0.0;
        let mut cum_realized = 0.0;
        let mut records = Vec::with_capacity(if keep_trace { horizon } else { 0 });
        for t in 1..=horizon {
            let at = |e: Error| Error::AtRound { round: t, source: Box::new(e) };
            let x = self.contexts.sample(&mut rng_x);
            let m = self.market.eval(&x).map_err(at)?;
            let v = m + sampler_xi.draw(&mut rng_xi);
            let w = m + sampler_zeta.draw(&mut rng_zeta);
            let price = state.post_price(&x).map_err(at)?;
            let delta = price - m;
            let inst_analytic = if mode.analytic() {
                let r = self.curve.expected_regret_of_offset(delta).map_err(at)?;
                cum_analytic += r;
                Some(r)
            } else {
                None
            };
            let inst_realized = if mode.realized() {
                let r = gain(m, v, w) - gain(price, v, w);
                cum_realized += r;
                Some(r)
            } else {
                None
            };
            let epoch = state.schedule().epoch_of(t).map_err(at)?;
            state.receive_feedback(&x, v, w).map_err(at)?;
            if keep_trace {
                records.push(RoundRecord {
                    t,
                    epoch,
                    x,
                    price,
                    v,
                    w,
                    delta,
                    inst_regret_analytic: inst_analytic,
                    cum_regret_analytic: inst_analytic.map(|_| cum_analytic),
                    inst_regret_realized: inst_realized,
                    cum_regret_realized: inst_realized.map(|_| cum_realized),
                });
            }
        }
        let name = self.config.policies[policy].name();
        let seed = tree.replication_seed(replication);
        Ok(RunOutcome {
            trace: keep_trace.then(|| RegretTrace {
                policy: name.clone(),
                horizon,
                replication,
                seed,
                dim: self.market.dim(),
                records,
            }),
            policy: name,
            horizon,
            replication,
            seed,
            final_regret_analytic: mode.analytic().then_some(cum_analytic),
            final_regret_realized: mode.realized().then_some(cum_realized),
            runtime_ms: started.map(|s| s.elapsed().as_secs_f64() * 1e3),
        })
    }

    /// Full traces of every replication for one policy and horizon.
    pub fn run(&self, policy: usize, horizon: usize) -> Result<Vec<RegretTrace>> {
        (0..self.config.replications)
            .into_par_iter()
            .map(|r| Ok(self.simulate(policy, horizon, r, true)?.trace.expect("trace requested")))
            .collect()
    }

    /// Every `(horizon, policy, replication)` cell, on `jobs` threads
    /// (`None` or 0: rayon's default pool).
    pub fn sweep(&self, jobs: Option<usize>) -> Result<SweepSummary> {
        let cells: Vec<(usize, usize, usize)> = self
            .config
            .horizons
            .iter()
            .flat_map(|&t| {
                (0..self.config.policies.len())
                    .flat_map(move |p| (0..self.config.replications).map(move |r| (t, p, r)))
            })
            .collect();
        let work = || -> Result<Vec<RunOutcome>> {
            cells.par_iter().map(|&(t, p, r)| self.simulate(p, t, r, false)).collect()
        };
        let outcomes = match jobs {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(work)?,
            _ => work()?,
        };
        Ok(SweepSummary::from_outcomes(&outcomes, self.config.replications, self.config.seed))
    }
}

/// `T · regret(δ)`: the analytic regret of pricing at a constant offset.
pub fn constant_offset_regret(curve: &ExpectedGainCurve, delta: f64, horizon: usize) -> Result<f64> {
    Ok(horizon as f64 * curve.expected_regret_of_offset(delta)?)
}
