//! Online pricing policies behind a strict post/feedback protocol.
//!
//! The learning policies run on a doubling schedule: epoch `k` covers rounds
//! `[2^{k-1}, 2^k)`, clipped at the horizon, and prices in epoch `k` come
//! from an estimator fit on the responses `Y = (V + W)/2` of epoch `k - 1`
//! alone.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{fit_cells, fit_linear, fit_ols, CellEstimates, TruncationConfig};
use crate::market::{dot, Market};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpochSchedule {
    horizon: usize,
}

impl EpochSchedule {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The `k` with `2^{k-1} ≤ t < 2^k`.
    pub fn epoch_of(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.horizon {
            return Err(Error::InvalidArgument(format!("round {t} outside 1..={}", self.horizon)));
        }
        Ok(usize::BITS as usize - t.leading_zeros() as usize)
    }

    pub fn count(&self) -> usize {
        self.epoch_of(self.horizon).expect("horizon is in range")
    }

    /// First and last round of epoch `k`, clipped at the horizon.
    pub fn bounds(&self, k: usize) -> Result<(usize, usize)> {
        if k == 0 || k > self.count() {
            return Err(Error::InvalidArgument(format!("epoch {k} outside 1..={}", self.count())));
        }
        let start = 1usize << (k - 1);
        Ok((start, ((start << 1) - 1).min(self.horizon)))
    }

    pub fn is_epoch_end(&self, t: usize) -> bool {
        t == self.horizon || (t + 1).is_power_of_two()
    }
}

pub fn epoch_of(t: usize, horizon: usize) -> Result<usize> {
    EpochSchedule::new(horizon)?.epoch_of(t)
}

fn check_exponent_domain(p: f64, beta: f64, d: usize) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, 2], got {p}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    Ok(())
}

/// Exponent `(p-1)/(βp + d(p-1))` of the bandwidth `h = T^{-exponent}`.
pub fn bandwidth_exponent(p: f64, beta: f64, d: usize) -> Result<f64> {
    check_exponent_domain(p, beta, d)?;
    Ok((p - 1.0) / (beta * p + d as f64 * (p - 1.0)))
}

pub fn theoretical_bandwidth(p: f64, beta: f64, d: usize, horizon: usize) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
    }
    Ok((horizon as f64).powf(-bandwidth_exponent(p, beta, d)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    Theory,
    Manual(f64),
}

impl BandwidthRule {
    pub fn resolve(&self, p: f64, beta: f64, d: usize, horizon: usize) -> Result<f64> {
        match *self {
            BandwidthRule::Theory => theoretical_bandwidth(p, beta, d, horizon),
            BandwidthRule::Manual(h) if h > 0.0 && h <= 1.0 => Ok(h),
            BandwidthRule::Manual(h) => Err(Error::InvalidArgument(format!("bandwidth must lie in (0, 1], got {h}"))),
        }
    }
}

/// Hyperparameters of the truncated linear policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParametricParams {
    pub dim: usize,
    /// Norm bound `B` on the coefficients.
    pub bound: f64,
    pub sigma_p: f64,
    pub p: f64,
    pub eigen_floor: f64,
}

/// Hyperparameters of the per-cell policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonparametricParams {
    pub dim: usize,
    /// Bound `B_m` on `sup |m|`.
    pub sup_bound: f64,
    pub sigma_p: f64,
    pub p: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone)]
pub enum PolicyKind {
    Parametric(ParametricParams),
    Nonparametric(NonparametricParams),
    Oracle(Arc<Market>),
    Fixed(f64),
    OlsEpoch { dim: usize },
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Parametric(_) => "parametric",
            PolicyKind::Nonparametric(_) => "nonparametric",
            PolicyKind::Oracle(_) => "oracle",
            PolicyKind::Fixed(_) => "fixed",
            PolicyKind::OlsEpoch { .. } => "ols-epoch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Estimator {
    /// Price 0 until the first successful fit.
    Initial,
    Linear(Vec<f64>),
    Cells(CellEstimates),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitingContext,
    AwaitingFeedback,
}

/// Outcome of one end-of-epoch refit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refit {
    pub epoch: usize,
    pub samples: usize,
    /// The estimator was kept because the new fit was rejected.
    pub kept_previous: bool,
}

#[derive(Debug, Clone)]
pub struct PolicyState {
    kind: PolicyKind,
    schedule: EpochSchedule,
    truncation: Option<TruncationConfig>,
    round: usize,
    phase: Phase,
    pending: Vec<f64>,
    buffer_x: Vec<Vec<f64>>,
    buffer_y: Vec<f64>,
    estimator: Estimator,
    refits: Vec<Refit>,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, horizon: usize) -> Result<Self> {
        let schedule = EpochSchedule::new(horizon)?;
        let truncation = match &kind {
            PolicyKind::Parametric(pp) => {
                if pp.dim == 0 {
                    return Err(Error::InvalidArgument("dimension must be at least 1".into()));
                }
                let log_term = ((pp.dim * horizon) as f64).ln().max(f64::MIN_POSITIVE);
                Some(TruncationConfig::from_bounds(pp.bound, pp.sigma_p, pp.p, log_term)?)
            }
            PolicyKind::Nonparametric(np) => {
                let grid = crate::grid::CellGrid::new(np.dim, np.bandwidth)?;
                let log_term = ((grid.cell_count() * horizon) as f64).ln().max(f64::MIN_POSITIVE);
                Some(TruncationConfig::from_bounds(np.sup_bound, np.sigma_p, np.p, log_term)?)
            }
            PolicyKind::Fixed(price) if !price.is_finite() => {
                return Err(Error::InvalidArgument(format!("fixed price must be finite, got {price}")));
            }
            _ => None,
        };
        Ok(Self {
            kind,
            schedule,
            truncation,
            round: 1,
            phase: Phase::AwaitingContext,
            pending: Vec::new(),
            buffer_x: Vec::new(),
            buffer_y: Vec::new(),
            estimator: Estimator::Initial,
            refits: Vec::new(),
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn schedule(&self) -> &EpochSchedule {
        &self.schedule
    }

    pub fn truncation(&self) -> Option<&TruncationConfig> {
        self.truncation.as_ref()
    }

    /// Index of the next round to be priced.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_y.len()
    }

    pub fn refits(&self) -> &[Refit] {
        &self.refits
    }

    pub fn linear_estimate(&self) -> Option<&[f64]> {
        match &self.estimator {
            Estimator::Linear(phi) => Some(phi),
            _ => None,
        }
    }

    pub fn cell_estimates(&self) -> Option<&CellEstimates> {
        match &self.estimator {
            Estimator::Cells(c) => Some(c),
            _ => None,
        }
    }

    pub fn post_price(&mut self, x: &[f64]) -> Result<f64> {
        if self.phase != Phase::AwaitingContext {
            return Err(Error::Protocol("post_price called twice without feedback".into()));
        }
        if self.round > self.schedule.horizon() {
            return Err(Error::Protocol(format!("horizon {} exhausted", self.schedule.horizon())));
        }
        let price = match (&self.kind, &self.estimator) {
            (PolicyKind::Oracle(m), _) => m.eval(x)?,
            (PolicyKind::Fixed(c), _) => *c,
            (_, Estimator::Initial) => 0.0,
            (_, Estimator::Linear(phi)) => {
                if phi.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: phi.len(), actual: x.len() });
                }
                dot(phi, x)
            }
            (_, Estimator::Cells(cells)) => cells.estimate_at(x)?.unwrap_or(0.0),
        };
        self.pending.clear();
        self.pending.extend_from_slice(x);
        self.phase = Phase::AwaitingFeedback;
        Ok(price)
    }

    pub fn receive_feedback(&mut self, x: &[f64], v: f64, w: f64) -> Result<()> {
        if self.phase != Phase::AwaitingFeedback {
            return Err(Error::Protocol("feedback received before a price was posted".into()));
        }
        if x != self.pending.as_slice() {
            return Err(Error::Protocol("feedback context differs from the priced context".into()));
        }
        if !(v.is_finite() && w.is_finite()) {
            return Err(Error::InvalidArgument(format!("valuations must be finite, got ({v}, {w})")));
        }
        let learns = !matches!(self.kind, PolicyKind::Oracle(_) | PolicyKind::Fixed(_));
        if learns {
            self.buffer_x.push(std::mem::take(&mut self.pending));
            self.buffer_y.push(0.5 * (v + w));
        }
        if self.schedule.is_epoch_end(self.round) {
            if learns {
                self.refit()?;
            }
            self.buffer_x.clear();
            self.buffer_y.clear();
        }
        self.round += 1;
        self.phase = Phase::AwaitingContext;
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let epoch = self.schedule.epoch_of(self.round)?;
        let next = match &self.kind {
            PolicyKind::Parametric(pp) => {
                let cfg = self.truncation.expect("set at construction");
                fit_linear(&self.buffer_x, &self.buffer_y, &cfg, pp.eigen_floor)?.estimate.map(Estimator::Linear)
            }
            PolicyKind::Nonparametric(np) => {
                let cfg = self.truncation.expect("set at construction");
                Some(Estimator::Cells(fit_cells(&self.buffer_x, &self.buffer_y, np.bandwidth, &cfg)?))
            }
            PolicyKind::OlsEpoch { .. } => match fit_ols(&self.buffer_x, &self.buffer_y) {
                Ok(phi) => Some(Estimator::Linear(phi)),
                Err(Error::SingularGram) => None,
                Err(e) => return Err(e),
            },
            PolicyKind::Oracle(_) | PolicyKind::Fixed(_) => unreachable!("non-learning policies never refit"),
        };
        let kept_previous = next.is_none();
        if let Some(est) = next {
            self.estimator = est;
        }
        self.refits.push(Refit { epoch, samples: self.buffer_y.len(), kept_previous });
        Ok(())
    }
}
