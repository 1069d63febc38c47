//! Log-log rate fits and the theoretical regret exponents.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::bandwidth_exponent;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub horizons: Vec<usize>,
    pub regrets: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    /// `log R - (intercept + slope · log T)` per point.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of `log R` on `log T`.
pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    let mut horizons: Vec<usize> = points.iter().map(|p| p.0).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() < 3 {
        return Err(Error::InvalidArgument(format!("a rate fit needs at least 3 distinct horizons, got {}", horizons.len())));
    }
    if let Some(&(t, r)) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::InvalidArgument(format!("regret {r} at horizon T = {t} is not positive; log undefined")));
    }
    let line = loglog_fit(&points.iter().map(|&(t, r)| (t as f64, r)).collect::<Vec<_>>())?;
    Ok(RateFit {
        horizons: points.iter().map(|p| p.0).collect(),
        regrets: points.iter().map(|p| p.1).collect(),
        slope: line.slope,
        intercept: line.intercept,
        slope_std_error: line.slope_std_error,
        residuals: line.residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLogLine {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares line through `(ln x, ln y)`; needs two distinct `x` and
/// positive coordinates.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogLine> {
    if let Some(&(x, y)) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive finite points, got ({x}, {y})")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("log-log fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - intercept - slope * x).collect();
    let slope_std_error = if points.len() > 2 {
        (residuals.iter().map(|r| r * r).sum::<f64>() / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LogLogLine { slope, intercept, slope_std_error, residuals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Parametric,
    Nonparametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponent {
    pub value: f64,
    /// At `p = 2` the parametric regret is logarithmic, not polynomial.
    pub log_regime: bool,
}

/// Parametric: `(2-p)/p`. Nonparametric: `1 - 2β(p-1)/(βp + d(p-1))`.
pub fn theoretical_exponent(setting: Setting, p: f64, beta: f64, d: usize) -> Result<Exponent> {
    match setting {
        Setting::Parametric => {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidArgument(format!("p must lie in (1, 2], got {p}")));
            }
            if d == 0 {
                return Err(Error::InvalidArgument("dimension must be at least 1".into()));
            }
            Ok(Exponent { value: (2.0 - p) / p, log_regime: p == 2.0 })
        }
        Setting::Nonparametric => {
            let e = bandwidth_exponent(p, beta, d)?;
            Ok(Exponent { value: 1.0 - 2.0 * beta * e, log_regime: false })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = [10, 12, 14].iter().map(|&k| (1usize << k, 3.0 * ((1u64 << k) as f64).sqrt())).collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        let flat = fit_rate(&[(16, 2.0), (32, 2.0), (64, 2.0)]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(16, 1.0), (32, 2.0)]).is_err());
        let err = fit_rate(&[(16, 1.0), (32, 0.0), (64, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("T = 32"));
    }

    #[test]
    fn exponents() {
        let par = theoretical_exponent(Setting::Parametric, 1.5, 1.0, 2).unwrap();
        assert!((par.value - 1.0 / 3.0).abs() < 1e-15 && !par.log_regime);
        let two = theoretical_exponent(Setting::Parametric, 2.0, 1.0, 2).unwrap();
        assert!(two.value == 0.0 && two.log_regime);
        let np = theoretical_exponent(Setting::Nonparametric, 2.0, 1.0, 1).unwrap();
        assert!((np.value - 1.0 / 3.0).abs() < 1e-15);
        let np = theoretical_exponent(Setting::Nonparametric, 1.5, 1.0, 1).unwrap();
        assert!((np.value - 0.5).abs() < 1e-15);
        assert!(theoretical_exponent(Setting::Parametric, 0.9, 1.0, 1).is_err());
    }
}
