//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every line is printed even when
//! earlier criteria fail. The process exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use heavytrade::estimators::{truncate_at, TruncationConfig};
use heavytrade::harness::{loglog_fit, theoretical_exponent, Experiment, Setting};
use heavytrade::lowerbound::{
    build_pair, certify_pair, kl_sweep, log_grid, plan_assouad, remark3_parametric_exponent,
    reverse_selfbound_constant, PlanNoise, KL_TOL,
};
use heavytrade::noise::{Atom, SmoothedTwoPoint};
use heavytrade::policy::bandwidth_exponent;
use heavytrade::rng::SeedTree;
use heavytrade::trade::{offset_grid, verify_lemma, DERIVATIVE_CHECKPOINTS};
use heavytrade::{ExpectedGainCurve, NoiseModel, Result};

const ROOT_SEED: u64 = 2026;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn families() -> Result<Vec<(&'static str, NoiseModel)>> {
    let two_point = SmoothedTwoPoint::new(
        vec![Atom { location: -0.25, weight: 2.0 / 3.0 }, Atom { location: 0.5, weight: 1.0 / 3.0 }],
        4.0 / 3.0,
    )?;
    Ok(vec![
        ("uniform(-1/2,1/2)", NoiseModel::uniform(0.5)?),
        ("gaussian(0,1)", NoiseModel::gaussian(1.0)?),
        ("student-t(1.8)", NoiseModel::student_t(1.8, 1.5)?),
        ("smoothed-two-point", NoiseModel::smoothed(two_point)?),
    ])
}

fn curves() -> Result<Vec<(&'static str, ExpectedGainCurve)>> {
    families()?.into_iter().map(|(n, m)| Ok((n, ExpectedGainCurve::new(m.clone(), m)?))).collect()
}

fn self_bounding() -> Result<Verdict> {
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for (name, curve) in curves()? {
        let report = verify_lemma(&curve)?;
        worst = worst.max(report.self_bound_worst_excess);
        parts.push(format!("{name} {:.1e}", report.self_bound_worst_excess));
    }
    let (_, uniform) = curves()?.swap_remove(0);
    let l = uniform.density_bound();
    let mut tight = 0.0f64;
    for d in offset_grid(&uniform).into_iter().filter(|d| d.abs() <= 0.5) {
        tight = tight.max((uniform.expected_regret_of_offset(d)? - l * d * d).abs());
    }
    verdict(
        worst <= 1e-8 && tight <= 1e-10,
        format!("max excess over L·δ² {worst:.2e} (≤ 1e-8) [{}]; uniform tightness {tight:.2e} (≤ 1e-10)", parts.join(", ")),
    )
}

fn derivative() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for (_, curve) in curves()? {
        worst = worst.max(verify_lemma(&curve)?.derivative_worst_error);
    }
    verdict(worst <= 1e-5, format!("max |FD h - h'| at δ ∈ {DERIVATIVE_CHECKPOINTS:?}: {worst:.2e} (≤ 1e-5)"))
}

fn identity() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for (_, curve) in curves()? {
        worst = worst.max(verify_lemma(&curve)?.identity_worst_error);
    }
    verdict(worst <= 1e-8, format!("max |Ψ - Φ + δ| {worst:.2e} (≤ 1e-8)"))
}

fn quantile(mut xs: Vec<f64>, prob: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let pos = prob * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

fn truncated_mean_rate() -> Result<Verdict> {
    let p = 1.5;
    let noise = NoiseModel::student_t(1.8, p)?;
    let u = noise.pth_moment(p)?;
    let sizes: Vec<usize> = (8..=18).step_by(2).map(|k| 1usize << k).collect();
    let tree = SeedTree::new(ROOT_SEED);
    let draws: Vec<Vec<f64>> = (0..40).map(|s| noise.sample(1 << 18, tree.replication_seed(s))).collect();
    let mut medians = Vec::new();
    let (mut trunc_14, mut plain_14) = (Vec::new(), Vec::new());
    for &n in &sizes {
        let cfg = TruncationConfig::new(u, p, (n as f64).ln())?;
        let mut errs = Vec::with_capacity(draws.len());
        for d in &draws {
            let (m, _) = truncate_at(&d[..n], cfg.threshold(n))?;
            errs.push(m.abs());
            if n == 1 << 14 {
                trunc_14.push(m.abs());
                plain_14.push((d[..n].iter().sum::<f64>() / n as f64).abs());
            }
        }
        medians.push((n as f64, quantile(errs, 0.5)));
    }
    let slope = loglog_fit(&medians)?.slope;
    let ratio = quantile(plain_14, 0.95) / quantile(trunc_14, 0.95);
    let slope_ok = (slope + 1.0 / 3.0).abs() <= 0.1;
    verdict(
        slope_ok && ratio >= 2.0,
        format!(
            "slope {slope:.4} (target -1/3 ± 0.1: {}); 95th-percentile error ratio empirical/truncated at n=2^14: {ratio:.3} (≥ 2: {})",
            ok(slope_ok),
            ok(ratio >= 2.0)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn student_t_noise() -> &'static str {
    "[noise.xi]\nkind = \"student-t\"\nnu = 1.8\np = 1.5\n\n[noise.zeta]\nkind = \"student-t\"\nnu = 1.8\np = 1.5\n"
}

fn gaussian_noise() -> &'static str {
    "[noise.xi]\nkind = \"gaussian\"\nsigma = 1.0\n\n[noise.zeta]\nkind = \"gaussian\"\nsigma = 1.0\n"
}

fn parametric_config(noise: &str) -> String {
    format!(
        "horizons = [4096, 16384, 65536, 262144]\nreplications = 20\nseed = {ROOT_SEED}\nregret_mode = \"analytic\"\n\n{noise}\n\
         [market]\nkind = \"linear\"\nphi = [0.5, -0.3]\nbound = 1.0\n\n[context]\nmode = \"parametric\"\n\n[[policy]]\nkind = \"parametric\"\n"
    )
}

const TENT: &str = "[market]\nkind = \"piecewise-linear\"\nknots = [0.0, 0.5, 1.0]\nvalues = [0.0, 0.5, 0.0]\n";

fn nonparametric_config(noise: &str, horizons: &str, policies: &str) -> String {
    format!(
        "horizons = {horizons}\nreplications = 20\nseed = {ROOT_SEED}\nregret_mode = \"analytic\"\n\n{noise}\n{TENT}\n{policies}"
    )
}

fn slope_of(config: &str, policy: &str) -> Result<f64> {
    let summary = Experiment::from_toml_str(config)?.sweep(None)?;
    Ok(summary.rate_fit(policy)?.slope)
}

fn parametric_rate() -> Result<Verdict> {
    let slope = slope_of(&parametric_config(student_t_noise()), "parametric")?;
    let target = theoretical_exponent(Setting::Parametric, 1.5, 1.0, 2)?.value;
    verdict(
        (slope - target).abs() <= 0.12,
        format!("fitted slope {slope:.4}, target {target:.4} ± 0.12"),
    )
}

fn parametric_gaussian() -> Result<Verdict> {
    let slope = slope_of(&parametric_config(gaussian_noise()), "parametric")?;
    verdict(slope <= 0.15, format!("fitted slope {slope:.4} (≤ 0.15)"))
}

fn nonparametric_rate() -> Result<Verdict> {
    let horizons = "[4096, 8192, 16384, 32768, 65536, 131072, 262144]";
    let policy = "[[policy]]\nkind = \"nonparametric\"\n";
    let heavy = slope_of(&nonparametric_config(student_t_noise(), horizons, policy), "nonparametric")?;
    let gauss = slope_of(&nonparametric_config(gaussian_noise(), horizons, policy), "nonparametric")?;
    let t_heavy = theoretical_exponent(Setting::Nonparametric, 1.5, 1.0, 1)?.value;
    let t_gauss = theoretical_exponent(Setting::Nonparametric, 2.0, 1.0, 1)?.value;
    let (a, b) = ((heavy - t_heavy).abs() <= 0.12, (gauss - t_gauss).abs() <= 0.12);
    verdict(
        a && b,
        format!(
            "student-t slope {heavy:.4} vs {t_heavy:.4} ± 0.12 ({}); gaussian slope {gauss:.4} vs {t_gauss:.4} ± 0.12 ({})",
            ok(a),
            ok(b)
        ),
    )
}

fn bandwidth_balancing() -> Result<Verdict> {
    let horizon = 1usize << 16;
    let e = bandwidth_exponent(1.5, 1.0, 1)?;
    let theory = (horizon as f64).powf(-e);
    let ks: Vec<i32> = (1..=7).collect();
    let policies: String = ks
        .iter()
        .map(|k| format!("[[policy]]\nkind = \"nonparametric\"\nname = \"h{k}\"\nbandwidth = {}\n\n", 2f64.powi(-k)))
        .collect();
    let cfg = nonparametric_config(student_t_noise(), &format!("[{horizon}]"), &policies);
    let summary = Experiment::from_toml_str(&cfg)?.sweep(None)?;
    let regrets: Vec<f64> = ks.iter().map(|k| summary.medians(&format!("h{k}"))[0].1).collect();
    let best = (0..ks.len()).min_by(|&a, &b| regrets[a].total_cmp(&regrets[b])).expect("non-empty");
    let theory_step = -theory.log2();
    let steps = (ks[best] as f64 - theory_step).abs();
    let table: Vec<String> = ks.iter().zip(&regrets).map(|(k, r)| format!("2^-{k}: {r:.1}")).collect();
    verdict(
        steps <= 1.0 + 1e-9,
        format!("theory h = 2^-{theory_step:.2}, argmin h = 2^-{} ({steps:.2} steps) [{}]", ks[best], table.join(", ")),
    )
}

fn lower_bound_ingredients() -> Result<Verdict> {
    let mut failures = Vec::new();
    let mut worst_kl = 0.0f64;
    let mut pairs = 0;
    for p in [1.2, 1.5, 1.8] {
        for eps in [1e-3, 1e-2, 5e-2, 1e-1] {
            let pair = build_pair(eps, p, 1.0, 10.0)?;
            let c = certify_pair(&pair);
            worst_kl = worst_kl.max((c.kl_smoothed - c.kl_atomic).abs()).max((c.kl_product - 2.0 * c.kl_smoothed).abs());
            pairs += 1;
            if !c.pass {
                failures.push(format!("pair p={p} ε={eps}"));
            }
        }
    }
    for d in [1, 2] {
        let plan = plan_assouad(1 << 20, 1.5, 1.0, d, 1.0, 1.0, Some(PlanNoise { density_cap: 10.0, sigma_p: 1.0 }), None)?;
        match &plan.pair {
            Some(c) if c.pass => pairs += 1,
            _ => failures.push(format!("planned pair d={d}")),
        }
    }
    let mut slopes = Vec::new();
    for p in [1.2, 1.5, 1.8] {
        let s = kl_sweep(p, 1.0, 10.0, &log_grid(1e-3, 1e-1, 9))?;
        if (s.slope - s.expected_slope).abs() > 0.05 {
            failures.push(format!("slope p={p}"));
        }
        slopes.push(format!("p={p}: {:.4}/{:.4}", s.slope, s.expected_slope));
    }
    let mut self_bounds = 0;
    for (name, curve) in curves()? {
        for eps in [0.01, 0.1, 0.3] {
            let r = reverse_selfbound_constant(&curve, eps)?;
            self_bounds += 1;
            if !r.holds {
                failures.push(format!("self-bound {name} ε={eps}"));
            }
        }
    }
    verdict(
        failures.is_empty() && worst_kl <= KL_TOL,
        format!(
            "{pairs} pairs certified, worst KL mismatch {worst_kl:.1e}; KL slopes [{}]; {self_bounds} reverse self-bound checks{}",
            slopes.join(", "),
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

fn exponent_algebra() -> Result<Verdict> {
    let mut failures = Vec::new();
    let mut checks = 0;
    let mut check = |cond: bool, what: String| {
        checks += 1;
        if !cond {
            failures.push(what);
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0);
    for d in 1..=4usize {
        let df = d as f64;
        for beta in [0.25, 0.5, 1.0, 2.0, 3.0] {
            let two = theoretical_exponent(Setting::Nonparametric, 2.0, beta, d)?.value;
            check(close(two, df / (2.0 * beta + df)), format!("p=2 β={beta} d={d}"));
            for p in [1.1, 1.25, 1.5, 1.8, 2.0] {
                let np = theoretical_exponent(Setting::Nonparametric, p, beta, d)?.value;
                let formula = 1.0 - 2.0 * beta * (p - 1.0) / (beta * p + df * (p - 1.0));
                check(close(np, formula), format!("nonparametric p={p} β={beta} d={d}"));
                let plan = plan_assouad(1 << 20, p, beta, d, 1.0, 1.0, None, None)?;
                check(close(plan.predicted_exponent, np), format!("plan exponent p={p} β={beta} d={d}"));
                check(plan.constraints_active, format!("plan constraints p={p} β={beta} d={d}"));
                let e = (p - 1.0) / (beta * p + df * (p - 1.0));
                check(close(plan.h, 2f64.powf(-20.0 * e)), format!("plan h p={p} β={beta} d={d}"));
            }
        }
        for p in [1.1, 1.25, 1.5, 1.8] {
            let par = theoretical_exponent(Setting::Parametric, p, 1.0, d)?;
            check(close(par.value, (2.0 - p) / p) && !par.log_regime, format!("parametric p={p}"));
            let limit = remark3_parametric_exponent(p, d)?;
            check(limit.monotone && close(limit.exponent, (2.0 - p) / p), format!("β→∞ p={p} d={d}"));
        }
        let log = theoretical_exponent(Setting::Parametric, 2.0, 1.0, d)?;
        check(log.value == 0.0 && log.log_regime, format!("parametric p=2 d={d}"));
        let near_one = theoretical_exponent(Setting::Nonparametric, 1.0 + 1e-12, 1.0, d)?.value;
        check((near_one - 1.0).abs() <= 1e-10, format!("p→1 d={d}"));
    }
    let r = remark3_parametric_exponent(1.5, 1)?;
    check(r.final_gap < 1e-2, "β=1000 gap".into());
    let plan = plan_assouad(1 << 20, 1.5, 1.0, 1, 1.0, 1.0, None, None)?;
    check(plan.h == 2f64.powi(-5) && plan.epsilon == 2f64.powi(-5), "T=2^20 plan".into());
    check(close(plan.predicted_exponent, 0.5), "T=2^20 exponent".into());
    verdict(
        failures.is_empty(),
        format!("{checks} identities checked{}", if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }),
    )
}

fn determinism() -> Result<Verdict> {
    let cfg = format!(
        "horizons = [512, 2048]\nreplications = 4\nseed = {ROOT_SEED}\nregret_mode = \"both\"\n\n{}\n\
         [market]\nkind = \"linear\"\nphi = [0.5, -0.3]\nbound = 1.0\n\n[context]\nmode = \"parametric\"\n\n\
         [[policy]]\nkind = \"parametric\"\n\n[[policy]]\nkind = \"ols-epoch\"\n\n[[policy]]\nkind = \"fixed\"\nprice = 0.1\n",
        student_t_noise()
    );
    let np = nonparametric_config(student_t_noise(), "[512, 2048]", "[[policy]]\nkind = \"nonparametric\"\n")
        .replace("replications = 20", "replications = 4")
        .replace("regret_mode = \"analytic\"", "regret_mode = \"both\"");
    let mut identical = true;
    let mut bytes = 0;
    for text in [cfg, np] {
        let first = Experiment::from_toml_str(&text)?.sweep(Some(1))?.to_csv_string()?;
        let second = Experiment::from_toml_str(&text)?.sweep(Some(3))?.to_csv_string()?;
        let third = Experiment::from_toml_str(&text)?.sweep(None)?.to_csv_string()?;
        identical &= first == second && second == third;
        bytes += first.len();
    }
    verdict(identical, format!("three reruns per config byte-identical across thread counts ({bytes} bytes)"))
}

type Criterion = (&'static str, fn() -> Result<Verdict>);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("self-bounding suite", self_bounding),
        ("derivative formula", derivative),
        ("one-sided identity", identity),
        ("truncated-mean rate", truncated_mean_rate),
        ("parametric regret rate", parametric_rate),
        ("parametric p=2 degeneration", parametric_gaussian),
        ("nonparametric regret rate", nonparametric_rate),
        ("bandwidth balancing", bandwidth_balancing),
        ("lower-bound ingredients", lower_bound_ingredients),
        ("exponent algebra", exponent_algebra),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let v = run().unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
        let secs = started.elapsed().as_secs_f64();
        failed += usize::from(!v.pass);
        println!("{} [{:>2}] {name}: {} ({secs:.1}s)", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
