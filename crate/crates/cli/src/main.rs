use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use heavytrade::harness::{
    fit_rate, read_summary_csv, write_trace_csv, Experiment, ExperimentConfig, RateFit,
};
use heavytrade::lowerbound::{
    build_pair, kl_sweep, log_grid, plan_assouad, remark3_parametric_exponent, AssouadPlan, KlSweep,
    ParametricLimit, PlanNoise,
};
use heavytrade::noise::CertificationReport;
use heavytrade::trade::{verify_lemma, LemmaReport};
use heavytrade::{ExpectedGainCurve, NoiseModel};

#[derive(Parser)]
#[command(name = "heavytrade", version, about = "Contextual bilateral-trade pricing under heavy-tailed noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the root seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (policy, horizon, replication) cell and write its full trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy name; defaults to the first configured policy.
        #[arg(long)]
        policy: Option<String>,
        /// Horizon; defaults to the first configured horizon.
        #[arg(long = "T")]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Run every configured cell and write the summary CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Fit log-log regret slopes from a summary CSV.
    FitRate {
        #[command(flatten)]
        common: Common,
        /// Summary CSV produced by `sweep`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Restrict the fit to one policy.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Check the self-bounding properties of the configured noise pair.
    VerifyLemma {
        #[command(flatten)]
        common: Common,
    },
    /// Certify the declared constants of the configured noises.
    CertifyNoise {
        #[command(flatten)]
        common: Common,
    },
    /// Build and certify the lower-bound construction.
    Lowerbound {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T", default_value_t = 1 << 20)]
        horizon: usize,
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long = "LH", default_value_t = 1.0)]
        holder_constant: f64,
        #[arg(long, default_value_t = 1.0)]
        mu0: f64,
        /// Density cap of the smoothed pair.
        #[arg(long = "L", default_value_t = 10.0)]
        density_cap: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_p: f64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common.config.as_ref().context("--config is required for this subcommand")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output_file(common: &Common, name: &str) -> Result<Option<PathBuf>> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(Some(dir.join(name)))
        }
        None => Ok(None),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(common: &Common, name: &str, value: &T) -> Result<()> {
    let path = output_file(common, name)?;
    let mut out = sink(path.as_deref())?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn noise_curve(cfg: &ExperimentConfig) -> Result<ExpectedGainCurve> {
    let xi = cfg.noise.xi.build()?;
    let zeta = cfg.noise.zeta.build()?;
    Ok(ExpectedGainCurve::new(xi, zeta)?.with_quadrature(cfg.quadrature))
}

#[derive(Serialize)]
struct NoiseCertification {
    xi: CertificationReport,
    zeta: CertificationReport,
    pass: bool,
}

#[derive(Serialize)]
struct PolicyFit {
    policy: String,
    fit: RateFit,
}

#[derive(Serialize)]
struct LowerBoundReport {
    plan: AssouadPlan,
    kl_sweep: Option<KlSweep>,
    kl_sweep_error: Option<String>,
    parametric_limit: Option<ParametricLimit>,
}

fn simulate(common: &Common, policy: Option<String>, horizon: Option<usize>, replication: usize) -> Result<()> {
    let cfg = load_config(common)?;
    let horizon = horizon.unwrap_or(cfg.horizons[0]);
    if replication >= cfg.replications {
        bail!("replication {replication} out of range (replications = {})", cfg.replications);
    }
    let exp = Experiment::build(cfg)?;
    let index = match &policy {
        Some(name) => exp.policy_index(name)?,
        None => 0,
    };
    let outcome = exp.simulate(index, horizon, replication, true)?;
    let trace = outcome.trace.as_ref().expect("trace requested");
    let name = format!("trace_{}_T{}_r{}.csv", outcome.policy, horizon, replication);
    let path = output_file(common, &name)?;
    write_trace_csv(trace, sink(path.as_deref())?)?;
    let show = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    eprintln!(
        "{} T={} replication={} seed={}: analytic regret {}, realized regret {}",
        outcome.policy,
        horizon,
        replication,
        outcome.seed,
        show(outcome.final_regret_analytic),
        show(outcome.final_regret_realized)
    );
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let exp = Experiment::build(cfg)?;
    let summary = exp.sweep(common.jobs)?;
    let path = output_file(common, "summary.csv")?;
    summary.write_csv(sink(path.as_deref())?)?;
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
        emit_json(common, "certification.json", exp.certification())?;
    }
    for policy in summary.policies() {
        match summary.rate_fit(&policy) {
            Ok(fit) => eprintln!("{policy}: slope {:.4} ± {:.4}", fit.slope, fit.slope_std_error),
            Err(err) => eprintln!("{policy}: no rate fit ({err})"),
        }
    }
    Ok(())
}

fn fit(common: &Common, input: &Path, policy: Option<String>) -> Result<()> {
    let summary = read_summary_csv(input)?;
    let policies = match policy {
        Some(p) => vec![p],
        None => summary.policies(),
    };
    let fits = policies
        .into_iter()
        .map(|policy| {
            let fit = fit_rate(&summary.medians(&policy)).with_context(|| format!("policy {policy}"))?;
            Ok(PolicyFit { policy, fit })
        })
        .collect::<Result<Vec<_>>>()?;
    emit_json(common, "fit_rate.json", &fits)
}

fn lemma(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let report: LemmaReport = verify_lemma(&noise_curve(&cfg)?)?;
    let pass = report.pass;
    emit_json(common, "lemma.json", &report)?;
    if !pass {
        bail!("self-bounding property suite failed");
    }
    Ok(())
}

fn certify(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let xi = cfg.noise.xi.build()?.certify();
    let zeta = cfg.noise.zeta.build()?.certify();
    let report = NoiseCertification { pass: xi.pass && zeta.pass, xi, zeta };
    emit_json(common, "certify_noise.json", &report)?;
    if !report.pass {
        bail!("noise certification failed");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn lowerbound(
    common: &Common,
    horizon: usize,
    p: f64,
    beta: f64,
    d: usize,
    holder_constant: f64,
    mu0: f64,
    density_cap: f64,
    sigma_p: f64,
) -> Result<()> {
    // Both noises are the smoothed centred atom of the construction.
    let base = build_pair(0.0, p, sigma_p, density_cap)?;
    let noise = NoiseModel::smoothed(base.smoothed_p0)?;
    let curve = ExpectedGainCurve::new(noise.clone(), noise)?;
    let plan = plan_assouad(
        horizon,
        p,
        beta,
        d,
        holder_constant,
        mu0,
        Some(PlanNoise { density_cap, sigma_p }),
        Some(&curve),
    )?;
    let (kl_sweep, kl_sweep_error) = match kl_sweep(p, sigma_p, density_cap, &log_grid(1e-3, 1e-1, 9)) {
        Ok(s) => (Some(s), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let parametric_limit = if p < 2.0 { Some(remark3_parametric_exponent(p, d)?) } else { None };
    let report = LowerBoundReport { plan, kl_sweep, kl_sweep_error, parametric_limit };
    emit_json(common, "lowerbound.json", &report)?;
    if let Some(sweep) = &report.kl_sweep {
        let path = output_file(common, "kl_sweep.csv")?;
        let mut out = sink(path.as_deref())?;
        writeln!(out, "epsilon,q,kl_atomic,kl_smoothed")?;
        for k in &sweep.points {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", k.epsilon, k.q, k.kl_atomic, k.kl_smoothed)?;
        }
        out.flush()?;
        if let Some(p) = path {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common, policy, horizon, replication } => simulate(&common, policy, horizon, replication),
        Command::Sweep { common } => sweep(&common),
        Command::FitRate { common, input, policy } => fit(&common, &input, policy),
        Command::VerifyLemma { common } => lemma(&common),
        Command::CertifyNoise { common } => certify(&common),
        Command::Lowerbound { common, horizon, p, beta, d, holder_constant, mu0, density_cap, sigma_p } => {
            lowerbound(&common, horizon, p, beta, d, holder_constant, mu0, density_cap, sigma_p)
        }
    }
}
