//! `parastab` command dispatch. `main` only forwards the process arguments to
//! [`dispatch`] and exits with its code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use parastab_core::checks::operator_identities;
use parastab_core::delay::{amplitude_ratio, tau_hat};
use parastab_core::engine::{growth_ratio, plateau_of, Column};
use parastab_core::io::{render_dde_csv, render_trace_csv};
use parastab_core::{
    classify, fit_decay_rate, parse_config, run, solve_dde, spectral_demo, DdeRun, Mode,
    ParsedConfig, RunManifest, ScenarioConfig, SpectralParams,
};

/// Windows used for growth/decay classification, as a fraction of `T`.
const WINDOW_FRACTION: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(
    name = "parastab",
    version,
    about = "Delayed-input stabilization of a parabolic equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write its norm trace as CSV.
    Simulate(ScenarioArgs),
    /// Solve the scalar delayed equation and classify its stability.
    Dde(DdeArgs),
    /// Diagonal delayed system built from the Neumann spectrum.
    Spectral(SpectralArgs),
    /// Check the projection and gain identities on the configured mesh.
    CheckOps(ScenarioArgs),
    /// Plain delayed feedback over a grid of delays.
    SweepTau(SweepTauArgs),
    /// Predictor loop over several noise magnitudes.
    SweepNoise(ScenarioArgs),
}

#[derive(Debug, Args, Clone, Default)]
struct ScenarioArgs {
    /// key = value config file; omitted keys take the default scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rf: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "zeta-mag")]
    zeta_mag: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
}

#[derive(Debug, Args)]
struct DdeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    #[arg(long = "T")]
    t_final: Option<f64>,
}

#[derive(Debug, Args)]
struct SpectralArgs {
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    kappa: f64,
    #[arg(long, default_value_t = 1.1)]
    tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long = "T", default_value_t = 40.0)]
    t_final: f64,
}

#[derive(Debug, Args)]
struct SweepTauArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated delays.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2])]
    taus: Vec<f64>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns 0 on success, 1 on a failed run and 2 on a usage error.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Dde(a) => dde(&a),
        Command::Spectral(a) => spectral(&a),
        Command::CheckOps(a) => check_ops(&a),
        Command::SweepTau(a) => sweep_tau(&a),
        Command::SweepNoise(a) => sweep_noise(&a),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ParsedConfig> {
    match path {
        Some(p) => parse_config(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ParsedConfig::Scenario(ScenarioConfig::default())),
    }
}

fn scenario_config(a: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    let ParsedConfig::Scenario(mut c) = load_config(a.config.as_deref())? else {
        bail!("expected a scenario config, got a dde config");
    };
    if let Some(m) = &a.mode {
        c.mode = m.parse()?;
    }
    if let Some(v) = a.tau {
        c.tau = v;
    }
    if let Some(v) = a.rf {
        c.rf = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.zeta_mag {
        c.zeta_mag = v;
    }
    if let Some(v) = a.t_final {
        c.t_final = v;
    }
    c.validate()?;
    Ok(c)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing stdout"),
    }
}

fn output_name(out: Option<&Path>) -> String {
    out.map_or_else(|| "-".to_string(), |p| p.display().to_string())
}

fn simulate(a: &ScenarioArgs) -> anyhow::Result<()> {
    let cfg = scenario_config(a)?;
    let trace = run(&cfg)?;
    let manifest = RunManifest::new(
        "simulate",
        ParsedConfig::Scenario(cfg.clone()),
        output_name(a.out.as_deref()),
    );
    emit(a.out.as_deref(), &render_trace_csv(&trace, &manifest))?;

    let first = trace.rows[0];
    let last = trace.last();
    eprintln!(
        "mode {}: |y(0)| = {:.4e}, |y(T)| = {:.4e}, |yhat - y|(T) = {:.4e}",
        cfg.mode, first.norm_y, last.norm_y, last.norm_err
    );
    let (lo, hi) = (0.1 * cfg.t_final, 0.8 * cfg.t_final);
    if let Ok(rate) = fit_decay_rate(&trace, lo, hi) {
        eprintln!("fitted log-norm slope on [{lo}, {hi}]: {rate:.4}");
    }
    Ok(())
}

fn dde(a: &DdeArgs) -> anyhow::Result<()> {
    let mut r = match load_config(a.config.as_deref())? {
        ParsedConfig::Dde(r) => r,
        ParsedConfig::Scenario(_) if a.config.is_none() => DdeRun::default(),
        ParsedConfig::Scenario(_) => bail!("expected a dde config (kind = dde)"),
    };
    let p = &mut r.params;
    p.rho = a.rho.unwrap_or(p.rho);
    p.kappa = a.kappa.unwrap_or(p.kappa);
    p.tau = a.tau.unwrap_or(p.tau);
    p.h = a.h.unwrap_or(p.h);
    p.y0 = a.y0.unwrap_or(p.y0);
    r.t_final = a.t_final.unwrap_or(r.t_final);

    let threshold = tau_hat(r.params.rho, r.params.kappa)?;
    let traj = solve_dde(&r.params, r.t_final)?;
    let class = classify(&traj, WINDOW_FRACTION);
    println!("tau_hat = {threshold:.7}");
    println!(
        "tau = {}, tau / tau_hat = {:.4}",
        r.params.tau,
        r.params.tau / threshold
    );
    println!(
        "amplitude ratio = {:.4}",
        amplitude_ratio(&traj, WINDOW_FRACTION)
    );
    println!("classification: {}", class.name());
    if let Some(out) = &a.out {
        let manifest = RunManifest::new("dde", ParsedConfig::Dde(r), out.display().to_string());
        emit(Some(out), &render_dde_csv(&traj, &r, &manifest))?;
    }
    Ok(())
}

fn spectral(a: &SpectralArgs) -> anyhow::Result<()> {
    let p = SpectralParams::with_defaults(a.rho, a.kappa, a.tau, a.h)?;
    let trajs = spectral_demo(&p, a.t_final)?;
    println!("N = {}, controlled modes m = {}", p.alphas.len(), p.m);
    println!(
        "{:>4} {:>10} {:>12} {:>14} {:>10}",
        "i", "alpha_i", "rate", "y_i(T)", "class"
    );
    for (i, tr) in trajs.iter().enumerate() {
        println!(
            "{:>4} {:>10.4} {:>12.4} {:>14.6e} {:>10}",
            i + 1,
            p.alphas[i],
            p.free_rate(i),
            tr.final_value(),
            classify(tr, WINDOW_FRACTION).name()
        );
    }
    Ok(())
}

fn check_ops(a: &ScenarioArgs) -> anyhow::Result<()> {
    let c = scenario_config(a)?;
    let checks = operator_identities(
        c.coarse_n, c.m_order, c.s_order, c.lambda_k, c.lambda_l, 1e-10,
    )?;
    for chk in &checks {
        println!("{chk}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        bail!("{failed} identity check(s) failed");
    }
    Ok(())
}

/// Thread pool sized by `PARASTAB_THREADS` (rayon's default otherwise).
fn pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("PARASTAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("PARASTAB_THREADS = `{v}`"))?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn sweep_tau(a: &SweepTauArgs) -> anyhow::Result<()> {
    let base = scenario_config(&a.scenario)?;
    let window = WINDOW_FRACTION * base.t_final;
    let mut cases = vec![ScenarioConfig {
        mode: Mode::Nominal,
        tau: 0.0,
        ..base.clone()
    }];
    cases.extend(a.taus.iter().map(|&tau| ScenarioConfig {
        mode: Mode::DelayedPlain,
        tau,
        ..base.clone()
    }));
    for c in &cases {
        c.validate()?;
    }
    let results: Vec<_> = pool()?.install(|| cases.par_iter().map(run).collect::<Vec<_>>());

    println!(
        "{:>16} {:>8} {:>14} {:>12}",
        "mode", "tau", "|y(T)|", "ratio"
    );
    let mut onset = None;
    for (c, r) in cases.iter().zip(results) {
        let tr = r?;
        let ratio = growth_ratio(&tr, window);
        println!(
            "{:>16} {:>8} {:>14.4e} {:>12.4}",
            c.mode.name(),
            c.tau,
            tr.last().norm_y,
            ratio
        );
        if c.mode == Mode::DelayedPlain && ratio > 1.05 && onset.is_none() {
            onset = Some(c.tau);
        }
    }
    match onset {
        Some(t) => println!("instability onset: tau = {t}"),
        None => println!("instability onset: none on this grid"),
    }
    Ok(())
}

fn sweep_noise(a: &ScenarioArgs) -> anyhow::Result<()> {
    let base = scenario_config(a)?;
    let zetas = [0.0, 1e-7, 1e-5, 1e-3];
    let cases: Vec<ScenarioConfig> = zetas
        .iter()
        .map(|&z| ScenarioConfig {
            mode: Mode::DelayedPredictor,
            zeta_mag: z,
            ..base.clone()
        })
        .collect();
    let results: Vec<_> = pool()?.install(|| cases.par_iter().map(run).collect::<Vec<_>>());
    let t_lo = 0.8 * base.t_final;
    println!("plateau over [{t_lo}, {}]", base.t_final);
    println!(
        "{:>10} {:>14} {:>14}",
        "zeta_mag", "max |y|", "max |yhat-y|"
    );
    for (z, r) in zetas.iter().zip(results) {
        let tr = r?;
        println!(
            "{:>10.0e} {:>14.4e} {:>14.4e}",
            z,
            plateau_of(&tr, Column::State, t_lo),
            plateau_of(&tr, Column::Error, t_lo)
        );
    }
    Ok(())
}
