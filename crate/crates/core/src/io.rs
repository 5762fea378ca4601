//! Flat `key = value` configs and CSV traces with an embedded manifest.
//!
//! A CSV starts with a `#` block that echoes every resolved config key, so
//! [`parse_manifest`] can rebuild the run that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::delay::{DdeParams, Trajectory};
use crate::engine::{ScenarioConfig, SimulationTrace, TraceRow, MAX_RF};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,norm_y,norm_err,norm_u";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdeRun {
    pub params: DdeParams,
    pub t_final: f64,
}

impl Default for DdeRun {
    fn default() -> Self {
        Self {
            params: DdeParams {
                rho: 1.0,
                kappa: -2.0,
                tau: 0.5,
                y0: 1.0,
                h: 1e-3,
            },
            t_final: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedConfig {
    Scenario(ScenarioConfig),
    Dde(DdeRun),
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| config_err(line, format!("cannot parse `{raw}` for `{key}`")))
}

fn typed<T: FromStr<Err = Error>>(line: usize, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|e: Error| config_err(line, e.to_string()))
}

/// Splits into `(line number, key, value)`, skipping blanks and comments.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(config_err(line, "empty key"));
        }
        if out
            .iter()
            .any(|(_, seen, _): &(usize, String, String)| *seen == key)
        {
            return Err(config_err(line, format!("duplicate key `{key}`")));
        }
        out.push((line, key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_config_str(text: &str) -> Result<ParsedConfig> {
    let entries = entries(text)?;
    let kind = entries.iter().find(|(_, k, _)| k == "kind");
    match kind.map(|(l, _, v)| (*l, v.as_str())) {
        None | Some((_, "scenario")) => parse_scenario(&entries).map(ParsedConfig::Scenario),
        Some((_, "dde")) => parse_dde(&entries).map(ParsedConfig::Dde),
        Some((l, other)) => Err(config_err(
            l,
            format!("unknown kind `{other}` (scenario or dde)"),
        )),
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ParsedConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

fn parse_scenario(entries: &[(usize, String, String)]) -> Result<ScenarioConfig> {
    let mut c = ScenarioConfig::default();
    for (line, key, raw) in entries {
        let l = *line;
        match key.as_str() {
            "kind" => {}
            "mode" => c.mode = typed(l, raw)?,
            "nu" => c.nu = value(l, key, raw)?,
            "coefficients" => c.coefficients = typed(l, raw)?,
            "M" => c.m_order = value(l, key, raw)?,
            "S" => c.s_order = value(l, key, raw)?,
            "lambda_k" => c.lambda_k = value(l, key, raw)?,
            "lambda_l" => c.lambda_l = value(l, key, raw)?,
            "tau" => c.tau = value(l, key, raw)?,
            "t_s" => c.t_s = value(l, key, raw)?,
            "rf" => {
                c.rf = value(l, key, raw)?;
                if c.rf > MAX_RF {
                    return Err(config_err(
                        l,
                        format!("rf must lie in 0..={MAX_RF}, got {}", c.rf),
                    ));
                }
            }
            "T" => c.t_final = value(l, key, raw)?,
            "zeta_mag" => c.zeta_mag = value(l, key, raw)?,
            "seed" => c.seed = value(l, key, raw)?,
            "coarse_n" => c.coarse_n = value(l, key, raw)?,
            "y0" => c.y0 = typed(l, raw)?,
            "y_hat0" => c.y_hat0 = typed(l, raw)?,
            "matched_plant" => c.matched_plant = value(l, key, raw)?,
            "full_state" => c.full_state = value(l, key, raw)?,
            "nominal_activation" => c.nominal_activation = value(l, key, raw)?,
            "open_loop_eps" => c.open_loop_eps = value(l, key, raw)?,
            _ => return Err(config_err(l, format!("unknown key `{key}`"))),
        }
    }
    c.validate()?;
    Ok(c)
}

fn parse_dde(entries: &[(usize, String, String)]) -> Result<DdeRun> {
    let mut r = DdeRun::default();
    for (line, key, raw) in entries {
        let l = *line;
        match key.as_str() {
            "kind" => {}
            "rho" => r.params.rho = value(l, key, raw)?,
            "kappa" => r.params.kappa = value(l, key, raw)?,
            "tau" => r.params.tau = value(l, key, raw)?,
            "y0" => r.params.y0 = value(l, key, raw)?,
            "h" => r.params.h = value(l, key, raw)?,
            "T" => r.t_final = value(l, key, raw)?,
            _ => return Err(config_err(l, format!("unknown key `{key}`"))),
        }
    }
    r.params.validate()?;
    if !(r.t_final > 0.0) {
        return Err(Error::InvalidParameter("T must be positive".into()));
    }
    Ok(r)
}

/// Every key, in a form [`parse_config_str`] reads back exactly.
pub fn scenario_to_config_string(c: &ScenarioConfig) -> String {
    let mut s = String::from("kind = scenario\n");
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("mode", c.mode.to_string());
    kv("nu", format!("{:?}", c.nu));
    kv("coefficients", c.coefficients.name().into());
    kv("M", c.m_order.to_string());
    kv("S", c.s_order.to_string());
    kv("lambda_k", format!("{:?}", c.lambda_k));
    kv("lambda_l", format!("{:?}", c.lambda_l));
    kv("tau", format!("{:?}", c.tau));
    kv("t_s", format!("{:?}", c.t_s));
    kv("rf", c.rf.to_string());
    kv("T", format!("{:?}", c.t_final));
    kv("zeta_mag", format!("{:?}", c.zeta_mag));
    kv("seed", c.seed.to_string());
    kv("coarse_n", c.coarse_n.to_string());
    kv("y0", c.y0.to_string());
    kv("y_hat0", c.y_hat0.to_string());
    kv("matched_plant", c.matched_plant.to_string());
    kv("full_state", c.full_state.to_string());
    kv("nominal_activation", format!("{:?}", c.nominal_activation));
    kv("open_loop_eps", format!("{:?}", c.open_loop_eps));
    s
}

pub fn dde_to_config_string(r: &DdeRun) -> String {
    let p = &r.params;
    format!(
        "kind = dde\nrho = {:?}\nkappa = {:?}\ntau = {:?}\ny0 = {:?}\nh = {:?}\nT = {:?}\n",
        p.rho, p.kappa, p.tau, p.y0, p.h, r.t_final
    )
}

pub fn to_config_string(c: &ParsedConfig) -> String {
    match c {
        ParsedConfig::Scenario(s) => scenario_to_config_string(s),
        ParsedConfig::Dde(d) => dde_to_config_string(d),
    }
}

/// What produced a CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub scenario: String,
    pub config: ParsedConfig,
    pub output: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(
        scenario: impl Into<String>,
        config: ParsedConfig,
        output: impl Into<String>,
    ) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            scenario: scenario.into(),
            config,
            output: output.into(),
            timestamp,
        }
    }

    fn render(&self) -> String {
        let mut s = format!(
            "# scenario: {}\n# output: {}\n# timestamp: {}\n",
            self.scenario, self.output, self.timestamp
        );
        for line in to_config_string(&self.config).lines() {
            writeln!(s, "#   {line}").unwrap();
        }
        s
    }
}

fn format_rows(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 96);
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.norm_y, r.norm_err, r.norm_u
        )
        .unwrap();
    }
    s
}

/// Header plus rows, without the manifest.
pub fn csv_body(trace: &SimulationTrace) -> String {
    format_rows(&trace.rows)
}

pub fn render_trace_csv(trace: &SimulationTrace, manifest: &RunManifest) -> String {
    manifest.render() + &csv_body(trace)
}

pub fn write_trace_csv(
    trace: &SimulationTrace,
    manifest: &RunManifest,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, render_trace_csv(trace, manifest))?;
    Ok(())
}

/// DDE trajectory in the trace layout: `norm_y = |y|`, `norm_err = 0`,
/// `norm_u = |kappa y(t - tau)|` once feedback is on.
pub fn dde_rows(traj: &Trajectory, p: &DdeParams) -> Vec<TraceRow> {
    let d = (p.tau / p.h).round() as usize;
    traj.times
        .iter()
        .zip(&traj.values)
        .enumerate()
        .map(|(k, (&t, &y))| TraceRow {
            t,
            norm_y: y.abs(),
            norm_err: 0.0,
            norm_u: if k >= d {
                (p.kappa * traj.values[k - d]).abs()
            } else {
                0.0
            },
        })
        .collect()
}

pub fn render_dde_csv(traj: &Trajectory, run: &DdeRun, manifest: &RunManifest) -> String {
    manifest.render() + &format_rows(&dde_rows(traj, &run.params))
}

/// Rows of a CSV produced by this module; the manifest is skipped.
pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((i, h)) => return Err(config_err(i + 1, format!("unexpected header `{h}`"))),
        None => return Err(config_err(0, "missing header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<f64> = l
                .split(',')
                .map(|v| {
                    v.parse()
                        .map_err(|_| config_err(i + 1, format!("bad number `{v}`")))
                })
                .collect::<Result<_>>()?;
            match f[..] {
                [t, norm_y, norm_err, norm_u] => Ok(TraceRow {
                    t,
                    norm_y,
                    norm_err,
                    norm_u,
                }),
                _ => Err(config_err(
                    i + 1,
                    format!("expected 4 fields, got {}", f.len()),
                )),
            }
        })
        .collect()
}

/// Rebuilds the config echoed in a CSV's manifest.
pub fn parse_manifest(text: &str) -> Result<ParsedConfig> {
    let echoed: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.strip_prefix("#   "))
        .map(|l| format!("{l}\n"))
        .collect();
    parse_config_str(&echoed)
}
