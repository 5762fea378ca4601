//! Coupled plant/observer/predictor simulation on two meshes and two time
//! steps, with norm traces and decay-rate estimation.
//!
//! The plant runs on the `rf`-times refined mesh with step
//! `t_s / 2^(2+rf)`; observer and predictor run on the coarse mesh with
//! step `t_s`. The only plant-to-observer channel is the sensor vector, and
//! the only controller-to-plant channel is the actuator vector, held constant
//! over each coarse step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::fem::{
    l2_norm_raw, prolong_levels, CoefficientField, FieldVector, SemidiscreteOperators,
};
use crate::mesh::{build_regions, check_alignment, TriMesh};
use crate::observer::{observer_step, NoiseGenerator, ObserverState};
use crate::predictor::{
    compute_input, delay_steps, scaled_input_load, InputHistory, PredictorConfig,
};
use crate::sensing::{ActuatorArray, SensorArray};
use crate::stepping::Propagators;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No input, no injection.
    Free,
    /// Full state, no delay, `K y` from the activation time on.
    Nominal,
    /// `K y_hat(t - tau)`, no predictor.
    DelayedPlain,
    /// `K` applied to the time-`tau` forecast, delayed by `tau`.
    DelayedPredictor,
    /// Precomputed input from a perturbed offline model.
    OpenLoop,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Free,
        Mode::Nominal,
        Mode::DelayedPlain,
        Mode::DelayedPredictor,
        Mode::OpenLoop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::Nominal => "nominal",
            Mode::DelayedPlain => "delayed_plain",
            Mode::DelayedPredictor => "delayed_predictor",
            Mode::OpenLoop => "open_loop",
        }
    }

    fn uses_observer(self) -> bool {
        matches!(
            self,
            Mode::Free | Mode::DelayedPlain | Mode::DelayedPredictor
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    /// `a = -3/2 + x1 - |sin(6t + x1)|`, `b = (x1 + x2, |cos(6t) x1 x2|)`
    Reference,
    /// `a = 0`, `b = 0`
    Passive,
}

impl Coefficients {
    pub fn name(self) -> &'static str {
        match self {
            Coefficients::Reference => "reference",
            Coefficients::Passive => "passive",
        }
    }

    pub fn field(self, nu: f64) -> CoefficientField {
        match self {
            Coefficients::Reference => {
                let mut c = CoefficientField::reference();
                c.nu = nu;
                c
            }
            Coefficients::Passive => CoefficientField::passive(nu),
        }
    }
}

impl FromStr for Coefficients {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Coefficients::Reference),
            "passive" => Ok(Coefficients::Passive),
            _ => Err(invalid(format!("unknown coefficient set `{s}`"))),
        }
    }
}

/// `c0 + c1 x1 + c2 x2 + c3 x1 x2 + c4 x1^2 + c5 x2^2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticField(pub [f64; 6]);

impl QuadraticField {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let c = &self.0;
        c[0] + c[1] * x1 + c[2] * x2 + c[3] * x1 * x2 + c[4] * x1 * x1 + c[5] * x2 * x2
    }
}

impl fmt::Display for QuadraticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| format!("{c:?}")).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for QuadraticField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| invalid(format!("bad coefficient `{t}`")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; 6] = vals
            .try_into()
            .map_err(|_| invalid("need six coefficients: 1 x1 x2 x1*x2 x1^2 x2^2"))?;
        Ok(QuadraticField(arr))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub nu: f64,
    pub coefficients: Coefficients,
    /// Actuator order: `2 M^2` actuators.
    pub m_order: usize,
    /// Sensor order: `2 S^2` sensors.
    pub s_order: usize,
    pub lambda_k: f64,
    pub lambda_l: f64,
    pub tau: f64,
    pub t_s: f64,
    pub rf: usize,
    pub t_final: f64,
    pub zeta_mag: f64,
    pub seed: u64,
    pub coarse_n: usize,
    pub y0: QuadraticField,
    pub y_hat0: QuadraticField,
    /// Plant on the coarse mesh with step `t_s` (ignores `rf`).
    pub matched_plant: bool,
    /// Controller reads the plant state instead of the observer estimate.
    pub full_state: bool,
    /// Time from which the nominal loop applies its input.
    pub nominal_activation: f64,
    /// Constant offset added to the offline model at `t = tau` (open loop).
    pub open_loop_eps: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::DelayedPredictor,
            nu: 0.1,
            coefficients: Coefficients::Reference,
            m_order: 2,
            s_order: 2,
            lambda_k: 100.0,
            lambda_l: 200.0,
            tau: 0.1,
            t_s: 1e-3,
            rf: 0,
            t_final: 10.0,
            zeta_mag: 1e-7,
            seed: 1,
            coarse_n: 16,
            y0: QuadraticField([1.0, 0.0, 0.0, -2.0, 0.0, 0.0]),
            y_hat0: QuadraticField([-1.0, 0.0, 0.0, 0.0, 0.0, -3.0]),
            matched_plant: false,
            full_state: false,
            nominal_activation: 0.0,
            open_loop_eps: 1e-3,
        }
    }
}

pub const MAX_RF: usize = 4;

impl ScenarioConfig {
    pub fn delay_steps(&self) -> Result<usize> {
        delay_steps(self.tau, self.t_s)
    }

    pub fn coarse_steps(&self) -> Result<usize> {
        delay_steps(self.t_final, self.t_s).map_err(|_| {
            invalid(format!(
                "T/t_s = {} is not an integer",
                self.t_final / self.t_s
            ))
        })
    }

    /// Plant substeps per coarse step.
    pub fn substeps(&self) -> usize {
        if self.matched_plant {
            1
        } else {
            1 << (2 + self.rf)
        }
    }

    pub fn plant_dt(&self) -> f64 {
        self.t_s / self.substeps() as f64
    }

    /// Effective `(lambda_K, lambda_L)`; the free mode switches both off.
    pub fn gains(&self) -> (f64, f64) {
        match self.mode {
            Mode::Free => (0.0, 0.0),
            _ => (self.lambda_k, self.lambda_l),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(invalid("nu must be positive"));
        }
        if !(self.t_s > 0.0) {
            return Err(invalid("t_s must be positive"));
        }
        if !(self.t_final > 0.0) {
            return Err(invalid("T must be positive"));
        }
        if self.rf > MAX_RF {
            return Err(invalid(format!(
                "rf must lie in 0..={MAX_RF}, got {}",
                self.rf
            )));
        }
        if self.m_order == 0 || self.s_order == 0 {
            return Err(invalid("M and S must be >= 1"));
        }
        if !(self.lambda_k >= 0.0 && self.lambda_l >= 0.0) {
            return Err(invalid("gains must be nonnegative"));
        }
        if !(self.zeta_mag >= 0.0) {
            return Err(invalid("zeta_mag must be nonnegative"));
        }
        if !self.open_loop_eps.is_finite() {
            return Err(invalid("open_loop_eps must be finite"));
        }
        self.delay_steps()?;
        self.coarse_steps()?;
        delay_steps(self.nominal_activation, self.t_s)
            .map_err(|_| invalid("nominal_activation must be a nonnegative multiple of t_s"))?;
        if self.coarse_n == 0 {
            return Err(invalid("coarse_n must be >= 1"));
        }
        let mesh = TriMesh::structured(self.coarse_n)?;
        let (fa, fs) = build_regions(self.m_order, self.s_order)?;
        if !check_alignment(&mesh, &fa) || !check_alignment(&mesh, &fs) {
            return Err(invalid(format!(
                "coarse_n = {} does not resolve the patches of M = {}, S = {} (need a multiple of {})",
                self.coarse_n,
                self.m_order,
                self.s_order,
                8 * self.m_order.max(self.s_order)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub norm_y: f64,
    pub norm_err: f64,
    pub norm_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub config: ScenarioConfig,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    State,
    Error,
    Input,
}

impl SimulationTrace {
    pub fn column(&self, c: Column) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match c {
                Column::State => r.norm_y,
                Column::Error => r.norm_err,
                Column::Input => r.norm_u,
            })
            .collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }
}

/// Least-squares slope of `log ||y||` over `[t_lo, t_hi]`.
pub fn fit_decay_rate(trace: &SimulationTrace, t_lo: f64, t_hi: f64) -> Result<f64> {
    fit_column_rate(trace, Column::State, t_lo, t_hi)
}

pub fn fit_column_rate(trace: &SimulationTrace, c: Column, t_lo: f64, t_hi: f64) -> Result<f64> {
    fit_log_slope(&trace.times(), &trace.column(c), t_lo, t_hi)
}

pub fn fit_log_slope(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Result<f64> {
    if !(t_lo < t_hi) {
        return Err(Error::UndefinedFit(format!(
            "empty window [{t_lo}, {t_hi}]"
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::UndefinedFit(
            "fewer than two samples in window".into(),
        ));
    }
    if pts.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::UndefinedFit("nonpositive norm in window".into()));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in &pts {
        sxy += (t - mean_t) * (v.ln() - mean_l);
        sxx += (t - mean_t) * (t - mean_t);
    }
    Ok(sxy / sxx)
}

/// `max ||y(t)||` over `[t_lo, T]`.
pub fn plateau_level(trace: &SimulationTrace, t_lo: f64) -> f64 {
    plateau_of(trace, Column::State, t_lo)
}

pub fn plateau_of(trace: &SimulationTrace, c: Column, t_lo: f64) -> f64 {
    trace
        .times()
        .into_iter()
        .zip(trace.column(c))
        .filter(|(t, _)| *t >= t_lo)
        .map(|(_, v)| v)
        .fold(0.0, f64::max)
}

/// `max ||y||` on the last `window` time units over the max on the window
/// before it.
pub fn growth_ratio(trace: &SimulationTrace, window: f64) -> f64 {
    let t_end = trace.last().t;
    let max_in = |lo: f64, hi: f64| {
        trace
            .rows
            .iter()
            .filter(|r| r.t >= lo && r.t <= hi)
            .map(|r| r.norm_y)
            .fold(0.0, f64::max)
    };
    max_in(t_end - window, t_end) / max_in(t_end - 2.0 * window, t_end - window)
}

/// Everything the time loop needs, built once from a config.
struct Setup {
    coarse: Arc<TriMesh>,
    fine: Arc<TriMesh>,
    act_coarse: ActuatorArray,
    sen_coarse: SensorArray,
    act_fine: ActuatorArray,
    sen_fine: SensorArray,
    coarse_prop: Propagators,
    plant_prop: Option<Propagators>,
}

impl Setup {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let coarse = Arc::new(TriMesh::structured(cfg.coarse_n)?);
        let fine = if cfg.matched_plant {
            coarse.clone()
        } else {
            Arc::new(coarse.refine_times(cfg.rf))
        };
        let (fa, fs) = build_regions(cfg.m_order, cfg.s_order)?;
        let (lambda_k, lambda_l) = cfg.gains();
        let act_coarse = ActuatorArray::new(&coarse, fa.clone(), lambda_k)?;
        let sen_coarse = SensorArray::new(&coarse, fs.clone(), lambda_l)?;
        let (act_fine, sen_fine) = if Arc::ptr_eq(&coarse, &fine) {
            (act_coarse.clone(), sen_coarse.clone())
        } else {
            (
                ActuatorArray::new(&fine, fa, lambda_k)?,
                SensorArray::new(&fine, fs, lambda_l)?,
            )
        };
        let coeff = cfg.coefficients.field(cfg.nu);
        let ops_coarse = Arc::new(SemidiscreteOperators::new(coarse.clone(), cfg.nu)?);
        let coarse_prop = Propagators::new(ops_coarse, coeff.clone(), cfg.t_s)?;
        let plant_prop = if cfg.matched_plant {
            None
        } else {
            let ops_fine = Arc::new(SemidiscreteOperators::new(fine.clone(), cfg.nu)?);
            Some(Propagators::new(ops_fine, coeff, cfg.plant_dt())?)
        };
        Ok(Self {
            coarse,
            fine,
            act_coarse,
            sen_coarse,
            act_fine,
            sen_fine,
            coarse_prop,
            plant_prop,
        })
    }

    fn plant(&mut self) -> &mut Propagators {
        self.plant_prop.as_mut().unwrap_or(&mut self.coarse_prop)
    }
}

/// Runs one scenario and samples the norms at every coarse step.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationTrace> {
    cfg.validate()?;
    let mut s = Setup::new(cfg)?;
    let steps = cfg.coarse_steps()?;
    let n_delay = cfg.delay_steps()?;
    let n_act = delay_steps(cfg.nominal_activation, cfg.t_s)?;
    let q = cfg.substeps() as u64;
    let m = s.act_coarse.len();
    let nv_coarse = s.coarse.vertex_count();
    let predictor = PredictorConfig {
        tau: cfg.tau,
        t_s: cfg.t_s,
        delay_steps: n_delay,
    };

    let fine_mass = s.plant().ops().mass.clone();
    let mut y = FieldVector::interpolate(&s.fine, |a, b| cfg.y0.eval(a, b)).coeffs;
    let observing = cfg.mode.uses_observer() && !cfg.full_state;
    let mut observer = ObserverState {
        y_hat: FieldVector::interpolate(&s.coarse, |a, b| cfg.y_hat0.eval(a, b)),
        t_index: 0,
    };
    let mut offline_model = (cfg.mode == Mode::OpenLoop).then(|| y.clone());
    let mut history = InputHistory::new(n_delay, m);
    let mut noise = NoiseGenerator::new(cfg.seed, cfg.zeta_mag)?;
    let mut rows = Vec::with_capacity(steps + 1);

    for n in 0..=steps {
        let t_index = n as u64;
        let estimate: &[f64] = if observing {
            &observer.y_hat.coeffs
        } else {
            // coarse vertices come first in every refinement
            &y[..nv_coarse]
        };

        let applied = match cfg.mode {
            Mode::Free => vec![0.0; m],
            Mode::Nominal if n >= n_act => s.act_fine.feedback_raw(&y),
            Mode::Nominal => vec![0.0; m],
            Mode::DelayedPlain => {
                let u = s.act_coarse.feedback_raw(estimate);
                history.push(u)?
            }
            Mode::DelayedPredictor => {
                let u = compute_input(
                    &predictor,
                    &mut s.coarse_prop,
                    &s.act_coarse,
                    t_index,
                    estimate,
                    &history,
                )?;
                history.push(u)?
            }
            Mode::OpenLoop => {
                let z = offline_model.as_mut().expect("open loop keeps a model");
                if n == n_delay {
                    z.iter_mut().for_each(|v| *v += cfg.open_loop_eps);
                }
                if n >= n_delay {
                    s.act_fine.feedback_raw(z)
                } else {
                    vec![0.0; m]
                }
            }
        };

        let norm_err = if observing {
            let mut e = observer.y_hat.coeffs.clone();
            prolong_levels(&mut e, &s.fine, 0);
            for (ei, yi) in e.iter_mut().zip(&y) {
                *ei -= yi;
            }
            l2_norm_raw(&e, &fine_mass)
        } else {
            0.0
        };
        rows.push(TraceRow {
            t: n as f64 * cfg.t_s,
            norm_y: l2_norm_raw(&y, &fine_mass),
            norm_err,
            norm_u: applied.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
        if !rows.last().unwrap().norm_y.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "state blew up at t = {}",
                rows.last().unwrap().t
            )));
        }
        if n == steps {
            break;
        }

        if observing {
            let mut w = s.sen_fine.moments_raw(&y);
            let zeta = noise.sample(w.len());
            for (wi, zi) in w.iter_mut().zip(zeta) {
                *wi += zi;
            }
            observer = observer_step(
                &observer,
                &w,
                &applied,
                &mut s.coarse_prop,
                &s.sen_coarse,
                &s.act_coarse,
            )?;
        }

        let load = scaled_input_load(&s.act_fine, &applied, cfg.plant_dt());
        for k in 1..=q {
            let j = t_index * q + k;
            let plant = s.plant_prop.as_mut().unwrap_or(&mut s.coarse_prop);
            y = plant.advance(j, &y, load.as_deref())?;
            if let Some(z) = offline_model.as_mut() {
                let zl = if n >= n_delay {
                    scaled_input_load(&s.act_fine, &applied, cfg.plant_dt())
                } else {
                    None
                };
                *z = plant.advance(j, z, zl.as_deref())?;
            }
            if let Some(p) = s.plant_prop.as_mut() {
                p.release_before(j);
            }
        }
        s.coarse_prop.release_before(t_index + 1);
    }

    Ok(SimulationTrace {
        config: cfg.clone(),
        rows,
    })
}
