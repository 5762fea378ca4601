//! Delayed-input history and the time-`tau` state predictor.
//!
//! At coarse step `n` the history holds the inputs computed at steps
//! `n-N .. n-1` (`N = tau / t_s`). Those are exactly the inputs that will reach
//! the plant during `[t_n, t_n + tau)`, so running the model forward over them
//! from the current estimate forecasts the state at `t_n + tau`.

use std::collections::VecDeque;

use crate::error::{check_len, invalid, Error, Result};
use crate::fem::FieldVector;
use crate::sensing::ActuatorArray;
use crate::stepping::Propagators;

/// Ring of the last `N` computed inputs; slots for negative times read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InputHistory {
    buffer: VecDeque<Vec<f64>>,
    delay_steps: usize,
    dim: usize,
    /// Number of inputs pushed so far; the next push is for step `head`.
    head: i64,
}

impl InputHistory {
    pub fn new(delay_steps: usize, dim: usize) -> Self {
        Self {
            buffer: std::iter::repeat_n(vec![0.0; dim], delay_steps).collect(),
            delay_steps,
            dim,
            head: 0,
        }
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn head(&self) -> i64 {
        self.head
    }

    /// Stores the input computed at step `head` and returns the one computed
    /// `N` steps earlier, which is the input the plant receives now. With
    /// `N = 0` that is `u` itself.
    pub fn push(&mut self, u: Vec<f64>) -> Result<Vec<f64>> {
        check_len(self.dim, u.len())?;
        self.head += 1;
        if self.delay_steps == 0 {
            return Ok(u);
        }
        self.buffer.push_back(u);
        Ok(self.buffer.pop_front().expect("history holds N entries"))
    }

    /// Input computed at step `k`; `k` must lie in `[head - N, head)`.
    pub fn delayed_input(&self, k: i64) -> Result<&[f64]> {
        let lo = self.head - self.delay_steps as i64;
        if k < lo || k >= self.head {
            return Err(Error::OutOfWindow {
                index: k,
                lo,
                hi: self.head,
            });
        }
        Ok(&self.buffer[(k - lo) as usize])
    }

    /// The input the plant receives during step `head`, i.e. the one
    /// computed at `head - N` (zero before activation).
    pub fn due(&self) -> Option<&[f64]> {
        self.buffer.front().map(Vec::as_slice)
    }

    /// Oldest to newest: inputs acting on `[t_head, t_head + tau)`.
    pub fn window(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.buffer.iter().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorConfig {
    pub tau: f64,
    pub t_s: f64,
    pub delay_steps: usize,
}

impl PredictorConfig {
    pub fn new(tau: f64, t_s: f64) -> Result<Self> {
        Ok(Self {
            tau,
            t_s,
            delay_steps: delay_steps(tau, t_s)?,
        })
    }
}

/// `tau / t_s` as an integer, rejecting non-integral ratios.
pub fn delay_steps(tau: f64, t_s: f64) -> Result<usize> {
    if !(t_s > 0.0) || !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!(
            "need tau >= 0 and t_s > 0, got tau={tau}, t_s={t_s}"
        )));
    }
    let ratio = tau / t_s;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-12 * ratio.max(1.0) {
        return Err(invalid(format!("tau/t_s = {ratio} is not an integer")));
    }
    Ok(steps as usize)
}

/// Runs the `N` coarse backward-Euler steps from `y_hat` at `t_n` under the
/// buffered inputs (zero-order hold) and returns the state at `t_n + tau`.
pub fn predict(
    cfg: &PredictorConfig,
    propagators: &mut Propagators,
    actuators: &ActuatorArray,
    t_index: u64,
    y_hat: &[f64],
    history: &InputHistory,
) -> Result<Vec<f64>> {
    check_len(cfg.delay_steps, history.delay_steps())?;
    check_len(propagators.ops().dof_count(), y_hat.len())?;
    let dt = propagators.dt();
    let mut y = y_hat.to_vec();
    for (k, u) in history.window().enumerate() {
        let load = scaled_input_load(actuators, u, dt);
        y = propagators.advance(t_index + k as u64 + 1, &y, load.as_deref())?;
    }
    Ok(y)
}

/// `K` applied to the forecast: the input computed at step `t_index`.
pub fn compute_input(
    cfg: &PredictorConfig,
    propagators: &mut Propagators,
    actuators: &ActuatorArray,
    t_index: u64,
    y_hat: &[f64],
    history: &InputHistory,
) -> Result<Vec<f64>> {
    let forecast = predict(cfg, propagators, actuators, t_index, y_hat, history)?;
    Ok(actuators.feedback_raw(&forecast))
}

/// Field-level wrapper of [`predict`].
pub fn predict_field(
    cfg: &PredictorConfig,
    propagators: &mut Propagators,
    actuators: &ActuatorArray,
    t_index: u64,
    y_hat: &FieldVector,
    history: &InputHistory,
) -> Result<FieldVector> {
    let coeffs = predict(cfg, propagators, actuators, t_index, &y_hat.coeffs, history)?;
    Ok(FieldVector {
        coeffs,
        mesh_level: y_hat.mesh_level,
    })
}

/// `dt * B u` as a load vector, or `None` for a zero input.
pub(crate) fn scaled_input_load(actuators: &ActuatorArray, u: &[f64], dt: f64) -> Option<Vec<f64>> {
    if u.iter().all(|&c| c == 0.0) {
        return None;
    }
    let scaled: Vec<f64> = u.iter().map(|c| dt * c).collect();
    Some(actuators.load_raw(&scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{CoefficientField, SemidiscreteOperators};
    use crate::mesh::{build_regions, TriMesh};
    use std::sync::Arc;

    fn setup(tau: f64) -> (PredictorConfig, Propagators, ActuatorArray) {
        let mesh = TriMesh::structured(16).unwrap();
        let (fa, _) = build_regions(2, 2).unwrap();
        let act = ActuatorArray::new(&mesh, fa, 100.0).unwrap();
        let ops = Arc::new(SemidiscreteOperators::new(Arc::new(mesh), 0.1).unwrap());
        let prop = Propagators::new(ops, CoefficientField::reference(), 1e-2).unwrap();
        (PredictorConfig::new(tau, 1e-2).unwrap(), prop, act)
    }

    #[test]
    fn fresh_history_reads_zero() {
        let h = InputHistory::new(3, 2);
        assert!(h.window().all(|u| u == [0.0, 0.0]));
        assert_eq!(h.delayed_input(-1).unwrap(), &[0.0, 0.0]);
        assert_eq!(h.delayed_input(-3).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn push_returns_input_after_n_steps() {
        let mut h = InputHistory::new(3, 1);
        assert_eq!(h.push(vec![7.0]).unwrap(), vec![0.0]);
        assert_eq!(h.delayed_input(0).unwrap(), &[7.0]);
        assert_eq!(h.push(vec![8.0]).unwrap(), vec![0.0]);
        assert_eq!(h.push(vec![9.0]).unwrap(), vec![0.0]);
        assert_eq!(h.due().unwrap(), &[7.0]);
        assert_eq!(h.push(vec![10.0]).unwrap(), vec![7.0]);
        assert_eq!(h.head(), 4);
        assert!(h.push(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn out_of_window_reads_fail() {
        let mut h = InputHistory::new(2, 1);
        for v in 0..5 {
            h.push(vec![v as f64]).unwrap();
        }
        assert_eq!(h.delayed_input(3).unwrap(), &[3.0]);
        assert!(matches!(h.delayed_input(2), Err(Error::OutOfWindow { .. })));
        assert!(matches!(h.delayed_input(5), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn zero_delay_passes_input_through() {
        let mut h = InputHistory::new(0, 2);
        assert_eq!(h.push(vec![1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(h.window().len(), 0);
        assert!(h.delayed_input(0).is_err());
    }

    #[test]
    fn delay_steps_must_be_integral() {
        assert_eq!(delay_steps(0.1, 1e-3).unwrap(), 100);
        assert_eq!(delay_steps(0.0, 1e-3).unwrap(), 0);
        assert!(delay_steps(0.1005, 1e-3).is_err());
        assert!(delay_steps(0.1, 0.0).is_err());
        assert!(delay_steps(-0.1, 1e-3).is_err());
    }

    #[test]
    fn zero_delay_prediction_is_identity() {
        let (cfg, mut prop, act) = setup(0.0);
        let y = FieldVector::interpolate(&prop.ops().mesh.clone(), |x, y| 1.0 - 2.0 * x * y);
        let h = InputHistory::new(0, act.len());
        let p = predict(&cfg, &mut prop, &act, 5, &y.coeffs, &h).unwrap();
        assert_eq!(p, y.coeffs);
        let u = compute_input(&cfg, &mut prop, &act, 5, &y.coeffs, &h).unwrap();
        assert_eq!(u, act.feedback_k(&y).unwrap());
    }

    #[test]
    fn zero_state_and_history_predicts_zero() {
        let (cfg, mut prop, act) = setup(0.05);
        let n = prop.ops().dof_count();
        let h = InputHistory::new(cfg.delay_steps, act.len());
        let p = predict(&cfg, &mut prop, &act, 0, &vec![0.0; n], &h).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        let u = compute_input(&cfg, &mut prop, &act, 0, &vec![0.0; n], &h).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_is_jointly_linear() {
        let (cfg, mut prop, act) = setup(0.05);
        let mesh = prop.ops().mesh.clone();
        let y1 = FieldVector::interpolate(&mesh, |x, y| 1.0 - 2.0 * x * y);
        let y2 = FieldVector::interpolate(&mesh, |x, y| -1.0 - 3.0 * y * y + x);
        let (mut h1, mut h2, mut h12) = (
            InputHistory::new(cfg.delay_steps, 8),
            InputHistory::new(cfg.delay_steps, 8),
            InputHistory::new(cfg.delay_steps, 8),
        );
        let (alpha, beta) = (0.7, -1.3);
        for k in 0..cfg.delay_steps {
            let a: Vec<f64> = (0..8).map(|j| ((j + k) as f64).sin()).collect();
            let b: Vec<f64> = (0..8).map(|j| ((j * k) as f64).cos()).collect();
            let ab: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| alpha * x + beta * y)
                .collect();
            h1.push(a).unwrap();
            h2.push(b).unwrap();
            h12.push(ab).unwrap();
        }
        let y12: Vec<f64> = y1
            .coeffs
            .iter()
            .zip(&y2.coeffs)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let n0 = cfg.delay_steps as u64;
        let p1 = predict(&cfg, &mut prop, &act, n0, &y1.coeffs, &h1).unwrap();
        let p2 = predict(&cfg, &mut prop, &act, n0, &y2.coeffs, &h2).unwrap();
        let p12 = predict(&cfg, &mut prop, &act, n0, &y12, &h12).unwrap();
        for i in 0..p1.len() {
            assert!((p12[i] - (alpha * p1[i] + beta * p2[i])).abs() < 1e-11);
        }
    }
}
