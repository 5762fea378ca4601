//! Luenberger observer on the coarse mesh, driven by noisy patch averages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Result};
use crate::fem::FieldVector;
use crate::predictor::scaled_input_load;
use crate::sensing::{ActuatorArray, SensorArray};
use crate::stepping::Propagators;

/// Uniform measurement noise on `[-magnitude, magnitude]`, seeded ChaCha8.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    pub seed: u64,
    pub magnitude: f64,
    rng: ChaCha8Rng,
}

impl NoiseGenerator {
    pub fn new(seed: u64, magnitude: f64) -> Result<Self> {
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(invalid(format!(
                "noise magnitude must be >= 0, got {magnitude}"
            )));
        }
        Ok(Self {
            seed,
            magnitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `magnitude * (-1 + 2 r)`, `r` uniform on `[0, 1)`, per component.
    pub fn sample(&mut self, dim: usize) -> Vec<f64> {
        if self.magnitude == 0.0 {
            return vec![0.0; dim];
        }
        (0..dim)
            .map(|_| self.magnitude * (-1.0 + 2.0 * self.rng.random::<f64>()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub y_hat: FieldVector,
    pub t_index: u64,
}

/// Backward-Euler step of
/// `y_hat' + A y_hat + A_rc y_hat = B u + L (W y_hat - w_meas)`
/// from `t_index` to `t_index + 1`. The `-lambda_L P_W y_hat` part of the
/// injection is implicit; `-L w_meas` and `B u` enter as forcing.
pub fn observer_step(
    state: &ObserverState,
    w_meas: &[f64],
    u_delayed: &[f64],
    propagators: &mut Propagators,
    sensors: &SensorArray,
    actuators: &ActuatorArray,
) -> Result<ObserverState> {
    check_len(propagators.ops().dof_count(), state.y_hat.len())?;
    check_len(sensors.len(), w_meas.len())?;
    check_len(actuators.len(), u_delayed.len())?;
    let dt = propagators.dt();
    let mut load =
        scaled_input_load(actuators, u_delayed, dt).unwrap_or_else(|| vec![0.0; state.y_hat.len()]);
    let lambda = sensors.lambda_l();
    if lambda > 0.0 {
        // -dt L w = dt lambda W_diamond V^{-1} w
        let coeffs: Vec<f64> = sensors
            .projection_coeffs(w_meas)
            .into_iter()
            .map(|c| dt * lambda * c)
            .collect();
        crate::sparse::axpy(1.0, &sensors.load_raw(&coeffs), &mut load);
    }
    let next = state.t_index + 1;
    let coeffs = propagators.advance_injected(next, sensors, &state.y_hat.coeffs, &load)?;
    Ok(ObserverState {
        y_hat: FieldVector {
            coeffs,
            mesh_level: state.y_hat.mesh_level,
        },
        t_index: next,
    })
}
