//! Scalar delayed feedback `y' = rho y + kappa y(t - tau)` and its diagonal
//! parabolic counterpart.
//!
//! Feedback switches on at `t = tau`; before that the solution is the free
//! exponential. RK4 needs the delayed term at half steps, which are taken from
//! the stage values of the step one delay earlier. That is RK4 applied to the
//! method-of-steps system, so no interpolation enters.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Stability threshold `(kappa^2 - rho^2)^(-1/2) arccos(-rho / kappa)`.
pub fn tau_hat(rho: f64, kappa: f64) -> Result<f64> {
    if !(rho > 0.0 && kappa < -rho) || !kappa.is_finite() {
        return Err(invalid(format!(
            "tau_hat needs kappa < -rho < 0, got rho={rho}, kappa={kappa}"
        )));
    }
    Ok((-rho / kappa).acos() / (kappa * kappa - rho * rho).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdeParams {
    pub rho: f64,
    pub kappa: f64,
    pub tau: f64,
    pub y0: f64,
    pub h: f64,
}

impl DdeParams {
    pub fn gamma(&self) -> f64 {
        -self.kappa / self.rho
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.kappa < -self.rho) {
            return Err(invalid(format!(
                "need kappa < -rho < 0, got rho={}, kappa={}",
                self.rho, self.kappa
            )));
        }
        check_grid(self.tau, self.h).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trajectory is never empty")
    }

    /// Value at a grid time.
    pub fn at(&self, t: f64) -> Option<f64> {
        let h = self.times.get(1)? - self.times[0];
        let k = (t / h).round();
        ((t / h - k).abs() < 1e-9 && k >= 0.0)
            .then(|| self.values.get(k as usize).copied())
            .flatten()
    }
}

fn check_grid(tau: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!(
            "need tau >= 0 and h > 0, got tau={tau}, h={h}"
        )));
    }
    let r = tau / h;
    if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(invalid(format!("tau/h = {r} is not an integer")));
    }
    Ok(r.round() as usize)
}

fn step_count(t_final: f64, h: f64) -> Result<usize> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid(format!("T must be positive, got {t_final}")));
    }
    Ok((t_final / h - 1e-9).ceil() as usize)
}

/// Method of steps on `[0, T]`; `T` is rounded up to the grid.
pub fn solve_dde(p: &DdeParams, t_final: f64) -> Result<Trajectory> {
    p.validate()?;
    Ok(integrate(p.rho, p.kappa, p.tau, p.y0, p.h, t_final))
}

/// No parameter-sign checks; the grid must already be valid.
fn integrate(rho: f64, kappa: f64, tau: f64, y0: f64, h: f64, t_final: f64) -> Trajectory {
    let d = (tau / h).round() as usize;
    let n = (t_final / h - 1e-9).ceil() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let mut y = Vec::with_capacity(n + 1);
    y.push(y0);

    if d == 0 {
        let lam = rho + kappa;
        for k in 0..n {
            let v = y[k];
            let k1 = lam * v;
            let k2 = lam * (v + 0.5 * h * k1);
            let k3 = lam * (v + 0.5 * h * k2);
            let k4 = lam * (v + h * k3);
            y.push(v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        return Trajectory { times, values: y };
    }

    // second and third stage arguments of every step
    let mut mid2 = Vec::with_capacity(n);
    let mut mid3 = Vec::with_capacity(n);
    for k in 0..n {
        if k < d {
            let m = y0 * (rho * (times[k] + 0.5 * h)).exp();
            mid2.push(m);
            mid3.push(m);
            y.push(y0 * (rho * times[k + 1]).exp());
            continue;
        }
        let j = k - d;
        let v = y[k];
        let k1 = rho * v + kappa * y[j];
        let y2 = v + 0.5 * h * k1;
        let k2 = rho * y2 + kappa * mid2[j];
        let y3 = v + 0.5 * h * k2;
        let k3 = rho * y3 + kappa * mid3[j];
        let y4 = v + h * k3;
        let k4 = rho * y4 + kappa * y[j + 1];
        mid2.push(y2);
        mid3.push(y3);
        y.push(v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    Trajectory { times, values: y }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Growing,
    Decaying,
    Marginal,
}

impl Stability {
    pub fn name(self) -> &'static str {
        match self {
            Stability::Growing => "growing",
            Stability::Decaying => "decaying",
            Stability::Marginal => "marginal",
        }
    }
}

/// `max |y|` over the last window against the window before it.
pub fn amplitude_ratio(traj: &Trajectory, window_fraction: f64) -> f64 {
    let t_end = *traj.times.last().expect("trajectory is never empty");
    let w = window_fraction * t_end;
    let max_in = |lo: f64, hi: f64| {
        traj.times
            .iter()
            .zip(&traj.values)
            .filter(|(t, _)| **t >= lo - 1e-12 && **t <= hi + 1e-12)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    };
    max_in(t_end - w, t_end) / max_in(t_end - 2.0 * w, t_end - w)
}

pub fn classify(traj: &Trajectory, window_fraction: f64) -> Stability {
    let r = amplitude_ratio(traj, window_fraction);
    if r > 1.05 {
        Stability::Growing
    } else if r < 0.95 {
        Stability::Decaying
    } else {
        Stability::Marginal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    /// Increasing, positive.
    pub alphas: Vec<f64>,
    pub rho: f64,
    /// `0` (free) or below `-rho`.
    pub kappa: f64,
    /// Controlled modes `1..=m`.
    pub m: usize,
    pub tau: f64,
    pub y0: Vec<f64>,
    pub h: f64,
}

/// `nu pi^2 (i^2 + j^2) + 1` over `i, j >= 0`, sorted, first `count`.
pub fn default_eigenvalues(nu: f64, count: usize) -> Vec<f64> {
    let k = (count as f64).sqrt().ceil() as usize + 2;
    let mut a: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).map(move |j| nu * PI * PI * (i * i + j * j) as f64 + 1.0))
        .collect();
    a.sort_by(f64::total_cmp);
    a.truncate(count);
    a
}

/// Smallest `m` with `alpha_{m+1} > rho + alpha_1`.
pub fn minimal_controlled_modes(alphas: &[f64], rho: f64) -> Option<usize> {
    let a1 = *alphas.first()?;
    (1..alphas.len()).find(|&m| alphas[m] > rho + a1)
}

impl SpectralParams {
    /// Defaults for the given `rho, kappa, tau`: 20 shifted Neumann
    /// eigenvalues with `nu = 0.1`, minimal `m`, `y0 = (1, ..., 1)`.
    pub fn with_defaults(rho: f64, kappa: f64, tau: f64, h: f64) -> Result<Self> {
        let alphas = default_eigenvalues(0.1, 20);
        let m = minimal_controlled_modes(&alphas, rho)
            .ok_or_else(|| invalid("no eigenvalue exceeds rho + alpha_1"))?;
        let y0 = vec![1.0; alphas.len()];
        Ok(Self {
            alphas,
            rho,
            kappa,
            m,
            tau,
            y0,
            h,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alphas.len();
        if n == 0 || !(self.alphas[0] > 0.0) || self.alphas.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("eigenvalues must be positive and nondecreasing"));
        }
        if self.m == 0 || self.m >= n {
            return Err(invalid(format!("need 1 <= m < N, got m={}, N={n}", self.m)));
        }
        if !(self.rho > 0.0) || !(self.kappa == 0.0 || self.kappa < -self.rho) {
            return Err(invalid("need rho > 0 and kappa = 0 or kappa < -rho"));
        }
        if !(self.alphas[self.m] > self.rho + self.alphas[0]) {
            return Err(invalid("alpha_{m+1} must exceed rho + alpha_1"));
        }
        if self.y0.len() != n {
            return Err(invalid(format!(
                "y0 has {} entries, expected {n}",
                self.y0.len()
            )));
        }
        check_grid(self.tau, self.h).map(|_| ())
    }

    /// `-alpha_i + rho + alpha_1`
    pub fn free_rate(&self, i: usize) -> f64 {
        -self.alphas[i] + self.rho + self.alphas[0]
    }
}

/// One trajectory per coordinate of the diagonal delayed system.
pub fn spectral_demo(p: &SpectralParams, t_final: f64) -> Result<Vec<Trajectory>> {
    p.validate()?;
    step_count(t_final, p.h)?;
    Ok((0..p.alphas.len())
        .map(|i| {
            let kappa = if i < p.m { p.kappa } else { 0.0 };
            integrate(p.free_rate(i), kappa, p.tau, p.y0[i], p.h, t_final)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(tau: f64, h: f64) -> DdeParams {
        DdeParams {
            rho: 1.0,
            kappa: -2.0,
            tau,
            y0: 1.0,
            h,
        }
    }

    #[test]
    fn threshold_closed_form() {
        let t = tau_hat(1.0, -2.0).unwrap();
        assert!((t - PI / (3.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!((t - 0.6045998).abs() < 1e-7);
        assert!(tau_hat(1.0, -0.5).is_err());
        assert!(tau_hat(-1.0, -2.0).is_err());
        assert!(tau_hat(1.0, -1.0).is_err());
    }

    #[test]
    fn threshold_limits() {
        assert!(tau_hat(1.0, -1e6).unwrap() < 1e-5);
        assert!((tau_hat(1.0, -(1.0 + 1e-6)).unwrap() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn threshold_decreases_in_gamma() {
        let v: Vec<f64> = [1.1, 1.5, 2.0, 5.0, 50.0]
            .iter()
            .map(|g| tau_hat(1.0, -g).unwrap())
            .collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }

    proptest! {
        #[test]
        fn threshold_below_inverse_rho(rho in 1e-3f64..1e3, gamma in 1.0001f64..1e4) {
            prop_assert!(tau_hat(rho, -gamma * rho).unwrap() < 1.0 / rho);
        }
    }

    #[test]
    fn undelayed_decay() {
        let tr = solve_dde(&params(0.0, 1e-3), 1.0).unwrap();
        assert!((tr.at(1.0).unwrap() - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn free_segment_is_exact() {
        let tr = solve_dde(&params(0.5, 1e-3), 1.0).unwrap();
        for (t, v) in tr.times.iter().zip(&tr.values).filter(|(t, _)| **t < 0.5) {
            assert!((v - t.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_self_convergence() {
        let coarse = solve_dde(&params(0.2, 1e-3), 1.0).unwrap().at(1.0).unwrap();
        let fine = solve_dde(&params(0.2, 5e-4), 1.0).unwrap().at(1.0).unwrap();
        assert!((coarse - fine).abs() < 1e-7);
        // the error ratio between h and h/2 is about 16
        let finer = solve_dde(&params(0.2, 2.5e-4), 1.0)
            .unwrap()
            .at(1.0)
            .unwrap();
        let coarsest = solve_dde(&params(0.2, 2e-3), 1.0).unwrap().at(1.0).unwrap();
        let r = (coarsest - coarse) / (fine - finer);
        assert!((12.0..20.0).contains(&(r / 4.0)), "ratio {r}");
    }

    #[test]
    fn misaligned_delay_is_rejected() {
        assert!(solve_dde(&params(0.2005, 1e-3), 1.0).is_err());
        assert!(solve_dde(
            &DdeParams {
                kappa: -0.5,
                ..params(0.2, 1e-3)
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn classification_around_threshold() {
        let th = tau_hat(1.0, -2.0).unwrap();
        let h = 1e-3;
        let run = |tau: f64| {
            let tau = (tau / h).round() * h;
            classify(&solve_dde(&params(tau, h), 40.0).unwrap(), 0.25)
        };
        assert_eq!(run(0.5 * th), Stability::Decaying);
        assert_eq!(run(1.5 * th), Stability::Growing);
        assert_eq!(run(1.0), Stability::Growing);
        assert_eq!(run(0.95 * th), Stability::Decaying);
        assert_eq!(run(1.05 * th), Stability::Growing);
    }

    #[test]
    fn default_spectrum() {
        let a = default_eigenvalues(0.1, 20);
        assert_eq!(a.len(), 20);
        assert_eq!(a[0], 1.0);
        assert!((a[1] - (0.1 * PI * PI + 1.0)).abs() < 1e-12);
        assert_eq!(minimal_controlled_modes(&a, 1.0), Some(3));
    }

    #[test]
    fn spectral_first_coordinate_is_the_scalar_dde() {
        let mut p = SpectralParams::with_defaults(1.0, -2.0, 0.3, 1e-3).unwrap();
        p.y0 = vec![0.0; 20];
        p.y0[0] = 1.0;
        let demo = spectral_demo(&p, 5.0).unwrap();
        let scalar = solve_dde(&params(0.3, 1e-3), 5.0).unwrap();
        for (a, b) in demo[0].values.iter().zip(&scalar.values) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(demo[1..]
            .iter()
            .all(|tr| tr.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn spectral_free_and_undelayed() {
        let p = SpectralParams::with_defaults(1.0, 0.0, 0.3, 1e-3).unwrap();
        let demo = spectral_demo(&p, 1.0).unwrap();
        assert!((demo[0].at(1.0).unwrap() / demo[0].values[0] - 1f64.exp()).abs() < 1e-6);

        let p = SpectralParams::with_defaults(1.0, -2.0, 0.0, 1e-3).unwrap();
        let demo = spectral_demo(&p, 2.0).unwrap();
        for i in 0..p.m {
            let rate = (demo[i].at(2.0).unwrap() / demo[i].at(1.0).unwrap()).ln();
            assert!(rate <= p.rho + p.kappa + 1e-9, "{i}: {rate}");
        }
        for i in p.m..20 {
            assert!(p.free_rate(i) < 0.0);
        }
    }

    #[test]
    fn spectral_delay_beyond_inverse_rho_destabilizes() {
        let p = SpectralParams::with_defaults(1.0, -2.0, 1.1, 1e-3).unwrap();
        let demo = spectral_demo(&p, 40.0).unwrap();
        assert_eq!(classify(&demo[0], 0.25), Stability::Growing);
    }

    #[test]
    fn spectral_validation() {
        let mut p = SpectralParams::with_defaults(1.0, -2.0, 0.1, 1e-3).unwrap();
        p.m = 1;
        assert!(p.validate().is_err());
        p.m = 20;
        assert!(p.validate().is_err());
        p.m = 3;
        p.kappa = -0.5;
        assert!(p.validate().is_err());
    }
}
