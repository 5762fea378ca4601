//! Backward-Euler propagators indexed by time step.
//!
//! The step matrix `M + dt (A + rc(t_j))` depends only on the step index `j`,
//! so every predictor window that crosses `t_j` can reuse one factorization.
//! Entries are built on demand and released once the caller has moved past
//! them.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::fem::{CoefficientField, SemidiscreteOperators, StepSolver};
use crate::sensing::SensorArray;

/// Rank-`s` correction turning `S` into `S + dt lambda_L W V^{-1} W^T`.
#[derive(Debug, Clone)]
pub struct InjectionCorrection {
    weight: f64,
    /// `S^{-1} w_i` for every sensor load `w_i`, column-wise.
    z: Vec<Vec<f64>>,
    /// `(V / (dt lambda_L) + W^T S^{-1} W)^{-1}`
    capacitance_inverse: DMatrix<f64>,
}

impl InjectionCorrection {
    fn new(solver: &StepSolver, sensors: &SensorArray) -> Result<Self> {
        let weight = solver.dt * sensors.lambda_l();
        let z: Vec<Vec<f64>> = sensors.loads.iter().map(|w| solver.lu.solve(w)).collect();
        let s = sensors.len();
        let mut cap = &sensors.gram / weight;
        for i in 0..s {
            for j in 0..s {
                cap[(i, j)] += crate::sparse::dot(&sensors.loads[i], &z[j]);
            }
        }
        let capacitance_inverse = cap
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular capacitance matrix".into()))?;
        Ok(Self {
            weight,
            z,
            capacitance_inverse,
        })
    }

    /// Turns `x0 = S^{-1} r` into the solution of the corrected system.
    fn apply(&self, sensors: &SensorArray, x0: &mut [f64]) {
        let wt_x = DVector::from_vec(sensors.moments_raw(x0));
        let c = &self.capacitance_inverse * wt_x;
        for (zi, ci) in self.z.iter().zip(c.iter()) {
            crate::sparse::axpy(-ci, zi, x0);
        }
    }
}

#[derive(Debug)]
struct Entry {
    solver: StepSolver,
    injection: Option<InjectionCorrection>,
}

/// Factored step matrices for `t_j = j dt`, `j = first, first+1, ...`.
#[derive(Debug)]
pub struct Propagators {
    ops: Arc<SemidiscreteOperators>,
    coeff: CoefficientField,
    dt: f64,
    first: u64,
    entries: VecDeque<Entry>,
}

impl Propagators {
    pub fn new(ops: Arc<SemidiscreteOperators>, coeff: CoefficientField, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        Ok(Self {
            ops,
            coeff,
            dt,
            first: 0,
            entries: VecDeque::new(),
        })
    }

    pub fn ops(&self) -> &Arc<SemidiscreteOperators> {
        &self.ops
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeff
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, j: u64) -> f64 {
        j as f64 * self.dt
    }

    fn entry_mut(&mut self, j: u64) -> Result<&mut Entry> {
        if j < self.first {
            // released entries are rebuilt from scratch
            self.entries.clear();
            self.first = j;
        }
        if self.entries.is_empty() {
            self.first = j;
        }
        while self.first + (self.entries.len() as u64) <= j {
            let idx = self.first + self.entries.len() as u64;
            let rc = self.ops.assemble_rc(&self.coeff, self.time(idx));
            let solver = self.ops.step_solver(&rc, self.dt)?;
            self.entries.push_back(Entry {
                solver,
                injection: None,
            });
        }
        Ok(&mut self.entries[(j - self.first) as usize])
    }

    /// Solver for the step that ends at `t_j`.
    pub fn solver(&mut self, j: u64) -> Result<&StepSolver> {
        Ok(&self.entry_mut(j)?.solver)
    }

    /// `(M + dt(A + rc(t_j))) y_next = M y + load`
    pub fn advance(&mut self, j: u64, y: &[f64], load: Option<&[f64]>) -> Result<Vec<f64>> {
        let ops = self.ops.clone();
        Ok(self.solver(j)?.advance(&ops.mass, y, load))
    }

    /// Like [`advance`](Self::advance) with the output-injection term
    /// `dt lambda_L W V^{-1} W^T y_next` moved to the left-hand side.
    pub fn advance_injected(
        &mut self,
        j: u64,
        sensors: &SensorArray,
        y: &[f64],
        load: &[f64],
    ) -> Result<Vec<f64>> {
        let ops = self.ops.clone();
        let entry = self.entry_mut(j)?;
        let mut x = entry.solver.advance(&ops.mass, y, Some(load));
        if sensors.lambda_l() > 0.0 {
            let weight = entry.solver.dt * sensors.lambda_l();
            if entry.injection.as_ref().is_none_or(|c| c.weight != weight) {
                entry.injection = Some(InjectionCorrection::new(&entry.solver, sensors)?);
            }
            entry.injection.as_ref().unwrap().apply(sensors, &mut x);
        }
        Ok(x)
    }

    /// Drops every entry with index below `j`.
    pub fn release_before(&mut self, j: u64) {
        while self.first < j && !self.entries.is_empty() {
            self.entries.pop_front();
            self.first += 1;
        }
    }

    pub fn cached(&self) -> usize {
        self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FieldVector;
    use crate::mesh::{build_regions, TriMesh};

    fn setup() -> (Propagators, SensorArray) {
        let mesh = TriMesh::structured(16).unwrap();
        let (_, fs) = build_regions(1, 2).unwrap();
        let sensors = SensorArray::new(&mesh, fs, 200.0).unwrap();
        let ops = Arc::new(SemidiscreteOperators::new(Arc::new(mesh), 0.1).unwrap());
        (
            Propagators::new(ops, CoefficientField::reference(), 1e-2).unwrap(),
            sensors,
        )
    }

    #[test]
    fn cache_window_slides() {
        let (mut p, _) = setup();
        p.solver(3).unwrap();
        p.solver(6).unwrap();
        assert_eq!(p.cached(), 4);
        p.release_before(5);
        assert_eq!(p.cached(), 2);
        p.solver(1).unwrap();
        assert_eq!(p.cached(), 1);
    }

    #[test]
    fn woodbury_matches_direct_solve() {
        let (mut p, sensors) = setup();
        let ops = p.ops().clone();
        let y = FieldVector::interpolate(&ops.mesh, |x, y| 1.0 - 2.0 * x * y + (5.0 * y).sin());
        let load: Vec<f64> = (0..ops.dof_count())
            .map(|i| 1e-3 * (i % 7) as f64)
            .collect();
        let x = p.advance_injected(4, &sensors, &y.coeffs, &load).unwrap();

        // dense reference of M + dt(A + rc) + dt lambda W V^{-1} W^T
        let n = ops.dof_count();
        let rc = ops.assemble_rc(p.coefficients(), p.time(4));
        let sys = ops
            .mass
            .add_scaled(p.dt(), &ops.stiff_a.add_scaled(1.0, &rc))
            .to_dense();
        let mut dense = DMatrix::from_fn(n, n, |i, j| sys[i][j]);
        let w = DMatrix::from_fn(n, sensors.len(), |i, k| sensors.loads[k][i]);
        dense += (&w * &sensors.gram_inverse * w.transpose()) * (p.dt() * 200.0);
        let rhs = DVector::from_vec(ops.mass.mul_vec(&y.coeffs)) + DVector::from_vec(load);
        let direct = dense.lu().solve(&rhs).unwrap();
        let err = (DVector::from_vec(x) - direct).amax();
        assert!(err < 1e-11, "{err}");
    }
}
