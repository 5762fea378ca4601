//! Discrete operator identities for a given mesh and patch layout: the
//! projections, the gain factorizations `B K = -lambda_K P_U` and
//! `L W = -lambda_L P_W`, and the Gram matrices. Every identity is tested on
//! the whole nodal basis.

use std::fmt;

use crate::error::Result;
use crate::fem::FieldVector;
use crate::mesh::{build_regions, TriMesh};
use crate::sensing::{ActuatorArray, PatchArray, SensorArray};

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl fmt::Display for IdentityCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {:<28} max error {:.3e} (tol {:.0e})",
            self.name, self.max_error, self.tolerance
        )
    }
}

fn basis(n: usize, i: usize) -> FieldVector {
    let mut e = FieldVector::zeros(n, 0);
    e.coeffs[i] = 1.0;
    e
}

fn max_diff(a: &[f64], b: &[f64], scale_b: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - scale_b * y).abs())
        .fold(0.0, f64::max)
}

/// `(idempotence, self-adjointness)` errors of the projection of `arr`.
fn projection_errors(arr: &PatchArray, n: usize) -> Result<(f64, f64)> {
    let mut idem = 0.0f64;
    // pairing[i][j] = (P e_i, e_j)
    let mut pairing = vec![vec![0.0; n]; n];
    for (i, row) in pairing.iter_mut().enumerate() {
        let p = arr.project(&basis(n, i))?;
        let pp = arr.project_patch(&p)?;
        idem = idem.max(max_diff(&pp.coeffs, &p.coeffs, 1.0));
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.coeffs.iter().zip(&arr.loads).map(|(c, l)| c * l[j]).sum();
        }
    }
    let mut adj = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            adj = adj.max((pairing[i][j] - pairing[j][i]).abs());
        }
    }
    Ok((idem, adj))
}

fn gram_error(arr: &PatchArray) -> f64 {
    let s = arr.len();
    let mut err = 0.0f64;
    for i in 0..s {
        for j in 0..s {
            let want = if i == j {
                arr.family.rectangles[i].area()
            } else {
                0.0
            };
            err = err.max((arr.gram[(i, j)] - want).abs());
        }
    }
    err
}

/// Runs the identity suite on the `n x n` structured mesh.
pub fn operator_identities(
    n: usize,
    m_order: usize,
    s_order: usize,
    lambda_k: f64,
    lambda_l: f64,
    tolerance: f64,
) -> Result<Vec<IdentityCheck>> {
    let mesh = TriMesh::structured(n)?;
    let (fa, fs) = build_regions(m_order, s_order)?;
    let act = ActuatorArray::new(&mesh, fa, lambda_k)?;
    let sen = SensorArray::new(&mesh, fs, lambda_l)?;
    let nv = mesh.vertex_count();

    let (idem_u, adj_u) = projection_errors(&act, nv)?;
    let (idem_w, adj_w) = projection_errors(&sen, nv)?;
    let (mut bk, mut lw) = (0.0f64, 0.0f64);
    for i in 0..nv {
        let e = basis(nv, i);
        let lhs = act.load(&act.u_diamond(&act.feedback_k(&e)?)?)?;
        let rhs = act.load(&act.projection_u(&e)?)?;
        bk = bk.max(max_diff(&lhs, &rhs, -lambda_k));
        let lhs = sen.load(&sen.injection_l(&sen.w_vee(&e)?)?)?;
        let rhs = sen.load(&sen.projection_w(&e)?)?;
        lw = lw.max(max_diff(&lhs, &rhs, -lambda_l));
    }

    let check = |name, max_error| IdentityCheck {
        name,
        max_error,
        tolerance,
    };
    Ok(vec![
        check("P_U idempotent", idem_u),
        check("P_W idempotent", idem_w),
        check("P_U self-adjoint", adj_u),
        check("P_W self-adjoint", adj_w),
        check("B K = -lambda_K P_U", bk),
        check("L W = -lambda_L P_W", lw),
        check("actuator Gram = diag(area)", gram_error(&act)),
        check("sensor Gram = diag(area)", gram_error(&sen)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_passes() {
        let checks = operator_identities(16, 2, 2, 100.0, 200.0, 1e-10).unwrap();
        assert_eq!(checks.len(), 8);
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn misaligned_mesh_is_an_error() {
        assert!(operator_identities(12, 2, 2, 1.0, 1.0, 1e-10).is_err());
    }
}
