//! Independent checks of the assembled operators: a collapsed tensor
//! Gauss-Legendre rule on every triangle, and the temporal order of the
//! implicit step.

use std::sync::Arc;

use parastab_core::fem::{
    assemble_rc, step_implicit, CoefficientField, FieldVector, SemidiscreteOperators,
};
use parastab_core::TriMesh;

/// Gauss-Legendre nodes and weights on [0, 1] via Newton on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 + x), 0.5 * w));
    }
    out
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let rule = gauss_legendre(10);
    assert!((rule.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-14);
    for k in 0..20 {
        let exact = 1.0 / (k as f64 + 1.0);
        let q: f64 = rule.iter().map(|&(x, w)| w * x.powi(k)).sum();
        assert!((q - exact).abs() < 1e-14, "x^{k}");
    }
}

/// Dense `int (a phi_j + b . grad phi_j) phi_i` over the mesh.
fn oracle_rc(mesh: &TriMesh, coeff: &CoefficientField, t: f64) -> Vec<Vec<f64>> {
    let rule = gauss_legendre(12);
    let nv = mesh.vertex_count();
    let mut out = vec![vec![0.0; nv]; nv];
    for tri in &mesh.triangles {
        let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertices[v]).collect();
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        // gradients of the barycentric coordinates
        let g1 = [e2[1] / det, -e2[0] / det];
        let g2 = [-e1[1] / det, e1[0] / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        let grads = [g0, g1, g2];
        for &(u, wu) in &rule {
            for &(v, wv) in &rule {
                // (u, v) in the unit square onto the reference triangle
                let (xi, eta) = (u, v * (1.0 - u));
                let w = wu * wv * (1.0 - u) * det.abs();
                let x = [
                    p[0][0] + xi * e1[0] + eta * e2[0],
                    p[0][1] + xi * e1[1] + eta * e2[1],
                ];
                let lam = [1.0 - xi - eta, xi, eta];
                let a = coeff.reaction(x, t);
                let b = coeff.convection(x, t);
                for j in 0..3 {
                    let s = a * lam[j] + b[0] * grads[j][0] + b[1] * grads[j][1];
                    for i in 0..3 {
                        out[tri[i]][tri[j]] += w * s * lam[i];
                    }
                }
            }
        }
    }
    out
}

#[test]
fn rc_matches_high_order_oracle() {
    let coeff = CoefficientField::reference();
    // a degree-4 rule on unit-size triangles misses the x1^5 term of
    // sin(x1), so the single-cell mesh gets a looser bound
    for (n, tol) in [(8, 1e-6), (4, 1e-6), (2, 1e-6), (1, 5e-5)] {
        let mesh = TriMesh::structured(n).unwrap();
        let got = assemble_rc(&mesh, &coeff, 0.0).to_dense();
        let want = oracle_rc(&mesh, &coeff, 0.0);
        let err = got
            .iter()
            .flatten()
            .zip(want.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < tol, "n={n}: {err:e}");
    }
}

#[test]
fn rc_matches_oracle_at_later_time() {
    // |cos(6t) x1 x2| and |sin(6t + x1)| are smooth away from their kinks
    let coeff = CoefficientField::reference();
    let mesh = TriMesh::structured(4).unwrap();
    let got = assemble_rc(&mesh, &coeff, 0.05).to_dense();
    let want = oracle_rc(&mesh, &coeff, 0.05);
    for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn implicit_step_is_first_order_in_time() {
    let mesh = Arc::new(TriMesh::structured(8).unwrap());
    let ops = SemidiscreteOperators::new(mesh.clone(), 0.1).unwrap();
    let coeff = CoefficientField::reference();
    let y0 = FieldVector::interpolate(&mesh, |x, y| 1.0 - 2.0 * x * y);
    let zero = FieldVector::zeros(mesh.vertex_count(), 0);
    let solve = |steps: usize| {
        let dt = 0.2 / steps as f64;
        let mut y = y0.clone();
        for k in 1..=steps {
            let rc = ops.assemble_rc(&coeff, k as f64 * dt);
            y = step_implicit(&ops, &rc, &y, dt, &zero).unwrap();
        }
        y.coeffs
    };
    let (a, b, c) = (solve(20), solve(40), solve(80));
    let diff = |x: &[f64], y: &[f64]| {
        let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        ops.l2_norm(&FieldVector {
            coeffs: d,
            mesh_level: 0,
        })
        .unwrap()
    };
    let ratio = diff(&a, &b) / diff(&b, &c);
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
}
