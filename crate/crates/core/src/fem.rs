//! P1 finite elements for `A = -nu*Lap + 1` with Neumann boundary and the
//! time-dependent reaction-convection term `a(x,t) y + b(x,t).grad y`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, invalid, Result};
use crate::mesh::{Point, TriMesh};
use crate::sparse::{BandOrdering, BandedLu, CsrPattern, SparseMatrix};

type ScalarFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Diffusion `nu`, reaction `a(x1,x2,t)` and convection `b(x1,x2,t)`.
#[derive(Clone)]
pub struct CoefficientField {
    pub nu: f64,
    reaction: ScalarFn,
    convection: VectorFn,
    label: &'static str,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("nu", &self.nu)
            .field("label", &self.label)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(
        nu: f64,
        reaction: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        convection: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            nu,
            reaction: Arc::new(reaction),
            convection: Arc::new(convection),
            label: "custom",
        }
    }

    /// `nu = 0.1`, `a = -3/2 + x1 - |sin(6t + x1)|`,
    /// `b = (x1 + x2, |cos(6t) x1 x2|)`.
    pub fn reference() -> Self {
        Self {
            label: "reference",
            ..Self::new(
                0.1,
                |x1, _x2, t| -1.5 + x1 - (6.0 * t + x1).sin().abs(),
                |x1, x2, t| [x1 + x2, ((6.0 * t).cos() * x1 * x2).abs()],
            )
        }
    }

    /// `a == 0`, `b == 0`.
    pub fn passive(nu: f64) -> Self {
        Self {
            label: "passive",
            ..Self::new(nu, |_, _, _| 0.0, |_, _, _| [0.0, 0.0])
        }
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn reaction(&self, x: Point, t: f64) -> f64 {
        (self.reaction)(x[0], x[1], t)
    }

    pub fn convection(&self, x: Point, t: f64) -> [f64; 2] {
        (self.convection)(x[0], x[1], t)
    }
}

/// Degree-4 symmetric Gauss rule on the reference triangle (6 points),
/// as barycentric coordinates and weights summing to one.
pub const GAUSS4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const WA: f64 = 0.223_381_589_678_011;
    const B: f64 = 0.091_576_213_509_771;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// Per-triangle data that does not depend on time.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the three barycentric hat functions.
    pub grads: [[f64; 2]; 3],
    /// Physical Gauss points of [`GAUSS4`].
    pub quad_points: [Point; 6],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Self {
        let [a, b, c] = p;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let area = 0.5 * det;
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        let quad_points = GAUSS4.map(|(l, _)| {
            [
                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
            ]
        });
        Self {
            area,
            grads,
            quad_points,
        }
    }

    pub fn mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    pub fn laplace(&self) -> [[f64; 3]; 3] {
        let g = &self.grads;
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = self.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        k
    }

    /// `int a phi_j phi_i + int (b . grad phi_j) phi_i`, row `i`, column `j`.
    pub fn reaction_convection(&self, coeff: &CoefficientField, t: f64) -> [[f64; 3]; 3] {
        let mut e = [[0.0; 3]; 3];
        for (q, &(lambda, w)) in GAUSS4.iter().enumerate() {
            let x = self.quad_points[q];
            let wa = w * self.area;
            let a = coeff.reaction(x, t);
            let b = coeff.convection(x, t);
            for j in 0..3 {
                let adv = b[0] * self.grads[j][0] + b[1] * self.grads[j][1];
                let s = a * lambda[j] + adv;
                for i in 0..3 {
                    e[i][j] += wa * s * lambda[i];
                }
            }
        }
        e
    }
}

/// Nodal P1 coefficients on a mesh of the given refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    pub coeffs: Vec<f64>,
    pub mesh_level: usize,
}

impl FieldVector {
    pub fn zeros(len: usize, mesh_level: usize) -> Self {
        Self {
            coeffs: vec![0.0; len],
            mesh_level,
        }
    }

    pub fn interpolate(mesh: &TriMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            coeffs: mesh.vertices.iter().map(|p| f(p[0], p[1])).collect(),
            mesh_level: mesh.level,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Mass matrix, the matrix of `A`, and what is needed to reassemble the
/// reaction-convection term and to factor step matrices.
#[derive(Debug, Clone)]
pub struct SemidiscreteOperators {
    pub mesh: Arc<TriMesh>,
    pub nu: f64,
    pub mass: SparseMatrix,
    pub stiff_a: SparseMatrix,
    pub geometry: Vec<ElementGeometry>,
    pub ordering: Arc<BandOrdering>,
}

impl SemidiscreteOperators {
    pub fn new(mesh: Arc<TriMesh>, nu: f64) -> Result<Self> {
        let geometry = element_geometry(&mesh);
        let pattern = Arc::new(CsrPattern::from_mesh(&mesh));
        let ordering = Arc::new(BandOrdering::lexicographic(&mesh, &pattern));
        let mass = assemble_with(&mesh, &pattern, &geometry, |g| g.mass());
        let stiff_a = stiff_from_parts(&mesh, &pattern, &geometry, nu)?;
        Ok(Self {
            mesh,
            nu,
            mass,
            stiff_a,
            geometry,
            ordering,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.mass.dim()
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.mass.pattern
    }

    pub fn assemble_rc(&self, coeff: &CoefficientField, t: f64) -> SparseMatrix {
        assemble_with(&self.mesh, self.pattern(), &self.geometry, |g| {
            g.reaction_convection(coeff, t)
        })
    }

    /// Factors `M + dt (A + rc)`.
    pub fn step_solver(&self, rc: &SparseMatrix, dt: f64) -> Result<StepSolver> {
        if !(dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        let system = self.mass.add_scaled(dt, &self.stiff_a.add_scaled(1.0, rc));
        Ok(StepSolver {
            lu: BandedLu::factor(&system, self.ordering.clone())?,
            dt,
        })
    }

    pub fn l2_norm(&self, y: &FieldVector) -> Result<f64> {
        l2_norm(y, &self.mass)
    }
}

/// Factored backward-Euler step matrix `M + dt (A + rc(t_next))`.
#[derive(Debug, Clone)]
pub struct StepSolver {
    pub lu: BandedLu,
    pub dt: f64,
}

impl StepSolver {
    /// Solves `(M + dt(A + rc)) y_next = M y + load`; `load` already carries
    /// the factor `dt`.
    pub fn advance(&self, mass: &SparseMatrix, y: &[f64], load: Option<&[f64]>) -> Vec<f64> {
        let mut rhs = mass.mul_vec(y);
        if let Some(load) = load {
            for (r, l) in rhs.iter_mut().zip(load) {
                *r += l;
            }
        }
        self.lu.solve(&rhs)
    }
}

fn element_geometry(mesh: &TriMesh) -> Vec<ElementGeometry> {
    mesh.triangles
        .iter()
        .map(|tri| ElementGeometry::new(tri.map(|v| mesh.vertices[v])))
        .collect()
}

fn assemble_with(
    mesh: &TriMesh,
    pattern: &Arc<CsrPattern>,
    geometry: &[ElementGeometry],
    local: impl Fn(&ElementGeometry) -> [[f64; 3]; 3],
) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(pattern.clone());
    for (tri, g) in mesh.triangles.iter().zip(geometry) {
        m.add_element(tri, &local(g));
    }
    m
}

fn stiff_from_parts(
    mesh: &TriMesh,
    pattern: &Arc<CsrPattern>,
    geometry: &[ElementGeometry],
    nu: f64,
) -> Result<SparseMatrix> {
    if !(nu > 0.0) {
        return Err(invalid(format!("diffusion must be positive, got {nu}")));
    }
    Ok(assemble_with(mesh, pattern, geometry, |g| {
        let (m, k) = (g.mass(), g.laplace());
        let mut e = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                e[i][j] = nu * k[i][j] + m[i][j];
            }
        }
        e
    }))
}

pub fn assemble_mass(mesh: &TriMesh) -> SparseMatrix {
    let pattern = Arc::new(CsrPattern::from_mesh(mesh));
    assemble_with(mesh, &pattern, &element_geometry(mesh), |g| g.mass())
}

/// `nu * stiffness + mass`, natural Neumann boundary.
pub fn assemble_stiff_a(mesh: &TriMesh, nu: f64) -> Result<SparseMatrix> {
    let pattern = Arc::new(CsrPattern::from_mesh(mesh));
    stiff_from_parts(mesh, &pattern, &element_geometry(mesh), nu)
}

pub fn assemble_rc(mesh: &TriMesh, coeff: &CoefficientField, t: f64) -> SparseMatrix {
    let pattern = Arc::new(CsrPattern::from_mesh(mesh));
    assemble_with(mesh, &pattern, &element_geometry(mesh), |g| {
        g.reaction_convection(coeff, t)
    })
}

/// One backward-Euler step with `rc_next` evaluated at the end of the step
/// and a P1 forcing field (load `M forcing`).
pub fn step_implicit(
    ops: &SemidiscreteOperators,
    rc_next: &SparseMatrix,
    y: &FieldVector,
    dt: f64,
    forcing: &FieldVector,
) -> Result<FieldVector> {
    check_len(ops.dof_count(), y.len())?;
    check_len(ops.dof_count(), forcing.len())?;
    check_len(ops.dof_count(), rc_next.dim())?;
    let solver = ops.step_solver(rc_next, dt)?;
    let load: Vec<f64> = ops
        .mass
        .mul_vec(&forcing.coeffs)
        .iter()
        .map(|v| dt * v)
        .collect();
    let coeffs = solver.advance(&ops.mass, &y.coeffs, Some(&load));
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::NumericalFailure(
            "non-finite step result".into(),
        ));
    }
    Ok(FieldVector {
        coeffs,
        mesh_level: y.mesh_level,
    })
}

/// `sqrt(y^T M y)`
pub fn l2_norm(y: &FieldVector, mass: &SparseMatrix) -> Result<f64> {
    check_len(mass.dim(), y.len())?;
    Ok(l2_norm_raw(&y.coeffs, mass))
}

pub(crate) fn l2_norm_raw(y: &[f64], mass: &SparseMatrix) -> f64 {
    crate::sparse::dot(y, &mass.mul_vec(y)).max(0.0).sqrt()
}

/// Exact P1 embedding of a coarse field into a descendant mesh.
pub fn prolong(y: &FieldVector, coarse: &TriMesh, fine: &TriMesh) -> Result<FieldVector> {
    check_len(coarse.vertex_count(), y.len())?;
    if !fine.descends_from(coarse) {
        return Err(invalid("fine mesh is not a refinement of the coarse mesh"));
    }
    let mut coeffs = y.coeffs.clone();
    prolong_levels(&mut coeffs, fine, coarse.level);
    Ok(FieldVector {
        coeffs,
        mesh_level: fine.level,
    })
}

pub(crate) fn prolong_levels(coeffs: &mut Vec<f64>, fine: &TriMesh, from_level: usize) {
    for level in &fine.history[from_level..] {
        debug_assert_eq!(coeffs.len(), level.parent_vertex_count);
        coeffs.reserve(level.midpoint_parents.len());
        for &[a, b] in &level.midpoint_parents {
            let v = 0.5 * (coeffs[a] + coeffs[b]);
            coeffs.push(v);
        }
    }
}
