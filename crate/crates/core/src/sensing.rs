//! Indicator-patch actuators and sensors: the maps between fields and
//! finite-dimensional inputs/outputs, their Gram matrices, the orthogonal
//! projections onto the patch spans, and the gains `K` and `L`.
//!
//! Indicators are never interpolated onto P1. Because every patch is an
//! exact union of triangles, all pairings against P1 fields and between
//! indicators are integrated exactly element by element, so the projection
//! identities hold to roundoff at the discrete level.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, invalid, Error, Result};
use crate::fem::FieldVector;
use crate::mesh::{check_alignment, triangles_in, Point, RegionFamily, RegionRole, TriMesh};

/// Linear combination `sum_j c_j 1_{omega_j}` of the patches of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField {
    pub coeffs: Vec<f64>,
}

/// Patches of one family resolved on a mesh.
#[derive(Debug, Clone)]
pub struct PatchArray {
    pub family: RegionFamily,
    /// `loads[j][i] = int_{omega_j} phi_i`
    pub loads: Vec<Vec<f64>>,
    pub gram: DMatrix<f64>,
    pub gram_inverse: DMatrix<f64>,
    /// Gain `lambda_K` (actuators) or `lambda_L` (sensors).
    pub gain: f64,
    mesh_level: usize,
}

impl PatchArray {
    pub fn new(mesh: &TriMesh, family: RegionFamily, gain: f64) -> Result<Self> {
        if !check_alignment(mesh, &family) {
            return Err(invalid("patches are not unions of mesh triangles"));
        }
        if !(gain >= 0.0) {
            return Err(invalid("gain must be nonnegative"));
        }
        let n = mesh.vertex_count();
        let members: Vec<Vec<usize>> = family
            .rectangles
            .iter()
            .map(|r| triangles_in(mesh, r))
            .collect();
        let loads: Vec<Vec<f64>> = members
            .iter()
            .map(|tris| {
                let mut load = vec![0.0; n];
                for &t in tris {
                    let third = mesh.signed_area(t) / 3.0;
                    for &v in &mesh.triangles[t] {
                        load[v] += third;
                    }
                }
                load
            })
            .collect();
        let count = family.len();
        let gram = DMatrix::from_fn(count, count, |i, j| {
            members[i]
                .iter()
                .filter(|t| members[j].contains(t))
                .map(|&t| mesh.signed_area(t))
                .sum()
        });
        let gram_inverse = gram
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular Gram matrix".into()))?;
        Ok(Self {
            family,
            loads,
            gram,
            gram_inverse,
            gain,
            mesh_level: mesh.level,
        })
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn dof_count(&self) -> usize {
        self.loads.first().map_or(0, Vec::len)
    }

    pub fn mesh_level(&self) -> usize {
        self.mesh_level
    }

    /// `(int_{omega_1} y, ..., int_{omega_k} y)`
    pub fn moments(&self, y: &FieldVector) -> Result<Vec<f64>> {
        check_len(self.dof_count(), y.len())?;
        Ok(self.moments_raw(&y.coeffs))
    }

    pub(crate) fn moments_raw(&self, y: &[f64]) -> Vec<f64> {
        self.loads
            .iter()
            .map(|l| crate::sparse::dot(l, y))
            .collect()
    }

    /// Patch integrals of a patch field: `gram * coeffs`.
    pub fn patch_moments(&self, f: &PatchField) -> Result<Vec<f64>> {
        check_len(self.len(), f.coeffs.len())?;
        Ok((&self.gram * DVector::from_column_slice(&f.coeffs))
            .as_slice()
            .to_vec())
    }

    pub fn combine(&self, coeffs: &[f64]) -> Result<PatchField> {
        check_len(self.len(), coeffs.len())?;
        Ok(PatchField {
            coeffs: coeffs.to_vec(),
        })
    }

    /// Load vector `int f phi_i` of a patch field.
    pub fn load(&self, f: &PatchField) -> Result<Vec<f64>> {
        check_len(self.len(), f.coeffs.len())?;
        Ok(self.load_raw(&f.coeffs))
    }

    pub(crate) fn load_raw(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_count()];
        for (c, l) in coeffs.iter().zip(&self.loads) {
            if *c != 0.0 {
                crate::sparse::axpy(*c, l, &mut out);
            }
        }
        out
    }

    /// Pointwise value; on a shared patch edge the first patch wins.
    pub fn value_at(&self, f: &PatchField, p: Point) -> f64 {
        self.family
            .rectangles
            .iter()
            .zip(&f.coeffs)
            .find(|(r, _)| r.contains(p))
            .map_or(0.0, |(_, c)| *c)
    }

    /// `V^{-1} moments(y)`: coefficients of the orthogonal projection.
    pub fn projection_coeffs(&self, moments: &[f64]) -> Vec<f64> {
        (&self.gram_inverse * DVector::from_column_slice(moments))
            .as_slice()
            .to_vec()
    }

    pub fn project(&self, y: &FieldVector) -> Result<PatchField> {
        Ok(PatchField {
            coeffs: self.projection_coeffs(&self.moments(y)?),
        })
    }

    pub fn project_patch(&self, f: &PatchField) -> Result<PatchField> {
        Ok(PatchField {
            coeffs: self.projection_coeffs(&self.patch_moments(f)?),
        })
    }

    /// `(f, g)_{L^2}` for two patch fields of this family.
    pub fn inner(&self, f: &PatchField, g: &PatchField) -> f64 {
        let gv = DVector::from_column_slice(&g.coeffs);
        let fv = DVector::from_column_slice(&f.coeffs);
        fv.dot(&(&self.gram * gv))
    }

    /// `(f, y)_{L^2}` for a patch field and a P1 field.
    pub fn inner_field(&self, f: &PatchField, y: &FieldVector) -> Result<f64> {
        Ok(crate::sparse::dot(&f.coeffs, &self.moments(y)?))
    }
}

/// Actuator patches; houses `B = U_diamond`, `U_vee`, and `K`.
#[derive(Debug, Clone)]
pub struct ActuatorArray(PatchArray);

/// Sensor patches; houses `W = W_vee`, `W_diamond`, and `L`.
#[derive(Debug, Clone)]
pub struct SensorArray(PatchArray);

impl Deref for ActuatorArray {
    type Target = PatchArray;
    fn deref(&self) -> &PatchArray {
        &self.0
    }
}

impl Deref for SensorArray {
    type Target = PatchArray;
    fn deref(&self) -> &PatchArray {
        &self.0
    }
}

impl ActuatorArray {
    pub fn new(mesh: &TriMesh, family: RegionFamily, lambda_k: f64) -> Result<Self> {
        if family.role != RegionRole::Actuator {
            return Err(invalid("actuator array needs an actuator family"));
        }
        PatchArray::new(mesh, family, lambda_k).map(Self)
    }

    pub fn lambda_k(&self) -> f64 {
        self.gain
    }

    pub fn u_diamond(&self, u: &[f64]) -> Result<PatchField> {
        self.combine(u)
    }

    pub fn u_vee(&self, y: &FieldVector) -> Result<Vec<f64>> {
        self.moments(y)
    }

    /// `K h = -lambda_K V^{-1} U_vee h`
    pub fn feedback_k(&self, h: &FieldVector) -> Result<Vec<f64>> {
        check_len(self.dof_count(), h.len())?;
        Ok(self.feedback_raw(&h.coeffs))
    }

    pub(crate) fn feedback_raw(&self, h: &[f64]) -> Vec<f64> {
        let lambda = self.gain;
        self.projection_coeffs(&self.moments_raw(h))
            .into_iter()
            .map(|c| -lambda * c)
            .collect()
    }

    pub fn projection_u(&self, y: &FieldVector) -> Result<PatchField> {
        self.project(y)
    }
}

impl SensorArray {
    pub fn new(mesh: &TriMesh, family: RegionFamily, lambda_l: f64) -> Result<Self> {
        if family.role != RegionRole::Sensor {
            return Err(invalid("sensor array needs a sensor family"));
        }
        PatchArray::new(mesh, family, lambda_l).map(Self)
    }

    pub fn lambda_l(&self) -> f64 {
        self.gain
    }

    pub fn w_vee(&self, y: &FieldVector) -> Result<Vec<f64>> {
        self.moments(y)
    }

    pub fn w_diamond(&self, v: &[f64]) -> Result<PatchField> {
        self.combine(v)
    }

    /// `L v = -lambda_L W_diamond V^{-1} v`
    pub fn injection_l(&self, v: &[f64]) -> Result<PatchField> {
        check_len(self.len(), v.len())?;
        let lambda = self.gain;
        Ok(PatchField {
            coeffs: self
                .projection_coeffs(v)
                .into_iter()
                .map(|c| -lambda * c)
                .collect(),
        })
    }

    pub fn projection_w(&self, y: &FieldVector) -> Result<PatchField> {
        self.project(y)
    }
}
