//! CSR storage sharing one sparsity pattern per mesh, and a banded LU with
//! partial pivoting used for every implicit step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Vertex-adjacency pattern of a P1 mesh (diagonal included, columns sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrPattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    pub fn from_mesh(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in &mesh.triangles {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[lo..hi]
            .binary_search(&col)
            .ok()
            .map(|k| lo + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .position(row, col)
            .map_or(0.0, |k| self.values[k])
    }

    /// Adds a dense element matrix on the given local-to-global map.
    pub fn add_element(&mut self, dofs: &[usize; 3], local: &[[f64; 3]; 3]) {
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                let k = self
                    .pattern
                    .position(i, j)
                    .expect("element entry outside pattern");
                self.values[k] += local[a][b];
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `self + alpha * other`; both must share a pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> SparseMatrix {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        SparseMatrix {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        let p = &self.pattern;
        for (i, row) in d.iter_mut().enumerate() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row[p.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

/// Symmetric permutation that gives a small bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOrdering {
    /// `perm[new] = old`
    pub perm: Vec<usize>,
    /// `inv[old] = new`
    pub inv: Vec<usize>,
    pub bandwidth: usize,
}

impl BandOrdering {
    /// Lexicographic (row-major) vertex order; for the structured meshes this
    /// is the natural grid numbering at every refinement level.
    pub fn lexicographic(mesh: &TriMesh, pattern: &CsrPattern) -> Self {
        let mut perm: Vec<usize> = (0..mesh.vertex_count()).collect();
        perm.sort_by(|&a, &b| {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
        });
        Self::from_perm(perm, pattern)
    }

    pub fn identity(pattern: &CsrPattern) -> Self {
        Self::from_perm((0..pattern.dim()).collect(), pattern)
    }

    fn from_perm(perm: Vec<usize>, pattern: &CsrPattern) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bandwidth = 0;
        for i in 0..pattern.dim() {
            for &j in &pattern.col_idx[pattern.row_ptr[i]..pattern.row_ptr[i + 1]] {
                bandwidth = bandwidth.max(inv[i].abs_diff(inv[j]));
            }
        }
        Self {
            perm,
            inv,
            bandwidth,
        }
    }
}

/// LU factorization with partial pivoting of a banded matrix, LAPACK `gbtrf`
/// storage: entry `(i, j)` lives at row `kl + ku + i - j` of column `j`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    ordering: Arc<BandOrdering>,
}

impl BandedLu {
    pub fn factor(matrix: &SparseMatrix, ordering: Arc<BandOrdering>) -> Result<Self> {
        let n = matrix.dim();
        let kl = ordering.bandwidth;
        let ku = ordering.bandwidth;
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        let p = &matrix.pattern;
        for old_i in 0..n {
            let i = ordering.inv[old_i];
            for k in p.row_ptr[old_i]..p.row_ptr[old_i + 1] {
                let j = ordering.inv[p.col_idx[k]];
                ab[(kv + i - j) + j * ldab] += matrix.values[k];
            }
        }

        let scale = matrix.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab;
            let mut jp = 0;
            let mut best = ab[col + kv].abs();
            for r in 1..=km {
                let v = ab[col + kv + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            if best <= scale * 1e-14 {
                return Err(Error::NumericalFailure(format!("zero pivot in column {j}")));
            }
            ipiv[j] = j + jp;
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ldab + kv;
                    ab.swap(base + j - c, base + j + jp - c);
                }
            }
            let pivot = ab[col + kv];
            for r in 1..=km {
                ab[col + kv + r] /= pivot;
            }
            for c in j + 1..=ju {
                let ccol = c * ldab;
                let ujc = ab[ccol + kv + j - c];
                if ujc != 0.0 {
                    for r in 1..=km {
                        ab[ccol + kv + j + r - c] -= ab[col + kv + r] * ujc;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
            ordering,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in the original (unpermuted) numbering.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.ordering.perm.iter().map(|&old| rhs[old]).collect();
        self.solve_permuted_in_place(&mut x);
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.ordering.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    fn solve_permuted_in_place(&self, b: &mut [f64]) {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = kl.min(n - 1 - j);
                let col = j * ldab + kv;
                for r in 1..=km {
                    b[j + r] -= self.ab[col + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[col + i - j] * bj;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_on_pattern(mesh: &TriMesh, seed: u64, diag_shift: f64) -> SparseMatrix {
        let pattern = Arc::new(CsrPattern::from_mesh(mesh));
        let mut m = SparseMatrix::zeros(pattern.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..pattern.dim() {
            for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                m.values[k] = rng.random_range(-1.0..1.0);
                if pattern.col_idx[k] == i {
                    m.values[k] += diag_shift;
                }
            }
        }
        m
    }

    #[test]
    fn pattern_of_single_square() {
        let mesh = TriMesh::structured(1).unwrap();
        let p = CsrPattern::from_mesh(&mesh);
        // vertices 1 and 2 are not joined by an edge
        assert_eq!(p.nnz(), 16 - 2);
        assert!(p.position(1, 2).is_none());
    }

    #[test]
    fn lexicographic_bandwidth_on_refined_mesh() {
        let mesh = TriMesh::structured(4).unwrap().refine_times(2);
        let p = CsrPattern::from_mesh(&mesh);
        let ord = BandOrdering::lexicographic(&mesh, &p);
        assert_eq!(ord.bandwidth, 16 + 2);
        assert!(BandOrdering::identity(&p).bandwidth > ord.bandwidth);
    }

    #[test]
    fn banded_lu_matches_residual() {
        let mesh = TriMesh::structured(5).unwrap().refine();
        // weak diagonal: forces row interchanges
        let a = random_on_pattern(&mesh, 7, 0.1);
        let p = CsrPattern::from_mesh(&mesh);
        let ord = Arc::new(BandOrdering::lexicographic(&mesh, &p));
        let lu = BandedLu::factor(&a, ord).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = lu.solve(&b);
        let r = a.mul_vec(&x);
        let err = r
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "residual {err}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mesh = TriMesh::structured(2).unwrap();
        let p = Arc::new(CsrPattern::from_mesh(&mesh));
        let a = SparseMatrix::zeros(p.clone());
        let ord = Arc::new(BandOrdering::identity(&p));
        assert!(matches!(
            BandedLu::factor(&a, ord),
            Err(Error::NumericalFailure(_))
        ));
    }
}
