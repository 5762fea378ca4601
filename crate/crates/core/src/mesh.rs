//! Structured triangulations of the unit square, red refinement, and the
//! rectangular actuator/sensor patch families placed on them.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

/// Vertices added by one red-refinement pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementLevel {
    /// Vertex count of the parent mesh; those vertices keep their indices.
    pub parent_vertex_count: usize,
    /// For every appended vertex, the two parent vertices of the split edge.
    pub midpoint_parents: Vec<[usize; 2]>,
}

/// Conforming triangulation of `[0,1]^2`.
///
/// Refinement keeps every parent vertex at its index and appends edge
/// midpoints, so a mesh and all its descendants are nested.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub level: usize,
    /// Child triangle -> parent triangle; empty at level 0.
    pub parent_map: Vec<usize>,
    pub history: Vec<RefinementLevel>,
}

impl TriMesh {
    /// `n x n` grid squares, each split along its SW-NE diagonal.
    pub fn structured(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("cells per side must be >= 1"));
        }
        let np = n + 1;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // exact endpoints instead of accumulating i*h
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            level: 0,
            parent_map: Vec::new(),
            history: Vec::new(),
        })
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints.
    pub fn refine(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint_parents = Vec::new();
        let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *edge_mid.entry(key).or_insert_with(|| {
                let (pa, pb) = (verts[a], verts[b]);
                verts.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                midpoint_parents.push([key.0, key.1]);
                verts.len() - 1
            })
        };

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parent_map = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            parent_map.extend_from_slice(&[t; 4]);
        }

        let mut history = self.history.clone();
        history.push(RefinementLevel {
            parent_vertex_count: self.vertices.len(),
            midpoint_parents,
        });
        Self {
            vertices,
            triangles,
            level: self.level + 1,
            parent_map,
            history,
        }
    }

    pub fn refine_times(&self, times: usize) -> Self {
        let mut mesh = self.clone();
        for _ in 0..times {
            mesh = mesh.refine();
        }
        mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area (positive for counter-clockwise vertex order).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Every interior edge is shared by exactly two triangles, boundary
    /// edges by one.
    pub fn is_conforming(&self) -> bool {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.iter().all(|(&(a, b), &count)| {
            let on_boundary = on_same_boundary_side(self.vertices[a], self.vertices[b]);
            (on_boundary && count == 1) || (!on_boundary && count == 2)
        })
    }

    /// Debug export: vertex count, vertices, triangle count, triangles.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(out, "{}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    /// True if `coarse` is an ancestor of `self` in the refinement chain.
    pub fn descends_from(&self, coarse: &TriMesh) -> bool {
        if coarse.level > self.level {
            return false;
        }
        let nv = coarse.vertices.len();
        let count_at_level = if coarse.level == self.level {
            self.vertices.len()
        } else {
            self.history[coarse.level].parent_vertex_count
        };
        count_at_level == nv && self.vertices[..nv] == coarse.vertices[..]
    }
}

fn on_same_boundary_side(a: Point, b: Point) -> bool {
    (0..2).any(|d| (a[d] == 0.0 && b[d] == 0.0) || (a[d] == 1.0 && b[d] == 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_lo && p[0] <= self.x_hi && p[1] >= self.y_lo && p[1] <= self.y_hi
    }

    pub fn interiors_overlap(&self, other: &Rect) -> bool {
        self.x_lo < other.x_hi
            && other.x_lo < self.x_hi
            && self.y_lo < other.y_hi
            && other.y_lo < self.y_hi
    }

    fn square(center: Point, side: f64) -> Self {
        let r = 0.5 * side;
        Self {
            x_lo: center[0] - r,
            x_hi: center[0] + r,
            y_lo: center[1] - r,
            y_hi: center[1] + r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionRole {
    Actuator,
    Sensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFamily {
    pub rectangles: Vec<Rect>,
    pub role: RegionRole,
    pub order: usize,
}

impl RegionFamily {
    /// Two squares of side `1/(4 order)` in each of the `order x order`
    /// cells: actuators on the cell diagonal, sensors on the anti-diagonal.
    pub fn new(role: RegionRole, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("region order must be >= 1"));
        }
        let cell = 1.0 / order as f64;
        let side = cell / 4.0;
        let offsets: [Point; 2] = match role {
            RegionRole::Actuator => [[0.25, 0.25], [0.75, 0.75]],
            RegionRole::Sensor => [[0.75, 0.25], [0.25, 0.75]],
        };
        let mut rectangles = Vec::with_capacity(2 * order * order);
        for cj in 0..order {
            for ci in 0..order {
                for off in offsets {
                    let center = [(ci as f64 + off[0]) * cell, (cj as f64 + off[1]) * cell];
                    rectangles.push(Rect::square(center, side));
                }
            }
        }
        Ok(Self {
            rectangles,
            role,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    pub fn pairwise_disjoint(&self) -> bool {
        let r = &self.rectangles;
        (0..r.len()).all(|i| (i + 1..r.len()).all(|j| !r[i].interiors_overlap(&r[j])))
    }
}

/// Actuator family of order `m` and sensor family of order `s`.
pub fn build_regions(m: usize, s: usize) -> Result<(RegionFamily, RegionFamily)> {
    Ok((
        RegionFamily::new(RegionRole::Actuator, m)?,
        RegionFamily::new(RegionRole::Sensor, s)?,
    ))
}

/// Triangles whose centroid lies in `rect`.
pub fn triangles_in(mesh: &TriMesh, rect: &Rect) -> Vec<usize> {
    (0..mesh.triangle_count())
        .filter(|&t| rect.contains(mesh.centroid(t)))
        .collect()
}

/// True iff every rectangle of the family is an exact union of triangles.
pub fn check_alignment(mesh: &TriMesh, regions: &RegionFamily) -> bool {
    regions.rectangles.iter().all(|rect| {
        let inside = triangles_in(mesh, rect);
        let all_vertices_in = inside.iter().all(|&t| {
            mesh.triangles[t]
                .iter()
                .all(|&v| rect.contains(mesh.vertices[v]))
        });
        let covered: f64 = inside.iter().map(|&t| mesh.signed_area(t)).sum();
        all_vertices_in && (covered - rect.area()).abs() <= 1e-12
    })
}
