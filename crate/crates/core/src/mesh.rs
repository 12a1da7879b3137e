//! Icosahedral triangulations of the unit sphere and the P1 finite element
//! pencil on them.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};

/// Finest subdivision level accepted by [`build_icosphere`].
pub const MAX_LEVEL: usize = 8;

/// How areas and energy densities are normalized.
///
/// The mesh itself always lives on the unit sphere; `AreaOne` only changes
/// the factor consumers apply to `dA` (and inversely to `|df|²`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AreaConvention {
    UnitRound,
    AreaOne,
}

/// Per-triangle data for the P1 element.
///
/// The measure of a triangle is the area of the spherical triangle with the
/// same vertices, so element areas sum to `4π` up to rounding; gradients
/// are those of the flat triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    /// Spherical area.
    pub area: f64,
    /// Area of the flat triangle.
    pub flat_area: f64,
    /// `k[i][j] = ∫ ∇φ_i · ∇φ_j` over the flat triangle.
    pub k: [[f64; 3]; 3],
}

#[derive(Debug, Clone)]
pub struct SphereMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    /// Faces of every coarser level; children of face `f` at level `l`
    /// are faces `4f..4f+4` at level `l + 1`.
    hierarchy: Vec<Vec<[usize; 3]>>,
    elements: Vec<Element>,
    level: usize,
    convention: AreaConvention,
    scale_factor: f64,
}

/// Both matrices of the P1 discretization of `∫⟨dV,dW⟩` and `∫⟨V,W⟩`.
#[derive(Debug, Clone)]
pub struct FemPencil {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    // two poles and two staggered pentagonal rings at height ±1/√5
    let h = 1.0 / 5f64.sqrt();
    let r = 2.0 * h;
    let mut v = vec![Vector3::new(0.0, 0.0, 1.0)];
    for k in 0..5 {
        let t = k as f64 * std::f64::consts::TAU / 5.0;
        v.push(Vector3::new(r * t.cos(), r * t.sin(), h));
    }
    for k in 0..5 {
        let t = (k as f64 + 0.5) * std::f64::consts::TAU / 5.0;
        v.push(Vector3::new(r * t.cos(), r * t.sin(), -h));
    }
    v.push(Vector3::new(0.0, 0.0, -1.0));
    let mut f = Vec::with_capacity(20);
    for k in 0..5 {
        let (u0, u1) = (1 + k, 1 + (k + 1) % 5);
        let (l0, l1) = (6 + k, 6 + (k + 1) % 5);
        f.push([0, u0, u1]);
        f.push([u0, l0, u1]);
        f.push([u1, l0, l1]);
        f.push([11, l1, l0]);
    }
    (v, f)
}

fn subdivide(vertices: &mut Vec<Vector3<f64>>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]).normalize());
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = mid(a, b, vertices);
        let bc = mid(b, c, vertices);
        let ca = mid(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    out
}

fn spherical_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let triple = a.dot(&b.cross(c)).abs();
    2.0 * triple.atan2(1.0 + a.dot(b) + b.dot(c) + c.dot(a))
}

fn element(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Element {
    let flat_area = 0.5 * (b - a).cross(&(c - a)).norm();
    // edge opposite each vertex, oriented cyclically
    let e = [c - b, a - c, b - a];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                k[i][j] = e[i].dot(&e[j]) / (4.0 * flat_area);
            }
        }
    }
    for i in 0..3 {
        k[i][i] = -(0..3).filter(|&j| j != i).map(|j| k[i][j]).sum::<f64>();
    }
    Element { area: spherical_area(a, b, c), flat_area, k }
}

/// Icosahedron with one vertex at each pole, subdivided `level` times by
/// edge midpoints projected back to the sphere.
pub fn build_icosphere(level: usize) -> Result<SphereMesh> {
    if level > MAX_LEVEL {
        return Err(Error::Resource(format!("subdivision level {level} exceeds {MAX_LEVEL}")));
    }
    let (mut vertices, mut faces) = icosahedron();
    let mut hierarchy = Vec::with_capacity(level);
    for _ in 0..level {
        let finer = subdivide(&mut vertices, &faces);
        hierarchy.push(std::mem::replace(&mut faces, finer));
    }
    let elements = faces
        .iter()
        .map(|&[a, b, c]| element(&vertices[a], &vertices[b], &vertices[c]))
        .collect();
    Ok(SphereMesh {
        vertices,
        faces,
        hierarchy,
        elements,
        level,
        convention: AreaConvention::UnitRound,
        scale_factor: 1.0,
    })
}

/// Same triangulation viewed with total area one.
///
/// The factor is the reciprocal of the summed element area, so discrete
/// areas sum to one up to rounding.
pub fn to_area_one(mesh: &SphereMesh) -> SphereMesh {
    let mut out = mesh.clone();
    out.convention = AreaConvention::AreaOne;
    out.scale_factor = 1.0 / mesh.area();
    out
}

impl SphereMesh {
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        3 * self.faces.len() / 2
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn convention(&self) -> AreaConvention {
        self.convention
    }

    /// Factor applied to `dA`: 1 for `UnitRound`, `1/area()` for `AreaOne`.
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// Sum of the element areas in unit-sphere units.
    pub fn area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (self.vertices[i] - self.vertices[j]).norm())
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Checks unit vertices, closed 2-manifold structure, Euler
    /// characteristic 2 and positive face areas.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Precondition(format!("vertex {i} is off the sphere")));
            }
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                *edges.entry((i.min(j), i.max(j))).or_default() += 1;
            }
            let e = &self.elements[f];
            // outward orientation: the normal points away from the origin
            let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            if !(e.flat_area > 0.0) || n.dot(&self.centroid(f)) <= 0.0 {
                return Err(Error::DegenerateFace { face: f, area: e.area });
            }
        }
        if let Some((&(i, j), &count)) = edges.iter().find(|(_, &n)| n != 2) {
            return Err(Error::Precondition(format!("edge ({i},{j}) is shared by {count} faces")));
        }
        let chi = self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64;
        if chi != 2 {
            return Err(Error::Precondition(format!("Euler characteristic {chi}")));
        }
        Ok(())
    }

    /// Finds the face whose cone from the origin contains `p` and the
    /// barycentric weights of the ray hit on that flat triangle.
    pub fn locate(&self, p: &Vector3<f64>) -> (usize, [f64; 3]) {
        let weights = |tri: &[usize; 3]| -> [f64; 3] {
            let m = Matrix3::from_columns(&[self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]);
            let l = m.lu().solve(p).unwrap_or_else(|| Vector3::repeat(-1.0));
            [l[0], l[1], l[2]]
        };
        let score = |w: &[f64; 3]| w[0].min(w[1]).min(w[2]);
        let level_faces = |l: usize| -> &[[usize; 3]] {
            if l < self.hierarchy.len() {
                &self.hierarchy[l]
            } else {
                &self.faces
            }
        };
        let mut best = (0, weights(&level_faces(0)[0]));
        for (f, tri) in level_faces(0).iter().enumerate().skip(1) {
            let w = weights(tri);
            if score(&w) > score(&best.1) {
                best = (f, w);
            }
        }
        for l in 1..=self.level {
            let faces = level_faces(l);
            let parent = best.0;
            best = (4 * parent, weights(&faces[4 * parent]));
            for f in 4 * parent + 1..4 * parent + 4 {
                let w = weights(&faces[f]);
                if score(&w) > score(&best.1) {
                    best = (f, w);
                }
            }
        }
        let (f, w) = best;
        let s = w[0] + w[1] + w[2];
        (f, [w[0] / s, w[1] / s, w[2] / s])
    }

    /// Wavefront OBJ text of the triangulation.
    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(40 * (self.vertices.len() + self.faces.len()));
        for v in &self.vertices {
            let _ = writeln!(out, "v {:.17} {:.17} {:.17}", v.x, v.y, v.z);
        }
        for &[a, b, c] in &self.faces {
            let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
        }
        out
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            level: self.level,
            convention: self.convention,
            vertex_count: self.vertices.len(),
            face_count: self.faces.len(),
        }
    }
}

/// The JSON description written next to an exported mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub level: usize,
    pub convention: AreaConvention,
    pub vertex_count: usize,
    pub face_count: usize,
}

/// Consistent mass (on spherical element areas) and cotangent stiffness
/// matrices, assembled in ascending face order. Both are in unit-sphere units regardless of the convention.
pub fn assemble_pencil(mesh: &SphereMesh) -> Result<FemPencil> {
    let n = mesh.vertex_count();
    let mut m = TripletBuilder::with_capacity(n, 9 * mesh.face_count());
    let mut k = TripletBuilder::with_capacity(n, 9 * mesh.face_count());
    for (f, (tri, e)) in mesh.faces.iter().zip(&mesh.elements).enumerate() {
        if !(e.flat_area > 1e-14) {
            return Err(Error::DegenerateFace { face: f, area: e.flat_area });
        }
        for i in 0..3 {
            for j in 0..3 {
                let mass = if i == j { e.area / 6.0 } else { e.area / 12.0 };
                m.push(tri[i], tri[j], mass);
                k.push(tri[i], tri[j], e.k[i][j]);
            }
        }
    }
    Ok(FemPencil { mass: m.build(), stiffness: k.build() })
}
