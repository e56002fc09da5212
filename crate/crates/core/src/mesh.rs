//! Triangulated surfaces in millimetre world coordinates.

use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::scalar::{count, is_finite, Real};
use crate::transform::RigidTransform;

/// Triangle mesh with 0-based face indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T: Real> {
    pub vertices: Vec<Point3<T>>,
    pub faces: Vec<[usize; 3]>,
    pub label: String,
}

/// One broken mesh invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    IndexOutOfRange { face: usize, index: usize },
    DegenerateFace { face: usize },
    NonFiniteVertex { vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IndexOutOfRange { face, index } => {
                write!(f, "index out of range: face {face} references vertex {index}")
            }
            Violation::DegenerateFace { face } => write!(f, "degenerate face: face {face}"),
            Violation::NonFiniteVertex { vertex } => {
                write!(f, "non-finite coordinate: vertex {vertex}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl<T: Real> Mesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[usize; 3]>, label: impl Into<String>) -> Self {
        Self {
            vertices,
            faces,
            label: label.into(),
        }
    }

    /// Lists every invariant violation; empty iff the mesh is well formed.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| is_finite(*c)) {
                violations.push(Violation::NonFiniteVertex { vertex: i });
            }
        }
        let n = self.vertices.len();
        for (i, face) in self.faces.iter().enumerate() {
            for &index in face {
                if index >= n {
                    violations.push(Violation::IndexOutOfRange { face: i, index });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                violations.push(Violation::DegenerateFace { face: i });
            }
        }
        ValidationReport { violations }
    }

    /// Vertex mean.
    pub fn centroid(&self) -> Option<Point3<T>> {
        centroid(&self.vertices)
    }

    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            vertices: t.apply_all(&self.vertices),
            faces: self.faces.clone(),
            label: self.label.clone(),
        }
    }

    /// Unit face normals following counter-clockwise winding; zero for
    /// zero-area faces.
    pub fn face_normals(&self) -> Vec<Vector3<T>> {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                (pb - pa)
                    .cross(&(pc - pa))
                    .try_normalize(T::zero())
                    .unwrap_or_else(Vector3::zeros)
            })
            .collect()
    }

    /// Outward vertex normals: incident face normals weighted by the
    /// corner angle at the vertex. Vertices without faces get a zero normal.
    pub fn vertex_normals(&self) -> Vec<Vector3<T>> {
        let face_normals = self.face_normals();
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (face, normal) in self.faces.iter().zip(&face_normals) {
            for k in 0..3 {
                let here = self.vertices[face[k]];
                let e1 = self.vertices[face[(k + 1) % 3]] - here;
                let e2 = self.vertices[face[(k + 2) % 3]] - here;
                let angle = e1.angle(&e2);
                if is_finite(angle) {
                    acc[face[k]] += *normal * angle;
                }
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(T::zero()).unwrap_or_else(Vector3::zeros))
            .collect()
    }

    /// Axis-aligned box with counter-clockwise (outward) faces.
    pub fn cuboid(min: Point3<T>, max: Point3<T>, label: impl Into<String>) -> Self {
        let corners = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Self::new(corners, faces, label)
    }
}

pub fn centroid<T: Real>(points: &[Point3<T>]) -> Option<Point3<T>> {
    if points.is_empty() {
        return None;
    }
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc: Vector3<T>, p| acc + p.coords);
    Some(Point3::from(sum / count::<T>(points.len())))
}
