//! Whole-spine geometry: per-vertebra principal axes and endplates, Cobb
//! angles, intervertebral spacing and alignment.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::mesh::{centroid, Mesh};
use crate::scalar::{count, lit, rad_to_deg, to_f64, Real};
use crate::spatial::KdTree;
use crate::transform::RigidTransform;

pub const DEFAULT_ENDPLATE_FRACTION: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpineError {
    #[error("vertebra {label}: need at least 4 vertices, got {got}")]
    TooFewVertices { label: String, got: usize },
    #[error("vertebra {label}: coplanar vertex set (rank-deficient covariance)")]
    Coplanar { label: String },
    #[error("vertebra {label}: invalid mesh: {reason}")]
    InvalidMesh { label: String, reason: String },
    #[error("requires ≥2 vertebrae, got {0}")]
    TooFewVertebrae(usize),
    #[error("duplicate vertebra label {0}")]
    DuplicateLabel(String),
    #[error("vertebrae {0} and {1} share the same cranial level")]
    SameLevel(String, String),
    #[error("endplate fraction must lie in (0, 0.5], got {0}")]
    BadFraction(f64),
    #[error("anatomical frame axes must be orthonormal and right-handed")]
    BadFrame,
}

/// Anatomical directions in world coordinates. Coronal is the
/// lateral-vertical plane, sagittal the AP-vertical plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AnatomicalFrame<T: Real> {
    pub lateral: Vector3<T>,
    pub ap: Vector3<T>,
    pub vertical: Vector3<T>,
}

impl<T: Real> Default for AnatomicalFrame<T> {
    fn default() -> Self {
        Self {
            lateral: Vector3::x(),
            ap: Vector3::y(),
            vertical: Vector3::z(),
        }
    }
}

impl<T: Real> AnatomicalFrame<T> {
    pub fn new(lateral: Vector3<T>, ap: Vector3<T>, vertical: Vector3<T>) -> Result<Self, SpineError> {
        let m = Matrix3::from_columns(&[lateral, ap, vertical]);
        let err = (m.transpose() * m - Matrix3::identity()).amax();
        if !(err < lit(1e-6)) || m.determinant() < T::zero() {
            return Err(SpineError::BadFrame);
        }
        Ok(Self { lateral, ap, vertical })
    }

    /// Frame carried along by a rigid transform.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            lateral: t.apply_vector(&self.lateral),
            ap: t.apply_vector(&self.ap),
            vertical: t.apply_vector(&self.vertical),
        }
    }

    fn in_plane(&self, plane: Plane) -> Vector3<T> {
        match plane {
            Plane::Coronal => self.lateral,
            Plane::Sagittal => self.ap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Coronal,
    Sagittal,
}

/// Least-squares endplate: the vertices it was fit to, their centroid and a
/// cranially oriented unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Endplate<T: Real> {
    pub vertex_indices: Vec<usize>,
    pub centroid: Point3<T>,
    pub normal: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertebraModel<T: Real> {
    pub label: String,
    pub mesh: Mesh<T>,
    pub centroid: Point3<T>,
    /// Orthonormal, right-handed; descending variance. Axis 3 points cranially.
    pub axes: [Vector3<T>; 3],
    pub superior: Endplate<T>,
    pub inferior: Endplate<T>,
}

impl<T: Real> VertebraModel<T> {
    pub fn endplate_points(&self, e: &Endplate<T>) -> Vec<Point3<T>> {
        e.vertex_indices.iter().map(|&i| self.mesh.vertices[i]).collect()
    }
}

fn covariance<T: Real>(points: &[Point3<T>], c: &Point3<T>) -> Matrix3<T> {
    let sum = points
        .iter()
        .fold(Matrix3::zeros(), |acc: Matrix3<T>, p| acc + (p - c) * (p - c).transpose());
    sum / count::<T>(points.len())
}

/// Eigen-pairs sorted by descending eigenvalue.
fn sorted_eigen<T: Real>(cov: Matrix3<T>) -> ([T; 3], [Vector3<T>; 3]) {
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    (
        idx.map(|i| eig.eigenvalues[i]),
        idx.map(|i| eig.eigenvectors.column(i).into_owned()),
    )
}

/// Principal axes; inside groups of (near-)equal eigenvalues, where the
/// eigenvectors are arbitrary, the frame axes projected into the eigenspace
/// are used instead (lateral first, vertical last).
fn principal_axes<T: Real>(values: [T; 3], vectors: [Vector3<T>; 3], frame: &AnatomicalFrame<T>) -> [Vector3<T>; 3] {
    let tie = values[0] * lit(1e-6);
    let mut axes = vectors;
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && values[end - 1] - values[end] <= tie {
            end += 1;
        }
        if end - start > 1 {
            let basis = &vectors[start..end];
            let mut chosen: Vec<Vector3<T>> = Vec::new();
            for cand in [frame.lateral, frame.ap, frame.vertical] {
                if chosen.len() == end - start {
                    break;
                }
                let mut p = basis.iter().fold(Vector3::zeros(), |acc, b| acc + b * b.dot(&cand));
                for c in &chosen {
                    p -= c * c.dot(&p);
                }
                if p.norm() > lit(0.1) {
                    chosen.push(p.normalize());
                }
            }
            if chosen.len() == end - start {
                axes[start..end].copy_from_slice(&chosen);
            }
        }
        start = end;
    }
    let mut a3 = axes[2];
    if a3.dot(&frame.vertical) < T::zero() {
        a3 = -a3;
    }
    let mut a1 = axes[0];
    let s = a1.dot(&frame.lateral);
    if s < T::zero() || (s == T::zero() && a1.dot(&frame.ap) < T::zero()) {
        a1 = -a1;
    }
    let a2 = a3.cross(&a1).normalize();
    // re-derive a1 so the triple is exactly orthonormal
    let a1 = a2.cross(&a3).normalize();
    [a1, a2, a3]
}

fn fit_endplate<T: Real>(points: &[Point3<T>], indices: Vec<usize>, fallback: &Vector3<T>) -> Endplate<T> {
    let sel: Vec<Point3<T>> = indices.iter().map(|&i| points[i]).collect();
    let c = centroid(&sel).expect("endplate has at least one vertex");
    let mut normal = *fallback;
    if sel.len() >= 3 {
        let (values, vectors) = sorted_eigen(covariance(&sel, &c));
        // collinear or single-point sets leave the plane undetermined
        if values[1] > values[0] * lit(1e-9) {
            normal = vectors[2];
        }
    }
    if normal.dot(fallback) < T::zero() {
        normal = -normal;
    }
    Endplate {
        vertex_indices: indices,
        centroid: c,
        normal,
    }
}

/// [`fit_vertebra_in`] with the default frame and endplate fraction.
pub fn fit_vertebra<T: Real>(mesh: &Mesh<T>, label: &str) -> Result<VertebraModel<T>, SpineError> {
    fit_vertebra_in(mesh, label, &AnatomicalFrame::default(), DEFAULT_ENDPLATE_FRACTION)
}

/// Principal axes of the vertex cloud and endplates from the vertices within
/// `fraction` of the extent along axis 3 at either end.
pub fn fit_vertebra_in<T: Real>(
    mesh: &Mesh<T>,
    label: &str,
    frame: &AnatomicalFrame<T>,
    fraction: f64,
) -> Result<VertebraModel<T>, SpineError> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(SpineError::BadFraction(fraction));
    }
    let report = mesh.validate();
    if let Some(v) = report.violations.first() {
        return Err(SpineError::InvalidMesh {
            label: label.into(),
            reason: v.to_string(),
        });
    }
    let pts = &mesh.vertices;
    if pts.len() < 4 {
        return Err(SpineError::TooFewVertices {
            label: label.into(),
            got: pts.len(),
        });
    }
    let c = centroid(pts).expect("non-empty");
    let (values, vectors) = sorted_eigen(covariance(pts, &c));
    if !(values[2] > values[0] * lit(1e-10)) {
        return Err(SpineError::Coplanar { label: label.into() });
    }
    let axes = principal_axes(values, vectors, frame);
    let heights: Vec<T> = pts.iter().map(|p| (p - c).dot(&axes[2])).collect();
    let hi = heights.iter().copied().fold(heights[0], |a, b| a.max(b));
    let lo = heights.iter().copied().fold(heights[0], |a, b| a.min(b));
    let band = (hi - lo) * lit(fraction);
    let top: Vec<usize> = (0..pts.len()).filter(|&i| heights[i] >= hi - band).collect();
    let bottom: Vec<usize> = (0..pts.len()).filter(|&i| heights[i] <= lo + band).collect();
    Ok(VertebraModel {
        label: label.into(),
        mesh: mesh.clone(),
        centroid: c,
        axes,
        superior: fit_endplate(pts, top, &axes[2]),
        inferior: fit_endplate(pts, bottom, &axes[2]),
    })
}

/// Vertebrae ordered cranial to caudal in a given anatomical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineModel<T: Real> {
    vertebrae: Vec<VertebraModel<T>>,
    frame: AnatomicalFrame<T>,
}

impl<T: Real> SpineModel<T> {
    /// Sorts by descending height along the frame's vertical axis.
    pub fn new(mut vertebrae: Vec<VertebraModel<T>>, frame: AnatomicalFrame<T>) -> Result<Self, SpineError> {
        if vertebrae.len() < 2 {
            return Err(SpineError::TooFewVertebrae(vertebrae.len()));
        }
        let mut labels: Vec<&str> = vertebrae.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(SpineError::DuplicateLabel(w[0].to_string()));
        }
        let height = |v: &VertebraModel<T>| v.centroid.coords.dot(&frame.vertical);
        vertebrae.sort_by(|a, b| height(b).partial_cmp(&height(a)).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(w) = vertebrae.windows(2).find(|w| !(height(&w[0]) > height(&w[1]))) {
            return Err(SpineError::SameLevel(w[0].label.clone(), w[1].label.clone()));
        }
        Ok(Self { vertebrae, frame })
    }

    /// Fits every `(label, mesh)` and assembles the spine.
    pub fn from_meshes(meshes: &[(String, Mesh<T>)], frame: AnatomicalFrame<T>) -> Result<Self, SpineError> {
        if meshes.len() < 2 {
            return Err(SpineError::TooFewVertebrae(meshes.len()));
        }
        let fitted = meshes
            .iter()
            .map(|(label, m)| fit_vertebra_in(m, label, &frame, DEFAULT_ENDPLATE_FRACTION))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(fitted, frame)
    }

    pub fn vertebrae(&self) -> &[VertebraModel<T>] {
        &self.vertebrae
    }

    pub fn frame(&self) -> &AnatomicalFrame<T> {
        &self.frame
    }
}

/// Signed tilt (degrees) of an endplate normal projected into `plane`,
/// measured from the vertical towards the in-plane horizontal axis.
pub fn endplate_tilt_deg<T: Real>(normal: &Vector3<T>, frame: &AnatomicalFrame<T>, plane: Plane) -> T {
    let h = normal.dot(&frame.in_plane(plane));
    let v = normal.dot(&frame.vertical);
    rad_to_deg(h.atan2(v))
}

/// Acute angle between two lines with the given signed tilts.
fn line_angle<T: Real>(a: T, b: T) -> T {
    let mut d = (a - b).abs() % lit(180.0);
    if d > lit(90.0) {
        d = lit::<T>(180.0) - d;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CobbAngle<T: Real> {
    pub angle_deg: T,
    pub upper_end_label: String,
    pub lower_end_label: String,
}

/// Largest angle between the superior endplate of a vertebra and the
/// inferior endplate of any vertebra below it, in `[0°, 90°]`.
pub fn cobb_angle<T: Real>(spine: &SpineModel<T>, plane: Plane) -> CobbAngle<T> {
    let v = &spine.vertebrae;
    let sup: Vec<T> = v.iter().map(|x| endplate_tilt_deg(&x.superior.normal, &spine.frame, plane)).collect();
    let inf: Vec<T> = v.iter().map(|x| endplate_tilt_deg(&x.inferior.normal, &spine.frame, plane)).collect();
    let mut best = (T::zero(), 0, 1);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let a = line_angle(sup[i], inf[j]);
            if a > best.0 {
                best = (a, i, j);
            }
        }
    }
    CobbAngle {
        angle_deg: best.0,
        upper_end_label: v[best.1].label.clone(),
        lower_end_label: v[best.2].label.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiscMetrics<T: Real> {
    pub upper: String,
    pub lower: String,
    pub disc_height_mm: T,
    pub gap_min_mm: T,
    pub lateral_offset_mm: T,
    pub contact: bool,
}

/// Spacing between each adjacent pair. Meshes whose extents along the
/// centroid-to-centroid axis overlap are in contact, with `gap_min = 0`.
pub fn intervertebral_metrics<T: Real>(spine: &SpineModel<T>) -> Vec<DiscMetrics<T>> {
    let vertical = spine.frame.vertical;
    spine
        .vertebrae
        .windows(2)
        .map(|w| {
            let (up, low) = (&w[0], &w[1]);
            let disc_height = (up.inferior.centroid - low.superior.centroid).norm();
            let d = up.centroid - low.centroid;
            let lateral = (d - vertical * d.dot(&vertical)).norm();
            let axis = d.try_normalize(T::zero()).unwrap_or(vertical);
            let up_min = up.mesh.vertices.iter().map(|p| p.coords.dot(&axis)).fold(T::max_value().expect("bounded"), |a, b| a.min(b));
            let low_max = low.mesh.vertices.iter().map(|p| p.coords.dot(&axis)).fold(T::min_value().expect("bounded"), |a, b| a.max(b));
            let tree = KdTree::new(&low.mesh.vertices);
            let mut gap2 = T::max_value().expect("bounded");
            for p in &up.mesh.vertices {
                if let Some(nn) = tree.nearest(p) {
                    gap2 = gap2.min(nn.dist2);
                }
            }
            let contact = up_min - low_max <= T::zero() || gap2 == T::zero();
            DiscMetrics {
                upper: up.label.clone(),
                lower: low.label.clone(),
                disc_height_mm: disc_height,
                gap_min_mm: if contact { T::zero() } else { gap2.sqrt() },
                lateral_offset_mm: lateral,
                contact,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LevelAlignment<T: Real> {
    pub label: String,
    pub centroid: Point3<T>,
    pub tilt_deg: T,
}

/// Centroid polyline (cranial to caudal) with each level's tilt: the angle
/// between its mean endplate normal and the vertical.
pub fn alignment_profile<T: Real>(spine: &SpineModel<T>) -> Vec<LevelAlignment<T>> {
    spine
        .vertebrae
        .iter()
        .map(|v| {
            let n = (v.superior.normal + v.inferior.normal)
                .try_normalize(T::zero())
                .unwrap_or(v.axes[2]);
            let cos = n.dot(&spine.frame.vertical).clamp(-T::one(), T::one());
            LevelAlignment {
                label: v.label.clone(),
                centroid: v.centroid,
                tilt_deg: rad_to_deg(cos.acos()),
            }
        })
        .collect()
}

/// Spine report document.
pub fn spine_report<T: Real>(spine: &SpineModel<T>) -> serde_json::Value {
    let coronal = cobb_angle(spine, Plane::Coronal);
    let sagittal = cobb_angle(spine, Plane::Sagittal);
    let levels: Vec<_> = alignment_profile(spine)
        .into_iter()
        .map(|l| {
            serde_json::json!({
                "label": l.label,
                "tilt_deg": to_f64(l.tilt_deg),
                "centroid_mm": [to_f64(l.centroid.x), to_f64(l.centroid.y), to_f64(l.centroid.z)],
            })
        })
        .collect();
    serde_json::json!({
        "cobb": {
            "coronal": to_f64(coronal.angle_deg),
            "sagittal": to_f64(sagittal.angle_deg),
            "pairs": {
                "coronal": {"upper": coronal.upper_end_label, "lower": coronal.lower_end_label},
                "sagittal": {"upper": sagittal.upper_end_label, "lower": sagittal.lower_end_label},
            },
        },
        "levels": levels,
        "discs": intervertebral_metrics(spine),
    })
}
