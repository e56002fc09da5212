//! Volume-to-surface mapping: trilinear sampling, per-vertex texture along
//! inward normals, and sphere statistics for tissue characterization.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::scalar::{count, lit, to_f64, Real};
use crate::volume::Volume;

pub const DEFAULT_DEPTH_MM: f64 = 2.0;
pub const DEFAULT_SAMPLES: usize = 5;
pub const DEFAULT_BINS: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MappingError {
    #[error("mesh has no faces; vertex normals are undefined")]
    NoFaces,
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("empty sphere: no voxel centre within {radius_mm} mm of {center:?}")]
    EmptySphere { center: [f64; 3], radius_mm: f64 },
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("depth must be nonnegative and samples at least 1")]
    BadSampling,
    #[error("mesh is empty")]
    EmptyMesh,
}

/// Trilinear interpolation at a world point; `None` outside the hull of
/// voxel centres.
pub fn sample_volume_trilinear<T: Real>(v: &Volume<T>, p: &Point3<T>) -> Option<T> {
    let u = v.continuous_index(p);
    let dims = v.dims();
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for axis in 0..3 {
        let c = u[axis];
        let last = count::<T>(dims[axis] - 1);
        if !(c >= T::zero() && c <= last) {
            return None;
        }
        if dims[axis] == 1 {
            continue;
        }
        let f = c.floor();
        let mut i = to_f64(f) as usize;
        if i >= dims[axis] - 1 {
            i = dims[axis] - 2;
        }
        base[axis] = i;
        frac[axis] = c - count::<T>(i);
    }
    let at = |di: usize, dj: usize, dk: usize| -> T {
        let i = (base[0] + di).min(dims[0] - 1);
        let j = (base[1] + dj).min(dims[1] - 1);
        let k = (base[2] + dk).min(dims[2] - 1);
        lit(v.voxels()[v.linear_index(i, j, k)] as f64)
    };
    let [fx, fy, fz] = frac;
    let one = T::one();
    let c00 = at(0, 0, 0) * (one - fx) + at(1, 0, 0) * fx;
    let c10 = at(0, 1, 0) * (one - fx) + at(1, 1, 0) * fx;
    let c01 = at(0, 0, 1) * (one - fx) + at(1, 0, 1) * fx;
    let c11 = at(0, 1, 1) * (one - fx) + at(1, 1, 1) * fx;
    let c0 = c00 * (one - fy) + c10 * fy;
    let c1 = c01 * (one - fy) + c11 * fy;
    Some(c0 * (one - fz) + c1 * fz)
}

/// Per-vertex intensities; `values[i]` is `None` exactly when `valid[i]` is
/// false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SurfaceTexture<T: Real> {
    pub values: Vec<Option<T>>,
    pub valid: Vec<bool>,
    pub depth_mm: T,
    pub n_samples: usize,
}

impl<T: Real> SurfaceTexture<T> {
    /// Mean over valid vertices.
    pub fn valid_mean(&self) -> Option<T> {
        let vals: Vec<T> = self.values.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        Some(vals.iter().fold(T::zero(), |a, &b| a + b) / count::<T>(vals.len()))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Viewer export: `{mesh_asset_id, values, valid, depth_mm}`.
    pub fn to_export_json(&self, mesh_asset_id: &str) -> serde_json::Value {
        serde_json::json!({
            "mesh_asset_id": mesh_asset_id,
            "values": self.values.iter().map(|v| v.map(to_f64)).collect::<Vec<_>>(),
            "valid": self.valid,
            "depth_mm": to_f64(self.depth_mm),
        })
    }

    /// `vertex_index,value` rows; invalid vertices have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            match v {
                Some(x) => out.push_str(&format!("{i},{}\n", to_f64(*x))),
                None => out.push_str(&format!("{i},\n")),
            }
        }
        out
    }
}

/// Averages `n_samples` trilinear samples per vertex along the inward normal,
/// evenly spaced over `[0, depth_mm]`. A vertex with any out-of-bounds
/// sample is invalid.
pub fn texture_map<T: Real>(
    m: &Mesh<T>,
    v: &Volume<T>,
    depth_mm: T,
    n_samples: usize,
) -> Result<SurfaceTexture<T>, MappingError> {
    if m.faces.is_empty() {
        return Err(MappingError::NoFaces);
    }
    if n_samples == 0 || !(depth_mm >= T::zero()) {
        return Err(MappingError::BadSampling);
    }
    let normals = m.vertex_normals();
    let steps: Vec<T> = (0..n_samples)
        .map(|s| {
            if n_samples == 1 {
                T::zero()
            } else {
                depth_mm * count::<T>(s) / count::<T>(n_samples - 1)
            }
        })
        .collect();
    let mut values = Vec::with_capacity(m.vertices.len());
    for (p, n) in m.vertices.iter().zip(&normals) {
        let mut sum = T::zero();
        let mut ok = true;
        for d in &steps {
            match sample_volume_trilinear(v, &(p - n * *d)) {
                Some(x) => sum += x,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        values.push(ok.then(|| sum / count::<T>(n_samples)));
    }
    Ok(SurfaceTexture {
        valid: values.iter().map(Option::is_some).collect(),
        values,
        depth_mm,
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Histogram<T: Real> {
    pub edges: Vec<T>,
    pub counts: Vec<usize>,
}

/// Intensity statistics over voxels whose centres lie inside a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TissueStats<T: Real> {
    pub center: Point3<T>,
    pub radius_mm: T,
    pub count: usize,
    pub mean: T,
    pub std: T,
    pub min: i16,
    pub max: i16,
    pub histogram: Histogram<T>,
}

/// Whether voxel `(i, j, k)` belongs to the sphere. Shared by the scan and
/// its tests so the inclusion rule is identical.
#[inline]
pub fn voxel_in_sphere<T: Real>(
    v: &Volume<T>,
    i: usize,
    j: usize,
    k: usize,
    center: &Point3<T>,
    radius_mm: T,
) -> bool {
    (v.world_of_voxel(i, j, k) - center).norm_squared() <= radius_mm * radius_mm
}

/// Population statistics and a uniform histogram over `[min, max]` (a single
/// bin when `min = max`).
pub fn sphere_stats<T: Real>(
    v: &Volume<T>,
    center: &Point3<T>,
    radius_mm: T,
    n_bins: usize,
) -> Result<TissueStats<T>, MappingError> {
    if !(radius_mm > T::zero()) {
        return Err(MappingError::BadRadius(to_f64(radius_mm)));
    }
    if n_bins == 0 {
        return Err(MappingError::NoBins);
    }
    let dims = v.dims();
    // index bounding box of the sphere, widened by one voxel
    let lo_w = v.continuous_index(&(center - Vector3::repeat(radius_mm)));
    let hi_w = v.continuous_index(&(center + Vector3::repeat(radius_mm)));
    let mut range = [(0usize, 0usize); 3];
    for axis in 0..3 {
        let lo = to_f64(lo_w[axis]).floor() - 1.0;
        let hi = to_f64(hi_w[axis]).ceil() + 1.0;
        if hi < 0.0 || lo > (dims[axis] - 1) as f64 {
            return Err(empty(center, radius_mm));
        }
        range[axis] = (lo.max(0.0) as usize, (hi as usize).min(dims[axis] - 1));
    }
    let mut inside = Vec::new();
    for k in range[2].0..=range[2].1 {
        for j in range[1].0..=range[1].1 {
            for i in range[0].0..=range[0].1 {
                if voxel_in_sphere(v, i, j, k, center, radius_mm) {
                    inside.push(v.voxels()[v.linear_index(i, j, k)]);
                }
            }
        }
    }
    if inside.is_empty() {
        return Err(empty(center, radius_mm));
    }
    let n = inside.len() as i128;
    let sum: i128 = inside.iter().map(|&x| x as i128).sum();
    let sumsq: i128 = inside.iter().map(|&x| (x as i128) * (x as i128)).sum();
    let mean = sum as f64 / n as f64;
    let var = (n * sumsq - sum * sum) as f64 / (n * n) as f64;
    let min = *inside.iter().min().expect("non-empty");
    let max = *inside.iter().max().expect("non-empty");
    let bins = if min == max { 1 } else { n_bins };
    let width = (max as f64 - min as f64) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &inside {
        let b = if width == 0.0 {
            0
        } else {
            (((x as f64 - min as f64) / width) as usize).min(bins - 1)
        };
        counts[b] += 1;
    }
    let edges = (0..=bins)
        .map(|b| {
            if b == bins {
                lit(max as f64)
            } else {
                lit(min as f64 + width * b as f64)
            }
        })
        .collect();
    Ok(TissueStats {
        center: *center,
        radius_mm,
        count: inside.len(),
        mean: lit(mean),
        std: lit(var.max(0.0).sqrt()),
        min,
        max,
        histogram: Histogram { edges, counts },
    })
}

fn empty<T: Real>(center: &Point3<T>, radius_mm: T) -> MappingError {
    MappingError::EmptySphere {
        center: [to_f64(center.x), to_f64(center.y), to_f64(center.z)],
        radius_mm: to_f64(radius_mm),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VertebraCharacterization<T: Real> {
    pub label: String,
    pub centroid: Point3<T>,
    pub stats: TissueStats<T>,
    pub surface_mean: Option<T>,
    pub valid_vertices: usize,
    pub vertex_count: usize,
}

/// Sphere statistics at the vertex centroid plus the mean surface texture
/// (default depth and sampling).
pub fn characterize_vertebra<T: Real>(
    mesh: &Mesh<T>,
    v: &Volume<T>,
    radius_mm: T,
) -> Result<VertebraCharacterization<T>, MappingError> {
    let centroid = mesh.centroid().ok_or(MappingError::EmptyMesh)?;
    let stats = sphere_stats(v, &centroid, radius_mm, DEFAULT_BINS)?;
    let texture = texture_map(mesh, v, lit(DEFAULT_DEPTH_MM), DEFAULT_SAMPLES)?;
    Ok(VertebraCharacterization {
        label: mesh.label.clone(),
        centroid,
        stats,
        surface_mean: texture.valid_mean(),
        valid_vertices: texture.valid_count(),
        vertex_count: mesh.vertices.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, f: impl FnMut(usize, usize, usize) -> i16) -> Volume<f64> {
        Volume::from_fn([n, n, n], Vector3::repeat(1.0), Point3::origin(), f).unwrap()
    }

    #[test]
    fn sampling_at_centres_and_midpoints() {
        let v = grid(4, |i, _, _| if i == 0 { 0 } else { 100 });
        assert_eq!(sample_volume_trilinear(&v, &Point3::new(2.0, 1.0, 1.0)), Some(100.0));
        assert_eq!(sample_volume_trilinear(&v, &Point3::new(0.5, 1.0, 1.0)), Some(50.0));
        assert_eq!(sample_volume_trilinear(&v, &Point3::new(3.0, 3.0, 3.0)), Some(100.0));
        assert_eq!(sample_volume_trilinear(&v, &Point3::new(3.01, 1.0, 1.0)), None);
        assert_eq!(sample_volume_trilinear(&v, &Point3::new(-0.01, 1.0, 1.0)), None);
    }

    #[test]
    fn uniform_volume_texture() {
        let v = grid(20, |_, _, _| 100);
        let m = Mesh::cuboid(Point3::new(5.0, 5.0, 5.0), Point3::new(12.0, 12.0, 12.0), "c");
        let t = texture_map(&m, &v, 2.0, 5).unwrap();
        assert!(t.valid.iter().all(|v| *v));
        assert!(t.values.iter().all(|v| *v == Some(100.0)));
    }

    #[test]
    fn outside_vertex_is_flagged_alone() {
        let v = grid(10, |_, _, _| 7);
        let mut m = Mesh::cuboid(Point3::new(2.0, 2.0, 2.0), Point3::new(6.0, 6.0, 6.0), "c");
        m.vertices[0] = Point3::new(-5.0, 2.0, 2.0);
        let t = texture_map(&m, &v, 0.0, 1).unwrap();
        assert!(!t.valid[0] && t.values[0].is_none());
        assert!(t.valid[1..].iter().all(|v| *v));
    }

    #[test]
    fn faceless_mesh_rejected() {
        let v = grid(4, |_, _, _| 0);
        let m = Mesh::new(vec![Point3::new(1.0, 1.0, 1.0)], vec![], "p");
        assert_eq!(texture_map(&m, &v, 0.0, 1), Err(MappingError::NoFaces));
    }

    #[test]
    fn sphere_outside_is_empty() {
        let v = grid(8, |_, _, _| 1);
        let err = sphere_stats(&v, &Point3::new(100.0, 0.0, 0.0), 3.0, 8).unwrap_err();
        assert!(err.to_string().starts_with("empty sphere"));
    }

    #[test]
    fn uniform_sphere_single_bin() {
        let v = grid(16, |_, _, _| 100);
        let s = sphere_stats(&v, &Point3::new(8.0, 8.0, 8.0), 3.0, 32).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (100.0, 0.0, 100, 100));
        assert_eq!(s.histogram.counts, vec![s.count]);
        // 3-ball on the unit lattice centred on a voxel: 123 points
        assert_eq!(s.count, 123);
    }

    #[test]
    fn histogram_counts_sum() {
        let v = grid(16, |i, j, k| ((i * 7 + j * 3 + k) % 50) as i16);
        let s = sphere_stats(&v, &Point3::new(7.3, 8.1, 6.6), 5.0, 10).unwrap();
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.count);
        assert_eq!(s.histogram.edges.len(), 11);
        assert!(s.min as f64 <= s.mean && s.mean <= s.max as f64);
    }

    #[test]
    fn cube_centroid_and_uniform_characterization() {
        let v = grid(30, |_, _, _| 250);
        let m = Mesh::cuboid(Point3::new(10.0, 10.0, 10.0), Point3::new(20.0, 20.0, 20.0), "L1");
        let c = characterize_vertebra(&m, &v, 4.0).unwrap();
        assert_eq!(c.centroid, Point3::new(15.0, 15.0, 15.0));
        assert_abs_diff_eq!(c.surface_mean.unwrap(), 250.0);
        assert_abs_diff_eq!(c.stats.mean, 250.0);
    }

    #[test]
    fn csv_marks_invalid_vertices() {
        let t = SurfaceTexture {
            values: vec![Some(1.5), None],
            valid: vec![true, false],
            depth_mm: 0.0,
            n_samples: 1,
        };
        assert_eq!(t.to_csv(), "vertex_index,value\n0,1.5\n1,\n");
        let j = t.to_export_json("mesh-0001");
        assert_eq!(j["values"][1], serde_json::Value::Null);
    }
}
