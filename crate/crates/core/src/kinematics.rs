//! Motion analysis over point-cloud sequences and IMU orientations:
//! centroid/occupancy/speed descriptors, static vs dynamic regions, radial
//! pose descriptors with DTW action comparison, and IMU range of motion.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Point3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::mapping::Histogram;
use crate::motion::MotionSequence;
use crate::scalar::{count, lit, rad_to_deg, to_f64, Real};
use crate::trace::quaternion_tolerance;

pub const DEFAULT_VOXEL_MM: f64 = 25.0;
pub const DEFAULT_SPEED_THRESHOLD_MM_S: f64 = 10.0;
pub const DEFAULT_POSE_BINS: usize = 32;
/// Fixed speed-histogram range so histograms are comparable across frames.
pub const SPEED_HISTOGRAM_MAX_MM_S: f64 = 1000.0;
pub const SPEED_HISTOGRAM_BINS: usize = 20;
const POSE_RANGE: f64 = 1.2;
const POSE_PERCENTILE: f64 = 0.95;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KinematicsError {
    #[error("point speeds need frame-to-frame correspondence")]
    NoCorrespondence,
    #[error("voxel size must be positive, got {0}")]
    BadVoxel(f64),
    #[error("sequence has no frames")]
    NoFrames,
    #[error("frame is empty")]
    EmptyFrame,
    #[error("bin counts differ: {0} vs {1}")]
    BinMismatch(usize, usize),
    #[error("descriptor sequence is empty")]
    EmptySequence,
    #[error("quaternion {index} has norm {norm}, not unit")]
    NonUnitQuaternion { index: usize, norm: f64 },
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} samples")]
    TooShort(usize),
}

pub type VoxelId = [i64; 3];

/// Centroid with per-axis sorted summation, so it does not depend on point
/// order.
pub fn order_free_centroid<T: Real>(points: &[Point3<T>]) -> Option<Point3<T>> {
    if points.is_empty() {
        return None;
    }
    let mut c = Point3::origin();
    for axis in 0..3 {
        let mut v: Vec<T> = points.iter().map(|p| p[axis]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        c[axis] = v.into_iter().fold(T::zero(), |a, b| a + b) / count::<T>(points.len());
    }
    Some(c)
}

/// Lattice cell of a point; the lattice is anchored at the world origin.
pub fn voxel_of<T: Real>(p: &Point3<T>, voxel_mm: T) -> VoxelId {
    [0, 1, 2].map(|a| to_f64((p[a] / voxel_mm).floor()) as i64)
}

fn check_voxel<T: Real>(voxel_mm: T) -> Result<(), KinematicsError> {
    if voxel_mm > T::zero() && to_f64(voxel_mm).is_finite() {
        Ok(())
    } else {
        Err(KinematicsError::BadVoxel(to_f64(voxel_mm)))
    }
}

/// Per-point speeds (mm/s) for every frame; frame 0 has none.
pub fn point_speeds<T: Real>(seq: &MotionSequence<T>) -> Result<Vec<Option<Vec<T>>>, KinematicsError> {
    if !seq.correspondence() {
        return Err(KinematicsError::NoCorrespondence);
    }
    let frames = seq.frames();
    Ok((0..frames.len())
        .map(|t| {
            (t > 0).then(|| {
                frames[t]
                    .iter()
                    .zip(&frames[t - 1])
                    .map(|(a, b)| (a - b).norm() * seq.fps())
                    .collect()
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FrameDescriptors<T: Real> {
    pub frame: usize,
    pub t_s: T,
    pub centroid: Point3<T>,
    pub occupied_voxel_count: usize,
    /// Occupancy volume: voxel count times voxel volume.
    pub occupied_volume_mm3: T,
    /// Present for frames after the first when the sequence has correspondence.
    pub speeds_mm_s: Option<Vec<T>>,
    pub speed_histogram: Option<Histogram<T>>,
}

fn speed_histogram<T: Real>(speeds: &[T]) -> Histogram<T> {
    let max = lit::<T>(SPEED_HISTOGRAM_MAX_MM_S);
    let width = max / count::<T>(SPEED_HISTOGRAM_BINS);
    let mut counts = vec![0usize; SPEED_HISTOGRAM_BINS];
    for s in speeds {
        let b = to_f64((*s / width).floor()).max(0.0) as usize;
        counts[b.min(SPEED_HISTOGRAM_BINS - 1)] += 1;
    }
    Histogram {
        edges: (0..=SPEED_HISTOGRAM_BINS).map(|b| width * count::<T>(b)).collect(),
        counts,
    }
}

/// Centroid, occupancy and (with correspondence) speeds for every frame.
pub fn frame_descriptors<T: Real>(seq: &MotionSequence<T>, voxel_mm: T) -> Result<Vec<FrameDescriptors<T>>, KinematicsError> {
    check_voxel(voxel_mm)?;
    if seq.is_empty() {
        return Err(KinematicsError::NoFrames);
    }
    let speeds = if seq.correspondence() {
        point_speeds(seq)?
    } else {
        vec![None; seq.len()]
    };
    let cell = voxel_mm * voxel_mm * voxel_mm;
    seq.frames()
        .iter()
        .zip(speeds)
        .enumerate()
        .map(|(t, (frame, sp))| {
            let centroid = order_free_centroid(frame).ok_or(KinematicsError::EmptyFrame)?;
            let occupied: BTreeSet<VoxelId> = frame.iter().map(|p| voxel_of(p, voxel_mm)).collect();
            Ok(FrameDescriptors {
                frame: t,
                t_s: count::<T>(t) / seq.fps(),
                centroid,
                occupied_voxel_count: occupied.len(),
                occupied_volume_mm3: count::<T>(occupied.len()) * cell,
                speed_histogram: sp.as_deref().map(speed_histogram),
                speeds_mm_s: sp,
            })
        })
        .collect()
}

/// Per-frame CSV of the scalar descriptors.
pub fn descriptors_csv<T: Real>(d: &[FrameDescriptors<T>]) -> String {
    let mut out = String::from(
        "frame,t_s,centroid_x_mm,centroid_y_mm,centroid_z_mm,occupied_voxels,occupied_volume_mm3,mean_speed_mm_s,max_speed_mm_s\n",
    );
    for f in d {
        let (mean, max) = match &f.speeds_mm_s {
            Some(s) if !s.is_empty() => {
                let sum = s.iter().fold(T::zero(), |a, b| a + *b);
                let max = s.iter().fold(T::zero(), |a, b| a.max(*b));
                (to_f64(sum / count::<T>(s.len())).to_string(), to_f64(max).to_string())
            }
            _ => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            f.frame,
            to_f64(f.t_s),
            to_f64(f.centroid.x),
            to_f64(f.centroid.y),
            to_f64(f.centroid.z),
            f.occupied_voxel_count,
            to_f64(f.occupied_volume_mm3),
            mean,
            max
        ));
    }
    out
}

/// Largest point speed inside each occupied voxel, per frame (frame 0 empty).
fn voxel_max_speeds<T: Real>(seq: &MotionSequence<T>, voxel_mm: T) -> Result<Vec<BTreeMap<VoxelId, T>>, KinematicsError> {
    check_voxel(voxel_mm)?;
    let speeds = point_speeds(seq)?;
    Ok(seq
        .frames()
        .iter()
        .zip(speeds)
        .map(|(frame, sp)| {
            let mut m = BTreeMap::new();
            if let Some(sp) = sp {
                for (p, s) in frame.iter().zip(sp) {
                    let e = m.entry(voxel_of(p, voxel_mm)).or_insert(s);
                    if s > *e {
                        *e = s;
                    }
                }
            }
            m
        })
        .collect())
}

/// Voxels holding at least one point at or above the threshold, per frame.
pub fn activated_voxels<T: Real>(seq: &MotionSequence<T>, voxel_mm: T, threshold_mm_s: T) -> Result<Vec<BTreeSet<VoxelId>>, KinematicsError> {
    Ok(voxel_max_speeds(seq, voxel_mm)?
        .into_iter()
        .map(|m| m.into_iter().filter(|(_, s)| *s >= threshold_mm_s).map(|(v, _)| v).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegionMap<T: Real> {
    pub voxel_mm: T,
    pub labels: BTreeMap<VoxelId, Region>,
}

impl<T: Real> RegionMap<T> {
    /// Export document `{voxel_mm, dynamic: [ids], static: [ids]}`.
    pub fn to_export_json(&self) -> serde_json::Value {
        let pick = |r: Region| -> Vec<VoxelId> {
            self.labels.iter().filter(|(_, l)| **l == r).map(|(v, _)| *v).collect()
        };
        serde_json::json!({
            "voxel_mm": to_f64(self.voxel_mm),
            "dynamic": pick(Region::Dynamic),
            "static": pick(Region::Static),
        })
    }

    pub fn count(&self, r: Region) -> usize {
        self.labels.values().filter(|l| **l == r).count()
    }
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / lit(2.0)
    }
}

/// A voxel is dynamic when the median, over frames in which it is occupied,
/// of its largest interior point speed reaches the threshold.
pub fn classify_regions<T: Real>(seq: &MotionSequence<T>, voxel_mm: T, threshold_mm_s: T) -> Result<RegionMap<T>, KinematicsError> {
    let mut per_voxel: BTreeMap<VoxelId, Vec<T>> = BTreeMap::new();
    for frame in voxel_max_speeds(seq, voxel_mm)? {
        for (v, s) in frame {
            per_voxel.entry(v).or_default().push(s);
        }
    }
    Ok(RegionMap {
        voxel_mm,
        labels: per_voxel
            .into_iter()
            .map(|(v, s)| {
                let label = if median(s) >= threshold_mm_s { Region::Dynamic } else { Region::Static };
                (v, label)
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PoseDescriptor<T: Real> {
    /// Sums to one.
    pub histogram: Vec<T>,
    /// 95th-percentile centroid distance used for normalization.
    pub scale_mm: T,
}

/// Linear-interpolation percentile of sorted values (`q` in `[0, 1]`).
fn percentile_sorted<T: Real>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = lit::<T>(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Histogram of centroid distances divided by their 95th percentile, over
/// `bins` uniform bins on `[0, 1.2]`; larger values land in the last bin.
pub fn pose_descriptor<T: Real>(points: &[Point3<T>], bins: usize) -> Result<PoseDescriptor<T>, KinematicsError> {
    let c = order_free_centroid(points).ok_or(KinematicsError::EmptyFrame)?;
    if bins == 0 {
        return Err(KinematicsError::BinMismatch(0, 0));
    }
    let mut d: Vec<T> = points.iter().map(|p| (p - c).norm()).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let scale = percentile_sorted(&d, POSE_PERCENTILE);
    let width = lit::<T>(POSE_RANGE) / count::<T>(bins);
    let mut counts = vec![0usize; bins];
    for x in &d {
        let r = if scale > T::zero() { *x / scale } else { T::zero() };
        let b = to_f64((r / width).floor()).max(0.0) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = count::<T>(points.len());
    Ok(PoseDescriptor {
        histogram: counts.into_iter().map(|k| count::<T>(k) / n).collect(),
        scale_mm: scale,
    })
}

/// χ² distance `½Σ(aᵢ−bᵢ)²/(aᵢ+bᵢ)` over bins with nonzero mass, clipped to
/// `[0, 1]`.
pub fn pose_distance<T: Real>(a: &PoseDescriptor<T>, b: &PoseDescriptor<T>) -> Result<T, KinematicsError> {
    if a.histogram.len() != b.histogram.len() {
        return Err(KinematicsError::BinMismatch(a.histogram.len(), b.histogram.len()));
    }
    let sum = a.histogram.iter().zip(&b.histogram).fold(T::zero(), |acc, (x, y)| {
        let s = *x + *y;
        if s > T::zero() {
            acc + (*x - *y) * (*x - *y) / s
        } else {
            acc
        }
    });
    Ok((sum / lit(2.0)).clamp(T::zero(), T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DtwResult<T: Real> {
    /// Path cost divided by path length.
    pub distance: T,
    pub path: Vec<(usize, usize)>,
}

/// Dynamic time warping over per-frame pose distances with steps
/// `(1,0)`, `(0,1)`, `(1,1)`; ties prefer the diagonal.
pub fn action_distance<T: Real>(a: &[PoseDescriptor<T>], b: &[PoseDescriptor<T>]) -> Result<DtwResult<T>, KinematicsError> {
    if a.is_empty() || b.is_empty() {
        return Err(KinematicsError::EmptySequence);
    }
    let (n, m) = (a.len(), b.len());
    let mut cost = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            cost[i * m + j] = pose_distance(&a[i], &b[j])?;
        }
    }
    let inf = T::max_value().expect("bounded");
    let mut acc = vec![inf; n * m];
    for i in 0..n {
        for j in 0..m {
            let prev = if i == 0 && j == 0 {
                T::zero()
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { inf };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { inf };
                let left = if j > 0 { acc[i * m + j - 1] } else { inf };
                diag.min(up).min(left)
            };
            acc[i * m + j] = prev + cost[i * m + j];
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { inf };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { inf };
        let left = if j > 0 { acc[i * m + j - 1] } else { inf };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        distance: acc[n * m - 1] / count::<T>(path.len()),
        path,
    })
}

fn check_unit<T: Real>(q: &[UnitQuaternion<T>]) -> Result<(), KinematicsError> {
    let tol = quaternion_tolerance::<T>();
    for (index, u) in q.iter().enumerate() {
        let norm = u.as_ref().norm();
        if (norm - T::one()).abs() > tol {
            return Err(KinematicsError::NonUnitQuaternion { index, norm: to_f64(norm) });
        }
    }
    Ok(())
}

/// Geodesic angle (degrees) between two orientations, double cover aware.
pub fn geodesic_deg<T: Real>(a: &UnitQuaternion<T>, b: &UnitQuaternion<T>) -> T {
    let d = a.as_ref().coords.dot(&b.as_ref().coords).abs().min(T::one());
    rad_to_deg(lit::<T>(2.0) * d.acos())
}

/// Largest geodesic angle between any two orientations of the series.
pub fn imu_rom<T: Real>(q: &[UnitQuaternion<T>]) -> Result<T, KinematicsError> {
    check_unit(q)?;
    let mut best = T::zero();
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            best = best.max(geodesic_deg(&q[i], &q[j]));
        }
    }
    Ok(best)
}

/// Angular speed (deg/s) between consecutive orientations; one value fewer
/// than the input.
pub fn angular_speed<T: Real>(q: &[UnitQuaternion<T>], fs_hz: T) -> Result<Vec<T>, KinematicsError> {
    check_unit(q)?;
    Ok(q.windows(2).map(|w| geodesic_deg(&w[0], &w[1]) * fs_hz).collect())
}

/// Linear resampling of `(t, v)` samples at `at`; times outside the input
/// span are dropped.
pub fn resample_linear<T: Real>(t: &[T], v: &[T], at: &[T]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    if t.len() < 2 {
        return out;
    }
    let mut k = 0;
    for &x in at {
        if x < t[0] || x > t[t.len() - 1] {
            continue;
        }
        while k + 2 < t.len() && t[k + 1] < x {
            k += 1;
        }
        let span = t[k + 1] - t[k];
        let f = if span > T::zero() { (x - t[k]) / span } else { T::zero() };
        out.push((x, v[k] + (v[k + 1] - v[k]) * f));
    }
    out
}

/// Pearson correlation of two equally sampled series.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T, KinematicsError> {
    if a.len() != b.len() {
        return Err(KinematicsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(KinematicsError::TooShort(2));
    }
    let n = count::<T>(a.len());
    let ma = a.iter().fold(T::zero(), |s, x| s + *x) / n;
    let mb = b.iter().fold(T::zero(), |s, x| s + *x) / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        sab += (*x - ma) * (*y - mb);
        saa += (*x - ma) * (*x - ma);
        sbb += (*y - mb) * (*y - mb);
    }
    if !(saa > T::zero()) {
        return Err(KinematicsError::ZeroVariance("video speed"));
    }
    if !(sbb > T::zero()) {
        return Err(KinematicsError::ZeroVariance("IMU angular speed"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-T::one(), T::one()))
}

/// Correlation between video speed at the sensor site and IMU angular speed,
/// both already on a common time base.
pub fn video_imu_consistency<T: Real>(video_speed: &[T], imu_angular_speed: &[T]) -> Result<T, KinematicsError> {
    pearson(video_speed, imu_angular_speed)
}

/// Mean over frames of the left/right imbalance in mean point speed, sides
/// split at the centroid along `lateral`.
pub fn kinematic_asymmetry<T: Real>(seq: &MotionSequence<T>, lateral: &nalgebra::Vector3<T>) -> Result<T, KinematicsError> {
    let speeds = point_speeds(seq)?;
    let mut vals = Vec::new();
    for (frame, sp) in seq.frames().iter().zip(speeds) {
        let Some(sp) = sp else { continue };
        let c = order_free_centroid(frame).ok_or(KinematicsError::EmptyFrame)?;
        let (mut l, mut nl, mut r, mut nr) = (T::zero(), 0usize, T::zero(), 0usize);
        for (p, s) in frame.iter().zip(sp) {
            if (p - c).dot(lateral) < T::zero() {
                l += s;
                nl += 1;
            } else {
                r += s;
                nr += 1;
            }
        }
        if nl == 0 || nr == 0 {
            continue;
        }
        let (l, r) = (l / count::<T>(nl), r / count::<T>(nr));
        let m = l.max(r);
        vals.push(if m > T::zero() { (l - r).abs() / m } else { T::zero() });
    }
    if vals.is_empty() {
        return Err(KinematicsError::TooShort(2));
    }
    Ok(vals.iter().fold(T::zero(), |a, b| a + *b) / count::<T>(vals.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn cloud() -> Vec<Point3<f64>> {
        (0..40).map(|i| Point3::new((i % 5) as f64 * 12.5, (i / 5) as f64 * 6.25, (i % 3) as f64 * 3.5)).collect()
    }

    #[test]
    fn static_cloud_has_zero_speed() {
        let seq = MotionSequence::new(30.0, vec![cloud(); 10], true).unwrap();
        let d = frame_descriptors(&seq, 25.0).unwrap();
        assert!(d[0].speeds_mm_s.is_none());
        for f in &d[1..] {
            assert_eq!(f.centroid, d[0].centroid);
            assert!(f.speeds_mm_s.as_ref().unwrap().iter().all(|s| *s == 0.0));
        }
        assert!(activated_voxels(&seq, 25.0, 10.0).unwrap().iter().all(|s| s.is_empty()));
        let r = classify_regions(&seq, 25.0, 10.0).unwrap();
        assert_eq!(r.count(Region::Dynamic), 0);
        let r = classify_regions(&seq, 25.0, 0.0).unwrap();
        assert_eq!(r.count(Region::Static), 0);
    }

    #[test]
    fn speeds_need_correspondence() {
        let seq = MotionSequence::new(30.0, vec![cloud(), cloud()], false).unwrap();
        assert_eq!(point_speeds(&seq), Err(KinematicsError::NoCorrespondence));
        assert!(frame_descriptors(&seq, 25.0).unwrap()[1].speeds_mm_s.is_none());
    }

    #[test]
    fn one_moving_point_activates_its_voxels() {
        let mut frames = Vec::new();
        for t in 0..6 {
            let mut f = cloud();
            f.push(Point3::new(200.0 + 10.0 * t as f64, 0.0, 0.0));
            frames.push(f);
        }
        let seq = MotionSequence::new(10.0, frames.clone(), true).unwrap();
        let act = activated_voxels(&seq, 25.0, 50.0).unwrap();
        assert!(act[0].is_empty());
        for t in 1..6 {
            let expected: BTreeSet<VoxelId> = [voxel_of(&frames[t][40], 25.0)].into();
            assert_eq!(act[t], expected);
        }
        assert!(activated_voxels(&seq, 25.0, 101.0).unwrap().iter().all(|s| s.is_empty()));
    }

    #[test]
    fn pose_distance_bounds() {
        let a = PoseDescriptor { histogram: vec![1.0, 0.0], scale_mm: 1.0 };
        let b = PoseDescriptor { histogram: vec![0.0, 1.0], scale_mm: 1.0 };
        assert_eq!(pose_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(pose_distance(&a, &a).unwrap(), 0.0);
        let c = PoseDescriptor { histogram: vec![1.0], scale_mm: 1.0 };
        assert!(pose_distance(&a, &c).is_err());
    }

    #[test]
    fn rom_cases() {
        let q = |deg: f64| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), deg.to_radians());
        assert_eq!(imu_rom(&[q(10.0), q(10.0)]).unwrap(), 0.0);
        let sweep: Vec<_> = (0..=90).map(|d| q(d as f64)).collect();
        assert!((imu_rom(&sweep).unwrap() - 90.0).abs() < 1e-6);
        let a = q(33.0);
        let neg = UnitQuaternion::new_unchecked(-a.into_inner());
        assert!(imu_rom(&[a, neg]).unwrap() < 1e-6);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let bad = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(1.1, 0.0, 0.0, 0.0));
        assert!(matches!(imu_rom(&[bad]), Err(KinematicsError::NonUnitQuaternion { .. })));
    }

    #[test]
    fn correlation_cases() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!(pearson(&a, &b).unwrap() < 0.0);
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&a, &vec![1.0; 100]), Err(KinematicsError::ZeroVariance(_))));
    }

    #[test]
    fn resample_interpolates() {
        let t = [0.0, 1.0, 2.0];
        let v = [0.0, 10.0, 0.0];
        let r = resample_linear(&t, &v, &[0.5, 1.5, 3.0]);
        assert_eq!(r, vec![(0.5, 5.0), (1.5, 5.0)]);
    }

    #[test]
    fn region_export_shape() {
        let mut labels = BTreeMap::new();
        labels.insert([0, 0, 0], Region::Static);
        labels.insert([1, -1, 2], Region::Dynamic);
        let j = RegionMap { voxel_mm: 25.0, labels }.to_export_json();
        assert_eq!(j["dynamic"], serde_json::json!([[1, -1, 2]]));
        assert_eq!(j["static"], serde_json::json!([[0, 0, 0]]));
    }
}
