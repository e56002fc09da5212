//! Markerless rigid fusion: skin-surface extraction from a volume, trimmed
//! point-to-point ICP against a camera surface, and landmark-based accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::mesh::centroid;
use crate::scalar::{count, is_finite, lit, to_f64, Real};
use crate::spatial::KdTree;
use crate::transform::RigidTransform;
use crate::volume::Volume;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistrationError {
    #[error("insufficient correspondences: need at least 3, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate source: points are collinear")]
    Collinear,
    #[error("non-finite point at index {0}")]
    NonFinite(usize),
    #[error("landmark name mismatch: {0}")]
    LandmarkMismatch(String),
    #[error("duplicate landmark name {0}")]
    DuplicateLandmark(String),
    #[error("no landmarks")]
    NoLandmarks,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Boundary voxels of a thresholded volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Isosurface<T: Real> {
    pub points: Vec<Point3<T>>,
    /// Set when no voxel reached the threshold.
    pub empty: bool,
}

/// World-space centres of voxels `>= threshold` with at least one 6-neighbour
/// below it (voxels outside the grid count as below), in x-fastest order.
pub fn extract_isosurface_points<T: Real>(v: &Volume<T>, threshold: i16) -> Isosurface<T> {
    let [nx, ny, nz] = v.dims();
    let above = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        v.get(i as usize, j as usize, k as usize)
            .is_some_and(|x| x >= threshold)
    };
    let mut points = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let (si, sj, sk) = (i as isize, j as isize, k as isize);
                if !above(si, sj, sk) {
                    continue;
                }
                let boundary = !above(si - 1, sj, sk)
                    || !above(si + 1, sj, sk)
                    || !above(si, sj - 1, sk)
                    || !above(si, sj + 1, sk)
                    || !above(si, sj, sk - 1)
                    || !above(si, sj, sk + 1);
                if boundary {
                    points.push(v.world_of_voxel(i, j, k));
                }
            }
        }
    }
    Isosurface {
        empty: points.is_empty(),
        points,
    }
}

fn check_finite<T: Real>(points: &[Point3<T>]) -> Result<(), RegistrationError> {
    match points.iter().position(|p| !p.iter().all(|c| is_finite(*c))) {
        Some(i) => Err(RegistrationError::NonFinite(i)),
        None => Ok(()),
    }
}

fn scatter<T: Real>(points: impl Iterator<Item = Point3<T>> + Clone, c: &Point3<T>) -> Matrix3<T> {
    points.fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    })
}

/// True when the spread of `points` is (numerically) confined to a line.
fn is_collinear<T: Real>(points: &[Point3<T>]) -> bool {
    let Some(c) = centroid(points) else {
        return true;
    };
    let eig = SymmetricEigen::new(scatter(points.iter().copied(), &c));
    let mut ev: Vec<T> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev[0] <= T::zero() || ev[1] <= ev[0] * T::default_epsilon() * lit(1e4)
}

/// Least-squares rigid transform mapping each source point onto its paired
/// target point (Kabsch/SVD with reflection correction).
pub fn best_rigid_fit<T: Real>(
    pairs: &[(Point3<T>, Point3<T>)],
) -> Result<RigidTransform<T>, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::InsufficientCorrespondences(pairs.len()));
    }
    let source: Vec<Point3<T>> = pairs.iter().map(|p| p.0).collect();
    let target: Vec<Point3<T>> = pairs.iter().map(|p| p.1).collect();
    check_finite(&source)?;
    check_finite(&target)?;
    if is_collinear(&source) {
        return Err(RegistrationError::Collinear);
    }
    let cs = centroid(&source).expect("non-empty");
    let cg = centroid(&target).expect("non-empty");
    let h = pairs.iter().fold(Matrix3::zeros(), |acc: Matrix3<T>, (s, g)| {
        acc + (s - cs) * (g - cg).transpose()
    });
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant();
    let mut correction = Matrix3::identity();
    if d < T::zero() {
        correction[(2, 2)] = -T::one();
    }
    let rotation = v * correction * u.transpose();
    let translation = cg.coords - rotation * cs.coords;
    Ok(RigidTransform::from_numeric(rotation, translation))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iter: usize,
    pub tol_mm: f64,
    /// Fraction of worst correspondences discarded every iteration.
    pub trim_fraction: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_mm: 1e-4,
            trim_fraction: 0.1,
        }
    }
}

/// Outcome of an ICP run; `per_iteration_rms` is non-increasing and its last
/// entry equals `rms_mm`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult<T: Real> {
    pub transform: RigidTransform<T>,
    #[serde(serialize_with = "ser_scalar")]
    pub rms_mm: T,
    pub iterations: usize,
    pub converged: bool,
    #[serde(serialize_with = "ser_scalars")]
    pub per_iteration_rms: Vec<T>,
}

pub(crate) fn ser_scalar<T: Real, S: serde::Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(to_f64(*x))
}

pub(crate) fn ser_scalars<T: Real, S: serde::Serializer>(
    xs: &[T],
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| to_f64(*x)))
}

struct Matching<T: Real> {
    rms: T,
    pairs: Vec<(Point3<T>, Point3<T>)>,
}

/// Nearest-neighbour correspondences for `source` under `t`, keeping the best
/// `keep` pairs.
fn match_trimmed<T: Real>(
    source: &[Point3<T>],
    tree: &KdTree<T>,
    t: &RigidTransform<T>,
    keep: usize,
) -> Matching<T> {
    let mut matches: Vec<(T, usize, usize)> = source
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let nn = tree.nearest(&t.apply(s)).expect("target non-empty");
            (nn.dist2, i, nn.index)
        })
        .collect();
    matches.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    matches.truncate(keep);
    let sum = matches.iter().fold(T::zero(), |acc, m| acc + m.0);
    Matching {
        rms: (sum / count::<T>(keep)).sqrt(),
        pairs: matches
            .iter()
            .map(|&(_, i, j)| (source[i], tree.points()[j]))
            .collect(),
    }
}

/// Trimmed point-to-point ICP aligning `source` onto `target` starting from
/// `init`.
pub fn icp_register<T: Real>(
    source: &[Point3<T>],
    target: &[Point3<T>],
    init: &RigidTransform<T>,
    params: &IcpParams,
) -> Result<RegistrationResult<T>, RegistrationError> {
    if source.len() < 3 {
        return Err(RegistrationError::InsufficientCorrespondences(source.len()));
    }
    if target.len() < 3 {
        return Err(RegistrationError::InsufficientCorrespondences(target.len()));
    }
    if params.max_iter == 0 {
        return Err(RegistrationError::InvalidParams("max_iter must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&params.trim_fraction) {
        return Err(RegistrationError::InvalidParams(format!(
            "trim_fraction must lie in [0, 1), got {}",
            params.trim_fraction
        )));
    }
    if !(params.tol_mm >= 0.0) {
        return Err(RegistrationError::InvalidParams("tol_mm must be nonnegative".into()));
    }
    check_finite(source)?;
    check_finite(target)?;
    if is_collinear(source) {
        return Err(RegistrationError::Collinear);
    }

    let keep = (((1.0 - params.trim_fraction) * source.len() as f64).ceil() as usize)
        .clamp(3, source.len());
    let tol: T = lit(params.tol_mm);
    let tree = KdTree::new(target);

    let mut current = *init;
    let mut matching = match_trimmed(source, &tree, &current, keep);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_iter {
        let candidate = best_rigid_fit(&matching.pairs)?;
        let next = match_trimmed(source, &tree, &candidate, keep);
        let improvement = if next.rms <= matching.rms {
            let gain = matching.rms - next.rms;
            current = candidate;
            matching = next;
            gain
        } else {
            T::zero()
        };
        history.push(matching.rms);
        if improvement < tol {
            converged = true;
            break;
        }
    }
    Ok(RegistrationResult {
        transform: current,
        rms_mm: matching.rms,
        iterations: history.len(),
        converged,
        per_iteration_rms: history,
    })
}

/// Named anatomical points in millimetres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkSet<T: Real> {
    points: BTreeMap<String, Point3<T>>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkDoc {
    name: String,
    position_mm: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    landmarks: Vec<LandmarkDoc>,
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(
        entries: impl IntoIterator<Item = (String, Point3<T>)>,
    ) -> Result<Self, RegistrationError> {
        let mut points = BTreeMap::new();
        for (name, p) in entries {
            if !p.iter().all(|c| is_finite(*c)) {
                return Err(RegistrationError::NonFinite(points.len()));
            }
            if points.insert(name.clone(), p).is_some() {
                return Err(RegistrationError::DuplicateLandmark(name));
            }
        }
        Ok(Self { points })
    }

    /// Parses `{"landmarks": [{"name": .., "position_mm": [x, y, z]}]}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let file: LandmarkFile = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        Self::new(
            file.landmarks
                .into_iter()
                .map(|l| (l.name, Point3::from(l.position_mm.map(lit::<T>)))),
        )
        .map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = LandmarkFile {
            landmarks: self
                .points
                .iter()
                .map(|(n, p)| LandmarkDoc {
                    name: n.clone(),
                    position_mm: [to_f64(p.x), to_f64(p.y), to_f64(p.z)],
                })
                .collect(),
        };
        serde_json::to_vec(&file).expect("landmarks serialize")
    }

    pub fn get(&self, name: &str) -> Option<&Point3<T>> {
        self.points.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Point3<T>)> {
        self.points.iter()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|(n, p)| (n.clone(), t.apply(p)))
                .collect(),
        }
    }

    fn paired_with<'a>(
        &'a self,
        other: &'a Self,
    ) -> Result<Vec<(Point3<T>, Point3<T>)>, RegistrationError> {
        if let Some(n) = self
            .points
            .keys()
            .find(|n| !other.points.contains_key(*n))
            .or_else(|| other.points.keys().find(|n| !self.points.contains_key(*n)))
        {
            return Err(RegistrationError::LandmarkMismatch(n.clone()));
        }
        Ok(self
            .points
            .iter()
            .map(|(n, p)| (*p, other.points[n]))
            .collect())
    }
}

/// Mean distance between mapped source landmarks and their target twins.
pub fn target_registration_error<T: Real>(
    t: &RigidTransform<T>,
    source_lms: &LandmarkSet<T>,
    target_lms: &LandmarkSet<T>,
) -> Result<T, RegistrationError> {
    let pairs = source_lms.paired_with(target_lms)?;
    if pairs.is_empty() {
        return Err(RegistrationError::NoLandmarks);
    }
    let sum = pairs
        .iter()
        .fold(T::zero(), |acc, (s, g)| acc + (t.apply(s) - g).norm());
    Ok(sum / count::<T>(pairs.len()))
}

/// Coarse alignment from three or more virtual landmarks.
pub fn landmark_init<T: Real>(
    source_lms: &LandmarkSet<T>,
    target_lms: &LandmarkSet<T>,
) -> Result<RigidTransform<T>, RegistrationError> {
    best_rigid_fit(&source_lms.paired_with(target_lms)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    Baseline,
    Distance,
    Tilt,
    LandmarkDisplacement,
}

impl Perturbation {
    pub fn tag(&self) -> &'static str {
        match self {
            Perturbation::Baseline => "baseline",
            Perturbation::Distance => "distance",
            Perturbation::Tilt => "tilt",
            Perturbation::LandmarkDisplacement => "landmark-displacement",
        }
    }
}

/// Perturbed initializations evaluated by [`robustness_sweep`].
#[derive(Debug, Clone)]
pub struct SweepConfig<T: Real> {
    pub params: IcpParams,
    pub baseline_init: RigidTransform<T>,
    /// Camera viewing direction; distance offsets move along it.
    pub view_axis: Vector3<T>,
    /// Axis of camera tilt, applied about the target-side source centroid.
    pub tilt_axis: Vector3<T>,
    pub distance_offsets_mm: Vec<T>,
    pub tilt_deg: Vec<T>,
    pub landmark_displacements_mm: Vec<T>,
}

impl<T: Real> Default for SweepConfig<T> {
    fn default() -> Self {
        Self {
            params: IcpParams::default(),
            baseline_init: RigidTransform::identity(),
            view_axis: Vector3::z(),
            tilt_axis: Vector3::x(),
            distance_offsets_mm: Vec::new(),
            tilt_deg: Vec::new(),
            landmark_displacements_mm: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T: Real> {
    pub perturbation: Perturbation,
    pub value: T,
    pub tre_mm: T,
    pub converged: bool,
    pub result: RegistrationResult<T>,
}

/// Re-runs ICP from perturbed initial poses (camera distance, camera tilt,
/// displaced virtual landmarks) and reports the TRE of each run. The first
/// row is the unperturbed baseline.
pub fn robustness_sweep<T: Real>(
    source: &[Point3<T>],
    target: &[Point3<T>],
    source_lms: &LandmarkSet<T>,
    target_lms: &LandmarkSet<T>,
    config: &SweepConfig<T>,
) -> Result<Vec<SweepRow<T>>, RegistrationError> {
    let run = |kind: Perturbation, value: T, init: RigidTransform<T>| {
        let result = icp_register(source, target, &init, &config.params)?;
        let tre = target_registration_error(&result.transform, source_lms, target_lms)?;
        Ok::<_, RegistrationError>(SweepRow {
            perturbation: kind,
            value,
            tre_mm: tre,
            converged: result.converged,
            result,
        })
    };
    let base = config.baseline_init;
    let mut rows = vec![run(Perturbation::Baseline, T::zero(), base)?];

    let view = config
        .view_axis
        .try_normalize(T::zero())
        .ok_or_else(|| RegistrationError::InvalidParams("zero view axis".into()))?;
    for &d in &config.distance_offsets_mm {
        let init = RigidTransform::from_translation(view * d).compose(&base);
        rows.push(run(Perturbation::Distance, d, init)?);
    }

    let pivot = base.apply(&centroid(source).ok_or(RegistrationError::InsufficientCorrespondences(0))?);
    for &angle in &config.tilt_deg {
        let tilt = RigidTransform::rotation_about_point_deg(&config.tilt_axis, angle, &pivot);
        rows.push(run(Perturbation::Tilt, angle, tilt.compose(&base))?);
    }

    if !config.landmark_displacements_mm.is_empty() {
        let directions = [
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            -Vector3::x(),
            -Vector3::y(),
            -Vector3::z(),
        ];
        for &d in &config.landmark_displacements_mm {
            let displaced = LandmarkSet::new(
                target_lms
                    .iter()
                    .enumerate()
                    .map(|(k, (n, p))| (n.clone(), p + directions[k % 6] * d)),
            )?;
            let init = landmark_init(source_lms, &displaced)?;
            rows.push(run(Perturbation::LandmarkDisplacement, d, init)?);
        }
    }
    Ok(rows)
}

/// CSV with header `perturbation,value,tre_mm,converged`.
pub fn sweep_csv<T: Real>(rows: &[SweepRow<T>]) -> String {
    let mut out = String::from("perturbation,value,tre_mm,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.perturbation.tag(),
            to_f64(r.value),
            to_f64(r.tre_mm),
            r.converged
        );
    }
    out
}
