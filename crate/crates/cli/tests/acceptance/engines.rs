use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use mstwin_core::asset::{Modality, Scale};
use mstwin_core::inference::{logistic, what_if, Feature, FeatureVector, ReferencePopulation, RiskModel, RuleSet};
use mstwin_core::kinematics::{
    action_distance, classify_regions, frame_descriptors, point_speeds, pose_descriptor, pose_distance, voxel_of, Region,
};
use mstwin_core::mapping::{sphere_stats, texture_map};
use mstwin_core::mesh::Mesh;
use mstwin_core::motion::MotionSequence;
use mstwin_core::phantom::{arc_spine, chirp, crop_along, sine, squat_sequence, torso_and_arm, torso_surface, vertebra_box};
use mstwin_core::registration::{icp_register, target_registration_error, IcpParams, LandmarkSet};
use mstwin_core::semg::{fatigue_trend_of, power_spectrum, spectral_features, Taper};
use mstwin_core::spine::{cobb_angle, intervertebral_metrics, AnatomicalFrame, Plane, SpineModel};
use mstwin_core::transform::RigidTransform;
use mstwin_core::twin::TwinState;
use mstwin_core::volume::Volume;
use nalgebra::{Matrix3, Point3, Vector3};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::{Checks, Verdict};

// ------------------------------------------------------------ registration

const ICP_CASES: usize = 200;
const POINTS: usize = 1000;
const NOISE_MM: f64 = 0.5;

struct CaseResult {
    rot_err_deg: f64,
    trans_err_mm: f64,
    seconds: f64,
    monotone: bool,
}

struct IcpRuns {
    full: Vec<CaseResult>,
    partial: Vec<CaseResult>,
}

/// Angle of `a · bᵀ` from its trace.
fn rotation_gap_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a * b.transpose()).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

fn random_axis(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn run_case(rng: &mut StdRng, partial: bool) -> CaseResult {
    let noise = Normal::new(0.0, NOISE_MM).unwrap();
    let full = torso_surface::<f64>(rng, POINTS);
    let angle = rng.random_range(0.0..=30.0);
    let axis = random_axis(rng);
    let shift = random_axis(rng) * rng.random_range(0.0..=50.0);
    let truth = RigidTransform::from_translation(shift).compose(&RigidTransform::from_axis_angle_deg(&axis, angle));
    let target: Vec<Point3<f64>> = truth
        .apply_all(&full)
        .into_iter()
        .map(|p| p + Vector3::from_fn(|_, _| noise.sample(rng)))
        .collect();
    let (source, params) = if partial {
        let p = IcpParams {
            trim_fraction: 0.3,
            ..IcpParams::default()
        };
        (crop_along(&full, &Vector3::z(), 0.6), p)
    } else {
        (full, IcpParams::default())
    };
    let start = Instant::now();
    let r = icp_register(&source, &target, &RigidTransform::identity(), &params).expect("icp runs");
    let seconds = start.elapsed().as_secs_f64();
    CaseResult {
        rot_err_deg: rotation_gap_deg(r.transform.rotation(), truth.rotation()),
        trans_err_mm: (r.transform.translation() - truth.translation()).norm(),
        seconds,
        monotone: r.per_iteration_rms.windows(2).all(|w| w[1] <= w[0]),
    }
}

fn icp_runs() -> &'static IcpRuns {
    static RUNS: OnceLock<IcpRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut rng = StdRng::seed_from_u64(42);
        let full = (0..ICP_CASES).map(|_| run_case(&mut rng, false)).collect();
        let partial = (0..ICP_CASES).map(|_| run_case(&mut rng, true)).collect();
        IcpRuns { full, partial }
    })
}

fn within(cases: &[CaseResult], limit: f64) -> usize {
    cases.iter().filter(|c| c.rot_err_deg <= limit && c.trans_err_mm <= limit).count()
}

pub fn registration_recovery() -> Verdict {
    let runs = icp_runs();
    let mut c = Checks::default();
    let ok = within(&runs.full, 1.0);
    c.check(ok * 100 >= 95 * ICP_CASES, format!("full overlap {ok}/{ICP_CASES} within 1°/1 mm (need ≥95%)"));
    let slowest = runs.full.iter().chain(&runs.partial).map(|r| r.seconds).fold(0.0, f64::max);
    c.check(slowest < 1.0, format!("slowest case {slowest:.3} s (need < 1 s)"));
    let ok = within(&runs.partial, 2.0);
    c.check(
        ok * 100 >= 90 * ICP_CASES,
        format!("60% crop, trim 0.3: {ok}/{ICP_CASES} within 2°/2 mm (need ≥90%)"),
    );
    c.verdict()
}

pub fn icp_monotonicity() -> Verdict {
    let runs = icp_runs();
    let total = runs.full.len() + runs.partial.len();
    let mono = runs.full.iter().chain(&runs.partial).filter(|r| r.monotone).count();
    Verdict::new(mono == total, format!("per-iteration RMS non-increasing in {mono}/{total} runs"))
}

pub fn tre_analytic() -> Verdict {
    let lms = LandmarkSet::new([
        ("a".to_string(), Point3::new(0.0, 0.0, 0.0)),
        ("b".to_string(), Point3::new(10.0, -3.0, 7.0)),
        ("c".to_string(), Point3::new(-4.0, 8.0, 1.0)),
    ])
    .unwrap();
    let t = RigidTransform::from_translation(Vector3::new(3.0, 4.0, 0.0));
    let tre: f64 = target_registration_error(&t, &lms, &lms).unwrap();
    Verdict::new((tre - 5.0).abs() <= 1e-9, format!("TRE {tre:.12} mm (want 5 ± 1e-9)"))
}

// -------------------------------------------------------------------- sEMG

/// O(N²) one-sided periodogram with an optional Hann taper; returns
/// (median frequency, mean power frequency, total power).
fn dft_oracle(x: &[f64], fs: f64, hann: bool) -> (f64, f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let taper = if hann { 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos() } else { 1.0 };
            (v - mean) * taper
        })
        .collect();
    let mut power = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in w.iter().enumerate() {
            let ang = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        let p = (re * re + im * im) / (n * n) as f64;
        power.push(if k == 0 || (n % 2 == 0 && k == n / 2) { p } else { 2.0 * p });
    }
    let total: f64 = power.iter().sum();
    let mut cum = 0.0;
    let mut mf = f64::NAN;
    for (k, p) in power.iter().enumerate() {
        cum += p;
        if cum >= total / 2.0 * (1.0 - 1e-9) {
            mf = k as f64 * fs / n as f64;
            break;
        }
    }
    let mpf = power.iter().enumerate().map(|(k, p)| k as f64 * fs / n as f64 * p).sum::<f64>() / total;
    (mf, mpf, total)
}

pub fn semg_suite() -> Verdict {
    let fs = 2000.0;
    let mut c = Checks::default();

    let x = sine::<f64>(80.0, 1.0, fs, 2.0);
    let s = spectral_features(&x, fs, 1.0, 0.5).unwrap();
    let worst = s
        .iter()
        .flat_map(|w| [w.mf_hz.unwrap() - 80.0, w.mpf_hz.unwrap() - 80.0])
        .fold(0.0f64, |a, d| a.max(d.abs()));
    c.check(worst <= 0.5, format!("80 Hz sine: max |MF/MPF − 80| = {worst:.4} Hz over {} windows", s.len()));

    // N = 4000 at 2 kHz: 0.5 Hz bins
    let two: Vec<f64> = sine::<f64>(50.0, 1.0, fs, 2.0)
        .iter()
        .zip(sine::<f64>(150.0, 1.0, fs, 2.0))
        .map(|(a, b)| a + b)
        .collect();
    let s = &spectral_features(&two, fs, 2.0, 2.0).unwrap()[0];
    let (mf, mpf) = (s.mf_hz.unwrap(), s.mpf_hz.unwrap());
    let (omf, ompf, _) = dft_oracle(&two, fs, true);
    c.check(
        (mf - 50.0).abs() <= 0.5 && (omf - 50.0).abs() <= 0.5 && (mf - omf).abs() <= 1e-9,
        format!("two-tone MF {mf} (DFT {omf})"),
    );
    c.check(
        (mpf - 100.0).abs() <= 1.0 && (ompf - 100.0).abs() <= 1.0 && (mpf - ompf).abs() <= 1e-6,
        format!("two-tone MPF {mpf:.6} (DFT {ompf:.6})"),
    );

    let mut rng = StdRng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(16..600);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (_, p) = power_spectrum(&x, 1000.0, Taper::Rectangular);
        let mean = x.iter().sum::<f64>() / n as f64;
        let ms = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        worst_rel = worst_rel.max((p.iter().sum::<f64>() - ms).abs() / ms);
    }
    let (_, _, oracle_total) = dft_oracle(&two, fs, false);
    let (_, p) = power_spectrum(&two, fs, Taper::Rectangular);
    worst_rel = worst_rel.max((p.iter().sum::<f64>() - oracle_total).abs() / oracle_total);
    c.check(worst_rel <= 1e-6, format!("Parseval worst relative error {worst_rel:.2e} over 101 signals"));

    let x = chirp::<f64>(120.0, 60.0, fs, 30.0);
    let s = spectral_features(&x, fs, 1.0, 0.5).unwrap();
    let slope = fatigue_trend_of(&s, 1.0).unwrap().slope_hz_per_s;
    c.check((slope + 2.0).abs() <= 0.2, format!("chirp 120→60 Hz / 30 s slope {slope:.4} Hz/s (want −2 ± 0.2)"));
    c.verdict()
}

// ------------------------------------------------------------------- spine

fn named(meshes: Vec<Mesh<f64>>) -> Vec<(String, Mesh<f64>)> {
    meshes.into_iter().map(|m| (m.label.clone(), m)).collect()
}

fn placed(mesh: Mesh<f64>, z: f64, tilt_deg: f64) -> Mesh<f64> {
    let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, z))
        .compose(&RigidTransform::from_axis_angle_deg(&Vector3::y(), tilt_deg));
    mesh.transformed(&t)
}

pub fn spine_suite() -> Verdict {
    let mut c = Checks::default();
    let frame = AnatomicalFrame::default;

    let pair = vec![
        placed(vertebra_box(40.0, 30.0, 20.0, "upper"), 40.0, 20.0),
        placed(vertebra_box(40.0, 30.0, 20.0, "lower"), 0.0, -20.0),
    ];
    let spine = SpineModel::from_meshes(&named(pair), frame()).unwrap();
    let cobb = cobb_angle(&spine, Plane::Coronal).angle_deg;
    c.check((cobb - 40.0).abs() <= 1e-6, format!("±20° pair Cobb {cobb:.9}°"));

    let arc = named(arc_spine(7, 0.0, 7.5, 230.0));
    let spine = SpineModel::from_meshes(&arc, frame()).unwrap();
    let cobb = cobb_angle(&spine, Plane::Coronal).angle_deg;
    c.check((cobb - 45.0).abs() <= 0.5, format!("7-level 45° arc Cobb {cobb:.6}°"));

    let base = named(arc_spine(7, -10.0, 6.0, 250.0));
    let model = SpineModel::from_meshes(&base, frame()).unwrap();
    let (c0, s0) = (cobb_angle(&model, Plane::Coronal).angle_deg, cobb_angle(&model, Plane::Sagittal).angle_deg);
    let mut rng = StdRng::seed_from_u64(5);
    let mut drift = 0.0f64;
    for _ in 0..50 {
        let shift = Vector3::from_fn(|_, _| rng.random_range(-500.0..500.0));
        let t = RigidTransform::from_translation(shift)
            .compose(&RigidTransform::from_axis_angle_deg(&random_axis(&mut rng), rng.random_range(-180.0..180.0)));
        let moved: Vec<_> = base.iter().map(|(l, m)| (l.clone(), m.transformed(&t))).collect();
        let m = SpineModel::from_meshes(&moved, frame().transformed(&t)).unwrap();
        drift = drift
            .max((cobb_angle(&m, Plane::Coronal).angle_deg - c0).abs())
            .max((cobb_angle(&m, Plane::Sagittal).angle_deg - s0).abs());
    }
    c.check(drift <= 1e-6, format!("max Cobb drift over 50 rigid transforms {drift:.2e}°"));

    // two 20 mm cubes, the upper one 25 mm above: a 5 mm gap
    let cubes = vec![
        placed(vertebra_box(20.0, 20.0, 20.0, "L3"), 25.0, 0.0),
        placed(vertebra_box(20.0, 20.0, 20.0, "L4"), 0.0, 0.0),
    ];
    let spine = SpineModel::from_meshes(&named(cubes), frame()).unwrap();
    let h = intervertebral_metrics(&spine)[0].disc_height_mm;
    c.check((h - 5.0).abs() <= 1e-9, format!("stacked cubes disc height {h:.12} mm"));
    c.verdict()
}

// ----------------------------------------------------------------- mapping

/// Literal scan of every voxel centre.
fn brute_sphere(v: &Volume<f64>, centre: &Point3<f64>, r: f64) -> (usize, f64) {
    let [nx, ny, nz] = v.dims();
    let (o, s) = (v.origin_mm(), v.spacing_mm());
    let (mut n, mut sum) = (0usize, 0.0f64);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let d = Vector3::new(
                    o.x + i as f64 * s.x - centre.x,
                    o.y + j as f64 * s.y - centre.y,
                    o.z + k as f64 * s.z - centre.z,
                );
                if d.norm_squared() <= r * r {
                    n += 1;
                    sum += v.voxels()[i + nx * (j + ny * k)] as f64;
                }
            }
        }
    }
    (n, sum / n as f64)
}

pub fn mapping_suite() -> Verdict {
    let mut c = Checks::default();
    let mut rng = StdRng::seed_from_u64(11);
    let (mut checked, mut count_ok, mut worst_mean) = (0, 0, 0.0f64);
    while checked < 20 {
        let dims = [rng.random_range(2..=64), rng.random_range(2..=64), rng.random_range(2..=64)];
        let spacing = Vector3::from_fn(|_, _| rng.random_range(0.3..2.0));
        let origin = Point3::from(Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0)));
        let voxels = (0..dims.iter().product()).map(|_| rng.random_range(-1000..2000)).collect();
        let v = Volume::new(dims, spacing, origin, voxels).unwrap();
        let centre = v.world_of_voxel(dims[0] / 2, dims[1] / 2, dims[2] / 2) + Vector3::new(0.37, -0.21, 0.13);
        let r = rng.random_range(1.0..15.0);
        let (n, mean) = brute_sphere(&v, &centre, r);
        if n == 0 {
            continue;
        }
        let s = sphere_stats(&v, &centre, r, 32).unwrap();
        count_ok += usize::from(s.count == n);
        worst_mean = worst_mean.max((s.mean - mean).abs());
        checked += 1;
    }
    c.check(count_ok == 20 && worst_mean <= 1e-9, format!("sphere stats: {count_ok}/20 exact counts, worst mean error {worst_mean:.2e}"));

    // field value = voxel index along x, so f(p) = (p.x − origin.x) / spacing.x
    let (ox, sx) = (-3.0, 0.8);
    let v = Volume::<f64>::from_fn([64, 40, 40], Vector3::new(sx, 1.1, 0.9), Point3::new(ox, 1.0, -2.0), |i, _, _| i as i16).unwrap();
    let m = Mesh::cuboid(Point3::new(4.3, 6.7, 3.1), Point3::new(40.9, 33.2, 30.4), "cube");
    let t = texture_map(&m, &v, 0.0, 1).unwrap();
    let range = 63.0;
    let worst = m
        .vertices
        .iter()
        .zip(&t.values)
        .map(|(p, val)| val.map_or(f64::INFINITY, |x| (x - (p.x - ox) / sx).abs()))
        .fold(0.0, f64::max);
    c.check(worst < 1e-6 * range, format!("linear field worst error {:.2e} of range", worst / range));

    let v = Volume::<f64>::from_fn([30, 30, 30], Vector3::repeat(1.0), Point3::origin(), |_, _, _| 137).unwrap();
    let m = Mesh::cuboid(Point3::new(5.0, 5.0, 5.0), Point3::new(20.0, 22.0, 18.0), "c");
    let t = texture_map(&m, &v, 2.0, 5).unwrap();
    let exact = t.values.iter().all(|x| *x == Some(137.0));
    c.check(exact, "uniform volume maps exactly");
    c.verdict()
}

// -------------------------------------------------------------- kinematics

pub fn kinematics_suite() -> Verdict {
    let mut c = Checks::default();
    let mut rng = StdRng::seed_from_u64(1);

    let base: Vec<Point3<f64>> = (0..200)
        .map(|_| Point3::new(rng.random_range(-800..800) as f64 / 8.0, rng.random_range(-800..800) as f64 / 8.0, rng.random_range(0..1600) as f64 / 8.0))
        .collect();
    let frames: Vec<Vec<Point3<f64>>> =
        (0..12).map(|t| base.iter().map(|p| p + Vector3::new(t as f64, 0.0, 0.0)).collect()).collect();
    let seq = MotionSequence::new(30.0, frames, true).unwrap();
    let speeds: Vec<f64> = point_speeds(&seq).unwrap().into_iter().flatten().flatten().collect();
    c.check(
        speeds.len() == 11 * 200 && speeds.iter().all(|s| *s == 30.0),
        format!("{} translation speeds exactly 30 mm/s", speeds.len()),
    );

    let (frames, is_arm) = torso_and_arm(60, 30.0, 100.0, 15);
    let seq = MotionSequence::new(30.0, frames.clone(), true).unwrap();
    let map = classify_regions(&seq, 25.0, 10.0).unwrap();
    let mut truth = BTreeMap::new();
    for frame in &frames {
        for (p, arm) in frame.iter().zip(&is_arm) {
            truth.insert(voxel_of(p, 25.0), if *arm { Region::Dynamic } else { Region::Static });
        }
    }
    let correct = truth.iter().filter(|(v, l)| map.labels.get(*v) == Some(l)).count();
    c.check(
        correct == truth.len() && map.labels.len() == truth.len(),
        format!("arm/torso regions {correct}/{} voxels correct", truth.len()),
    );

    let pts: Vec<Point3<f64>> = (0..500)
        .map(|_| Point3::new(rng.random_range(-300.0..300.0), rng.random_range(-100.0..100.0), rng.random_range(0.0..1700.0)))
        .collect();
    let a = pose_descriptor(&pts, 32).unwrap();
    let n = pts.len() as f64;
    let centre = Point3::from(pts.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = RigidTransform::rotation_about_point_deg(&random_axis(&mut rng), rng.random_range(-180.0..180.0), &centre);
        worst = worst.max(pose_distance(&a, &pose_descriptor(&t.apply_all(&pts), 32).unwrap()).unwrap());
    }
    c.check(worst < 1e-9, format!("pose descriptor rotation drift {worst:.2e}"));

    let squat: Vec<_> = squat_sequence(40, 2.0, 0.0).iter().map(|f| pose_descriptor(f, 32).unwrap()).collect();
    let dilated: Vec<_> = squat.iter().flat_map(|d| [d.clone(), d.clone()]).collect();
    let same = action_distance(&squat, &squat).unwrap().distance;
    let dil = action_distance(&squat, &dilated).unwrap().distance;
    c.check(same.abs() <= 1e-9 && dil.abs() <= 1e-9, format!("DTW identical {same:.1e}, dilated {dil:.1e}"));

    let frames = squat_sequence(8, 1.0, 0.0);
    let seq = MotionSequence::new(30.0, frames.clone(), true).unwrap();
    let reference = frame_descriptors(&seq, 25.0).unwrap();
    let mut invariant = 0;
    for _ in 0..50 {
        let mut perm: Vec<usize> = (0..frames[0].len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Vec<_>> = frames.iter().map(|f| perm.iter().map(|&i| f[i]).collect()).collect();
        let d = frame_descriptors(&MotionSequence::new(30.0, shuffled.clone(), true).unwrap(), 25.0).unwrap();
        let same_frames = reference.iter().zip(&d).all(|(x, y)| {
            x.centroid == y.centroid && x.occupied_voxel_count == y.occupied_voxel_count && x.speed_histogram == y.speed_histogram
        });
        let same_pose = frames
            .iter()
            .zip(&shuffled)
            .all(|(f, g)| pose_descriptor(f, 32).unwrap() == pose_descriptor(g, 32).unwrap());
        invariant += usize::from(same_frames && same_pose);
    }
    c.check(invariant == 50, format!("{invariant}/50 shuffles leave descriptors unchanged"));
    c.verdict()
}

// --------------------------------------------------------------- inference

fn feature(value: f64, modality: Modality) -> Feature {
    Feature {
        value,
        unit: String::new(),
        modality,
        scale: Scale::Meso,
        timestamp: "2026-01-01T00:00:00Z".into(),
        provenance: "acceptance".into(),
    }
}

fn random_vector(rng: &mut impl Rng, reference: &ReferencePopulation) -> FeatureVector {
    let mut fv = FeatureVector::new();
    for s in &reference.stats {
        if rng.random_bool(0.85) {
            fv.set(s.name.clone(), feature(s.mean + s.std * rng.random_range(-4.0..4.0), Modality::Ehr)).unwrap();
        }
    }
    fv
}

/// Logit recomputed from the published model and reference files.
fn logit_oracle(fv: &FeatureVector, model: &RiskModel, reference: &ReferencePopulation) -> f64 {
    model.bias
        + model
            .features
            .iter()
            .map(|w| {
                let s = reference.stats.iter().find(|s| s.name == w.name).unwrap();
                let z = fv.get(&w.name).map_or(0.0, |f| ((f.value - s.mean) / s.std).clamp(-3.0, 3.0));
                w.weight * z
            })
            .sum::<f64>()
}

pub fn inference_suite() -> Verdict {
    let mut c = Checks::default();
    let (model, reference, rules) = (RiskModel::default_model(), ReferencePopulation::default_reference(), RuleSet::default_rules());
    let score = |fv: &FeatureVector| mstwin_core::inference::score_features(fv, &model, &reference).unwrap();

    c.check(logistic(0.0) == 0.5, "logistic(0) = 0.5 exactly");

    let mut rng = StdRng::seed_from_u64(9);
    let mut monotone = 0;
    for _ in 0..1000 {
        let fv = random_vector(&mut rng, &reference);
        let w = &model.features[rng.random_range(0..model.features.len())];
        let s = reference.stats.iter().find(|s| s.name == w.name).unwrap();
        let before = fv.get(&w.name).map_or(s.mean, |f| f.value);
        let mut up = fv.clone();
        up.set(w.name.clone(), feature(before + s.std * rng.random_range(0.01..2.0), Modality::Ehr)).unwrap();
        let (p0, p1) = (score(&fv).probability, score(&up).probability);
        let ok = if w.weight > 0.0 { p1 >= p0 } else { p1 <= p0 };
        monotone += usize::from(ok);
    }
    c.check(monotone == 1000, format!("{monotone}/1000 single-feature increases move risk with the weight sign"));

    let mut worst_sum = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for _ in 0..500 {
        let fv = random_vector(&mut rng, &reference);
        let r = score(&fv);
        worst_sum = worst_sum.max((r.bias + r.contributions.iter().map(|c| c.contribution).sum::<f64>() - r.logit).abs());
        worst_oracle = worst_oracle.max((logit_oracle(&fv, &model, &reference) - r.logit).abs());
    }
    c.check(
        worst_sum <= 1e-9 && worst_oracle <= 1e-9,
        format!("contribution sum vs logit {worst_sum:.1e}, independent logit {worst_oracle:.1e}"),
    );

    let mut unchanged = 0;
    for i in 0..100 {
        let mut twin = TwinState::empty(&format!("p{i}"));
        twin.features = random_vector(&mut rng, &reference);
        twin.refresh(&model, &reference, &rules).unwrap();
        let (hash, bytes) = (twin.hash(), twin.to_json());
        let overrides: BTreeMap<String, f64> = model
            .features
            .iter()
            .filter_map(|w| rng.random_bool(0.5).then(|| (w.name.clone(), rng.random_range(-100.0..400.0))))
            .collect();
        what_if(&twin.features, &overrides, &model, &reference).unwrap();
        unchanged += usize::from(twin.hash() == hash && twin.to_json() == bytes);
    }
    c.check(unchanged == 100, format!("what-if left the twin hash unchanged in {unchanged}/100 trials"));
    c.verdict()
}
