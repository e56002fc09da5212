//! Synthetic phantoms with known ground truth: torso surfaces, vertebra
//! stacks, sEMG-like signals and motion sequences. Used by the test suites
//! and by the CLI demo fixtures.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::mesh::Mesh;
use crate::scalar::{lit, Real};
use crate::transform::RigidTransform;

/// Radial scale of the torso surface at azimuth `theta` and height `z`.
fn torso_radius_scale(theta: f64, z: f64) -> f64 {
    let h = z / 250.0;
    let bump = (-((theta - 1.0).powi(2)) / 0.08 - ((z - 110.0) / 55.0).powi(2)).exp();
    let groove = (-((theta + PI / 2.0).powi(2)) / 0.02).exp();
    1.0 + 0.12 * (theta - 0.5).cos() * h + 0.07 * (3.0 * theta).sin() + 0.15 * bump
        - 0.06 * groove
        + 0.25 * h * h
        - 0.1 * h
}

/// Point on the torso phantom: an irregular elliptic cylinder about `z`,
/// roughly 320 × 200 × 500 mm, without rotational symmetry.
pub fn torso_point(theta: f64, z: f64) -> Point3<f64> {
    let s = torso_radius_scale(theta, z);
    Point3::new(160.0 * s * theta.cos(), 100.0 * s * theta.sin(), z)
}

/// `n` points sampled over the closed torso phantom: the lateral surface
/// plus flat caps at the neck and pelvis ends.
pub fn torso_surface<T: Real>(rng: &mut impl Rng, n: usize) -> Vec<Point3<T>> {
    (0..n)
        .map(|_| {
            let theta = rng.random_range(-PI..PI);
            let u: f64 = rng.random_range(0.0..1.0);
            let p = if u < 0.8 {
                torso_point(theta, rng.random_range(-250.0..250.0))
            } else {
                // caps: uniform over the cap area
                let z = if u < 0.9 { 250.0 } else { -250.0 };
                let rim = torso_point(theta, z);
                let r = rng.random_range(0.0f64..1.0).sqrt();
                Point3::new(rim.x * r, rim.y * r, z)
            };
            p.map(lit::<T>)
        })
        .collect()
}

/// Keeps the `fraction` of points with the smallest projection on `axis`.
pub fn crop_along<T: Real>(points: &[Point3<T>], axis: &Vector3<T>, fraction: f64) -> Vec<Point3<T>> {
    let mut keyed: Vec<(T, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.coords.dot(axis), i))
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let keep = ((points.len() as f64) * fraction).round() as usize;
    let mut idx: Vec<usize> = keyed[..keep].iter().map(|k| k.1).collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

/// Vertebral body stand-in: a box of `width × depth × height` mm centred at
/// the origin, its height along `z`.
pub fn vertebra_box<T: Real>(width: f64, depth: f64, height: f64, label: &str) -> Mesh<T> {
    let half = Vector3::new(width, depth, height) / 2.0;
    Mesh::cuboid(
        Point3::from(-half).map(lit::<T>),
        Point3::from(half).map(lit::<T>),
        label,
    )
}

/// Vertebra boxes placed along a circular arc in the coronal (x-z) plane.
/// Level `k` sits at arc angle `start_deg + k·step_deg`, tilted by the same
/// angle, ordered cranial to caudal.
pub fn arc_spine<T: Real>(levels: usize, start_deg: f64, step_deg: f64, radius_mm: f64) -> Vec<Mesh<T>> {
    (0..levels)
        .map(|k| {
            let phi = start_deg + step_deg * k as f64;
            let rad = phi.to_radians();
            // level 0 is the most cranial
            let centre = Vector3::new(radius_mm * (1.0 - rad.cos()), 0.0, -radius_mm * rad.sin());
            let tilt = RigidTransform::<f64>::from_axis_angle_deg(&Vector3::y(), -phi);
            let place = RigidTransform::from_translation(centre).compose(&tilt);
            let m = vertebra_box::<f64>(40.0, 30.0, 20.0, &format!("V{k}")).transformed(&place);
            Mesh::new(
                m.vertices.iter().map(|p| p.map(lit::<T>)).collect(),
                m.faces,
                m.label,
            )
        })
        .collect()
}

/// `amplitude · sin(2π f t)` sampled at `fs` for `duration_s`.
pub fn sine<T: Real>(freq_hz: f64, amplitude: f64, fs: f64, duration_s: f64) -> Vec<T> {
    let n = (fs * duration_s).round() as usize;
    (0..n)
        .map(|i| lit(amplitude * (2.0 * PI * freq_hz * i as f64 / fs).sin()))
        .collect()
}

/// Linear chirp whose instantaneous frequency moves from `f0` to `f1` over
/// `duration_s`.
pub fn chirp<T: Real>(f0: f64, f1: f64, fs: f64, duration_s: f64) -> Vec<T> {
    let n = (fs * duration_s).round() as usize;
    let rate = (f1 - f0) / duration_s;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            lit((2.0 * PI * (f0 * t + 0.5 * rate * t * t)).sin())
        })
        .collect()
}

/// Triangle wave position with unit slope magnitude: moves `+1` per unit time
/// for `half_period`, then back.
pub fn triangle(t: f64, half_period: f64) -> f64 {
    let phase = t.rem_euclid(2.0 * half_period);
    if phase <= half_period {
        phase
    } else {
        2.0 * half_period - phase
    }
}

/// Static torso block plus an arm block swinging along `x` at constant
/// `arm_speed_mm_s` (reversing every `half_period_frames`). Returns the frames
/// and, per point, whether it belongs to the arm.
pub fn torso_and_arm(
    frames: usize,
    fps: f64,
    arm_speed_mm_s: f64,
    half_period_frames: usize,
) -> (Vec<Vec<Point3<f64>>>, Vec<bool>) {
    let mut base = Vec::new();
    let mut is_arm = Vec::new();
    // torso: 200 × 100 × 400 mm block sampled every 25 mm, offset into cells
    for i in 0..8 {
        for j in 0..4 {
            for k in 0..16 {
                base.push(Point3::new(12.5 + 25.0 * i as f64, 12.5 + 25.0 * j as f64, 12.5 + 25.0 * k as f64));
                is_arm.push(false);
            }
        }
    }
    // arm: small block well away from the torso
    for j in 0..2 {
        for k in 0..6 {
            base.push(Point3::new(412.5, 12.5 + 25.0 * j as f64, 212.5 + 25.0 * k as f64));
            is_arm.push(true);
        }
    }
    let step = arm_speed_mm_s / fps;
    let seq = (0..frames)
        .map(|f| {
            let dx = step * triangle(f as f64, half_period_frames as f64);
            base.iter()
                .zip(&is_arm)
                .map(|(p, arm)| if *arm { p + Vector3::new(dx, 0.0, 0.0) } else { *p })
                .collect()
        })
        .collect();
    (seq, is_arm)
}

/// Stylized body cloud (trunk, two arms, two legs) in a pose described by a
/// squat depth and a gait phase, both in `[0, 1]`-ish units.
pub fn body_pose(squat: f64, gait_phase: f64) -> Vec<Point3<f64>> {
    let mut pts = Vec::new();
    let hip_drop = 350.0 * squat;
    let trunk_lean = 0.6 * squat;
    for k in 0..20 {
        let s = k as f64 / 19.0;
        // trunk from hip up, leaning forward with squat depth
        pts.push(Point3::new(0.0, 500.0 * s * trunk_lean.sin(), 900.0 - hip_drop + 500.0 * s * trunk_lean.cos()));
    }
    let swing = 0.5 * (2.0 * PI * gait_phase).sin();
    for (side, phase) in [(-1.0, swing), (1.0, -swing)] {
        for k in 0..15 {
            let s = k as f64 / 14.0;
            // legs: thigh folds forward with squat, swings with gait
            let knee_bend = 1.4 * squat;
            let thigh = 450.0 * s.min(0.5) * 2.0;
            let shank = 450.0 * (s - 0.5).max(0.0) * 2.0;
            let y = thigh * (phase + knee_bend).sin() + shank * phase.sin();
            let z = 900.0 - hip_drop - thigh * (phase + knee_bend).cos() - shank * phase.cos();
            pts.push(Point3::new(side * 120.0, y, z.max(0.0)));
        }
        for k in 0..10 {
            let s = k as f64 / 9.0;
            // arms reach forward during squats, swing opposite the legs while walking
            let arm_angle = 1.3 * squat - phase;
            pts.push(Point3::new(
                side * 200.0,
                600.0 * s * arm_angle.sin(),
                1350.0 - hip_drop - 600.0 * s * arm_angle.cos(),
            ));
        }
    }
    pts
}

/// Squat cycle: `frames` poses going down and back up `reps` times.
pub fn squat_sequence(frames: usize, reps: f64, phase_offset: f64) -> Vec<Vec<Point3<f64>>> {
    (0..frames)
        .map(|f| {
            let t = f as f64 / frames as f64;
            let depth = 0.5 * (1.0 - (2.0 * PI * (reps * t + phase_offset)).cos());
            body_pose(depth, 0.0)
        })
        .collect()
}

/// Walking cycle: `frames` poses over `strides` gait cycles.
pub fn walk_sequence(frames: usize, strides: f64) -> Vec<Vec<Point3<f64>>> {
    (0..frames)
        .map(|f| body_pose(0.0, strides * f as f64 / frames as f64))
        .collect()
}
