use mstwin_core::mapping::{characterize_vertebra, sphere_stats, texture_map};
use mstwin_core::mesh::Mesh;
use mstwin_core::volume::Volume;
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Literal scan of every voxel: count and mean of centres within the radius.
fn brute_sphere(v: &Volume<f64>, c: &Point3<f64>, r: f64) -> (usize, f64) {
    let [nx, ny, nz] = v.dims();
    let (o, s) = (v.origin_mm(), v.spacing_mm());
    let (mut n, mut sum) = (0usize, 0.0f64);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let dx = o.x + i as f64 * s.x - c.x;
                let dy = o.y + j as f64 * s.y - c.y;
                let dz = o.z + k as f64 * s.z - c.z;
                if dx * dx + dy * dy + dz * dz <= r * r {
                    n += 1;
                    sum += v.voxels()[i + nx * (j + ny * k)] as f64;
                }
            }
        }
    }
    (n, sum / n as f64)
}

fn random_volume(rng: &mut impl Rng) -> Volume<f64> {
    let dims = [rng.random_range(2..=64), rng.random_range(2..=64), rng.random_range(2..=64)];
    let spacing = Vector3::new(rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(0.3..2.0));
    let origin = Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let n = dims.iter().product();
    let voxels = (0..n).map(|_| rng.random_range(-1000..2000)).collect();
    Volume::new(dims, spacing, origin, voxels).unwrap()
}

#[test]
fn sphere_stats_matches_brute_force_scan() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 20 {
        let v = random_volume(&mut rng);
        let [nx, ny, nz] = v.dims();
        let centre = v.world_of_voxel(nx / 2, ny / 2, nz / 2) + Vector3::new(0.37, -0.21, 0.13);
        let r = rng.random_range(1.0..15.0);
        let (n, mean) = brute_sphere(&v, &centre, r);
        if n == 0 {
            assert!(sphere_stats(&v, &centre, r, 32).is_err());
            continue;
        }
        let s = sphere_stats(&v, &centre, r, 32).unwrap();
        assert_eq!(s.count, n);
        assert!((s.mean - mean).abs() < 1e-9, "{} vs {}", s.mean, mean);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), n);
        checked += 1;
    }
}

#[test]
fn split_volume_sphere_on_interface() {
    let v = Volume::<f64>::from_fn([48, 48, 48], Vector3::repeat(1.0), Point3::origin(), |i, _, _| if i < 24 { 0 } else { 200 }).unwrap();
    let c = Point3::new(23.5, 24.0, 24.0);
    let s = sphere_stats(&v, &c, 10.0, 32).unwrap();
    let (n, mean) = brute_sphere(&v, &c, 10.0);
    assert_eq!(s.count, n);
    assert!((s.mean - mean).abs() <= 2.0);
    assert!((s.mean - 100.0).abs() < 2.0);
}

fn linear_volume() -> Volume<f64> {
    Volume::from_fn([64, 64, 64], Vector3::repeat(1.0), Point3::origin(), |i, _, _| i as i16).unwrap()
}

#[test]
fn linear_field_texture_at_zero_depth() {
    let v = linear_volume();
    let m = Mesh::cuboid(Point3::new(10.3, 12.7, 5.1), Point3::new(40.9, 33.2, 50.4), "cube");
    let t = texture_map(&m, &v, 0.0, 1).unwrap();
    let range = 63.0;
    for (p, val) in m.vertices.iter().zip(&t.values) {
        assert!((val.unwrap() - p.x).abs() < 1e-6 * range);
    }
}

#[test]
fn degenerated_vertebra_separates_from_healthy() {
    let inner = |value: i16| {
        Volume::<f64>::from_fn([40, 40, 40], Vector3::repeat(1.0), Point3::origin(), move |i, j, k| {
            let inside = (8..32).contains(&i) && (8..32).contains(&j) && (8..32).contains(&k);
            if inside { value } else { 0 }
        })
        .unwrap()
    };
    let m = Mesh::cuboid(Point3::new(8.0, 8.0, 8.0), Point3::new(31.0, 31.0, 31.0), "L3");
    let healthy = characterize_vertebra(&m, &inner(400), 6.0).unwrap();
    let degenerated = characterize_vertebra(&m, &inner(50), 6.0).unwrap();
    assert!(healthy.stats.mean - degenerated.stats.mean > 300.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn texture_is_translation_covariant(dx in -5i32..5, dy in -5i32..5, dz in -5i32..5, depth in 0.0f64..3.0) {
        let v = Volume::<f64>::from_fn([32, 32, 32], Vector3::new(1.0, 1.5, 0.8), Point3::new(-3.0, 2.0, 1.0), |i, j, k| (i * 13 + j * 7 + k * 3) as i16).unwrap();
        let m = Mesh::cuboid(Point3::new(5.0, 10.0, 6.0), Point3::new(20.0, 30.0, 18.0), "c");
        let off = Vector3::new(dx as f64 * 1.0, dy as f64 * 1.5, dz as f64 * 0.8);
        let a = texture_map(&m, &v, depth, 5).unwrap();
        let moved = m.transformed(&mstwin_core::transform::RigidTransform::from_translation(off));
        let b = texture_map(&moved, &v.translated(&off), depth, 5).unwrap();
        prop_assert_eq!(&a.valid, &b.valid);
        for (x, y) in a.values.iter().zip(&b.values) {
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn validity_is_monotone_in_depth(d in 0.0f64..8.0, frac in 0.0f64..1.0, shift in -6.0f64..6.0) {
        let v = Volume::<f64>::from_fn([20, 20, 20], Vector3::repeat(1.0), Point3::origin(), |_, _, _| 1).unwrap();
        let m = Mesh::cuboid(Point3::new(-2.0 + shift, 3.0, 3.0), Point3::new(10.0 + shift, 12.0, 21.0), "c");
        let deep = texture_map(&m, &v, d, 5).unwrap();
        let shallow = texture_map(&m, &v, d * frac, 5).unwrap();
        for (a, b) in deep.valid.iter().zip(&shallow.valid) {
            prop_assert!(!a || *b);
        }
    }
}
