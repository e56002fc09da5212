use mstwin_core::phantom::{arc_spine, vertebra_box};
use mstwin_core::spine::{alignment_profile, cobb_angle, fit_vertebra, intervertebral_metrics, AnatomicalFrame, Plane, SpineModel};
use mstwin_core::transform::RigidTransform;
use mstwin_core::mesh::Mesh;
use nalgebra::{Matrix3, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn named(meshes: Vec<Mesh<f64>>) -> Vec<(String, Mesh<f64>)> {
    meshes.into_iter().map(|m| (m.label.clone(), m)).collect()
}

/// Level k of the arc phantom is tilted by k·step, so the extreme endplates
/// differ by the swept arc.
#[test]
fn seven_level_arc_spans_forty_five_degrees() {
    let spine = SpineModel::from_meshes(&named(arc_spine(7, 0.0, 7.5, 230.0)), AnatomicalFrame::default()).unwrap();
    let c = cobb_angle(&spine, Plane::Coronal);
    assert!((c.angle_deg - 45.0).abs() <= 0.5, "{}", c.angle_deg);
    assert_eq!((c.upper_end_label.as_str(), c.lower_end_label.as_str()), ("V0", "V6"));
    let tilts: Vec<f64> = alignment_profile(&spine).iter().map(|l| l.tilt_deg).collect();
    assert!(tilts.windows(2).all(|w| w[1] > w[0]), "{tilts:?}");
    for (k, t) in tilts.iter().enumerate() {
        assert!((t - 7.5 * k as f64).abs() < 1e-6);
    }
}

#[test]
fn cobb_invariant_under_rigid_motion() {
    let meshes = named(arc_spine(7, -10.0, 6.0, 250.0));
    let base = SpineModel::from_meshes(&meshes, AnatomicalFrame::default()).unwrap();
    let c0 = cobb_angle(&base, Plane::Coronal).angle_deg;
    let s0 = cobb_angle(&base, Plane::Sagittal).angle_deg;
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for _ in 0..50 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = RigidTransform::from_translation(Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
            .compose(&RigidTransform::from_axis_angle_deg(&axis, rng.random_range(-180.0..180.0)));
        let moved: Vec<_> = meshes.iter().map(|(l, m)| (l.clone(), m.transformed(&t))).collect();
        let spine = SpineModel::from_meshes(&moved, AnatomicalFrame::default().transformed(&t)).unwrap();
        assert!((cobb_angle(&spine, Plane::Coronal).angle_deg - c0).abs() < 1e-6);
        assert!((cobb_angle(&spine, Plane::Sagittal).angle_deg - s0).abs() < 1e-6);
    }
}

#[test]
fn mirroring_preserves_coronal_cobb() {
    let meshes = named(arc_spine(5, 0.0, 8.0, 220.0));
    let mirrored: Vec<_> = meshes
        .iter()
        .map(|(l, m)| {
            let verts = m.vertices.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
            let faces = m.faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
            (l.clone(), Mesh::new(verts, faces, l.clone()))
        })
        .collect();
    let a = SpineModel::from_meshes(&meshes, AnatomicalFrame::default()).unwrap();
    let b = SpineModel::from_meshes(&mirrored, AnatomicalFrame::default()).unwrap();
    assert!((cobb_angle(&a, Plane::Coronal).angle_deg - cobb_angle(&b, Plane::Coronal).angle_deg).abs() < 1e-9);
}

#[test]
fn stacked_boxes_have_exact_disc_height() {
    let upper = vertebra_box::<f64>(40.0, 30.0, 20.0, "L3").transformed(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, 25.0)));
    let lower = vertebra_box::<f64>(40.0, 30.0, 20.0, "L4");
    let spine = SpineModel::from_meshes(&[("L4".into(), lower), ("L3".into(), upper)], AnatomicalFrame::default()).unwrap();
    let d = &intervertebral_metrics(&spine)[0];
    assert_eq!((d.upper.as_str(), d.lower.as_str()), ("L3", "L4"));
    assert!((d.disc_height_mm - 5.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn fitted_axes_are_right_handed(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0, angle in -90.0f64..90.0, w in 20.0f64..50.0, d in 15.0f64..35.0) {
        let t = RigidTransform::from_axis_angle_deg(&Vector3::new(ax, ay, az), angle);
        let m = vertebra_box::<f64>(w, d, 12.0, "v").transformed(&t);
        let v = fit_vertebra(&m, "v").unwrap();
        let a = Matrix3::from_columns(&v.axes);
        prop_assert!((a.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((a.transpose() * a - Matrix3::identity()).amax() < 1e-9);
        prop_assert!(v.axes[2].dot(&Vector3::z()) >= 0.0);
    }

    #[test]
    fn contact_iff_zero_gap(h in 5.0f64..40.0, dx in -10.0f64..10.0) {
        let upper = vertebra_box::<f64>(40.0, 30.0, 20.0, "a").transformed(&RigidTransform::from_translation(Vector3::new(dx, 0.0, h)));
        let lower = vertebra_box::<f64>(40.0, 30.0, 20.0, "b");
        let spine = SpineModel::from_meshes(&[("a".into(), upper), ("b".into(), lower)], AnatomicalFrame::default()).unwrap();
        for m in intervertebral_metrics(&spine) {
            prop_assert!(m.gap_min_mm >= 0.0 && m.disc_height_mm >= 0.0);
            prop_assert_eq!(m.contact, m.gap_min_mm == 0.0);
        }
    }
}
