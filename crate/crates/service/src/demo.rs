//! Small synthetic patient used by tests, the acceptance suite and for
//! trying the API by hand. Every asset is desk-scale (well under 2 MB).

use mstwin_core::asset::Modality;
use mstwin_core::ehr::{Biomarker, Demographics, EhrRecord};
use mstwin_core::ingest::{write_ehr, write_mesh_obj, write_motion_bundle, write_sensor_csv, write_volume};
use mstwin_core::motion::MotionSequence;
use mstwin_core::phantom::{arc_spine, chirp, torso_and_arm};
use mstwin_core::trace::{Channel, Placement, SensorTrace, Unit};
use mstwin_core::volume::Volume;
use mstwin_core::MeshF64;
use nalgebra::{Point3, UnitQuaternion, Vector3};

/// One uploadable asset.
#[derive(Debug, Clone)]
pub struct DemoAsset {
    pub modality: Modality,
    pub label: Option<String>,
    pub bytes: Vec<u8>,
    pub header: Option<Vec<u8>>,
}

pub const VERTEBRA_LEVELS: [&str; 4] = ["L1", "L2", "L3", "L4"];

/// Four vertebral boxes on a gentle coronal arc, cranial first.
pub fn vertebrae() -> Vec<MeshF64> {
    arc_spine::<f64>(VERTEBRA_LEVELS.len(), -3.0, 4.0, 400.0)
        .into_iter()
        .zip(VERTEBRA_LEVELS)
        .map(|(mut m, level)| {
            m.label = format!("vertebra-{level}");
            m
        })
        .collect()
}

/// CT-like volume: 300 HU inside the vertebral bodies, 20 HU elsewhere.
pub fn volume() -> Volume<f64> {
    let verts = vertebrae();
    let spacing = 2.5;
    let origin = Point3::new(-40.0, -40.0, -110.0);
    Volume::from_fn([40, 32, 64], Vector3::repeat(spacing), origin, |i, j, k| {
        let p = origin + Vector3::new(i as f64, j as f64, k as f64) * spacing;
        let inside = verts.iter().any(|m| {
            let c = m.centroid().expect("non-empty mesh");
            (p.x - c.x).abs() < 18.0 && (p.y - c.y).abs() < 13.0 && (p.z - c.z).abs() < 8.0
        });
        if inside { 300 } else { 20 }
    })
    .expect("valid demo volume")
}

/// Four-channel lumbar sEMG with a slow median-frequency decline and a
/// weaker right side.
pub fn semg_trace() -> SensorTrace<f64> {
    let fs = 2000.0;
    let x: Vec<f64> = chirp(110.0, 90.0, fs, 6.0);
    let channels = (1..=4)
        .map(|c| {
            let name = format!("EMG{c}");
            let gain = if c % 2 == 1 { 0.5 } else { 0.35 };
            Channel {
                placement: Placement::lumbar_default(&name),
                name,
                unit: Unit::Millivolt,
                samples: x.iter().map(|v| v * gain).collect(),
            }
        })
        .collect();
    SensorTrace::new(fs, 0.0, channels).expect("valid demo trace")
}

/// One IMU whose orientation sweeps 0 → 50° about the vertical axis.
pub fn imu_trace() -> SensorTrace<f64> {
    let (fs, n) = (100.0, 300);
    let q: Vec<UnitQuaternion<f64>> = (0..n)
        .map(|i| UnitQuaternion::from_axis_angle(&Vector3::z_axis(), (50.0f64 * i as f64 / (n - 1) as f64).to_radians()))
        .collect();
    let comp = |f: fn(&UnitQuaternion<f64>) -> f64| q.iter().map(f).collect::<Vec<_>>();
    let ch = |name: &str, samples| Channel {
        name: name.into(),
        unit: Unit::Quaternion,
        placement: None,
        samples,
    };
    SensorTrace::new(
        fs,
        0.0,
        vec![
            ch("qw", comp(|q| q.w)),
            ch("qx", comp(|q| q.i)),
            ch("qy", comp(|q| q.j)),
            ch("qz", comp(|q| q.k)),
        ],
    )
    .expect("valid demo IMU trace")
}

pub fn motion() -> MotionSequence<f64> {
    let (frames, _) = torso_and_arm(20, 30.0, 300.0, 10);
    MotionSequence::new(30.0, frames, true).expect("valid demo motion")
}

pub fn ehr(patient_id: &str) -> EhrRecord {
    EhrRecord {
        patient_id: patient_id.into(),
        demographics: Demographics {
            age: 58.0,
            sex: Some("F".into()),
            height_cm: Some(165.0),
            weight_kg: Some(72.0),
        },
        biomarkers: vec![Biomarker {
            name: "facet_degeneration".into(),
            value: 2.0,
            unit: "grade".into(),
        }],
        notes: "synthetic demo record".into(),
        extras: Default::default(),
    }
}

/// Every demo asset in upload order.
pub fn assets(patient_id: &str) -> Vec<DemoAsset> {
    let mut out: Vec<DemoAsset> = vertebrae()
        .iter()
        .map(|m| DemoAsset {
            modality: Modality::Mesh,
            label: Some(m.label.clone()),
            bytes: write_mesh_obj(m).into_bytes(),
            header: None,
        })
        .collect();
    let (header, raw) = write_volume(&volume());
    out.push(DemoAsset {
        modality: Modality::Volume,
        label: Some("ct-lumbar".into()),
        bytes: raw,
        header: Some(header),
    });
    let (csv, meta) = write_sensor_csv(&semg_trace());
    out.push(DemoAsset {
        modality: Modality::Semg,
        label: Some("lumbar-emg".into()),
        bytes: csv.into_bytes(),
        header: Some(meta),
    });
    let (csv, meta) = write_sensor_csv(&imu_trace());
    out.push(DemoAsset {
        modality: Modality::Imu,
        label: Some("trunk-imu".into()),
        bytes: csv.into_bytes(),
        header: Some(meta),
    });
    out.push(DemoAsset {
        modality: Modality::Motion,
        label: Some("arm-swing".into()),
        bytes: write_motion_bundle(&motion()),
        header: None,
    });
    out.push(DemoAsset {
        modality: Modality::Ehr,
        label: None,
        bytes: write_ehr(&ehr(patient_id)),
        header: None,
    });
    out
}
