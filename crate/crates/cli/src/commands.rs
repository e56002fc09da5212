use std::collections::BTreeMap;
use std::path::Path;

use mstwin_core::asset::{checksum, Modality};
use mstwin_core::ingest::{
    parse_ehr, parse_mesh_obj, parse_motion_bundle, parse_motion_dir, parse_sensor_csv, parse_volume, parse_xyz,
    read_frame_files, write_motion_bundle,
};
use mstwin_core::inference::{
    apply_overrides, build_feature_graph, normalize_features, risk_score, suggest_followups, FeatureVector,
    ReferencePopulation, RiskModel, RiskScore, RuleSet,
};
use mstwin_core::kinematics::{classify_regions, descriptors_csv, frame_descriptors};
use mstwin_core::mapping::{sphere_stats, texture_map};
use mstwin_core::registration::{
    extract_isosurface_points, icp_register, landmark_init, robustness_sweep, sweep_csv, IcpParams, LandmarkSet,
    SweepConfig,
};
use mstwin_core::semg::{analyze_trace, SemgConfig};
use mstwin_core::spine::{spine_report, AnatomicalFrame, SpineModel};
use mstwin_core::transform::RigidTransform;
use mstwin_core::twin::TwinState;
use mstwin_core::{MeshF64, MotionSequenceF64, VolumeF64};
use mstwin_service::analysis::validate_upload;
use mstwin_service::{PatientStore, ServiceError, UploadMeta};
use nalgebra::{Point3, Vector3};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{canonical_json, emit};
use crate::{Cli, Command, Format, IcpArgs, InferenceArgs, PointArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Validate(_) => "validate",
        Command::Register(_) => "register",
        Command::Sweep(_) => "sweep",
        Command::Texture(_) => "texture",
        Command::SphereStats(_) => "sphere-stats",
        Command::Spine(_) => "spine",
        Command::Semg(_) => "semg",
        Command::Motion(_) => "motion",
        Command::Risk(_) => "risk",
        Command::Graph(_) => "graph",
        Command::WhatIf(_) => "what-if",
        Command::ExportTwin(_) => "export-twin",
        Command::Serve(_) => "serve",
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| CliError::Domain(format!("{}: not UTF-8", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "mesh".into(), |s| s.to_string_lossy().into_owned())
}

fn load_mesh(path: &Path) -> Result<MeshF64> {
    parse_mesh_obj(&read(path)?, &stem(path)).map_err(CliError::parse(path))
}

fn load_volume(raw: &Path, meta: &Path) -> Result<VolumeF64> {
    parse_volume(&read(meta)?, &read(raw)?).map_err(CliError::parse(raw))
}

fn load_points(path: &Path, meta: Option<&Path>, threshold: i16) -> Result<Vec<Point3<f64>>> {
    if let Some(meta) = meta {
        let iso = extract_isosurface_points(&load_volume(path, meta)?, threshold);
        if iso.empty {
            return Err(CliError::Domain(format!("{}: no voxel reaches threshold {threshold}", path.display())));
        }
        return Ok(iso.points);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => Ok(load_mesh(path)?.vertices),
        Some("xyz") => parse_xyz(&read(path)?).map_err(CliError::parse(path)),
        _ => Err(CliError::Usage(format!(
            "cannot tell the point format of {}; use .obj or .xyz, or give a volume header",
            path.display()
        ))),
    }
}

fn load_landmarks(path: &Path) -> Result<LandmarkSet<f64>> {
    LandmarkSet::from_json(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_transform(path: &Path) -> Result<RigidTransform<f64>> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_motion(input: Option<&Path>, frames: Option<&Path>, meta: Option<&Path>) -> Result<MotionSequenceF64> {
    match (input, frames, meta) {
        (Some(bundle), _, _) => parse_motion_bundle(&read(bundle)?).map_err(CliError::parse(bundle)),
        (None, Some(dir), Some(meta)) => {
            let files = read_frame_files(dir).map_err(CliError::io(dir))?;
            parse_motion_dir(&files, &read(meta)?).map_err(CliError::parse(dir))
        }
        _ => Err(CliError::Usage("give --input, or --frames with --meta".into())),
    }
}

fn icp_params(a: &IcpArgs) -> IcpParams {
    IcpParams {
        max_iter: a.max_iter,
        tol_mm: a.tol,
        trim_fraction: a.trim,
    }
}

fn source_target(p: &PointArgs) -> Result<(Vec<Point3<f64>>, Vec<Point3<f64>>)> {
    Ok((
        load_points(&p.source, p.source_meta.as_deref(), p.icp.threshold)?,
        load_points(&p.target, p.target_meta.as_deref(), p.icp.threshold)?,
    ))
}

fn to_value<S: serde::Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("result serializes")
}

struct Inference {
    features: FeatureVector,
    model: RiskModel,
    reference: ReferencePopulation,
    rules: RuleSet,
}

fn load_inference(a: &InferenceArgs) -> Result<Inference> {
    let bytes = read(&a.features)?;
    let doc: Value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", a.features.display())))?;
    let features = if doc.get("schema_version").is_some() {
        TwinState::from_json(&bytes)
            .map_err(|e| CliError::Domain(format!("{}: invalid twin: {e}", a.features.display())))?
            .features
    } else {
        serde_json::from_value(doc)
            .map_err(|e| CliError::Domain(format!("{}: invalid feature vector: {e}", a.features.display())))?
    };
    let with = |p: &Option<std::path::PathBuf>| p.as_deref().map(read_text).transpose();
    let domain = CliError::domain;
    Ok(Inference {
        features,
        model: with(&a.model)?.map_or_else(|| Ok(RiskModel::default_model()), |s| RiskModel::from_json(&s)).map_err(domain)?,
        reference: with(&a.reference)?
            .map_or_else(|| Ok(ReferencePopulation::default_reference()), |s| ReferencePopulation::from_json(&s))
            .map_err(domain)?,
        rules: with(&a.rules)?.map_or_else(|| Ok(RuleSet::default_rules()), |s| RuleSet::from_json(&s)).map_err(domain)?,
    })
}

fn score(inf: &Inference, features: &FeatureVector) -> Result<RiskScore> {
    let z = normalize_features(features, &inf.reference).map_err(CliError::domain)?;
    let mut risk = risk_score(&z, &inf.model).map_err(CliError::domain)?;
    risk.followups = suggest_followups(&z, &risk, &inf.rules).map_err(CliError::domain)?;
    Ok(risk)
}

fn summarize(modality: Modality, bytes: &[u8], meta: Option<&[u8]>, label: &str) -> Result<Value> {
    let parse = |e| CliError::Domain(format!("{e}"));
    validate_upload(modality, bytes, meta, label).map_err(|e| match e {
        ServiceError::Parse(p) => CliError::Parse {
            path: label.into(),
            source: p,
        },
        other => CliError::Service(other),
    })?;
    let meta = meta.unwrap_or_default();
    let summary = match modality {
        Modality::Mesh => {
            let m: MeshF64 = parse_mesh_obj(bytes, label).map_err(parse)?;
            json!({ "vertices": m.vertices.len(), "faces": m.faces.len(), "label": m.label })
        }
        Modality::Volume => {
            let v: VolumeF64 = parse_volume(meta, bytes).map_err(parse)?;
            json!({ "dims": v.dims(), "spacing_mm": v.spacing_mm().as_slice(), "origin_mm": v.origin_mm().coords.as_slice() })
        }
        Modality::Semg | Modality::Imu => {
            let t = parse_sensor_csv::<f64>(bytes, meta).map_err(parse)?;
            let channels: Vec<Value> =
                t.channels().iter().map(|c| json!({ "name": c.name, "unit": c.unit.tag() })).collect();
            json!({ "fs_hz": t.fs_hz(), "samples": t.len(), "channels": channels })
        }
        Modality::Motion => {
            let s: MotionSequenceF64 = parse_motion_bundle(bytes).map_err(parse)?;
            json!({ "frames": s.len(), "fps": s.fps(), "correspondence": s.correspondence() })
        }
        Modality::Ehr => {
            let r = parse_ehr(bytes).map_err(parse)?;
            json!({ "patient_id": r.patient_id, "biomarkers": r.biomarkers.len() })
        }
    };
    Ok(summary)
}

fn json_only(cli: &Cli) -> Result<()> {
    match cli.format {
        Some(Format::Csv) => Err(CliError::Usage(format!("{} has no csv output", name(&cli.command)))),
        _ => Ok(()),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    let json_out = |v: Value| emit(canonical_json(v).as_bytes(), out);
    let csv = cli.format == Some(Format::Csv);
    match &cli.command {
        Command::Ingest(a) => {
            json_only(cli)?;
            let (bytes, meta) = if a.modality == Modality::Motion && a.input.is_dir() {
                let seq = load_motion(None, Some(&a.input), a.meta.as_deref())?;
                (write_motion_bundle(&seq), None)
            } else {
                (read(&a.input)?, a.meta.as_deref().map(read).transpose()?)
            };
            let label = a.label.clone().unwrap_or_else(|| stem(&a.input));
            let summary = summarize(a.modality, &bytes, meta.as_deref(), &label).map_err(|e| match e {
                CliError::Parse { source, .. } => CliError::Parse {
                    path: a.input.clone(),
                    source,
                },
                other => other,
            })?;
            match &a.patient {
                None => json_out(json!({
                    "modality": a.modality,
                    "bytes": bytes.len(),
                    "checksum": checksum(&bytes),
                    "summary": summary,
                })),
                Some(id) => {
                    let store = PatientStore::open(&cli.store)?;
                    match store.create_patient(id) {
                        Ok(_) | Err(ServiceError::Conflict(_)) => {}
                        Err(e) => return Err(e.into()),
                    }
                    let meta = UploadMeta {
                        label: Some(label),
                        scale: a.scale,
                        acquired_at: a.acquired_at.clone(),
                        header: meta,
                    };
                    let record = store.upload_asset(id, a.modality, &bytes, meta)?;
                    json_out(to_value(&record))
                }
            }
        }
        Command::Validate(a) => {
            json_only(cli)?;
            let bytes = read(&a.input)?;
            let meta = a.meta.as_deref().map(read).transpose()?;
            match validate_upload(a.modality, &bytes, meta.as_deref(), &stem(&a.input)) {
                Ok(()) => json_out(json!({ "modality": a.modality, "valid": true })),
                Err(e) => {
                    json_out(json!({ "modality": a.modality, "valid": false, "error": to_value(&e.body()) }))?;
                    Err(CliError::Domain(format!("{}: {e}", a.input.display())))
                }
            }
        }
        Command::Register(a) => {
            json_only(cli)?;
            let (source, target) = source_target(&a.points)?;
            let init = match (&a.init, &a.source_landmarks, &a.target_landmarks) {
                (Some(p), _, _) => load_transform(p)?,
                (None, Some(s), Some(t)) => {
                    landmark_init(&load_landmarks(s)?, &load_landmarks(t)?).map_err(CliError::domain)?
                }
                _ => RigidTransform::identity(),
            };
            let res = icp_register(&source, &target, &init, &icp_params(&a.points.icp)).map_err(CliError::domain)?;
            json_out(to_value(&res))
        }
        Command::Sweep(a) => {
            let (source, target) = source_target(&a.points)?;
            let config = SweepConfig {
                params: icp_params(&a.points.icp),
                baseline_init: a.init.as_deref().map(load_transform).transpose()?.unwrap_or_else(RigidTransform::identity),
                view_axis: Vector3::from(a.view_axis),
                tilt_axis: Vector3::from(a.tilt_axis),
                distance_offsets_mm: a.distance.clone(),
                tilt_deg: a.tilt.clone(),
                landmark_displacements_mm: a.displace.clone(),
            };
            let rows = robustness_sweep(
                &source,
                &target,
                &load_landmarks(&a.source_landmarks)?,
                &load_landmarks(&a.target_landmarks)?,
                &config,
            )
            .map_err(CliError::domain)?;
            // tabular by default
            if cli.format == Some(Format::Json) {
                let rows: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "perturbation": r.perturbation.tag(),
                            "value": r.value,
                            "tre_mm": r.tre_mm,
                            "converged": r.converged,
                            "result": to_value(&r.result),
                        })
                    })
                    .collect();
                json_out(json!({ "rows": rows }))
            } else {
                emit(sweep_csv(&rows).as_bytes(), out)
            }
        }
        Command::Texture(a) => {
            let mesh = load_mesh(&a.mesh)?;
            let volume = load_volume(&a.volume.volume, &a.volume.volume_meta)?;
            let tex = texture_map(&mesh, &volume, a.depth, a.samples).map_err(CliError::domain)?;
            if csv {
                emit(tex.to_csv().as_bytes(), out)
            } else {
                json_out(tex.to_export_json(a.mesh_id.as_deref().unwrap_or(&stem(&a.mesh))))
            }
        }
        Command::SphereStats(a) => {
            json_only(cli)?;
            let volume = load_volume(&a.volume.volume, &a.volume.volume_meta)?;
            let stats = sphere_stats(&volume, &Point3::from(a.center), a.radius, a.bins).map_err(CliError::domain)?;
            json_out(to_value(&stats))
        }
        Command::Spine(a) => {
            json_only(cli)?;
            let meshes = a
                .meshes
                .iter()
                .map(|p| Ok((stem(p), load_mesh(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let model = SpineModel::from_meshes(&meshes, AnatomicalFrame::default()).map_err(CliError::domain)?;
            json_out(spine_report(&model))
        }
        Command::Semg(a) => {
            let trace = parse_sensor_csv(&read(&a.trace)?, &read(&a.meta)?).map_err(CliError::parse(&a.trace))?;
            let config = SemgConfig {
                band_hz: if a.no_filter { None } else { Some(a.band.unwrap_or(mstwin_core::semg::DEFAULT_BAND_HZ)) },
                window_s: a.window,
                hop_s: a.hop,
            };
            let report = analyze_trace::<f64>(&trace, &config).map_err(CliError::domain)?;
            if csv {
                emit(report.to_csv().as_bytes(), out)
            } else {
                json_out(to_value(&report))
            }
        }
        Command::Motion(a) => {
            let seq = load_motion(a.input.as_deref(), a.frames.as_deref(), a.meta.as_deref())?;
            let descriptors = frame_descriptors(&seq, a.voxel).map_err(CliError::domain)?;
            if csv {
                return emit(descriptors_csv(&descriptors).as_bytes(), out);
            }
            let regions = if seq.correspondence() {
                classify_regions(&seq, a.voxel, a.threshold).map_err(CliError::domain)?.to_export_json()
            } else {
                Value::Null
            };
            json_out(json!({ "descriptors": to_value(&descriptors), "regions": regions }))
        }
        Command::Risk(a) => {
            json_only(cli)?;
            let inf = load_inference(a)?;
            json_out(to_value(&score(&inf, &inf.features)?))
        }
        Command::Graph(a) => {
            json_only(cli)?;
            let inf = load_inference(a)?;
            let risk = score(&inf, &inf.features)?;
            json_out(to_value(&build_feature_graph(&inf.features, &risk).map_err(CliError::domain)?))
        }
        Command::WhatIf(a) => {
            json_only(cli)?;
            let inf = load_inference(&a.inference)?;
            let overrides: BTreeMap<String, f64> = a.overrides.iter().cloned().collect();
            let scenario = apply_overrides(&inf.features, &overrides, &inf.reference).map_err(CliError::domain)?;
            json_out(to_value(&score(&inf, &scenario)?))
        }
        Command::ExportTwin(a) => {
            json_only(cli)?;
            // stored bytes verbatim: full precision and a stable hash
            let store = PatientStore::open(&cli.store)?;
            emit(&store.twin_bytes(&a.patient)?, out)
        }
        Command::Serve(a) => {
            json_only(cli)?;
            let store = PatientStore::open(&cli.store)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(CliError::io(Path::new("<runtime>")))?;
            let root = cli.store.display().to_string();
            rt.block_on(mstwin_service::serve(store, a.bind, &a.prefix, |addr| {
                eprintln!("listening on http://{addr}{} (store {root})", a.prefix.trim_end_matches('/'));
            }))
            .map_err(CliError::io(Path::new("<listener>")))
        }
    }
}
