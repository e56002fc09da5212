//! Analysis kinds: input selection, engine dispatch and the features each
//! kind contributes to the twin.

use std::fmt;
use std::str::FromStr;

use mstwin_core::asset::{AssetRecord, Modality, Scale};
use mstwin_core::ehr::EhrRecord;
use mstwin_core::ingest::{parse_ehr, parse_mesh_obj, parse_motion_bundle, parse_sensor_csv, parse_volume, ParseError};
use mstwin_core::kinematics::{
    classify_regions, frame_descriptors, imu_rom, kinematic_asymmetry, Region, DEFAULT_SPEED_THRESHOLD_MM_S,
    DEFAULT_VOXEL_MM,
};
use mstwin_core::mapping::{characterize_vertebra, sphere_stats, texture_map, DEFAULT_BINS, DEFAULT_DEPTH_MM, DEFAULT_SAMPLES};
use mstwin_core::registration::{extract_isosurface_points, icp_register, IcpParams};
use mstwin_core::semg::{analyze_trace, SemgConfig};
use mstwin_core::spine::{cobb_angle, intervertebral_metrics, spine_report, AnatomicalFrame, Plane, SpineModel};
use mstwin_core::trace::Unit;
use mstwin_core::transform::RigidTransform;
use mstwin_core::{MeshF64, MotionSequenceF64, SensorTraceF64, VolumeF64};
use nalgebra::{Point3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ServiceError;

/// Mesh label prefix that marks a vertebra model.
pub const VERTEBRA_PREFIX: &str = "vertebra";
pub const DEFAULT_ISO_THRESHOLD: i16 = 200;
pub const DEFAULT_VERTEBRA_RADIUS_MM: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    Register,
    Texture,
    SphereStats,
    VertebraHu,
    SpineMetrics,
    SemgFeatures,
    MotionDescriptors,
    ImuRom,
    EhrFeatures,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 9] = [
        AnalysisKind::Register,
        AnalysisKind::Texture,
        AnalysisKind::SphereStats,
        AnalysisKind::VertebraHu,
        AnalysisKind::SpineMetrics,
        AnalysisKind::SemgFeatures,
        AnalysisKind::MotionDescriptors,
        AnalysisKind::ImuRom,
        AnalysisKind::EhrFeatures,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            AnalysisKind::Register => "register",
            AnalysisKind::Texture => "texture",
            AnalysisKind::SphereStats => "sphere-stats",
            AnalysisKind::VertebraHu => "vertebra-hu",
            AnalysisKind::SpineMetrics => "spine-metrics",
            AnalysisKind::SemgFeatures => "semg-features",
            AnalysisKind::MotionDescriptors => "motion-descriptors",
            AnalysisKind::ImuRom => "imu-rom",
            AnalysisKind::EhrFeatures => "ehr-features",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AnalysisKind {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnalysisKind::ALL.into_iter().find(|k| k.tag() == s).ok_or_else(|| {
            let known: Vec<_> = AnalysisKind::ALL.iter().map(|k| k.tag()).collect();
            ServiceError::BadRequest(format!("unknown analysis kind {s:?}; known: {}", known.join(", ")))
        })
    }
}

/// Stored bytes of an asset plus its sidecar header, if any.
#[derive(Debug, Clone)]
pub struct LoadedAsset {
    pub bytes: Vec<u8>,
    pub meta: Option<Vec<u8>>,
}

/// One feature emitted by an analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOut {
    pub name: String,
    pub value: f64,
    pub unit: &'static str,
    pub modality: Modality,
    pub scale: Scale,
}

fn feature(name: &str, value: f64, unit: &'static str, modality: Modality, scale: Scale) -> FeatureOut {
    FeatureOut {
        name: name.into(),
        value,
        unit,
        modality,
        scale,
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub result: Value,
    pub inputs: Vec<String>,
    pub features: Vec<FeatureOut>,
}

pub type Loader<'a> = dyn Fn(&AssetRecord) -> Result<LoadedAsset, ServiceError> + 'a;

fn require_meta<'a>(m: Modality, meta: Option<&'a [u8]>) -> Result<&'a [u8], ServiceError> {
    meta.ok_or_else(|| ServiceError::BadRequest(format!("{m} assets need a JSON header (x-asset-meta)")))
}

/// Parses asset bytes with the modality's strict parser. Used both to gate
/// uploads and to load stored assets.
pub fn validate_upload(m: Modality, bytes: &[u8], meta: Option<&[u8]>, label: &str) -> Result<(), ServiceError> {
    match m {
        Modality::Mesh => {
            parse_mesh_obj::<f64>(bytes, label)?;
        }
        Modality::Volume => {
            parse_volume::<f64>(require_meta(m, meta)?, bytes)?;
        }
        Modality::Semg => {
            let t = parse_sensor_csv::<f64>(bytes, require_meta(m, meta)?)?;
            if !t.channels().iter().any(|c| c.unit == Unit::Millivolt) {
                return Err(plain("sEMG trace has no mV channel").into());
            }
        }
        Modality::Imu => {
            let t = parse_sensor_csv::<f64>(bytes, require_meta(m, meta)?)?;
            if t.quaternion_groups().map_err(|e| plain(&e.to_string()))?.is_empty() {
                return Err(plain("IMU trace has no quaternion channels").into());
            }
        }
        Modality::Motion => {
            parse_motion_bundle::<f64>(bytes)?;
        }
        Modality::Ehr => {
            parse_ehr(bytes)?;
        }
    }
    Ok(())
}

fn plain(msg: &str) -> ParseError {
    ParseError {
        message: msg.into(),
        location: None,
    }
}

fn label_of(a: &AssetRecord) -> String {
    a.label.clone().unwrap_or_else(|| a.asset_id.clone())
}

fn is_vertebra(a: &AssetRecord) -> bool {
    a.modality == Modality::Mesh && a.label.as_deref().is_some_and(|l| l.starts_with(VERTEBRA_PREFIX))
}

fn load_mesh(a: &AssetRecord, load: &Loader) -> Result<MeshF64, ServiceError> {
    Ok(parse_mesh_obj(&load(a)?.bytes, &label_of(a))?)
}

fn load_volume(a: &AssetRecord, load: &Loader) -> Result<VolumeF64, ServiceError> {
    let l = load(a)?;
    Ok(parse_volume(require_meta(a.modality, l.meta.as_deref())?, &l.bytes)?)
}

fn load_trace(a: &AssetRecord, load: &Loader) -> Result<SensorTraceF64, ServiceError> {
    let l = load(a)?;
    Ok(parse_sensor_csv(&l.bytes, require_meta(a.modality, l.meta.as_deref())?)?)
}

fn load_motion(a: &AssetRecord, load: &Loader) -> Result<MotionSequenceF64, ServiceError> {
    Ok(parse_motion_bundle(&load(a)?.bytes)?)
}

fn load_ehr(a: &AssetRecord, load: &Loader) -> Result<EhrRecord, ServiceError> {
    Ok(parse_ehr(&load(a)?.bytes)?)
}

fn params<P: DeserializeOwned + Default>(kind: AnalysisKind, v: &Value) -> Result<P, ServiceError> {
    if v.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| ServiceError::BadRequest(format!("invalid {kind} parameters: {e}")))
}

/// Explicitly named asset, or the most recent one matching `pred`.
fn pick<'a>(
    assets: &'a [AssetRecord],
    kind: AnalysisKind,
    id: Option<&str>,
    what: &str,
    pred: impl Fn(&AssetRecord) -> bool,
) -> Result<&'a AssetRecord, ServiceError> {
    match id {
        Some(id) => {
            let a = assets
                .iter()
                .find(|a| a.asset_id == id)
                .ok_or_else(|| ServiceError::MissingDependency(format!("{kind} input asset {id} does not exist")))?;
            if !pred(a) {
                return Err(ServiceError::BadRequest(format!("asset {id} is not a {what}")));
            }
            Ok(a)
        }
        None => assets
            .iter()
            .rev()
            .find(|a| pred(a))
            .ok_or_else(|| ServiceError::MissingDependency(format!("{kind} requires a {what} asset"))),
    }
}

fn of(m: Modality) -> impl Fn(&AssetRecord) -> bool {
    move |a| a.modality == m
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("engine result serializes")
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegisterParams {
    source: Option<String>,
    target: Option<String>,
    threshold_hu: Option<i16>,
    icp: IcpParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TextureParams {
    mesh: Option<String>,
    volume: Option<String>,
    depth_mm: Option<f64>,
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SphereParams {
    volume: Option<String>,
    center_mm: Option<[f64; 3]>,
    radius_mm: Option<f64>,
    bins: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VertebraHuParams {
    volume: Option<String>,
    meshes: Option<Vec<String>>,
    radius_mm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpineParams {
    meshes: Option<Vec<String>>,
    frame: Option<AnatomicalFrame<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SemgParams {
    asset: Option<String>,
    config: SemgConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MotionParams {
    asset: Option<String>,
    voxel_mm: Option<f64>,
    threshold_mm_s: Option<f64>,
    lateral: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AssetParam {
    asset: Option<String>,
}

/// Runs `kind` against the registered assets.
pub fn run(kind: AnalysisKind, raw_params: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    match kind {
        AnalysisKind::Register => register(raw_params, assets, load),
        AnalysisKind::Texture => texture(raw_params, assets, load),
        AnalysisKind::SphereStats => sphere(raw_params, assets, load),
        AnalysisKind::VertebraHu => vertebra_hu(raw_params, assets, load),
        AnalysisKind::SpineMetrics => spine(raw_params, assets, load),
        AnalysisKind::SemgFeatures => semg(raw_params, assets, load),
        AnalysisKind::MotionDescriptors => motion(raw_params, assets, load),
        AnalysisKind::ImuRom => imu(raw_params, assets, load),
        AnalysisKind::EhrFeatures => ehr(raw_params, assets, load),
    }
}

fn points_of(a: &AssetRecord, load: &Loader, threshold: i16) -> Result<Vec<Point3<f64>>, ServiceError> {
    match a.modality {
        Modality::Mesh => Ok(load_mesh(a, load)?.vertices),
        Modality::Volume => {
            let iso = extract_isosurface_points(&load_volume(a, load)?, threshold);
            if iso.empty {
                return Err(ServiceError::engine(
                    "register",
                    format!("no voxel of {} reaches threshold {threshold}", a.asset_id),
                ));
            }
            Ok(iso.points)
        }
        m => Err(ServiceError::BadRequest(format!("register cannot use {m} asset {}", a.asset_id))),
    }
}

fn register(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::Register;
    let p: RegisterParams = params(kind, raw)?;
    let surface = |a: &AssetRecord| a.modality == Modality::Mesh && !is_vertebra(a);
    let source = match p.source.as_deref() {
        Some(id) => pick(assets, kind, Some(id), "mesh", of(Modality::Mesh))?,
        None => pick(assets, kind, None, "surface mesh", surface).or_else(|_| pick(assets, kind, None, "mesh", of(Modality::Mesh)))?,
    };
    let target = match p.target.as_deref() {
        Some(id) => pick(assets, kind, Some(id), "mesh or volume", |a| matches!(a.modality, Modality::Mesh | Modality::Volume))?,
        None => pick(assets, kind, None, "volume", of(Modality::Volume)).or_else(|_| {
            pick(assets, kind, None, "second mesh", |a| a.modality == Modality::Mesh && a.asset_id != source.asset_id)
                .map_err(|_| ServiceError::MissingDependency("register requires a mesh and a volume, or two point sets".into()))
        })?,
    };
    let threshold = p.threshold_hu.unwrap_or(DEFAULT_ISO_THRESHOLD);
    let src = points_of(source, load, threshold)?;
    let tgt = points_of(target, load, threshold)?;
    let res = icp_register(&src, &tgt, &RigidTransform::identity(), &p.icp).map_err(|e| ServiceError::engine("register", e))?;
    Ok(AnalysisOutput {
        result: json!({ "source": source.asset_id, "target": target.asset_id, "registration": to_value(&res) }),
        inputs: vec![source.asset_id.clone(), target.asset_id.clone()],
        features: vec![feature("registration_rms_mm", res.rms_mm, "mm", Modality::Mesh, Scale::Meso)],
    })
}

fn texture(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::Texture;
    let p: TextureParams = params(kind, raw)?;
    let m = pick(assets, kind, p.mesh.as_deref(), "mesh", of(Modality::Mesh))?;
    let v = pick(assets, kind, p.volume.as_deref(), "volume", of(Modality::Volume))?;
    let depth = p.depth_mm.unwrap_or(DEFAULT_DEPTH_MM);
    let tex = texture_map(&load_mesh(m, load)?, &load_volume(v, load)?, depth, p.samples.unwrap_or(DEFAULT_SAMPLES))
        .map_err(|e| ServiceError::engine("texture", e))?;
    let mut features = Vec::new();
    if let Some(mean) = tex.valid_mean() {
        features.push(feature("surface_intensity_mean_hu", mean, "HU", Modality::Volume, Scale::Micro));
    }
    Ok(AnalysisOutput {
        result: json!({ "volume": v.asset_id, "texture": tex.to_export_json(&m.asset_id) }),
        inputs: vec![m.asset_id.clone(), v.asset_id.clone()],
        features,
    })
}

fn sphere(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::SphereStats;
    let p: SphereParams = params(kind, raw)?;
    let v = pick(assets, kind, p.volume.as_deref(), "volume", of(Modality::Volume))?;
    let center = p.center_mm.ok_or_else(|| ServiceError::BadRequest("sphere-stats needs center_mm".into()))?;
    let radius = p.radius_mm.ok_or_else(|| ServiceError::BadRequest("sphere-stats needs radius_mm".into()))?;
    let stats = sphere_stats(&load_volume(v, load)?, &Point3::from(center), radius, p.bins.unwrap_or(DEFAULT_BINS))
        .map_err(|e| ServiceError::engine("sphere-stats", e))?;
    Ok(AnalysisOutput {
        result: json!({ "volume": v.asset_id, "stats": to_value(&stats) }),
        inputs: vec![v.asset_id.clone()],
        features: vec![
            feature("sphere_hu_mean", stats.mean, "HU", Modality::Volume, Scale::Micro),
            feature("sphere_hu_std", stats.std, "HU", Modality::Volume, Scale::Micro),
        ],
    })
}

fn vertebra_meshes<'a>(kind: AnalysisKind, ids: Option<&[String]>, assets: &'a [AssetRecord]) -> Result<Vec<&'a AssetRecord>, ServiceError> {
    match ids {
        Some(ids) => ids.iter().map(|id| pick(assets, kind, Some(id), "mesh", of(Modality::Mesh))).collect(),
        None => Ok(assets.iter().filter(|a| is_vertebra(a)).collect()),
    }
}

fn vertebra_hu(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::VertebraHu;
    let p: VertebraHuParams = params(kind, raw)?;
    let v = pick(assets, kind, p.volume.as_deref(), "volume", of(Modality::Volume))?;
    let meshes = vertebra_meshes(kind, p.meshes.as_deref(), assets)?;
    if meshes.is_empty() {
        return Err(ServiceError::MissingDependency("vertebra-hu requires at least one vertebra mesh".into()));
    }
    let volume = load_volume(v, load)?;
    let radius = p.radius_mm.unwrap_or(DEFAULT_VERTEBRA_RADIUS_MM);
    let mut levels = Vec::new();
    for m in &meshes {
        levels.push(characterize_vertebra(&load_mesh(m, load)?, &volume, radius).map_err(|e| ServiceError::engine(format!("vertebra-hu {}", m.asset_id), e))?);
    }
    let mean = levels.iter().map(|c| c.stats.mean).sum::<f64>() / levels.len() as f64;
    let mut inputs: Vec<String> = meshes.iter().map(|m| m.asset_id.clone()).collect();
    inputs.push(v.asset_id.clone());
    Ok(AnalysisOutput {
        result: json!({ "volume": v.asset_id, "levels": to_value(&levels) }),
        inputs,
        features: vec![feature("vertebral_hu_mean", mean, "HU", Modality::Volume, Scale::Micro)],
    })
}

fn spine(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::SpineMetrics;
    let p: SpineParams = params(kind, raw)?;
    let meshes = vertebra_meshes(kind, p.meshes.as_deref(), assets)?;
    if meshes.len() < 2 {
        return Err(ServiceError::MissingDependency(format!(
            "spine-metrics requires ≥2 vertebrae, got {}",
            meshes.len()
        )));
    }
    let frame = match p.frame {
        Some(f) => AnatomicalFrame::new(f.lateral, f.ap, f.vertical).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
        None => AnatomicalFrame::default(),
    };
    let loaded = meshes
        .iter()
        .map(|m| Ok((label_of(m), load_mesh(m, load)?)))
        .collect::<Result<Vec<_>, ServiceError>>()?;
    let model = SpineModel::from_meshes(&loaded, frame).map_err(|e| ServiceError::engine("spine-metrics", e))?;
    let coronal = cobb_angle(&model, Plane::Coronal);
    let sagittal = cobb_angle(&model, Plane::Sagittal);
    let mut features = vec![
        feature("cobb_coronal_deg", coronal.angle_deg, "deg", Modality::Mesh, Scale::Meso),
        feature("cobb_sagittal_deg", sagittal.angle_deg, "deg", Modality::Mesh, Scale::Meso),
    ];
    let discs = intervertebral_metrics(&model);
    if let Some(h) = discs.iter().map(|d| d.disc_height_mm).reduce(f64::min) {
        features.push(feature("disc_height_mm", h, "mm", Modality::Mesh, Scale::Meso));
    }
    Ok(AnalysisOutput {
        result: spine_report(&model),
        inputs: meshes.iter().map(|m| m.asset_id.clone()).collect(),
        features,
    })
}

fn semg(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::SemgFeatures;
    let p: SemgParams = params(kind, raw)?;
    let a = pick(assets, kind, p.asset.as_deref(), "semg", of(Modality::Semg))?;
    let report = analyze_trace(&load_trace(a, load)?, &p.config).map_err(|e| ServiceError::engine("semg-features", e))?;
    let (m, s) = (Modality::Semg, Scale::Meso);
    let mut features = Vec::new();
    let mut push = |name: &str, v: Option<f64>, unit| {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            features.push(feature(name, v, unit, m, s));
        }
    };
    push("iemg_mean_mv_s", report.mean_of(|f| Some(f.iemg_mv_s)), "mV*s");
    push("rms_mean_mv", report.mean_of(|f| Some(f.rms_mv)), "mV");
    push("mf_mean_hz", report.mean_of(|f| f.mf_hz), "Hz");
    push("mpf_mean_hz", report.mean_of(|f| f.mpf_hz), "Hz");
    push("fatigue_slope_hz_per_s", report.mean_fatigue_slope(), "Hz/s");
    push("emg_asymmetry", report.mean_asymmetry(), "1");
    Ok(AnalysisOutput {
        result: to_value(&report),
        inputs: vec![a.asset_id.clone()],
        features,
    })
}

fn motion(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::MotionDescriptors;
    let p: MotionParams = params(kind, raw)?;
    let a = pick(assets, kind, p.asset.as_deref(), "motion", of(Modality::Motion))?;
    let seq = load_motion(a, load)?;
    let voxel = p.voxel_mm.unwrap_or(DEFAULT_VOXEL_MM);
    let threshold = p.threshold_mm_s.unwrap_or(DEFAULT_SPEED_THRESHOLD_MM_S);
    let err = |e| ServiceError::engine("motion-descriptors", e);
    let descriptors = frame_descriptors(&seq, voxel).map_err(err)?;
    let mut features = Vec::new();
    let mut regions = Value::Null;
    if seq.correspondence() {
        let map = classify_regions(&seq, voxel, threshold).map_err(err)?;
        let total = map.labels.len().max(1) as f64;
        features.push(feature("dynamic_voxel_fraction", map.count(Region::Dynamic) as f64 / total, "1", Modality::Motion, Scale::Macro));
        regions = map.to_export_json();
        let lateral = Vector3::from(p.lateral.unwrap_or([1.0, 0.0, 0.0]));
        let lateral = lateral.try_normalize(0.0).ok_or_else(|| ServiceError::BadRequest("lateral axis is zero".into()))?;
        if let Ok(asym) = kinematic_asymmetry(&seq, &lateral) {
            features.push(feature("kinematic_asymmetry", asym, "1", Modality::Motion, Scale::Macro));
        }
        let speeds: Vec<f64> = descriptors.iter().flat_map(|d| d.speeds_mm_s.iter().flatten().copied()).collect();
        if !speeds.is_empty() {
            features.push(feature("mean_speed_mm_s", speeds.iter().sum::<f64>() / speeds.len() as f64, "mm/s", Modality::Motion, Scale::Macro));
        }
    }
    Ok(AnalysisOutput {
        result: json!({ "descriptors": to_value(&descriptors), "regions": regions }),
        inputs: vec![a.asset_id.clone()],
        features,
    })
}

fn imu(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::ImuRom;
    let p: AssetParam = params(kind, raw)?;
    let a = pick(assets, kind, p.asset.as_deref(), "imu", of(Modality::Imu))?;
    let trace = load_trace(a, load)?;
    let groups = trace.quaternion_groups().map_err(|e| ServiceError::engine("imu-rom", e))?;
    let mut sensors = Vec::new();
    for g in &groups {
        let rom = imu_rom(&trace.quaternion_series(*g)).map_err(|e| ServiceError::engine("imu-rom", e))?;
        sensors.push(json!({ "sensor": trace.channels()[*g].name, "rom_deg": rom }));
    }
    let max = sensors.iter().filter_map(|s| s["rom_deg"].as_f64()).reduce(f64::max);
    Ok(AnalysisOutput {
        result: json!({ "sensors": sensors }),
        inputs: vec![a.asset_id.clone()],
        features: max.into_iter().map(|r| feature("imu_rom_deg", r, "deg", Modality::Imu, Scale::Macro)).collect(),
    })
}

fn ehr(raw: &Value, assets: &[AssetRecord], load: &Loader) -> Result<AnalysisOutput, ServiceError> {
    let kind = AnalysisKind::EhrFeatures;
    let p: AssetParam = params(kind, raw)?;
    let a = pick(assets, kind, p.asset.as_deref(), "ehr", of(Modality::Ehr))?;
    let rec = load_ehr(a, load)?;
    let (m, s) = (Modality::Ehr, Scale::Macro);
    let mut features = vec![feature("age_years", rec.demographics.age, "years", m, s)];
    if let Some(bmi) = rec.bmi() {
        features.push(feature("bmi", bmi, "kg/m^2", m, s));
    }
    if let Some(b) = rec.biomarkers.iter().find(|b| b.name == "facet_degeneration") {
        features.push(feature("facet_degeneration", b.value, "grade", m, s));
    }
    Ok(AnalysisOutput {
        result: json!({ "record": to_value(&rec) }),
        inputs: vec![a.asset_id.clone()],
        features,
    })
}
