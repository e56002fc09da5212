//! Plain-directory patient store.
//!
//! ```text
//! <root>/<patient_id>/
//!     manifest.json        asset records and analysis index
//!     twin.json            current TwinState
//!     assets/<asset_id>.<ext> [+ <asset_id>.meta.json]
//!     analyses/<analysis_id>.json
//!     .lock                advisory writer lock
//! ```
//!
//! Every document is replaced by write-to-temp, fsync, rename, so readers
//! and crash survivors only ever see a complete file. Mutations of one
//! patient hold an exclusive lock on `.lock`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use mstwin_core::asset::{checksum, AssetRecord, Modality, Scale};
use mstwin_core::inference::{self, Feature, ReferencePopulation, RiskModel, RiskScore, RuleSet};
use mstwin_core::twin::{valid_patient_id, TwinState};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{self, AnalysisKind, LoadedAsset};
use crate::error::ServiceError;

pub const STORE_ENV: &str = "MSTWIN_STORE";
const MANIFEST: &str = "manifest.json";
const TWIN: &str = "twin.json";
const LOCK: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub analysis_id: String,
    pub kind: AnalysisKind,
    pub created_at: String,
    pub params: Value,
    pub inputs: Vec<String>,
    pub features: Vec<String>,
    pub result_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub patient_id: String,
    pub assets: Vec<AssetRecord>,
    pub analyses: Vec<AnalysisRecord>,
}

/// Upload metadata carried next to the asset bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UploadMeta {
    pub label: Option<String>,
    pub scale: Option<Scale>,
    pub acquired_at: Option<String>,
    /// Format header (volume, sEMG and IMU sidecar JSON).
    pub header: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResponse {
    pub analysis_id: String,
    pub kind: AnalysisKind,
    pub features: Vec<String>,
    pub result: Value,
}

#[derive(Debug, Clone)]
pub struct PatientStore {
    root: PathBuf,
    model: RiskModel,
    reference: ReferencePopulation,
    rules: RuleSet,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` through a synced temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("doc");
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        File::open(dir)?.sync_all()
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Exclusive per-patient writer lock, released on drop.
struct WriterLock(File);

impl WriterLock {
    fn acquire(dir: &Path) -> Result<Self, ServiceError> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK))?;
        f.lock()?;
        Ok(Self(f))
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

/// Next free `{prefix}-{n:04}` id, counting both the index and files
/// already on disk so an interrupted write never causes id reuse.
fn next_id(prefix: &str, known: impl Iterator<Item = String>, dir: &Path) -> std::io::Result<String> {
    let parse = |s: &str| -> Option<u32> {
        let rest = s.strip_prefix(prefix)?.strip_prefix('-')?;
        rest.get(..4).filter(|d| d.bytes().all(|b| b.is_ascii_digit()))?.parse().ok()
    };
    let mut max = known.filter_map(|s| parse(&s)).max().unwrap_or(0);
    for e in fs::read_dir(dir)? {
        if let Some(n) = parse(&e?.file_name().to_string_lossy()) {
            max = max.max(n);
        }
    }
    Ok(format!("{prefix}-{:04}", max + 1))
}

impl PatientStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            model: RiskModel::default_model(),
            reference: ReferencePopulation::default_reference(),
            rules: RuleSet::default_rules(),
        })
    }

    /// Store rooted at `$MSTWIN_STORE`, falling back to `./mstwin-store`.
    pub fn from_env() -> Result<Self, ServiceError> {
        Self::open(std::env::var_os(STORE_ENV).map_or_else(|| PathBuf::from("mstwin-store"), PathBuf::from))
    }

    pub fn with_inference(mut self, model: RiskModel, reference: ReferencePopulation, rules: RuleSet) -> Self {
        self.model = model;
        self.reference = reference;
        self.rules = rules;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn reference(&self) -> &ReferencePopulation {
        &self.reference
    }

    pub fn patient_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if !valid_patient_id(id) {
            return Err(ServiceError::InvalidId(id.into()));
        }
        Ok(self.root.join(id))
    }

    fn existing_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        let dir = self.patient_dir(id)?;
        if !dir.join(TWIN).is_file() {
            return Err(ServiceError::NotFound(format!("patient {id}")));
        }
        Ok(dir)
    }

    fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D, ServiceError> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn write_json<S: Serialize>(path: &Path, doc: &S) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec_pretty(doc).expect("store document serializes");
        Ok(atomic_write(path, &bytes)?)
    }

    pub fn create_patient(&self, id: &str) -> Result<TwinState, ServiceError> {
        let dir = self.patient_dir(id)?;
        let conflict = || ServiceError::Conflict(format!("patient {id} already exists"));
        match fs::create_dir(&dir) {
            Ok(()) => {}
            // a directory without twin.json is a creation cut short; finish it
            Err(e) if e.kind() == ErrorKind::AlreadyExists && !dir.join(TWIN).exists() => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(conflict()),
            Err(e) => return Err(e.into()),
        }
        let _lock = WriterLock::acquire(&dir)?;
        if dir.join(TWIN).exists() {
            return Err(conflict());
        }
        fs::create_dir_all(dir.join("assets"))?;
        fs::create_dir_all(dir.join("analyses"))?;
        Self::write_json(
            &dir.join(MANIFEST),
            &Manifest {
                patient_id: id.into(),
                assets: Vec::new(),
                analyses: Vec::new(),
            },
        )?;
        let twin = TwinState::empty(id);
        atomic_write(&dir.join(TWIN), &twin.to_json())?;
        Ok(twin)
    }

    pub fn list_patients(&self) -> Result<Vec<String>, ServiceError> {
        let mut out = Vec::new();
        for e in fs::read_dir(&self.root)? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if valid_patient_id(&name) && self.root.join(&name).join(TWIN).is_file() {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Current `twin.json` bytes, verbatim.
    pub fn twin_bytes(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        Ok(fs::read(self.existing_dir(id)?.join(TWIN))?)
    }

    pub fn twin(&self, id: &str) -> Result<TwinState, ServiceError> {
        Self::read_json(&self.existing_dir(id)?.join(TWIN))
    }

    pub fn manifest(&self, id: &str) -> Result<Manifest, ServiceError> {
        Self::read_json(&self.existing_dir(id)?.join(MANIFEST))
    }

    pub fn analysis_result(&self, id: &str, analysis_id: &str) -> Result<Value, ServiceError> {
        let m = self.manifest(id)?;
        let rec = m
            .analyses
            .iter()
            .find(|a| a.analysis_id == analysis_id)
            .ok_or_else(|| ServiceError::NotFound(format!("analysis {analysis_id}")))?;
        Self::read_json(&self.existing_dir(id)?.join(&rec.result_path))
    }

    pub fn asset_bytes(&self, id: &str, asset: &AssetRecord) -> Result<LoadedAsset, ServiceError> {
        let dir = self.existing_dir(id)?;
        let bytes = fs::read(dir.join(&asset.source_path))?;
        let meta_path = dir.join("assets").join(format!("{}.meta.json", asset.asset_id));
        let meta = match fs::read(&meta_path) {
            Ok(b) => Some(b),
            Err(e) if e.kind() == ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        Ok(LoadedAsset { bytes, meta })
    }

    /// Validates and stores one asset, returning its record.
    pub fn upload_asset(&self, id: &str, modality: Modality, bytes: &[u8], meta: UploadMeta) -> Result<AssetRecord, ServiceError> {
        let dir = self.existing_dir(id)?;
        let scale = meta.scale.unwrap_or_else(|| modality.default_scale());
        if !modality.allowed_scales().contains(&scale) {
            return Err(ServiceError::BadRequest(format!("scale {scale} is not allowed for {modality}")));
        }
        if let Some(label) = &meta.label {
            if label.is_empty() || label.len() > 128 || label.chars().any(char::is_control) {
                return Err(ServiceError::BadRequest("label must be 1-128 printable characters".into()));
            }
        }
        analysis::validate_upload(modality, bytes, meta.header.as_deref(), meta.label.as_deref().unwrap_or(modality.tag()))?;

        let _lock = WriterLock::acquire(&dir)?;
        let mut manifest: Manifest = Self::read_json(&dir.join(MANIFEST))?;
        let mut twin: TwinState = Self::read_json(&dir.join(TWIN))?;
        let assets_dir = dir.join("assets");
        let asset_id = next_id(modality.tag(), manifest.assets.iter().map(|a| a.asset_id.clone()), &assets_dir)?;
        let source_path = format!("assets/{asset_id}.{}", modality.extension());
        atomic_write(&dir.join(&source_path), bytes)?;
        if let Some(h) = &meta.header {
            atomic_write(&assets_dir.join(format!("{asset_id}.meta.json")), h)?;
        }
        let record = AssetRecord {
            asset_id,
            modality,
            source_path,
            scale,
            checksum: checksum(bytes),
            acquired_at: meta.acquired_at.unwrap_or_else(now),
            label: meta.label,
        };
        manifest.assets.push(record.clone());
        Self::write_json(&dir.join(MANIFEST), &manifest)?;
        twin.assets.entry(modality).or_default().push(record.clone());
        atomic_write(&dir.join(TWIN), &twin.to_json())?;
        Ok(record)
    }

    /// Runs one analysis, persists its result and republishes the twin with
    /// the new features, risk and graph.
    pub fn run_analysis(&self, id: &str, kind: AnalysisKind, params: Value) -> Result<AnalysisResponse, ServiceError> {
        let dir = self.existing_dir(id)?;
        let _lock = WriterLock::acquire(&dir)?;
        let mut manifest: Manifest = Self::read_json(&dir.join(MANIFEST))?;
        let mut twin: TwinState = Self::read_json(&dir.join(TWIN))?;

        let loader = |a: &AssetRecord| self.asset_bytes(id, a);
        let out = analysis::run(kind, &params, &manifest.assets, &loader)?;

        let analyses_dir = dir.join("analyses");
        let analysis_id = next_id(kind.tag(), manifest.analyses.iter().map(|a| a.analysis_id.clone()), &analyses_dir)?;
        let result_path = format!("analyses/{analysis_id}.json");
        let created_at = now();
        Self::write_json(
            &dir.join(&result_path),
            &serde_json::json!({
                "analysis_id": analysis_id,
                "kind": kind,
                "created_at": created_at,
                "params": params,
                "inputs": out.inputs,
                "result": out.result,
            }),
        )?;

        for f in &out.features {
            twin.features
                .set(
                    f.name.clone(),
                    Feature {
                        value: f.value,
                        unit: f.unit.into(),
                        modality: f.modality,
                        scale: f.scale,
                        timestamp: created_at.clone(),
                        provenance: format!("{kind}:{analysis_id}"),
                    },
                )
                .map_err(|e| ServiceError::engine(kind.tag(), e))?;
        }
        twin.refresh(&self.model, &self.reference, &self.rules)
            .map_err(|e| ServiceError::engine("risk", e))?;

        let names: Vec<String> = out.features.iter().map(|f| f.name.clone()).collect();
        manifest.analyses.push(AnalysisRecord {
            analysis_id: analysis_id.clone(),
            kind,
            created_at,
            params,
            inputs: out.inputs,
            features: names.clone(),
            result_path,
        });
        Self::write_json(&dir.join(MANIFEST), &manifest)?;
        atomic_write(&dir.join(TWIN), &twin.to_json())?;
        Ok(AnalysisResponse {
            analysis_id,
            kind,
            features: names,
            result: out.result,
        })
    }

    pub fn graph(&self, id: &str) -> Result<inference::FeatureGraph, ServiceError> {
        let twin = self.twin(id)?;
        twin.graph
            .ok_or_else(|| ServiceError::Conflict(format!("patient {id} has no analyses yet; graph not computed")))
    }

    pub fn risk(&self, id: &str) -> Result<RiskScore, ServiceError> {
        let twin = self.twin(id)?;
        twin.risk
            .ok_or_else(|| ServiceError::Conflict(format!("patient {id} has no analyses yet; risk not computed")))
    }

    /// Re-scores with raw feature overrides. Reads only; nothing is persisted.
    pub fn what_if(&self, id: &str, overrides: &BTreeMap<String, f64>) -> Result<RiskScore, ServiceError> {
        let twin = self.twin(id)?;
        if twin.risk.is_none() {
            return Err(ServiceError::Conflict(format!("patient {id} has no risk score yet")));
        }
        let unprocessable = |e: inference::InferenceError| ServiceError::Unprocessable(e.to_string());
        let scenario = inference::apply_overrides(&twin.features, overrides, &self.reference).map_err(unprocessable)?;
        let z = inference::normalize_features(&scenario, &self.reference).map_err(unprocessable)?;
        let mut risk = inference::risk_score(&z, &self.model).map_err(unprocessable)?;
        risk.followups = inference::suggest_followups(&z, &risk, &self.rules).map_err(unprocessable)?;
        Ok(risk)
    }
}
