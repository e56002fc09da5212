//! Serialized patient twin: asset registry, features, graph and risk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::asset::{checksum, AssetRecord, Modality};
use crate::inference::{
    build_feature_graph, feature_node, normalize_features, risk_score, suggest_followups, FeatureGraph,
    FeatureVector, InferenceError, Layer, ReferencePopulation, RiskModel, RiskScore, RuleSet,
};

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub patient_id: String,
    pub schema_version: String,
    pub assets: BTreeMap<Modality, Vec<AssetRecord>>,
    pub features: FeatureVector,
    pub graph: Option<FeatureGraph>,
    pub risk: Option<RiskScore>,
}

/// Patient ids are `[A-Za-z0-9_-]{1,64}`.
pub fn valid_patient_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl TwinState {
    pub fn empty(patient_id: &str) -> Self {
        Self {
            patient_id: patient_id.into(),
            schema_version: SCHEMA_VERSION.into(),
            assets: BTreeMap::new(),
            features: FeatureVector::new(),
            graph: None,
            risk: None,
        }
    }

    pub fn asset_count(&self) -> usize {
        self.assets.values().map(Vec::len).sum()
    }

    pub fn assets_of(&self, m: Modality) -> &[AssetRecord] {
        self.assets.get(&m).map_or(&[], Vec::as_slice)
    }

    pub fn find_asset(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.assets.values().flatten().find(|a| a.asset_id == asset_id)
    }

    /// Schema invariant violations; empty iff valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version.is_empty() {
            out.push("schema_version missing".into());
        }
        if !valid_patient_id(&self.patient_id) {
            out.push(format!("invalid patient id {:?}", self.patient_id));
        }
        for (m, records) in &self.assets {
            for a in records {
                if a.modality != *m {
                    out.push(format!("asset {} filed under {m}", a.asset_id));
                }
                if !a.scale_is_allowed() {
                    out.push(format!("asset {} has scale {} not allowed for {m}", a.asset_id, a.scale));
                }
                if a.checksum.len() != 64 || !a.checksum.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                    out.push(format!("asset {} checksum is not lowercase hex SHA-256", a.asset_id));
                }
            }
        }
        for (name, f) in &self.features.entries {
            if !f.value.is_finite() {
                out.push(format!("feature {name} is not finite"));
            }
            if !f.modality.allowed_scales().contains(&f.scale) {
                out.push(format!("feature {name} has scale {} not allowed for {}", f.scale, f.modality));
            }
        }
        if let Some(g) = &self.graph {
            for n in g.nodes.iter().filter(|n| n.layer == Layer::Feature) {
                if self.features.get(&n.label).is_none() || n.id != feature_node(&n.label) {
                    out.push(format!("graph node {} has no feature entry", n.id));
                }
            }
            out.extend(g.problems());
        }
        if let Some(r) = &self.risk {
            if !(0.0..=1.0).contains(&r.probability) {
                out.push(format!("risk probability {} outside [0, 1]", r.probability));
            }
        }
        out
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("twin state serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// SHA-256 of the serialized state.
    pub fn hash(&self) -> String {
        checksum(&self.to_json())
    }

    /// Recomputes risk, follow-ups and graph from the current features.
    pub fn refresh(&mut self, model: &RiskModel, reference: &ReferencePopulation, rules: &RuleSet) -> Result<(), InferenceError> {
        let z = normalize_features(&self.features, reference)?;
        let mut risk = risk_score(&z, model)?;
        risk.followups = suggest_followups(&z, &risk, rules)?;
        self.graph = Some(build_feature_graph(&self.features, &risk)?);
        self.risk = Some(risk);
        Ok(())
    }
}
