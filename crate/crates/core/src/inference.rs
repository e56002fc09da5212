//! Feature-level integration: z-scoring against a reference population,
//! logistic surgical-risk score, the modality/feature/outcome graph,
//! follow-up rules and what-if re-scoring.
//!
//! The shipped model, reference population and rules are illustrative and
//! carry no clinical validity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::asset::{Modality, Scale};

pub const HORIZON: &str = "6-12 months";
pub const OUTCOME_ID: &str = "outcome:surgery_risk_6_12m";
const Z_CLIP: f64 = 3.0;

pub const DEFAULT_MODEL_JSON: &str = include_str!("../data/default_model.json");
pub const DEFAULT_REFERENCE_JSON: &str = include_str!("../data/reference_population.json");
pub const DEFAULT_RULES_JSON: &str = include_str!("../data/followup_rules.json");

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InferenceError {
    #[error("reference std for {0} must be positive")]
    NonPositiveStd(String),
    #[error("duplicate feature {0}")]
    DuplicateFeature(String),
    #[error("model feature {0} has no z entry")]
    MissingWeight(String),
    #[error("z entry {0} has no model weight")]
    UnweightedFeature(String),
    #[error("risk contribution {0} does not match the feature vector")]
    RiskMismatch(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("malformed rule {index}: {reason}")]
    MalformedRule { index: usize, reason: String },
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("invalid JSON: {0}")]
    Json(String),
}

/// One computed feature. The name is the key in [`FeatureVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub value: f64,
    pub unit: String,
    pub modality: Modality,
    pub scale: Scale,
    pub timestamp: String,
    /// Operation (and analysis id) that produced the value.
    pub provenance: String,
}

/// Named features; names are unique by construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub entries: BTreeMap<String, Feature>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or supersedes `name`.
    pub fn set(&mut self, name: impl Into<String>, f: Feature) -> Result<(), InferenceError> {
        let name = name.into();
        if !f.value.is_finite() {
            return Err(InferenceError::NonFinite(name));
        }
        self.entries.insert(name, f);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Feature> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub version: String,
    pub features: Vec<ModelWeight>,
    pub bias: f64,
}

impl RiskModel {
    pub fn from_json(s: &str) -> Result<Self, InferenceError> {
        let m: Self = serde_json::from_str(s).map_err(|e| InferenceError::Json(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for w in &m.features {
            if !seen.insert(w.name.as_str()) {
                return Err(InferenceError::DuplicateFeature(w.name.clone()));
            }
            if !w.weight.is_finite() {
                return Err(InferenceError::NonFinite(w.name.clone()));
            }
        }
        if !m.bias.is_finite() {
            return Err(InferenceError::NonFinite("bias".into()));
        }
        Ok(m)
    }

    pub fn default_model() -> Self {
        Self::from_json(DEFAULT_MODEL_JSON).expect("shipped model parses")
    }

    /// Same model with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.features.iter_mut().for_each(|w| w.weight *= c);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePopulation {
    pub population_id: String,
    pub stats: Vec<ReferenceStat>,
}

impl ReferencePopulation {
    pub fn from_json(s: &str) -> Result<Self, InferenceError> {
        let r: Self = serde_json::from_str(s).map_err(|e| InferenceError::Json(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for st in &r.stats {
            if !seen.insert(st.name.as_str()) {
                return Err(InferenceError::DuplicateFeature(st.name.clone()));
            }
        }
        Ok(r)
    }

    pub fn default_reference() -> Self {
        Self::from_json(DEFAULT_REFERENCE_JSON).expect("shipped reference parses")
    }

    pub fn get(&self, name: &str) -> Option<&ReferenceStat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEntry {
    pub name: String,
    pub z: f64,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZVector {
    pub population_id: String,
    pub entries: Vec<ZEntry>,
}

impl ZVector {
    pub fn get(&self, name: &str) -> Option<&ZEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// `z = clip((x − mean)/std, −3, 3)` for every reference feature; absent
/// features get `z = 0` and the imputed flag.
pub fn normalize_features(fv: &FeatureVector, reference: &ReferencePopulation) -> Result<ZVector, InferenceError> {
    let entries = reference
        .stats
        .iter()
        .map(|st| {
            if !(st.std > 0.0) {
                return Err(InferenceError::NonPositiveStd(st.name.clone()));
            }
            Ok(match fv.get(&st.name) {
                Some(f) => ZEntry {
                    name: st.name.clone(),
                    z: ((f.value - st.mean) / st.std).clamp(-Z_CLIP, Z_CLIP),
                    imputed: false,
                },
                None => ZEntry {
                    name: st.name.clone(),
                    z: 0.0,
                    imputed: true,
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ZVector {
        population_id: reference.population_id.clone(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub name: String,
    pub z: f64,
    pub weight: f64,
    /// `weight · z`.
    pub contribution: f64,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub probability: f64,
    pub logit: f64,
    pub bias: f64,
    pub horizon: String,
    pub contributions: Vec<Contribution>,
    pub model_version: String,
    pub population_id: String,
    /// Follow-up tags, filled by callers that evaluate a [`RuleSet`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followups: Vec<String>,
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression over the z-vector; the logit is the bias plus the
/// contributions summed in model order.
pub fn risk_score(z: &ZVector, model: &RiskModel) -> Result<RiskScore, InferenceError> {
    let weighted: BTreeSet<&str> = model.features.iter().map(|w| w.name.as_str()).collect();
    if let Some(e) = z.entries.iter().find(|e| !weighted.contains(e.name.as_str())) {
        return Err(InferenceError::UnweightedFeature(e.name.clone()));
    }
    let contributions = model
        .features
        .iter()
        .map(|w| {
            let e = z.get(&w.name).ok_or_else(|| InferenceError::MissingWeight(w.name.clone()))?;
            Ok(Contribution {
                name: w.name.clone(),
                z: e.z,
                weight: w.weight,
                contribution: w.weight * e.z,
                imputed: e.imputed,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    let logit = contributions.iter().fold(model.bias, |acc, c| acc + c.contribution);
    Ok(RiskScore {
        probability: logistic(logit),
        logit,
        bias: model.bias,
        horizon: HORIZON.into(),
        contributions,
        model_version: model.version.clone(),
        population_id: z.population_id.clone(),
        followups: Vec::new(),
    })
}

/// Normalize then score.
pub fn score_features(fv: &FeatureVector, model: &RiskModel, reference: &ReferencePopulation) -> Result<RiskScore, InferenceError> {
    risk_score(&normalize_features(fv, reference)?, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Modality,
    Feature,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub layer: Layer,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Three-layer chord graph: modality → feature → outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

pub fn modality_node(m: Modality) -> String {
    format!("modality:{}", m.tag())
}

pub fn feature_node(name: &str) -> String {
    format!("feature:{name}")
}

impl FeatureGraph {
    pub fn layer_of(&self, id: &str) -> Option<Layer> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.layer)
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.layer == Layer::Feature)
            .map(|n| n.label.as_str())
            .collect()
    }

    /// Structural problems: unknown endpoints, layer skips, weights outside
    /// `[0, 1]`, duplicate node ids.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                out.push(format!("duplicate node {}", n.id));
            }
        }
        for e in &self.edges {
            match (self.layer_of(&e.from), self.layer_of(&e.to)) {
                (Some(Layer::Modality), Some(Layer::Feature)) | (Some(Layer::Feature), Some(Layer::Outcome)) => {}
                (Some(a), Some(b)) => out.push(format!("edge {} -> {} joins {a:?} to {b:?}", e.from, e.to)),
                _ => out.push(format!("edge {} -> {} has an unknown endpoint", e.from, e.to)),
            }
            if !(0.0..=1.0).contains(&e.weight) {
                out.push(format!("edge {} -> {} weight {} outside [0, 1]", e.from, e.to, e.weight));
            }
        }
        out
    }
}

/// One node per feature and per producing modality plus the outcome node.
/// Modality edges weigh 1; outcome edges weigh `|c|/max|c|` (0 when every
/// contribution is zero or the feature is not scored).
pub fn build_feature_graph(fv: &FeatureVector, risk: &RiskScore) -> Result<FeatureGraph, InferenceError> {
    for c in risk.contributions.iter().filter(|c| !c.imputed) {
        if fv.get(&c.name).is_none() {
            return Err(InferenceError::RiskMismatch(c.name.clone()));
        }
    }
    for (name, _) in &fv.entries {
        if let Some(c) = risk.contributions.iter().find(|c| &c.name == name) {
            if c.imputed {
                return Err(InferenceError::RiskMismatch(name.clone()));
            }
        }
    }
    let contribution = |name: &str| {
        risk.contributions
            .iter()
            .find(|c| c.name == name)
            .map_or(0.0, |c| c.contribution.abs())
    };
    let max = fv.entries.keys().map(|n| contribution(n)).fold(0.0f64, f64::max);
    let modalities: BTreeSet<Modality> = fv.entries.values().map(|f| f.modality).collect();
    let mut g = FeatureGraph::default();
    for m in &modalities {
        g.nodes.push(GraphNode {
            id: modality_node(*m),
            layer: Layer::Modality,
            label: m.tag().into(),
        });
    }
    for (name, f) in &fv.entries {
        g.nodes.push(GraphNode {
            id: feature_node(name),
            layer: Layer::Feature,
            label: name.clone(),
        });
        g.edges.push(GraphEdge {
            from: modality_node(f.modality),
            to: feature_node(name),
            weight: 1.0,
        });
    }
    g.nodes.push(GraphNode {
        id: OUTCOME_ID.into(),
        layer: Layer::Outcome,
        label: format!("surgical intervention risk ({HORIZON})"),
    });
    for name in fv.entries.keys() {
        g.edges.push(GraphEdge {
            from: feature_node(name),
            to: OUTCOME_ID.into(),
            weight: if max > 0.0 { contribution(name) / max } else { 0.0 },
        });
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Cmp {
    fn holds(self, x: f64, v: f64) -> bool {
        match self {
            Cmp::Lt => x < v,
            Cmp::Le => x <= v,
            Cmp::Gt => x > v,
            Cmp::Ge => x >= v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Z { feature: String, op: Cmp, value: f64 },
    Probability { op: Cmp, value: f64 },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub when: Predicate,
    pub suggest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn from_json(s: &str) -> Result<Self, InferenceError> {
        serde_json::from_str(s).map_err(|e| InferenceError::MalformedRule {
            index: 0,
            reason: e.to_string(),
        })
    }

    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES_JSON).expect("shipped rules parse")
    }
}

fn check_predicate(p: &Predicate, z: &ZVector) -> Result<(), String> {
    match p {
        Predicate::Z { feature, value, .. } => {
            if z.get(feature).is_none() {
                return Err(format!("unknown feature {feature}"));
            }
            if !value.is_finite() {
                return Err("non-finite threshold".into());
            }
        }
        Predicate::Probability { value, .. } => {
            if !value.is_finite() {
                return Err("non-finite threshold".into());
            }
        }
        Predicate::All(ps) | Predicate::Any(ps) => {
            if ps.is_empty() {
                return Err("empty predicate list".into());
            }
            ps.iter().try_for_each(|q| check_predicate(q, z))?;
        }
    }
    Ok(())
}

fn eval(p: &Predicate, z: &ZVector, risk: &RiskScore) -> bool {
    match p {
        Predicate::Z { feature, op, value } => z.get(feature).is_some_and(|e| op.holds(e.z, *value)),
        Predicate::Probability { op, value } => op.holds(risk.probability, *value),
        Predicate::All(ps) => ps.iter().all(|q| eval(q, z, risk)),
        Predicate::Any(ps) => ps.iter().any(|q| eval(q, z, risk)),
    }
}

/// Tags of matching rules in rule order, each tag once.
pub fn suggest_followups(z: &ZVector, risk: &RiskScore, rules: &RuleSet) -> Result<Vec<String>, InferenceError> {
    for (index, r) in rules.rules.iter().enumerate() {
        if r.suggest.trim().is_empty() {
            return Err(InferenceError::MalformedRule {
                index,
                reason: "empty tag".into(),
            });
        }
        check_predicate(&r.when, z).map_err(|reason| InferenceError::MalformedRule { index, reason })?;
    }
    let mut out: Vec<String> = Vec::new();
    for r in &rules.rules {
        if eval(&r.when, z, risk) && !out.contains(&r.suggest) {
            out.push(r.suggest.clone());
        }
    }
    Ok(out)
}

/// Copy of `fv` with raw values overridden. Names outside `fv` must be
/// reference features; they enter as EHR-tagged placeholders.
pub fn apply_overrides(
    fv: &FeatureVector,
    overrides: &BTreeMap<String, f64>,
    reference: &ReferencePopulation,
) -> Result<FeatureVector, InferenceError> {
    let mut scenario = fv.clone();
    for (name, value) in overrides {
        if !value.is_finite() {
            return Err(InferenceError::NonFinite(name.clone()));
        }
        match scenario.entries.get_mut(name) {
            Some(f) => f.value = *value,
            None => {
                if reference.get(name).is_none() {
                    return Err(InferenceError::UnknownFeature(name.clone()));
                }
                scenario.entries.insert(
                    name.clone(),
                    Feature {
                        value: *value,
                        unit: String::new(),
                        modality: Modality::Ehr,
                        scale: Scale::Macro,
                        timestamp: String::new(),
                        provenance: "what-if".into(),
                    },
                );
            }
        }
    }
    Ok(scenario)
}

/// Re-scores with raw values overridden; the inputs are not modified.
pub fn what_if(
    fv: &FeatureVector,
    overrides: &BTreeMap<String, f64>,
    model: &RiskModel,
    reference: &ReferencePopulation,
) -> Result<RiskScore, InferenceError> {
    score_features(&apply_overrides(fv, overrides, reference)?, model, reference)
}
