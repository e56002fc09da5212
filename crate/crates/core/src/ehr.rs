use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_kg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Biomarker {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Structured patient record. Keys outside the known schema land in
/// `extras` untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrRecord {
    pub patient_id: String,
    pub demographics: Demographics,
    #[serde(default)]
    pub biomarkers: Vec<Biomarker>,
    #[serde(default)]
    pub notes: String,
    #[serde(flatten)]
    pub extras: BTreeMap<String, serde_json::Value>,
}

impl EhrRecord {
    /// Invariant violations as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.patient_id.is_empty() {
            out.push("empty patient_id".to_string());
        }
        let d = &self.demographics;
        if !(d.age >= 0.0) || !d.age.is_finite() {
            out.push(format!("negative age {}", d.age));
        }
        if let Some(h) = d.height_cm {
            if !(h > 0.0) || !h.is_finite() {
                out.push(format!("nonpositive height_cm {h}"));
            }
        }
        if let Some(w) = d.weight_kg {
            if !(w > 0.0) || !w.is_finite() {
                out.push(format!("nonpositive weight_kg {w}"));
            }
        }
        out
    }

    /// Body-mass index when height and weight are both known.
    pub fn bmi(&self) -> Option<f64> {
        let h = self.demographics.height_cm? / 100.0;
        Some(self.demographics.weight_kg? / (h * h))
    }
}
