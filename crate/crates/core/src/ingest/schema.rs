use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::record::FeatureValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// One feature of the patient schema, as configured by domain experts.
///
/// Field names double as the keys of the schema config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub actionable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// `[low, high]` in feature units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommended_range: Option<[f64; 2]>,
    /// Ordered labels. The first label is the one-hot reference level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    /// Label to rank; rank 1 contributes the most risk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal_risk: Option<BTreeMap<String, u32>>,
    /// Plausible `[min, max]` for counterfactual search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    /// Target label to recommendation sentence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("schema has no features")]
    Empty,
    #[error("feature name must not be empty")]
    EmptyName,
    #[error("duplicate feature {0:?}")]
    DuplicateFeature(String),
    #[error("feature {feature:?}: {reason}")]
    Invalid { feature: String, reason: String },
}

impl FeatureSpec {
    pub fn continuous(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            actionable: false,
            unit: if unit.is_empty() {
                None
            } else {
                Some(unit.to_string())
            },
            recommended_range: None,
            categories: Vec::new(),
            ordinal_risk: None,
            bounds: None,
            templates: None,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            actionable: false,
            unit: None,
            recommended_range: None,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            ordinal_risk: None,
            bounds: None,
            templates: None,
        }
    }

    pub fn actionable(mut self) -> Self {
        self.actionable = true;
        self
    }

    pub fn with_range(mut self, low: f64, high: f64) -> Self {
        self.recommended_range = Some([low, high]);
        self
    }

    pub fn with_bounds(mut self, min: f64, max: f64) -> Self {
        self.bounds = Some([min, max]);
        self
    }

    /// Ranks follow the order of `labels`: the first gets rank 1.
    pub fn with_ordinal(mut self, labels: &[&str]) -> Self {
        let ranks = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), i as u32 + 1))
            .collect();
        self.ordinal_risk = Some(ranks);
        self
    }

    pub fn with_template(mut self, label: &str, text: &str) -> Self {
        self.templates
            .get_or_insert_with(BTreeMap::new)
            .insert(label.to_string(), text.to_string());
        self
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == FeatureKind::Continuous
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn rank(&self, label: &str) -> Option<u32> {
        self.ordinal_risk.as_ref()?.get(label).copied()
    }

    /// Highest rank, i.e. the lowest-risk level.
    pub fn best_rank(&self) -> Option<u32> {
        self.ordinal_risk.as_ref()?.values().copied().max()
    }

    pub fn template(&self, label: &str) -> Option<&str> {
        self.templates.as_ref()?.get(label).map(String::as_str)
    }

    /// Checks that `value` has the right shape for this feature.
    pub fn check_value(&self, value: &FeatureValue) -> Result<(), String> {
        match (self.kind, value) {
            (FeatureKind::Continuous, FeatureValue::Number(x)) => {
                if x.is_finite() {
                    Ok(())
                } else {
                    Err(format!("non-finite value {x}"))
                }
            }
            (FeatureKind::Continuous, FeatureValue::Label(s)) => {
                Err(format!("expected a number, got {s:?}"))
            }
            (FeatureKind::Categorical, FeatureValue::Label(s)) => {
                if self.category_index(s).is_some() {
                    Ok(())
                } else {
                    Err(format!("unknown category {s:?}"))
                }
            }
            (FeatureKind::Categorical, FeatureValue::Number(x)) => {
                Err(format!("expected a category label, got {x}"))
            }
        }
    }

    /// Parses a raw text cell into a value for this feature.
    pub fn parse_value(&self, raw: &str) -> Result<FeatureValue, String> {
        let raw = raw.trim();
        let value = match self.kind {
            FeatureKind::Continuous => {
                if raw.is_empty() {
                    return Err("missing value".to_string());
                }
                raw.parse::<f64>()
                    .map(FeatureValue::Number)
                    .map_err(|_| format!("cannot parse {raw:?} as a number"))?
            }
            FeatureKind::Categorical => {
                if raw.is_empty() {
                    return Err("missing value".to_string());
                }
                FeatureValue::Label(raw.to_string())
            }
        };
        self.check_value(&value)?;
        Ok(value)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let invalid = |reason: &str| SchemaError::Invalid {
            feature: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty() {
            return Err(SchemaError::EmptyName);
        }
        match self.kind {
            FeatureKind::Continuous => {
                if !self.categories.is_empty()
                    || self.ordinal_risk.is_some()
                    || self.templates.is_some()
                {
                    return Err(invalid(
                        "continuous features take no categories, ordinal_risk or templates",
                    ));
                }
                if let Some([lo, hi]) = self.recommended_range {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(invalid("recommended_range needs low < high"));
                    }
                }
                if let Some([lo, hi]) = self.bounds {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(invalid("bounds need min < max"));
                    }
                    if let Some([rlo, rhi]) = self.recommended_range {
                        if rlo < lo || rhi > hi {
                            return Err(invalid("bounds must enclose recommended_range"));
                        }
                    }
                }
            }
            FeatureKind::Categorical => {
                if self.unit.is_some() || self.recommended_range.is_some() || self.bounds.is_some()
                {
                    return Err(invalid(
                        "categorical features take no unit, recommended_range or bounds",
                    ));
                }
                if self.categories.len() < 2 {
                    return Err(invalid("needs at least two categories"));
                }
                for (i, c) in self.categories.iter().enumerate() {
                    if c.is_empty() || self.categories[..i].contains(c) {
                        return Err(invalid("categories must be non-empty and distinct"));
                    }
                }
                if let Some(ranks) = &self.ordinal_risk {
                    if ranks.len() != self.categories.len()
                        || self.categories.iter().any(|c| !ranks.contains_key(c))
                    {
                        return Err(invalid("ordinal_risk must cover every category"));
                    }
                    let mut seen: Vec<u32> = ranks.values().copied().collect();
                    seen.sort_unstable();
                    if seen.iter().enumerate().any(|(i, &r)| r != i as u32 + 1) {
                        return Err(invalid("ordinal_risk ranks must be 1..=n"));
                    }
                } else if self.actionable {
                    return Err(invalid("actionable categorical features need ordinal_risk"));
                }
                if let Some(templates) = &self.templates {
                    if let Some(l) = templates.keys().find(|l| self.category_index(l).is_none()) {
                        return Err(invalid(&format!("template for unknown category {l:?}")));
                    }
                }
            }
        }
        if !self.actionable && (self.templates.is_some() || self.ordinal_risk.is_some()) {
            return Err(invalid(
                "non-actionable features take no templates or ordinal_risk",
            ));
        }
        Ok(())
    }

    fn write_canonical(&self, out: &mut String) {
        let kind = match self.kind {
            FeatureKind::Continuous => "c",
            FeatureKind::Categorical => "k",
        };
        let _ = write!(out, "{}|{}|{}|", self.name, kind, self.actionable as u8);
        if let Some(u) = &self.unit {
            let _ = write!(out, "u={u}");
        }
        out.push('|');
        for pair in [self.recommended_range, self.bounds] {
            if let Some([a, b]) = pair {
                let _ = write!(out, "{:016x},{:016x}", a.to_bits(), b.to_bits());
            }
            out.push('|');
        }
        for c in &self.categories {
            let _ = write!(out, "{c};");
        }
        out.push('|');
        if let Some(r) = &self.ordinal_risk {
            for (k, v) in r {
                let _ = write!(out, "{k}={v};");
            }
        }
        out.push('|');
        if let Some(t) = &self.templates {
            for (k, v) in t {
                let _ = write!(out, "{k}={v};");
            }
        }
        out.push('\n');
    }
}

/// Ordered list of feature specs. Order fixes CSV columns and model encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, SchemaError> {
        if features.is_empty() {
            return Err(SchemaError::Empty);
        }
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(SchemaError::DuplicateFeature(f.name.clone()));
            }
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn actionable(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.features.iter().filter(|f| f.actionable)
    }

    /// Hex SHA-256 prefix over a canonical rendering of every field.
    pub fn fingerprint(&self) -> String {
        let mut canon = String::new();
        for f in &self.features {
            f.write_canonical(&mut canon);
        }
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(32);
        for b in &digest[..16] {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }

    /// Eight features in the style of a type 2 diabetes screening
    /// questionnaire, six of them actionable.
    pub fn default_diabetes() -> Self {
        let features = vec![
            FeatureSpec::continuous("glucose", "mmol/L")
                .actionable()
                .with_range(3.9, 5.6)
                .with_bounds(3.0, 15.0),
            FeatureSpec::continuous("bmi", "kg/m2")
                .actionable()
                .with_range(18.5, 25.0)
                .with_bounds(15.0, 50.0),
            FeatureSpec::continuous("waist", "cm")
                .actionable()
                .with_range(70.0, 94.0)
                .with_bounds(55.0, 150.0),
            FeatureSpec::categorical("activity", &["low", "moderate", "high"])
                .actionable()
                .with_ordinal(&["low", "moderate", "high"])
                .with_template("moderate", "Exercise daily for 30 minutes")
                .with_template(
                    "high",
                    "Exercise daily for 60 minutes, including vigorous activity",
                ),
            FeatureSpec::categorical("vegetables", &["not_daily", "daily"])
                .actionable()
                .with_ordinal(&["not_daily", "daily"])
                .with_template("daily", "Eat vegetables, fruit or berries every day"),
            FeatureSpec::categorical("medication_history", &["yes", "no"])
                .actionable()
                .with_ordinal(&["yes", "no"])
                .with_template(
                    "no",
                    "Bring blood pressure under control so that medication is no longer needed",
                ),
            FeatureSpec::continuous("age", "years").with_bounds(18.0, 90.0),
            FeatureSpec::categorical("gender", &["female", "male"]),
        ];
        Self::new(features).expect("default schema is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let s = Schema::default_diabetes();
        assert_eq!(s.len(), 8);
        assert_eq!(s.actionable().count(), 6);
        assert!(!s.get("age").unwrap().actionable);
        assert_eq!(s.get("activity").unwrap().best_rank(), Some(3));
    }

    #[test]
    fn rejects_inverted_range() {
        let f = FeatureSpec::continuous("x", "").with_range(2.0, 1.0);
        assert!(matches!(
            Schema::new(vec![f]),
            Err(SchemaError::Invalid { .. })
        ));
    }

    #[test]
    fn rejects_bounds_not_enclosing_range() {
        let f = FeatureSpec::continuous("x", "")
            .with_range(1.0, 5.0)
            .with_bounds(2.0, 10.0);
        assert!(Schema::new(vec![f]).is_err());
    }

    #[test]
    fn rejects_gapped_ordinal_ranks() {
        let mut f = FeatureSpec::categorical("a", &["x", "y"]).actionable();
        let mut ranks = BTreeMap::new();
        ranks.insert("x".to_string(), 1);
        ranks.insert("y".to_string(), 3);
        f.ordinal_risk = Some(ranks);
        assert!(Schema::new(vec![f]).is_err());
    }

    #[test]
    fn rejects_templates_on_non_actionable() {
        let f = FeatureSpec::categorical("g", &["a", "b"]).with_template("a", "text");
        assert!(Schema::new(vec![f]).is_err());
    }

    #[test]
    fn rejects_duplicates() {
        let f = FeatureSpec::continuous("x", "");
        assert_eq!(
            Schema::new(vec![f.clone(), f]),
            Err(SchemaError::DuplicateFeature("x".into()))
        );
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let base = Schema::default_diabetes();
        let mut feats = base.features().to_vec();
        feats[0].recommended_range = Some([3.9, 5.5]);
        let altered = Schema::new(feats).unwrap();
        assert_eq!(base.fingerprint(), Schema::default_diabetes().fingerprint());
        assert_ne!(base.fingerprint(), altered.fingerprint());
        assert_eq!(base.fingerprint().len(), 32);
    }

    #[test]
    fn parse_value_checks_kind() {
        let s = Schema::default_diabetes();
        let g = s.get("glucose").unwrap();
        assert_eq!(g.parse_value("7.5"), Ok(FeatureValue::Number(7.5)));
        assert!(g.parse_value("abc").is_err());
        assert!(g.parse_value("").is_err());
        assert!(g.parse_value("inf").is_err());
        let a = s.get("activity").unwrap();
        assert!(a.parse_value("extreme").is_err());
        assert_eq!(a.parse_value("low"), Ok(FeatureValue::Label("low".into())));
    }
}
