use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::math::round1;

/// Risk level, ordered from best to worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Moderate,
    High,
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Low => "Low",
            Self::Moderate => "Moderate",
            Self::High => "High",
        })
    }
}

impl FromStr for RiskLevel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("low") {
            Ok(Self::Low)
        } else if s.eq_ignore_ascii_case("moderate") {
            Ok(Self::Moderate)
        } else if s.eq_ignore_ascii_case("high") {
            Ok(Self::High)
        } else {
            Err(ModelError::UnknownLevel(s.into()))
        }
    }
}

/// High above 0.75, Moderate on `[0.5, 0.75]`, Low below 0.5.
pub fn bucket_risk(prob: f64) -> Result<RiskLevel, ModelError> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(ModelError::OutOfRange(prob));
    }
    Ok(if prob > 0.75 {
        RiskLevel::High
    } else if prob >= 0.5 {
        RiskLevel::Moderate
    } else {
        RiskLevel::Low
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPrediction {
    pub prob: f64,
    pub level: RiskLevel,
    /// `prob * 100`, one decimal.
    pub percent: f64,
}

impl RiskPrediction {
    pub fn from_prob(prob: f64) -> Result<Self, ModelError> {
        Ok(Self {
            prob,
            level: bucket_risk(prob)?,
            percent: round1(prob * 100.0),
        })
    }
}
