//! Lognormal fragility curves for the beyond-extensive damage state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::BridgeAttributes;

/// Fragility of one bridge class: probability of reaching the extensive
/// damage state at a given SA(1.0 s) is the lognormal CDF with this median
/// and dispersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilityCurve {
    pub bridge_class: String,
    /// SA(1.0 s) in g at which exceedance probability is 0.5.
    pub median_sa_extensive_g: f64,
    /// Lognormal dispersion.
    pub beta: f64,
}

impl FragilityCurve {
    fn validate(&self) -> Result<()> {
        if !(self.median_sa_extensive_g > 0.0) {
            return Err(Error::Validation(format!(
                "fragility median for {} must be > 0",
                self.bridge_class
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Validation(format!(
                "fragility beta for {} must be > 0",
                self.bridge_class
            )));
        }
        Ok(())
    }
}

/// Exceedance probability `Phi(ln(sa/median) / beta)`; 0 when `sa == 0`.
pub(crate) fn exceedance_prob(sa_1s: f64, curve: &FragilityCurve) -> f64 {
    if sa_1s <= 0.0 {
        return 0.0;
    }
    let z = (sa_1s / curve.median_sa_extensive_g).ln() / curve.beta;
    Normal::standard().cdf(z)
}

/// bridge_class -> curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FragilityTable {
    curves: BTreeMap<String, FragilityCurve>,
}

impl FragilityTable {
    pub fn new(curves: Vec<FragilityCurve>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for curve in curves {
            curve.validate()?;
            if map.insert(curve.bridge_class.clone(), curve).is_some() {
                return Err(Error::Validation("duplicate fragility class".into()));
            }
        }
        if map.is_empty() {
            return Err(Error::Validation("fragility table is empty".into()));
        }
        Ok(FragilityTable { curves: map })
    }

    /// Parse the `fragility.csv` schema:
    /// `bridge_class,median_sa_extensive_g,beta`.
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut curves = Vec::new();
        for row in reader.deserialize::<FragilityCurve>() {
            curves.push(row.map_err(|e| Error::parse(origin, e.to_string()))?);
        }
        Self::new(curves)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    /// The table shipped in `data/fragility.csv`, compiled in.
    pub fn builtin_default() -> Self {
        Self::from_csv_str(DEFAULT_FRAGILITY_CSV, "builtin fragility table")
            .expect("builtin fragility table is valid")
    }

    pub fn curve(&self, bridge_class: &str) -> Result<&FragilityCurve> {
        self.curves
            .get(bridge_class)
            .ok_or_else(|| Error::MissingFragilityClass(bridge_class.to_string()))
    }

    pub fn contains(&self, bridge_class: &str) -> bool {
        self.curves.contains_key(bridge_class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.curves.keys().map(|s| s.as_str())
    }
}

pub(crate) const DEFAULT_FRAGILITY_CSV: &str = include_str!("../../../../data/fragility.csv");

/// Map NBI-style attributes to a fragility class with a small decision
/// tree: material, a 1975 design-era threshold, and span count.
pub fn classify_bridge(attributes: &BridgeAttributes) -> Result<String> {
    let material = match attributes.material.to_ascii_lowercase() {
        m if m.contains("prestressed") => "prestressed",
        m if m.contains("steel") => "steel",
        m if m.contains("concrete") => "concrete",
        other => {
            return Err(Error::Validation(format!(
                "unknown bridge material `{other}`"
            )))
        }
    };
    let era = if attributes.built_year < 1975 { "pre75" } else { "post75" };
    let spans = if attributes.num_spans <= 1 { "single" } else { "multi" };
    Ok(format!("{material}-{era}-{spans}"))
}
