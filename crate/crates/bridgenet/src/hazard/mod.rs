//! Ground motion, bridge fragility, and edge failure probabilities.
//!
//! For one earthquake scenario the pipeline is: predict peak ground
//! acceleration at each bridge site from an attenuation relation, scale it
//! to spectral acceleration with a tabulated spectral shape, evaluate the
//! bridge's lognormal fragility curve at SA(1.0 s), and compose per-bridge
//! failure probabilities into per-edge failure probabilities (an edge fails
//! when at least one of its bridges fails).

mod fragility;
mod gmpe;

pub use fragility::{classify_bridge, FragilityCurve, FragilityTable};
pub use gmpe::{compute_pga, compute_sa, GmpeConfig, MuTable, SpectralPeriod};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{great_circle_km, Network};
use crate::seed;

/// Style of faulting for the scenario event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultStyle {
    StrikeSlip,
    Reverse,
    Normal,
}

/// Whether ground-motion variability is collapsed to the median or sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// Use the median prediction (the sigma term is omitted).
    Median,
    /// Draw one standard-normal deviate per bridge per scenario.
    Sampled,
}

impl std::fmt::Display for FaultStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaultStyle::StrikeSlip => "strike-slip",
            FaultStyle::Reverse => "reverse",
            FaultStyle::Normal => "normal",
        })
    }
}

impl std::str::FromStr for FaultStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strike-slip" => Ok(FaultStyle::StrikeSlip),
            "reverse" => Ok(FaultStyle::Reverse),
            "normal" => Ok(FaultStyle::Normal),
            other => Err(Error::Config {
                field: "style_of_faulting".into(),
                message: format!("unknown fault style `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SigmaMode::Median => "median",
            SigmaMode::Sampled => "sampled",
        })
    }
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(SigmaMode::Median),
            "sampled" => Ok(SigmaMode::Sampled),
            other => Err(Error::Config {
                field: "sigma_mode".into(),
                message: format!("unknown sigma mode `{other}`"),
            }),
        }
    }
}

/// One earthquake event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeismicScenario {
    /// Moment magnitude, in [4.0, 9.0].
    pub magnitude: f64,
    /// (lon, lat) degrees.
    pub epicenter: (f64, f64),
    pub style_of_faulting: FaultStyle,
    /// Regional quality factor Q0. Carried for completeness; the default
    /// attenuation form has no term for it.
    pub regional_quality: f64,
    pub basin_depth_km: f64,
    pub sigma_mode: SigmaMode,
}

impl SeismicScenario {
    pub fn validate(&self) -> Result<()> {
        if !(4.0..=9.0).contains(&self.magnitude) {
            return Err(Error::Validation(format!(
                "magnitude {} outside [4.0, 9.0]",
                self.magnitude
            )));
        }
        if self.regional_quality <= 0.0 {
            return Err(Error::Validation("regional_quality must be > 0".into()));
        }
        if self.basin_depth_km < 0.0 {
            return Err(Error::Validation("basin_depth_km must be >= 0".into()));
        }
        Ok(())
    }
}

/// Site conditions at a bridge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    /// Average shear-wave velocity in the upper 30 m, m/s.
    pub vs30: f64,
    /// Distance to the rupture, km. Approximated by the epicentral
    /// great-circle distance.
    pub rupture_distance_km: f64,
}

impl SiteParams {
    pub fn validate(&self) -> Result<()> {
        if self.vs30 <= 0.0 {
            return Err(Error::Validation("vs30 must be > 0".into()));
        }
        if self.rupture_distance_km < 0.0 {
            return Err(Error::Validation("rupture distance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-bridge and per-edge failure probabilities for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureField {
    pub scenario: SeismicScenario,
    /// Probability that bridge `i` is damaged beyond the extensive state.
    pub bridge_probs: Vec<f64>,
    /// Probability that edge `e` is closed. Exactly 0 for bridge-free edges.
    pub edge_probs: Vec<f64>,
}

impl FailureField {
    /// Build a field directly from per-edge probabilities (bridge-level
    /// detail absent). Used by perturbation studies, which operate on edge
    /// probabilities only.
    pub fn from_edge_probs(scenario: SeismicScenario, edge_probs: Vec<f64>) -> Self {
        FailureField {
            scenario,
            bridge_probs: Vec::new(),
            edge_probs,
        }
    }
}

/// Failure probability of a bridge given spectral acceleration at 1.0 s:
/// `Phi(ln(sa / median) / beta)`, with 0 at `sa == 0`.
pub fn bridge_failure_prob(sa_1s: f64, curve: &FragilityCurve) -> f64 {
    fragility::exceedance_prob(sa_1s, curve)
}

/// Probability that at least one of several independent bridges fails.
/// Accumulated by inclusion-exclusion (`p <- p + q - p*q`), which is exact
/// for the empty and single-element cases and keeps two-element results on
/// the nearest float.
pub fn edge_failure_prob(bridge_probs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &p in bridge_probs {
        acc = acc + p - acc * p;
    }
    acc
}

/// Peak ground acceleration and spectral accelerations at one bridge site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteIntensity {
    pub pga_g: f64,
    pub sa_0p3_g: f64,
    pub sa_1p0_g: f64,
}

/// Ground-motion intensities at a bridge site. `rng_seed` feeds the sigma
/// term when the scenario samples ground-motion variability.
pub fn site_intensity(
    scn: &SeismicScenario,
    site: &SiteParams,
    cfg: &GmpeConfig,
    rng_seed: Option<u64>,
) -> Result<SiteIntensity> {
    let pga = compute_pga(scn, site, cfg, rng_seed)?;
    Ok(SiteIntensity {
        pga_g: pga,
        sa_0p3_g: compute_sa(pga, SpectralPeriod::T0p3, scn, site, cfg)?,
        sa_1p0_g: compute_sa(pga, SpectralPeriod::T1p0, scn, site, cfg)?,
    })
}

/// Compute the failure field for a whole network under one scenario.
///
/// Pure: a fixed `(net, scn, cfg, table, rng_seed)` tuple always produces a
/// byte-identical field. In sampled sigma mode each bridge draws its deviate
/// from a seed derived from `rng_seed` and the bridge id, so the result does
/// not depend on evaluation order.
pub fn compute_failure_field(
    net: &Network,
    scn: &SeismicScenario,
    cfg: &GmpeConfig,
    table: &FragilityTable,
    rng_seed: u64,
) -> Result<FailureField> {
    scn.validate()?;
    let mut bridge_probs = Vec::with_capacity(net.bridge_count());
    for bridge in net.bridges() {
        let curve = table.curve(&bridge.bridge_class)?;
        let site = SiteParams {
            vs30: cfg.default_vs30(),
            rupture_distance_km: great_circle_km(
                scn.epicenter.0,
                scn.epicenter.1,
                bridge.lon,
                bridge.lat,
            ),
        };
        let bridge_seed = match scn.sigma_mode {
            SigmaMode::Median => None,
            SigmaMode::Sampled => Some(seed::mix2(rng_seed, 0x516, bridge.id as u64)),
        };
        let intensity = site_intensity(scn, &site, cfg, bridge_seed)?;
        bridge_probs.push(bridge_failure_prob(intensity.sa_1p0_g, curve));
    }
    let edge_probs = net
        .edges()
        .iter()
        .map(|e| {
            let probs: Vec<f64> = e.bridge_ids.iter().map(|&b| bridge_probs[b]).collect();
            edge_failure_prob(&probs)
        })
        .collect();
    Ok(FailureField {
        scenario: scn.clone(),
        bridge_probs,
        edge_probs,
    })
}

/// One standard-normal deviate from a derived seed.
pub(crate) fn standard_normal_draw(rng_seed: u64) -> f64 {
    let mut rng = seed::rng(rng_seed);
    rng.sample(StandardNormal)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::{BridgeAttributes, BridgeRecord, EdgeRecord, Network, NodeRecord};
    use approx::assert_relative_eq;

    pub fn test_scenario(magnitude: f64) -> SeismicScenario {
        SeismicScenario {
            magnitude,
            epicenter: (-121.9, 37.3),
            style_of_faulting: FaultStyle::StrikeSlip,
            regional_quality: 150.0,
            basin_depth_km: 2.0,
            sigma_mode: SigmaMode::Median,
        }
    }

    #[test]
    fn edge_failure_prob_identities() {
        assert_eq!(edge_failure_prob(&[]), 0.0);
        assert_eq!(edge_failure_prob(&[0.1, 0.2]), 0.28);
        assert_eq!(edge_failure_prob(&[1.0, 0.0]), 1.0);
        assert_eq!(edge_failure_prob(&[0.0, 0.0, 0.7]), 0.7);
    }

    #[test]
    fn edge_failure_prob_monotone_and_bounded() {
        let base = edge_failure_prob(&[0.2, 0.3, 0.4]);
        let raised = edge_failure_prob(&[0.2, 0.5, 0.4]);
        assert!(raised > base);
        assert!((0.0..=1.0).contains(&base));
        let perm = edge_failure_prob(&[0.4, 0.2, 0.3]);
        assert_relative_eq!(base, perm, max_relative = 1e-12);
    }

    fn one_bridge_net(bridge_class: &str) -> Network {
        let nodes = vec![
            NodeRecord { id: 0, lon: -121.9, lat: 37.3 },
            NodeRecord { id: 1, lon: -121.8, lat: 37.3 },
        ];
        let edges = vec![EdgeRecord { id: 0, endpoints: (0, 1), bridge_ids: vec![] }];
        let bridges = vec![BridgeRecord {
            id: 0,
            edge_id: 0,
            lon: -121.85,
            lat: 37.3,
            bridge_class: bridge_class.into(),
            attributes: BridgeAttributes {
                built_year: 1960,
                material: "concrete".into(),
                structure_type: "girder".into(),
                num_spans: 3,
                max_span_m: 30.0,
                length_m: 90.0,
                skew_deg: 0.0,
            },
        }];
        Network::new(nodes, edges, bridges).unwrap()
    }

    #[test]
    fn failure_field_zero_bridges_means_zero_edge_probs() {
        let net = crate::graph::network_from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let field = compute_failure_field(
            &net,
            &test_scenario(7.0),
            &GmpeConfig::builtin_default(),
            &FragilityTable::builtin_default(),
            0,
        )
        .unwrap();
        assert!(field.edge_probs.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn missing_fragility_class_is_named() {
        let net = one_bridge_net("unobtainium");
        let err = compute_failure_field(
            &net,
            &test_scenario(7.0),
            &GmpeConfig::builtin_default(),
            &FragilityTable::builtin_default(),
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unobtainium"));
    }

    #[test]
    fn field_is_pure_and_mean_edge_prob_grows_with_magnitude() {
        let net = one_bridge_net("concrete-pre75-multi");
        let cfg = GmpeConfig::builtin_default();
        let table = FragilityTable::builtin_default();
        let low = compute_failure_field(&net, &test_scenario(6.5), &cfg, &table, 3).unwrap();
        let low2 = compute_failure_field(&net, &test_scenario(6.5), &cfg, &table, 3).unwrap();
        assert_eq!(low, low2);
        let high = compute_failure_field(&net, &test_scenario(8.0), &cfg, &table, 3).unwrap();
        assert!(high.edge_probs[0] > low.edge_probs[0]);
    }

    #[test]
    fn sampled_sigma_is_seed_deterministic_but_seed_sensitive() {
        let net = one_bridge_net("concrete-pre75-multi");
        let cfg = GmpeConfig::builtin_default();
        let table = FragilityTable::builtin_default();
        let mut scn = test_scenario(7.0);
        scn.sigma_mode = SigmaMode::Sampled;
        let a = compute_failure_field(&net, &scn, &cfg, &table, 11).unwrap();
        let b = compute_failure_field(&net, &scn, &cfg, &table, 11).unwrap();
        let c = compute_failure_field(&net, &scn, &cfg, &table, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.bridge_probs, c.bridge_probs);
    }
}
