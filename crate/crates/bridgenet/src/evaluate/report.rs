//! Machine-readable experiment outputs.
//!
//! `report.toml` holds the scalar metrics, a config echo, and a separate
//! `[timing]` section — the only non-deterministic part, so byte
//! comparisons of reruns simply drop that section.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsReport, PerNodeError};
use crate::error::{Error, Result};
use crate::graph::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportScalars {
    pub mae: f64,
    pub mse: f64,
    pub f1_2class: f64,
    pub f1_3class: f64,
    pub pearson_r: f64,
    pub fp_fn_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTiming {
    pub wall_time_gnn_s: f64,
    pub wall_time_mc_s: f64,
}

/// On-disk form of one experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub metrics: ReportScalars,
    /// Echo of the run configuration, free-form.
    pub config: toml::Value,
    pub timing: ReportTiming,
}

impl ReportFile {
    pub fn new(metrics: &MetricsReport, config: toml::Value) -> Self {
        ReportFile {
            metrics: ReportScalars {
                mae: metrics.mae,
                mse: metrics.mse,
                f1_2class: metrics.f1_2class,
                f1_3class: metrics.f1_3class,
                pearson_r: metrics.pearson_r,
                fp_fn_rate: metrics.fp_fn_rate,
            },
            config,
            timing: ReportTiming {
                wall_time_gnn_s: metrics.wall_time_gnn_s,
                wall_time_mc_s: metrics.wall_time_mc_s,
            },
        }
    }
}

pub fn write_report(report: &ReportFile, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(report)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Parse report text and drop the `[timing]` section, for byte-stable
/// comparison of reruns.
pub fn report_without_timing(text: &str) -> Result<toml::Value> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| Error::parse("report", e.to_string()))?;
    if let Some(table) = value.as_table_mut() {
        table.remove("timing");
    }
    Ok(value)
}

/// `per_node_errors.csv`: one row per (node, test target) pair.
pub fn write_per_node_csv(rows: &[PerNodeError], path: &Path) -> Result<()> {
    let mut out =
        String::from("node_id,target_id,pred,label,abs_err,class_pred,class_label\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.node_id, r.target_id, r.pred, r.label, r.abs_err, r.class_pred, r.class_label
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// GeoJSON point layer with one `value` per node, for external plotting.
pub fn write_error_geojson(net: &Network, node_values: &[f64], path: &Path) -> Result<()> {
    if node_values.len() != net.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {} nodes",
            node_values.len(),
            net.node_count()
        )));
    }
    let features: Vec<serde_json::Value> = net
        .nodes()
        .iter()
        .map(|n| {
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [n.lon, n.lat]},
                "properties": {"node_id": n.id, "value": node_values[n.id]}
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
