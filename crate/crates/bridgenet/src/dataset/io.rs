//! Dataset directory layout.
//!
//! ```text
//! <dir>/manifest.toml        seed, n_k, split, normalization stats, index
//! <dir>/samples/0000.csv     one sample per file, in sections:
//!   [meta]  key,value pairs (target, scenario, mc seed)
//!   [x_n]   node feature rows
//!   [x_e]   edge failure probabilities
//!   [y]     per-node connectivity labels
//! ```
//!
//! All floats are written in shortest round-trip form, so save/load is
//! lossless and a regenerated dataset is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureStats, GraphSample, SplitSpec, NODE_FEATURES};
use crate::error::{Error, Result};
use crate::hazard::{FaultStyle, SeismicScenario, SigmaMode};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    seed: u64,
    n_k: usize,
    network_nodes: usize,
    network_edges: usize,
    split: SplitSpec,
    normalization: FeatureStats,
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleEntry {
    file: String,
    id: usize,
    target: usize,
    scenario_index: usize,
    split: String,
}

fn sample_file_name(id: usize) -> String {
    format!("samples/{id:04}.csv")
}

fn render_sample(s: &GraphSample) -> String {
    let mut out = String::new();
    out.push_str("[meta]\nkey,value\n");
    let _ = writeln!(out, "target,{}", s.target);
    let _ = writeln!(out, "scenario_index,{}", s.scenario_index);
    let _ = writeln!(out, "magnitude,{}", s.scenario.magnitude);
    let _ = writeln!(out, "epicenter_lon,{}", s.scenario.epicenter.0);
    let _ = writeln!(out, "epicenter_lat,{}", s.scenario.epicenter.1);
    let _ = writeln!(out, "style_of_faulting,{}", s.scenario.style_of_faulting);
    let _ = writeln!(out, "regional_quality,{}", s.scenario.regional_quality);
    let _ = writeln!(out, "basin_depth_km,{}", s.scenario.basin_depth_km);
    let _ = writeln!(out, "sigma_mode,{}", s.scenario.sigma_mode);
    let _ = writeln!(out, "mc_seed,{}", s.mc_seed);

    out.push_str("\n[x_n]\nnode_id,degree,max_incident_pe,min_incident_pe,hops_to_target\n");
    for (v, row) in s.node_features.rows().into_iter().enumerate() {
        let _ = writeln!(out, "{v},{},{},{},{}", row[0], row[1], row[2], row[3]);
    }

    out.push_str("\n[x_e]\nedge_id,p_e\n");
    for (e, p) in s.edge_features.iter().enumerate() {
        let _ = writeln!(out, "{e},{p}");
    }

    out.push_str("\n[y]\nnode_id,p\n");
    for (v, y) in s.labels.iter().enumerate() {
        let _ = writeln!(out, "{v},{y}");
    }
    out
}

fn parse_sample(text: &str, origin: &str, id: usize) -> Result<GraphSample> {
    let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            let name = trimmed[1..trimmed.len() - 1].to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
        } else if let Some(name) = &current {
            sections.get_mut(name).expect("section exists").push(trimmed);
        }
    }

    let section = |name: &str| -> Result<&Vec<&str>> {
        sections
            .get(name)
            .ok_or_else(|| Error::parse(origin, format!("missing section [{name}]")))
    };

    // skip each section's header row
    let meta: BTreeMap<&str, &str> = section("meta")?
        .iter()
        .skip(1)
        .filter_map(|line| line.split_once(','))
        .collect();
    let meta_get = |key: &str| -> Result<&str> {
        meta.get(key)
            .copied()
            .ok_or_else(|| Error::parse(origin, format!("missing meta key `{key}`")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        meta_get(key)?
            .parse()
            .map_err(|_| Error::parse(origin, format!("meta key `{key}` is not a number")))
    };

    let scenario = SeismicScenario {
        magnitude: parse_f64("magnitude")?,
        epicenter: (parse_f64("epicenter_lon")?, parse_f64("epicenter_lat")?),
        style_of_faulting: meta_get("style_of_faulting")?.parse::<FaultStyle>()?,
        regional_quality: parse_f64("regional_quality")?,
        basin_depth_km: parse_f64("basin_depth_km")?,
        sigma_mode: meta_get("sigma_mode")?.parse::<SigmaMode>()?,
    };

    let numbers = |rows: &[&str], expect_cols: usize, what: &str| -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|row| {
                let vals: Vec<f64> = row
                    .split(',')
                    .map(|tok| tok.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(origin, format!("bad {what} row `{row}`")))?;
                if vals.len() != expect_cols {
                    return Err(Error::parse(
                        origin,
                        format!("{what} row `{row}` has {} columns", vals.len()),
                    ));
                }
                Ok(vals)
            })
            .collect()
    };

    let xn_rows = numbers(&section("x_n")?[1..], 1 + NODE_FEATURES, "x_n")?;
    let n = xn_rows.len();
    let mut node_features = Array2::zeros((n, NODE_FEATURES));
    for row in &xn_rows {
        let v = row[0] as usize;
        for c in 0..NODE_FEATURES {
            node_features[[v, c]] = row[1 + c];
        }
    }
    let edge_features: Vec<f64> = numbers(&section("x_e")?[1..], 2, "x_e")?
        .iter()
        .map(|row| row[1])
        .collect();
    let labels: Vec<f64> = numbers(&section("y")?[1..], 2, "y")?
        .iter()
        .map(|row| row[1])
        .collect();
    if labels.len() != n {
        return Err(Error::parse(
            origin,
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }

    Ok(GraphSample {
        id,
        target: meta_get("target")?
            .parse()
            .map_err(|_| Error::parse(origin, "bad target id"))?,
        scenario_index: meta_get("scenario_index")?
            .parse()
            .map_err(|_| Error::parse(origin, "bad scenario index"))?,
        scenario,
        node_features,
        edge_features,
        labels,
        mc_seed: meta_get("mc_seed")?
            .parse()
            .map_err(|_| Error::parse(origin, "bad mc seed"))?,
    })
}

/// Write a dataset directory (manifest + one csv per sample).
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let samples_dir = dir.join("samples");
    fs::create_dir_all(&samples_dir)
        .map_err(|e| Error::io(samples_dir.display().to_string(), e))?;

    let mut entries = Vec::new();
    for (split_name, split_samples) in [("train", &ds.train), ("test", &ds.test)] {
        for s in split_samples.iter() {
            let file = sample_file_name(s.id);
            let path = dir.join(&file);
            fs::write(&path, render_sample(s))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            entries.push(SampleEntry {
                file,
                id: s.id,
                target: s.target,
                scenario_index: s.scenario_index,
                split: split_name.to_string(),
            });
        }
    }
    entries.sort_by_key(|e| e.id);

    let manifest = Manifest {
        version: 1,
        seed: ds.seed,
        n_k: ds.n_k,
        network_nodes: ds.network_nodes,
        network_edges: ds.network_edges,
        split: ds.split.clone(),
        normalization: ds.normalization.clone(),
        samples: entries,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::parse("manifest.toml", e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.toml");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?;
    if manifest.version != 1 {
        return Err(Error::parse(
            manifest_path.display().to_string(),
            format!("unsupported dataset version {}", manifest.version),
        ));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.samples {
        let path = dir.join(&entry.file);
        let body =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let sample = parse_sample(&body, &path.display().to_string(), entry.id)?;
        match entry.split.as_str() {
            "train" => train.push(sample),
            "test" => test.push(sample),
            other => {
                return Err(Error::parse(
                    manifest_path.display().to_string(),
                    format!("unknown split `{other}`"),
                ))
            }
        }
    }
    Ok(Dataset {
        train,
        test,
        normalization: manifest.normalization,
        n_k: manifest.n_k,
        split: manifest.split,
        seed: manifest.seed,
        network_nodes: manifest.network_nodes,
        network_edges: manifest.network_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, LabelingConfig, ScenarioModel, SplitSpec};
    use crate::graph::network_from_pairs;
    use crate::hazard::{FragilityTable, GmpeConfig};
    use crate::mc::McConfig;

    #[test]
    fn dataset_roundtrips_through_disk() {
        let net =
            network_from_pairs(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        let gmpe = GmpeConfig::builtin_default();
        let fragility = FragilityTable::builtin_default();
        let scenario_model = ScenarioModel::default();
        let mc = McConfig {
            max_samples: 300,
            std_threshold: 0.05,
            check_interval: 100,
            seed: 0,
        };
        let cfg = LabelingConfig {
            gmpe: &gmpe,
            fragility: &fragility,
            scenario_model: &scenario_model,
            mc: &mc,
        };
        let split = SplitSpec {
            test_fraction: 0.2,
            train_target_ratio: 0.3,
            parts: 2,
            seed: 9,
        };
        let ds = generate_dataset(&net, 3, &split, &cfg, 123).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, loaded);

        // byte-identical rewrite
        let again = tempfile::tempdir().unwrap();
        save_dataset(&loaded, again.path()).unwrap();
        let a = std::fs::read(dir.path().join("manifest.toml")).unwrap();
        let b = std::fs::read(again.path().join("manifest.toml")).unwrap();
        assert_eq!(a, b);
    }
}
