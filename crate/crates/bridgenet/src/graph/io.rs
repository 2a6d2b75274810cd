//! Network file ingestion and output.
//!
//! Two formats are supported:
//!
//! - **csv-pair**: a directory holding `nodes.csv` (`id,lon,lat`),
//!   `edges.csv` (`id,u,v`) and `bridges.csv`
//!   (`id,edge_id,lon,lat,bridge_class,built_year,material,structure_type,num_spans,max_span_m,length_m,skew_deg`).
//!   UTF-8 with a header row.
//! - **geojson**: a FeatureCollection where `Point` features with
//!   `"kind": "node"` are nodes, `LineString` features are edges
//!   (properties `id`, `u`, `v`) and remaining `Point` features are bridges
//!   (properties matching the csv columns).
//!
//! Parallel roadway segments between the same pair of intersections are
//! merged into a single edge carrying the union of their bridges; edge ids
//! are then re-indexed contiguously in ascending original-id order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BridgeAttributes, BridgeRecord, EdgeRecord, Network, NodeRecord};
use crate::error::{Error, Result};

/// On-disk network formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkFormat {
    /// Directory of `nodes.csv` + `edges.csv` + `bridges.csv`.
    CsvPair,
    Geojson,
}

impl std::str::FromStr for NetworkFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv-pair" => Ok(NetworkFormat::CsvPair),
            "geojson" => Ok(NetworkFormat::Geojson),
            other => Err(Error::Config {
                field: "network_format".into(),
                message: format!("unknown format `{other}` (expected csv-pair or geojson)"),
            }),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct NodeRow {
    id: usize,
    lon: f64,
    lat: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct EdgeRow {
    id: usize,
    u: usize,
    v: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct BridgeRow {
    id: usize,
    edge_id: usize,
    lon: f64,
    lat: f64,
    bridge_class: String,
    built_year: i32,
    material: String,
    structure_type: String,
    num_spans: u32,
    max_span_m: f64,
    length_m: f64,
    skew_deg: f64,
}

impl From<BridgeRow> for BridgeRecord {
    fn from(r: BridgeRow) -> Self {
        BridgeRecord {
            id: r.id,
            edge_id: r.edge_id,
            lon: r.lon,
            lat: r.lat,
            bridge_class: r.bridge_class,
            attributes: BridgeAttributes {
                built_year: r.built_year,
                material: r.material,
                structure_type: r.structure_type,
                num_spans: r.num_spans,
                max_span_m: r.max_span_m,
                length_m: r.length_m,
                skew_deg: r.skew_deg,
            },
        }
    }
}

/// Load and validate a network from disk.
pub fn load_network(path: &Path, format: NetworkFormat) -> Result<Network> {
    let (nodes, edges, bridges) = match format {
        NetworkFormat::CsvPair => read_csv_pair(path)?,
        NetworkFormat::Geojson => read_geojson(path)?,
    };
    assemble(nodes, edges, bridges)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(
            display.clone(),
            std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        ),
        _ => Error::parse(display.clone(), e.to_string()),
    })?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| Error::parse(display.clone(), e.to_string()))?);
    }
    Ok(rows)
}

fn read_csv_pair(dir: &Path) -> Result<(Vec<NodeRow>, Vec<EdgeRow>, Vec<BridgeRow>)> {
    Ok((
        read_csv(&dir.join("nodes.csv"))?,
        read_csv(&dir.join("edges.csv"))?,
        read_csv(&dir.join("bridges.csv"))?,
    ))
}

/// Merge parallel edges, re-index contiguously, then run full validation.
fn assemble(
    mut nodes: Vec<NodeRow>,
    mut edges: Vec<EdgeRow>,
    mut bridges: Vec<BridgeRow>,
) -> Result<Network> {
    nodes.sort_by_key(|n| n.id);
    edges.sort_by_key(|e| e.id);
    bridges.sort_by_key(|b| b.id);

    // old edge id -> merged contiguous id
    let mut pair_to_new: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut edge_map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut merged: Vec<EdgeRecord> = Vec::new();
    for e in &edges {
        if edge_map.contains_key(&e.id) {
            return Err(Error::Validation(format!("duplicate edge id {}", e.id)));
        }
        if e.u == e.v {
            return Err(Error::Validation(format!(
                "edge {} is a self-loop at node {}",
                e.id, e.u
            )));
        }
        let key = (e.u.min(e.v), e.u.max(e.v));
        let new_id = *pair_to_new.entry(key).or_insert_with(|| {
            merged.push(EdgeRecord {
                id: merged.len(),
                endpoints: (e.u, e.v),
                bridge_ids: Vec::new(),
            });
            merged.len() - 1
        });
        edge_map.insert(e.id, new_id);
    }

    let node_records = nodes
        .into_iter()
        .map(|n| NodeRecord {
            id: n.id,
            lon: n.lon,
            lat: n.lat,
        })
        .collect();

    let mut bridge_records = Vec::with_capacity(bridges.len());
    for b in bridges.drain(..) {
        let edge_id = match edge_map.get(&b.edge_id) {
            Some(&new_id) => new_id,
            None => {
                return Err(Error::Validation(format!(
                    "bridge {} references missing edge {}",
                    b.id, b.edge_id
                )))
            }
        };
        let mut rec: BridgeRecord = b.into();
        rec.edge_id = edge_id;
        bridge_records.push(rec);
    }

    Network::new(node_records, merged, bridge_records)
}

/// Write a network as the csv-pair format into `dir` (created if absent).
/// Output is byte-deterministic for a given network.
pub fn write_csv_pair(net: &Network, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        let mut f =
            fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(body.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    };

    let mut nodes = String::from("id,lon,lat\n");
    for n in net.nodes() {
        nodes.push_str(&format!("{},{},{}\n", n.id, n.lon, n.lat));
    }
    write("nodes.csv", nodes)?;

    let mut edges = String::from("id,u,v\n");
    for e in net.edges() {
        edges.push_str(&format!("{},{},{}\n", e.id, e.endpoints.0, e.endpoints.1));
    }
    write("edges.csv", edges)?;

    let mut bridges = String::from(
        "id,edge_id,lon,lat,bridge_class,built_year,material,structure_type,\
         num_spans,max_span_m,length_m,skew_deg\n",
    );
    for b in net.bridges() {
        let a = &b.attributes;
        bridges.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            b.id,
            b.edge_id,
            b.lon,
            b.lat,
            b.bridge_class,
            a.built_year,
            a.material,
            a.structure_type,
            a.num_spans,
            a.max_span_m,
            a.length_m,
            a.skew_deg
        ));
    }
    write("bridges.csv", bridges)
}

fn read_geojson(path: &Path) -> Result<(Vec<NodeRow>, Vec<EdgeRow>, Vec<BridgeRow>)> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(display.clone(), e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::parse(display.clone(), "missing `features` array".to_string()))?;

    let req_u64 = |props: &serde_json::Value, key: &str, what: &str| -> Result<usize> {
        props
            .get(key)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| Error::parse(display.clone(), format!("{what}: missing `{key}`")))
    };

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut bridges = Vec::new();
    for feature in features {
        let geom = feature.get("geometry").unwrap_or(&serde_json::Value::Null);
        let gtype = geom.get("type").and_then(|t| t.as_str()).unwrap_or("");
        let props = feature
            .get("properties")
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        match gtype {
            "LineString" => {
                edges.push(EdgeRow {
                    id: req_u64(&props, "id", "edge feature")?,
                    u: req_u64(&props, "u", "edge feature")?,
                    v: req_u64(&props, "v", "edge feature")?,
                });
            }
            "Point" => {
                let coords = geom
                    .get("coordinates")
                    .and_then(|c| c.as_array())
                    .filter(|c| c.len() >= 2)
                    .ok_or_else(|| {
                        Error::parse(display.clone(), "point feature without coordinates")
                    })?;
                let lon = coords[0].as_f64().unwrap_or(f64::NAN);
                let lat = coords[1].as_f64().unwrap_or(f64::NAN);
                if props.get("kind").and_then(|k| k.as_str()) == Some("node") {
                    nodes.push(NodeRow {
                        id: req_u64(&props, "id", "node feature")?,
                        lon,
                        lat,
                    });
                } else {
                    let get_str = |key: &str| {
                        props
                            .get(key)
                            .and_then(|v| v.as_str())
                            .unwrap_or("")
                            .to_string()
                    };
                    bridges.push(BridgeRow {
                        id: req_u64(&props, "id", "bridge feature")?,
                        edge_id: req_u64(&props, "edge_id", "bridge feature")?,
                        lon,
                        lat,
                        bridge_class: get_str("bridge_class"),
                        built_year: props
                            .get("built_year")
                            .and_then(|v| v.as_i64())
                            .unwrap_or(0) as i32,
                        material: get_str("material"),
                        structure_type: get_str("structure_type"),
                        num_spans: props.get("num_spans").and_then(|v| v.as_u64()).unwrap_or(1)
                            as u32,
                        max_span_m: props
                            .get("max_span_m")
                            .and_then(|v| v.as_f64())
                            .unwrap_or(0.0),
                        length_m: props.get("length_m").and_then(|v| v.as_f64()).unwrap_or(0.0),
                        skew_deg: props.get("skew_deg").and_then(|v| v.as_f64()).unwrap_or(0.0),
                    });
                }
            }
            _ => {}
        }
    }
    Ok((nodes, edges, bridges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(dir: &Path, name: &str, body: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    #[test]
    fn csv_pair_roundtrip_minimal() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "nodes.csv", "id,lon,lat\n0,0.0,0.0\n1,0.1,0.0\n");
        write_file(dir.path(), "edges.csv", "id,u,v\n0,0,1\n");
        write_file(
            dir.path(),
            "bridges.csv",
            "id,edge_id,lon,lat,bridge_class,built_year,material,structure_type,\
             num_spans,max_span_m,length_m,skew_deg\n",
        );
        let net = load_network(dir.path(), NetworkFormat::CsvPair).unwrap();
        assert_eq!((net.node_count(), net.edge_count()), (2, 1));

        let out = tempfile::tempdir().unwrap();
        write_csv_pair(&net, out.path()).unwrap();
        let reloaded = load_network(out.path(), NetworkFormat::CsvPair).unwrap();
        assert_eq!(reloaded.edges(), net.edges());
    }

    #[test]
    fn dangling_bridge_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "nodes.csv", "id,lon,lat\n0,0.0,0.0\n1,0.1,0.0\n");
        write_file(dir.path(), "edges.csv", "id,u,v\n0,0,1\n");
        write_file(
            dir.path(),
            "bridges.csv",
            "id,edge_id,lon,lat,bridge_class,built_year,material,structure_type,\
             num_spans,max_span_m,length_m,skew_deg\n\
             0,99,0.05,0.0,concrete-pre75-multi,1960,concrete,girder,3,30,90,0\n",
        );
        let err = load_network(dir.path(), NetworkFormat::CsvPair).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn parallel_edges_merge_with_bridge_union() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "nodes.csv", "id,lon,lat\n0,0.0,0.0\n1,0.1,0.0\n");
        write_file(dir.path(), "edges.csv", "id,u,v\n0,0,1\n1,1,0\n");
        write_file(
            dir.path(),
            "bridges.csv",
            "id,edge_id,lon,lat,bridge_class,built_year,material,structure_type,\
             num_spans,max_span_m,length_m,skew_deg\n\
             0,0,0.02,0.0,concrete-pre75-multi,1960,concrete,girder,3,30,90,0\n\
             1,1,0.08,0.0,steel-post75-single,1990,steel,truss,1,50,50,10\n",
        );
        let net = load_network(dir.path(), NetworkFormat::CsvPair).unwrap();
        assert_eq!(net.edge_count(), 1);
        assert_eq!(net.edges()[0].bridge_ids, vec![0, 1]);
    }

    #[test]
    fn geojson_roundtrip_of_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "geometry": {"type": "Point", "coordinates": [0.0, 0.0]},
                 "properties": {"kind": "node", "id": 0}},
                {"type": "Feature", "geometry": {"type": "Point", "coordinates": [0.1, 0.0]},
                 "properties": {"kind": "node", "id": 1}},
                {"type": "Feature",
                 "geometry": {"type": "LineString", "coordinates": [[0.0,0.0],[0.1,0.0]]},
                 "properties": {"id": 0, "u": 0, "v": 1}},
                {"type": "Feature", "geometry": {"type": "Point", "coordinates": [0.05, 0.0]},
                 "properties": {"id": 0, "edge_id": 0, "bridge_class": "steel-pre75-multi",
                                 "built_year": 1950, "material": "steel",
                                 "structure_type": "girder", "num_spans": 4,
                                 "max_span_m": 20.0, "length_m": 80.0, "skew_deg": 5.0}}
            ]
        });
        let path = dir.path().join("net.geojson");
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
        let net = load_network(&path, NetworkFormat::Geojson).unwrap();
        assert_eq!(
            (net.node_count(), net.edge_count(), net.bridge_count()),
            (2, 1, 1)
        );
        assert_eq!(net.bridges()[0].attributes.built_year, 1950);
    }
}
