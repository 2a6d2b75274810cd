//! Model checkpoint container.
//!
//! Layout: magic `BNGN`, format version (u32 LE), JSON header length
//! (u32 LE), JSON header (shapes, dropout, normalization stats, training
//! config echo), parameter count (u64 LE), parameters as little-endian
//! f64 in `params_flat` order. Loading rejects any shape drift.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{canonical_shapes, AffineLayer, GnnModel, TrainConfig, HEAD_LAYERS, MP_LAYERS};
use crate::dataset::FeatureStats;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BNGN";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    /// (d_in, d_out) per affine, message-passing blocks then head.
    shapes: Vec<(usize, usize)>,
    dropout_rate: f64,
    norm: FeatureStats,
    train_config: TrainConfig,
}

/// Write a checkpoint. Byte-deterministic for a given model and config.
pub fn save_model(model: &GnnModel, train_config: &TrainConfig, path: &Path) -> Result<()> {
    model.validate_shapes()?;
    let header = Header {
        shapes: model
            .layers
            .iter()
            .chain(model.head.iter())
            .map(|a| a.shape())
            .collect(),
        dropout_rate: model.dropout_rate,
        norm: model.norm.clone(),
        train_config: train_config.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encoding: {e}")))?;
    let params = model.params_flat();

    let mut out = Vec::with_capacity(16 + header_bytes.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(header_bytes.len() as u32)
        .expect("vec write");
    out.extend_from_slice(&header_bytes);
    out.write_u64::<LittleEndian>(params.len() as u64)
        .expect("vec write");
    for p in params {
        out.write_f64::<LittleEndian>(p).expect("vec write");
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a checkpoint written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(GnnModel, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cursor = std::io::Cursor::new(&bytes);

    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a model checkpoint)".into()));
    }
    let version = cursor
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Checkpoint("truncated version".into()))?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = cursor
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Checkpoint("truncated header length".into()))?
        as usize;
    let mut header_bytes = vec![0u8; header_len];
    cursor
        .read_exact(&mut header_bytes)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("header decoding: {e}")))?;

    if header.shapes != canonical_shapes() {
        return Err(Error::Checkpoint(format!(
            "layer shapes {:?} do not match this architecture",
            header.shapes
        )));
    }

    let count = cursor
        .read_u64::<LittleEndian>()
        .map_err(|_| Error::Checkpoint("truncated parameter count".into()))?
        as usize;
    let expected: usize = header.shapes.iter().map(|&(i, o)| i * o + o).sum();
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match shapes ({expected})"
        )));
    }
    let mut params = vec![0.0f64; count];
    cursor
        .read_f64_into::<LittleEndian>(&mut params)
        .map_err(|_| Error::Checkpoint("truncated parameters".into()))?;

    let shapes = header.shapes;
    let mut model = GnnModel {
        layers: shapes[..MP_LAYERS]
            .iter()
            .map(|&(i, o)| AffineLayer {
                weight: ndarray::Array2::zeros((i, o)),
                bias: ndarray::Array1::zeros(o),
            })
            .collect(),
        head: shapes[MP_LAYERS..MP_LAYERS + HEAD_LAYERS]
            .iter()
            .map(|&(i, o)| AffineLayer {
                weight: ndarray::Array2::zeros((i, o)),
                bias: ndarray::Array1::zeros(o),
            })
            .collect(),
        dropout_rate: header.dropout_rate,
        norm: header.norm,
    };
    model.set_params_flat(&params)?;
    model.validate_shapes()?;
    Ok((model, header.train_config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::tests::unit_stats;

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let model = GnnModel::init(unit_stats(), 77);
        let cfg = TrainConfig::default().with_seed(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bngn");
        save_model(&model, &cfg, &path).unwrap();
        let (loaded, loaded_cfg) = load_model(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        let a = model.params_flat();
        let b = loaded.params_flat();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        // determinism of the byte stream
        let path2 = dir.path().join("model2.bngn");
        save_model(&model, &cfg, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupted_shapes_are_rejected() {
        let model = GnnModel::init(unit_stats(), 1);
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bngn");
        save_model(&model, &cfg, &path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        // tamper with the declared shape inside the JSON header
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let idx = text.find("[9,64]").expect("first shape present");
        bytes[idx + 1] = b'8';
        // keep the header length valid: same byte count
        let bad = dir.path().join("bad.bngn");
        fs::write(&bad, &bytes).unwrap();
        let err = load_model(&bad).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");

        // truncated parameter section
        let len = fs::read(&path).unwrap().len();
        let mut short = fs::read(&path).unwrap();
        short.truncate(len - 9);
        fs::write(dir.path().join("short.bngn"), &short).unwrap();
        assert!(load_model(&dir.path().join("short.bngn")).is_err());
    }
}
