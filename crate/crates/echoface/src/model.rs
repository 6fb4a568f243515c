//! Model artifacts: one binary file per trained model.
//!
//! Layout: magic `EFM1`, a kind byte, a little-endian u32 JSON header
//! length, the JSON header (architecture, normalization statistics,
//! hyperparameters), then the weights as raw little-endian f64.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::blendshape::BlendshapeVector;
use crate::conv::{ConvConfig, ConvModel};
use crate::error::{Error, Result};
use crate::ridge::{NormStats, RidgeModel};
use crate::window::EchoWindow;

const MAGIC: [u8; 4] = *b"EFM1";

/// Any trained regressor.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ridge(RidgeModel),
    Conv(ConvModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Ridge(_) => "ridge",
            Model::Conv(_) => "conv",
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Model::Ridge(m) => m.out_dim(),
            Model::Conv(m) => m.out_dim(),
        }
    }

    /// Raw outputs in scaled units, clamped to [0, 1000].
    pub fn predict_raw(&self, window: &EchoWindow) -> Result<Vec<f64>> {
        match self {
            Model::Ridge(m) => {
                let mut flat = vec![0.0; crate::dataset::WINDOW_FEATURES];
                for r in 0..crate::window::WINDOW_ROWS {
                    for t in 0..crate::window::WINDOW_FRAMES {
                        flat[r * crate::window::WINDOW_FRAMES + t] = window.values[[r, t]];
                    }
                }
                let raw = m.predict_flat(&flat)?;
                Ok(raw.into_iter().map(|v| v.clamp(0.0, 1000.0)).collect())
            }
            Model::Conv(m) => m.predict_raw(window),
        }
    }

    /// Full 52-parameter prediction.
    pub fn predict(&self, window: &EchoWindow) -> Result<BlendshapeVector> {
        match self {
            Model::Ridge(m) => m.predict(window),
            Model::Conv(m) => m.predict(window),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RidgeHeader {
    lambda: f64,
    norm: NormStats,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct ConvHeader {
    cfg: ConvConfig,
    norm: NormStats,
    n_params: usize,
}

fn write_f64s(out: &mut impl Write, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(data: &[u8], n: usize) -> Result<(Vec<f64>, &[u8])> {
    if data.len() < n * 8 {
        return Err(Error::data("model file truncated"));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = [0u8; 8];
        b.copy_from_slice(&data[i * 8..i * 8 + 8]);
        out.push(f64::from_le_bytes(b));
    }
    Ok((out, &data[n * 8..]))
}

/// Write a model artifact.
pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    match model {
        Model::Ridge(m) => {
            out.write_all(&[0u8])?;
            let header = serde_json::to_vec(&RidgeHeader {
                lambda: m.lambda,
                norm: m.norm,
                rows: m.weights.nrows(),
                cols: m.weights.ncols(),
            })
            .map_err(|e| Error::data(e.to_string()))?;
            out.write_all(&(header.len() as u32).to_le_bytes())?;
            out.write_all(&header)?;
            write_f64s(&mut out, m.weights.iter().copied())?;
            write_f64s(&mut out, m.bias.iter().copied())?;
        }
        Model::Conv(m) => {
            out.write_all(&[1u8])?;
            let header = serde_json::to_vec(&ConvHeader {
                cfg: m.cfg.clone(),
                norm: m.norm,
                n_params: m.params.len(),
            })
            .map_err(|e| Error::data(e.to_string()))?;
            out.write_all(&(header.len() as u32).to_le_bytes())?;
            out.write_all(&header)?;
            write_f64s(&mut out, m.params.iter().copied())?;
        }
    }
    Ok(())
}

/// Read a model artifact.
pub fn load_model(path: &Path) -> Result<Model> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 9 || data[0..4] != MAGIC {
        return Err(Error::data("not a model file (bad magic)"));
    }
    let kind = data[4];
    let header_len = u32::from_le_bytes([data[5], data[6], data[7], data[8]]) as usize;
    if data.len() < 9 + header_len {
        return Err(Error::data("model file truncated"));
    }
    let header = &data[9..9 + header_len];
    let rest = &data[9 + header_len..];
    match kind {
        0 => {
            let h: RidgeHeader =
                serde_json::from_slice(header).map_err(|e| Error::data(e.to_string()))?;
            let (w, rest) = read_f64s(rest, h.rows * h.cols)?;
            let (bias, _) = read_f64s(rest, h.cols)?;
            let weights = Array2::from_shape_vec((h.rows, h.cols), w)
                .map_err(|e| Error::data(e.to_string()))?;
            Ok(Model::Ridge(RidgeModel {
                weights,
                bias,
                lambda: h.lambda,
                norm: h.norm,
            }))
        }
        1 => {
            let h: ConvHeader =
                serde_json::from_slice(header).map_err(|e| Error::data(e.to_string()))?;
            let (params, _) = read_f64s(rest, h.n_params)?;
            Ok(Model::Conv(ConvModel {
                cfg: h.cfg,
                norm: h.norm,
                params,
            }))
        }
        k => Err(Error::data(format!("unknown model kind {k}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::NormStats;

    #[test]
    fn ridge_artifact_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.efm");
        let model = Model::Ridge(RidgeModel {
            weights: Array2::from_shape_fn((crate::dataset::WINDOW_FEATURES, 3), |(i, j)| {
                (i as f64 * 0.001 + j as f64).sin()
            }),
            bias: vec![1.5, -0.25, 1000.0],
            lambda: 7.5,
            norm: NormStats {
                mean: 0.123,
                scale: 4.56,
            },
        });
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn conv_artifact_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conv.efm");
        let cfg = ConvConfig::tiny(52);
        let n = cfg.n_params();
        let model = Model::Conv(ConvModel {
            cfg,
            norm: NormStats {
                mean: -3.25e-4,
                scale: 0.0125,
            },
            params: (0..n).map(|i| (i as f64 * 0.37).cos()).collect(),
        });
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn garbage_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.efm");
        std::fs::write(&path, b"not a model at all").unwrap();
        assert!(load_model(&path).is_err());
    }
}
