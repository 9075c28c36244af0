use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{FusionModel, ParamSlice};
use super::{FusionError, FusionKind};
use crate::encoding::{index_path_for, read_index, read_vectors, write_index, write_vectors};

/// Everything needed to rebuild a [`FusionModel`] besides its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: FusionKind,
    pub text_dim: usize,
    pub vision_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    pub config_hash: String,
    pub n_params: usize,
    pub slices: Vec<ParamSlice>,
}

fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> FusionError {
    FusionError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Writes the parameters as a one-row vector file at `path` (f32), its id
/// sidecar, and a JSON manifest next to it.
pub fn save_model(model: &FusionModel, path: &Path, config_hash: &str) -> Result<ModelManifest, FusionError> {
    let row: Vec<f32> = model.params.iter().map(|&p| p as f32).collect();
    let matrix = Array2::from_shape_vec((1, row.len()), row).expect("one row");
    write_vectors(path, &matrix)?;
    write_index(&index_path_for(path), &["params".to_string()])?;
    let manifest = ModelManifest {
        kind: model.kind,
        text_dim: model.text_dim,
        vision_dim: model.vision_dim,
        output_dim: model.output_dim,
        seed: model.seed,
        config_hash: config_hash.to_string(),
        n_params: model.n_params(),
        slices: model.slices.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = manifest_path(path);
    std::fs::write(&mpath, json + "\n").map_err(|e| io_err(&mpath, e))?;
    Ok(manifest)
}

pub fn load_model(path: &Path) -> Result<(FusionModel, ModelManifest), FusionError> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| io_err(&mpath, e))?;
    read_index(&index_path_for(path))?;
    let matrix = read_vectors(path)?;
    if matrix.nrows() != 1 || matrix.ncols() != manifest.n_params {
        return Err(FusionError::DimMismatch {
            expected: manifest.n_params,
            got: matrix.len(),
        });
    }
    let model = FusionModel::new(
        manifest.kind,
        manifest.text_dim,
        manifest.vision_dim,
        manifest.output_dim,
        manifest.seed,
    )?;
    if model.slices != manifest.slices {
        return Err(FusionError::InvalidConfig(format!(
            "{}: parameter layout does not match {} model",
            mpath.display(),
            manifest.kind
        )));
    }
    let params = matrix.iter().map(|&x| f64::from(x)).collect();
    Ok((model.with_params(params)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gating.semv");
        let m = FusionModel::new(FusionKind::Gating, 5, 7, 4, 11).unwrap();
        save_model(&m, &path, "abc").unwrap();
        let (back, manifest) = load_model(&path).unwrap();
        assert_eq!(manifest.config_hash, "abc");
        assert_eq!(back.kind, FusionKind::Gating);
        for (a, b) in m.params.iter().zip(&back.params) {
            assert!((a - b).abs() <= 1e-7 * a.abs().max(1e-30) + 1e-12);
        }
        let t = [0.1, 0.2, 0.3, 0.4, 0.5];
        let v = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let (x, y) = (m.forward(Some(&t), Some(&v)).unwrap(), back.forward(Some(&t), Some(&v)).unwrap());
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn concat_has_an_empty_parameter_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("concat.semv");
        let m = FusionModel::new(FusionKind::Concat, 3, 2, 5, 0).unwrap();
        save_model(&m, &path, "").unwrap();
        assert_eq!(load_model(&path).unwrap().0.n_params(), 0);
    }
}
