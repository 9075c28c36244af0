//! `SEMV` vector files.
//!
//! Layout (all little-endian): 4-byte magic `SEMV`, `u32` version (1),
//! `u64` row count, `u32` dim, then `count * dim` row-major `f32`s. The
//! sidecar index holds one item id per line; line `k` names row `k`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::EncodingError;

pub const MAGIC: &[u8; 4] = b"SEMV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

/// `items.semv` -> `items.ids`.
pub fn index_path_for(vector_path: &Path) -> PathBuf {
    vector_path.with_extension("ids")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EncodingError + '_ {
    move |source| EncodingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_vectors(path: &Path, matrix: &Array2<f32>) -> Result<(), EncodingError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + matrix.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.ncols() as u32).to_le_bytes());
    for x in matrix.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_vectors(path: &Path) -> Result<Array2<f32>, EncodingError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_vectors(path, &bytes)
}

fn parse_vectors(path: &Path, bytes: &[u8]) -> Result<Array2<f32>, EncodingError> {
    let truncated = |detail: String| EncodingError::TruncatedFile {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EncodingError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(format!("{} header bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(EncodingError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| truncated(format!("header claims {count}x{dim}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(truncated(format!(
            "expected {expected} payload bytes for {count}x{dim}, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((count, dim), data).expect("length checked above"))
}

pub fn write_index(path: &Path, ids: &[String]) -> Result<(), EncodingError> {
    let mut out = Vec::new();
    for id in ids {
        writeln!(out, "{id}").expect("write to Vec");
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_index(path: &Path) -> Result<Vec<String>, EncodingError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EmbeddingTable;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = Path::new("mem");
        assert!(matches!(parse_vectors(p, b"NOPE0000"), Err(EncodingError::BadMagic { .. })));
        let mut good = Vec::new();
        good.extend_from_slice(MAGIC);
        good.extend_from_slice(&VERSION.to_le_bytes());
        good.extend_from_slice(&2u64.to_le_bytes());
        good.extend_from_slice(&3u32.to_le_bytes());
        good.extend_from_slice(&[0u8; 20]);
        assert!(matches!(parse_vectors(p, &good), Err(EncodingError::TruncatedFile { .. })));
        assert!(matches!(
            parse_vectors(p, &good[..10]),
            Err(EncodingError::TruncatedFile { .. })
        ));
        good.extend_from_slice(&[0u8; 4]);
        assert_eq!(parse_vectors(p, &good).unwrap().shape(), &[2, 3]);
    }

    #[test]
    fn index_count_must_match_rows() {
        let dir = tempfile::tempdir().unwrap();
        let v = dir.path().join("t.semv");
        write_vectors(&v, &Array2::zeros((3, 2))).unwrap();
        write_index(&index_path_for(&v), &["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            EmbeddingTable::load_with_sidecar(&v),
            Err(EncodingError::IndexMismatch { ids: 2, rows: 3 })
        ));
    }

    proptest! {
        #[test]
        fn save_load_round_trips_bit_exactly(
            rows in 1usize..6,
            dim in 1usize..7,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::util::seeded_rng(seed);
            let data: Vec<f32> = (0..rows * dim)
                .map(|_| f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff))
                .collect();
            let m = Array2::from_shape_vec((rows, dim), data).unwrap();
            let ids: Vec<String> = (0..rows).map(|i| format!("item{i}")).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.semv");
            let t = EmbeddingTable::new(ids, m).unwrap();
            t.save_with_sidecar(&path).unwrap();
            let back = EmbeddingTable::load_with_sidecar(&path).unwrap();
            prop_assert_eq!(&back, &t);
            let path2 = dir.path().join("y.semv");
            back.save_with_sidecar(&path2).unwrap();
            prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }
}
