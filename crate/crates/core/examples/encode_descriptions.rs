//! Encodes the bundled description cache with the stub sentence encoder and
//! round-trips the table through the binary vector format.
//!
//! cargo run --example encode_descriptions

use semrec::encoding::{encode_descriptions, StubEncoder, DEFAULT_BATCH_SIZE};
use semrec::grounding::SemanticCache;
use semrec::EmbeddingTable;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny");
    let cache = SemanticCache::load(&fixture.join("semantic_cache.jsonl"))?;
    let table = encode_descriptions(&cache, &StubEncoder::default(), DEFAULT_BATCH_SIZE)?;
    println!("{} descriptions -> {}x{} table", cache.len(), table.len(), table.dim());

    let dir = tempfile_dir();
    let path = dir.join("grounded.semv");
    table.save_with_sidecar(&path)?;
    let back = EmbeddingTable::load_with_sidecar(&path)?;
    assert_eq!(back, table);

    let (a, b) = (table.norm_row(0), table.norm_row(1));
    println!("cos({}, {}) = {:.4}", table.id(0), table.id(1), a.dot(&b));
    println!("written to {}", path.display());
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("semrec-encode");
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
