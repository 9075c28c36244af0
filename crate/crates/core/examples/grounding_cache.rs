//! Builds a semantic cache with the offline stub generator, then builds it
//! again to show that cached items are never regenerated.
//!
//! cargo run --example grounding_cache -- [cache_dir]

use std::sync::Arc;

use semrec::grounding::{build_semantic_cache, CacheStore, Grounder, GroundingPrompt, StubGenerator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("semrec-cache"), Into::into);
    let items: Vec<(String, String)> = (1..=12).map(|i| (format!("p{i:03}"), format!("images/p{i:03}.jpg"))).collect();

    let stub = Arc::new(StubGenerator::new().failing_for(["p007"]));
    let grounder = Grounder::new(stub.clone(), GroundingPrompt::default())?;
    println!("prompt hash {}", grounder.prompt_hash());

    let mut store = CacheStore::open(&dir)?;
    let first = build_semantic_cache(&grounder, &items, &mut store, 4)?;
    println!("first pass: {} grounded, {} cached, {} failed", first.grounded, first.already_cached, first.failures.len());
    let calls = stub.calls();

    let mut store = CacheStore::open(&dir)?;
    let second = build_semantic_cache(&grounder, &items, &mut store, 4)?;
    println!(
        "second pass: {} grounded, {} cached, {} generator calls",
        second.grounded,
        second.already_cached,
        stub.calls() - calls
    );
    if let Some(r) = store.cache().records().next() {
        println!("{}: {}", r.item_id, r.description);
    }
    println!("cache at {}", store.cache_path().unwrap().display());
    Ok(())
}
