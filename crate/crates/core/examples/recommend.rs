//! Profile building and masked top-K retrieval for one user of the bundled
//! dataset, step by step.
//!
//! cargo run --example recommend -- [user_id]

use semrec::corpus::{user_history, LogFormat, Recency};
use semrec::retrieval::{build_mask, build_profile, recommend_topk};
use semrec::{EmbeddingTable, InteractionLog, MaskPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny");
    let user = std::env::args().nth(1).unwrap_or_else(|| "u01".to_string());
    let log = InteractionLog::load(&fixture.join("interactions.tsv"), LogFormat::Tsv)?;
    let table = EmbeddingTable::load_with_sidecar(&fixture.join("title.semv"))?;

    let history = user_history(&log, &user, 10, Recency::Timestamp)?;
    println!("history of {user}: {:?}", history.items);
    let profile = build_profile(&history, &table)?;
    let mask = build_mask(&log, &history, MaskPolicy::History);
    let rec = recommend_topk(&profile, &table, &mask, 5)?;
    for (rank, (item, score)) in rec.ranked.iter().enumerate() {
        println!("{:>2}. {item}  {score:.4}", rank + 1);
    }
    Ok(())
}
