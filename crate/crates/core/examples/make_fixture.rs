//! Regenerates the bundled tiny dataset under `fixtures/tiny/`: 30 users,
//! 60 items in six categories, descriptions for 48 of them, and stub
//! embeddings for descriptions (384-d), titles (384-d) and images (768-d).
//!
//! cargo run --example make_fixture [-- <out-dir>]

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use semrec::encoding::{encode_descriptions, StubEncoder, TextEncoder};
use semrec::grounding::{CacheStore, DescriptionRecord, GroundingPrompt};
use semrec::EmbeddingTable;

const CATEGORIES: [&str; 6] = ["dress", "sneaker", "ring", "handbag", "jacket", "sandal"];
const COLORS: [&str; 5] = ["red", "navy", "ivory", "emerald", "black"];
const MATERIALS: [[&str; 2]; 6] = [
    ["silk", "linen"],
    ["mesh", "suede"],
    ["silver", "gold"],
    ["leather", "canvas"],
    ["denim", "wool"],
    ["cork", "leather"],
];
const OCCASIONS: [&str; 6] = ["evening parties", "running", "weddings", "office days", "cold commutes", "beach trips"];
const STYLES: [&str; 4] = ["minimal", "vintage", "sporty", "elegant"];
const BRANDS: [&str; 8] = ["Lumen", "Orla", "Kestrel", "Mavi", "Tamsin", "Brio", "Nord", "Vela"];

const N_ITEMS: usize = 60;
const N_USERS: usize = 30;
const GENERATED_AT: i64 = 1_700_000_000;

struct Item {
    id: String,
    category: usize,
    color: usize,
    material: &'static str,
    style: &'static str,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);

    let items: Vec<Item> = (0..N_ITEMS)
        .map(|i| Item {
            id: format!("p{:03}", i + 1),
            category: i / 10,
            color: rng.random_range(0..COLORS.len()),
            material: *MATERIALS[i / 10].choose(&mut rng).unwrap(),
            style: *STYLES.choose(&mut rng).unwrap(),
        })
        .collect();

    let mut catalog = String::from("item_id\timage\ttitle\n");
    let mut titles = Vec::new();
    for it in &items {
        let title = format!(
            "{} {} {}",
            BRANDS.choose(&mut rng).unwrap(),
            CATEGORIES[it.category],
            rng.random_range(100..999)
        );
        writeln!(catalog, "{}\timages/{}.jpg\t{title}", it.id, it.id)?;
        titles.push(title);
    }
    std::fs::write(out.join("items.tsv"), catalog)?;

    // Descriptions exist for 48 of the 60 items.
    let cache_file = out.join(semrec::grounding::CACHE_FILE);
    if cache_file.exists() {
        std::fs::remove_file(&cache_file)?;
    }
    let mut store = CacheStore::open(&out)?;
    let model_id = "fixture-template";
    let prompt_hash = GroundingPrompt::default().hash(model_id);
    for (i, it) in items.iter().enumerate().filter(|(i, _)| i % 5 != 4) {
        let article = if it.style.starts_with(['a', 'e', 'i', 'o', 'u']) { "An" } else { "A" };
        let description = format!(
            "{article} {} {} {} in {}, made for {}. The {} tone reads clearly in the photo.",
            it.style,
            COLORS[it.color],
            CATEGORIES[it.category],
            it.material,
            OCCASIONS[it.category],
            COLORS[it.color],
        );
        store.append(DescriptionRecord {
            item_id: it.id.clone(),
            description,
            model_id: model_id.into(),
            prompt_hash: prompt_hash.clone(),
            created_at: GENERATED_AT + i as i64,
            model_note: None,
        })?;
    }

    let encoder = StubEncoder::default();
    let grounded = encode_descriptions(store.cache(), &encoder, 64)?;
    grounded.save_with_sidecar(&out.join("grounded.semv"))?;

    let ids: Vec<String> = items.iter().map(|it| it.id.clone()).collect();
    let title_rows: Vec<Vec<f64>> = encoder
        .encode_batch(&titles)?
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect();
    EmbeddingTable::from_rows(ids.clone(), &title_rows)?.save_with_sidecar(&out.join("title.semv"))?;

    let cat_centers: Vec<Vec<f64>> = (0..CATEGORIES.len()).map(|_| gaussian(&mut rng, 768)).collect();
    let color_centers: Vec<Vec<f64>> = (0..COLORS.len()).map(|_| gaussian(&mut rng, 768)).collect();
    let vision_rows: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            let noise = gaussian(&mut rng, 768);
            (0..768)
                .map(|j| cat_centers[it.category][j] + 0.5 * color_centers[it.color][j] + 1.2 * noise[j])
                .collect()
        })
        .collect();
    EmbeddingTable::from_rows(ids, &vision_rows)?.save_with_sidecar(&out.join("vision.semv"))?;

    // Each user favours one category and one color.
    let mut log = String::from("user_id\titem_id\ttimestamp\tsplit\n");
    for u in 0..N_USERS {
        let home = u % CATEGORIES.len();
        let color = rng.random_range(0..COLORS.len());
        let mut pool: Vec<(usize, f64)> = items
            .iter()
            .enumerate()
            .map(|(i, it)| {
                let w = match (it.category == home, it.color == color) {
                    (true, true) => 6.0,
                    (true, false) => 2.0,
                    (false, true) => 0.3,
                    (false, false) => 0.05,
                };
                (i, w)
            })
            .collect();
        let mut picked = Vec::new();
        while picked.len() < 8 {
            let &(i, _) = pool.choose_weighted(&mut rng, |p| p.1)?;
            picked.push(i);
            pool.retain(|p| p.0 != i);
        }
        for (step, &i) in picked.iter().enumerate() {
            let split = match step {
                0..=4 => "train",
                5 | 6 => "validation",
                _ => "test",
            };
            let ts = GENERATED_AT + (u * 100 + step) as i64 * 3600;
            writeln!(log, "u{:02}\t{}\t{ts}\t{split}", u + 1, items[i].id)?;
        }
    }
    std::fs::write(out.join("interactions.tsv"), log)?;
    println!("wrote fixture to {}", out.display());
    Ok(())
}
