//! Runs a whole experiment from a config file and prints the results table.
//!
//! cargo run --release --example run_experiment -- [config.toml] [out_dir]

use semrec::bench::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny/config.toml"), Into::into);
    let mut cfg = ExperimentConfig::load(&config)?;
    cfg.run.out = args.next().map_or_else(|| std::env::temp_dir().join("semrec-run"), Into::into);
    cfg.validate()?;

    let summary = run_experiment(&cfg)?;
    print!("{}", std::fs::read_to_string(summary.out_dir.join("results.csv"))?);
    println!("config hash {}", cfg.hash());
    println!("outputs in {}", summary.out_dir.display());
    Ok(())
}
