use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use semrec::bench::{
    brute_force_oracle, build_variant, evaluation_truth, generate_synthetic, recommend_users,
    run_experiment, BenchError, ExperimentConfig, Inputs, SyntheticSpec, Variant,
};
use semrec::corpus::Split;
use semrec::encoding::{encode_descriptions, HttpEncoder, StubEncoder, TextEncoder, DEFAULT_BATCH_SIZE};
use semrec::fusion::save_model;
use semrec::grounding::{
    build_semantic_cache, CacheStore, Grounder, GroundingPrompt, HttpGenerator, SemanticCache, StubGenerator,
    TextGenerator, CACHE_FILE,
};
use semrec::metrics::evaluate_run;
use semrec::retrieval::{read_recommendations, write_recommendations, Recommendation};
use semrec::service::{EndpointConfig, EMBEDDING_TOKEN_ENV, EMBEDDING_URL_ENV, GROUNDING_TOKEN_ENV, GROUNDING_URL_ENV};
use semrec::MaskPolicy;

#[derive(Parser)]
#[command(name = "semrec", version, about = "Semantic item representations for retrieval-based recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunFlags {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Variant(s) to run; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    /// Cutoff(s) K; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    mask_policy: Option<MaskPolicy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (directory or file depending on the command).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate descriptions for item images into a semantic cache.
    Ground {
        /// TSV of `item_id<TAB>image` (URL or path); extra columns are ignored.
        #[arg(long)]
        items: PathBuf,
        /// Use the offline stub generator instead of the HTTP service.
        #[arg(long)]
        stub: bool,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Embed cached descriptions into a vector file.
    Encode {
        /// Cache file or the directory holding it.
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        stub: bool,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Train (or build) one fused representation and save it.
    FuseTrain {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Top-K lists for every user with training history.
    Recommend {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Score a recommendations file against the config's ground truth.
    Evaluate {
        #[arg(long)]
        recs: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every configured variant and write reports, tables and plot data.
    RunAll {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Write a clustered synthetic dataset with a ready-to-run config.
    Synth {
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare the retrieval engine with the brute-force ranker.
    OracleCheck {
        /// Synthetic datasets to check when no config is given.
        #[arg(long, default_value_t = 5)]
        datasets: u64,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn data_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Data(e.to_string())
}

fn load_config(flags: &RunFlags) -> Result<ExperimentConfig, BenchError> {
    let path = flags
        .config
        .as_deref()
        .ok_or_else(|| BenchError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if !flags.variant.is_empty() {
        cfg.run.variants = flags.variant.clone();
    }
    if !flags.k.is_empty() {
        cfg.run.ks = flags.k.clone();
    }
    if let Some(p) = flags.mask_policy {
        cfg.run.mask_policy = p;
    }
    if let Some(s) = flags.seed {
        cfg.run.seed = s;
    }
    if let Some(out) = &flags.out {
        cfg.run.out = std::path::absolute(out).map_err(|e| BenchError::Config(format!("{}: {e}", out.display())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single_variant(cfg: &ExperimentConfig) -> Result<Variant, BenchError> {
    match cfg.run.variants.as_slice() {
        [v] => Ok(*v),
        _ => Err(BenchError::Config("exactly one --variant is required".into())),
    }
}

fn required_out(flags: &RunFlags) -> Result<&Path, BenchError> {
    flags
        .out
        .as_deref()
        .ok_or_else(|| BenchError::Config("--out is required".into()))
}

fn ground(items: &Path, stub: bool, parallelism: usize, flags: &RunFlags) -> Result<(), BenchError> {
    let text = std::fs::read_to_string(items).map_err(|e| BenchError::Data(format!("{}: {e}", items.display())))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("item_id")) {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next()) {
            (Some(id), Some(image)) if !id.is_empty() && !image.is_empty() => pairs.push((id.to_string(), image.to_string())),
            _ => return Err(BenchError::Data(format!("{}:{}: expected item_id<TAB>image", items.display(), n + 1))),
        }
    }
    let generator: Arc<dyn TextGenerator> = if stub {
        Arc::new(StubGenerator::new())
    } else {
        let endpoint = EndpointConfig::from_env(GROUNDING_URL_ENV, GROUNDING_TOKEN_ENV)
            .ok_or_else(|| BenchError::Config(format!("{GROUNDING_URL_ENV} is not set (or pass --stub)")))?;
        Arc::new(HttpGenerator::new(endpoint))
    };
    let grounder = Grounder::new(generator, GroundingPrompt::default()).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut store = CacheStore::open(required_out(flags)?).map_err(data_err)?;
    let outcome = build_semantic_cache(&grounder, &pairs, &mut store, parallelism).map_err(data_err)?;
    println!(
        "grounded {} new, {} already cached, {} failed; cache: {}",
        outcome.grounded,
        outcome.already_cached,
        outcome.failures.len(),
        store.cache_path().unwrap().display()
    );
    Ok(())
}

fn encode(cache: &Path, stub: bool, batch_size: usize, flags: &RunFlags) -> Result<(), BenchError> {
    let file = if cache.is_dir() { cache.join(CACHE_FILE) } else { cache.to_path_buf() };
    let cache = SemanticCache::load(&file).map_err(data_err)?;
    let encoder: Box<dyn TextEncoder> = if stub {
        Box::new(StubEncoder::default())
    } else {
        let endpoint = EndpointConfig::from_env(EMBEDDING_URL_ENV, EMBEDDING_TOKEN_ENV)
            .ok_or_else(|| BenchError::Config(format!("{EMBEDDING_URL_ENV} is not set (or pass --stub)")))?;
        Box::new(HttpEncoder::new(endpoint))
    };
    let table = encode_descriptions(&cache, encoder.as_ref(), batch_size).map_err(data_err)?;
    let out = required_out(flags)?;
    table.save_with_sidecar(out).map_err(data_err)?;
    println!("encoded {} descriptions ({}-d) with {} into {}", table.len(), table.dim(), encoder.model_id(), out.display());
    Ok(())
}

fn fuse_train(flags: &RunFlags) -> Result<(), BenchError> {
    let cfg = load_config(flags)?;
    let variant = single_variant(&cfg)?;
    let inputs = Inputs::load(&cfg, &[variant])?;
    let built = build_variant(&cfg, &inputs, variant)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| BenchError::Data(format!("{}: {e}", dir.display())))?;
    if let Some(model) = &built.model {
        save_model(model, &dir.join(format!("{variant}.semv")), &cfg.hash()).map_err(data_err)?;
    }
    built
        .table
        .save_with_sidecar(&dir.join(format!("{variant}.table.semv")))
        .map_err(data_err)?;
    if let Some(log) = &built.training {
        let json = serde_json::to_string_pretty(log).expect("log serializes") + "\n";
        std::fs::write(dir.join(format!("{variant}.training.json")), json).map_err(data_err)?;
        println!("{variant}: {} epochs, final loss {:.6}", log.epoch_losses.len(), log.epoch_losses.last().unwrap_or(&f64::NAN));
    }
    println!("wrote {variant} ({} items, {}-d) to {}", built.table.len(), built.table.dim(), dir.display());
    Ok(())
}

fn recommend(flags: &RunFlags) -> Result<(), BenchError> {
    let cfg = load_config(flags)?;
    let variant = single_variant(&cfg)?;
    let inputs = Inputs::load(&cfg, &[variant])?;
    let built = build_variant(&cfg, &inputs, variant)?;
    let users: Vec<String> = inputs.log.users_in(Split::Train).into_iter().map(String::from).collect();
    let k = *cfg.run.ks.iter().max().expect("validated");
    let batch = recommend_users(&inputs.log, &built.table, &users, cfg.run.l_max, cfg.run.mask_policy, k)?;
    let out = match &flags.out {
        Some(p) => p.clone(),
        None => cfg.out_dir().join(format!("{variant}.recommendations.jsonl")),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(data_err)?;
    }
    write_recommendations(&out, &batch.recs, variant.name()).map_err(data_err)?;
    println!("{} users, top-{k}, written to {} (skipped: {:?})", batch.recs.len(), out.display(), batch.skipped);
    Ok(())
}

fn evaluate(recs: &Path, flags: &RunFlags) -> Result<(), BenchError> {
    let mut cfg_flags = flags.clone();
    cfg_flags.out = None;
    let cfg = load_config(&cfg_flags)?;
    let lines = read_recommendations(recs).map_err(data_err)?;
    let variant = lines.first().map_or_else(|| "unknown".to_string(), |l| l.variant.clone());
    let recs: Vec<Recommendation> = lines
        .into_iter()
        .map(|l| Recommendation {
            user_id: l.user_id,
            ranked: l.items.into_iter().zip(l.scores).collect(),
            k: l.k,
        })
        .collect();
    let inputs = Inputs::load(&cfg, &[])?;
    let truth = evaluation_truth(&cfg, &inputs);
    let report = evaluate_run(&variant, &recs, &truth, &cfg.run.ks);
    match &flags.out {
        Some(p) => std::fs::write(p, report.to_json()).map_err(data_err)?,
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

fn run_all(flags: &RunFlags) -> Result<(), BenchError> {
    let cfg = load_config(flags)?;
    let summary = run_experiment(&cfg)?;
    let baseline = cfg.run.baseline.map(|b| b.name());
    print!("{}", semrec::metrics::results_table_csv(&summary.reports, baseline));
    println!("outputs in {}", summary.out_dir.display());
    Ok(())
}

fn synth(users: usize, items: usize, clusters: usize, dim: usize, noise: f64, flags: &RunFlags) -> Result<(), BenchError> {
    let spec = SyntheticSpec {
        n_users: users,
        n_items: items,
        n_clusters: clusters,
        dim,
        noise,
        seed: flags.seed.unwrap_or(0),
        ..SyntheticSpec::default()
    };
    let (log, table, _) = generate_synthetic(&spec)?;
    let out = required_out(flags)?;
    std::fs::create_dir_all(out).map_err(data_err)?;
    let mut tsv = String::from("user_id\titem_id\ttimestamp\tsplit\n");
    for r in log.interactions() {
        writeln!(tsv, "{}\t{}\t{}\t{}", r.user_id, r.item_id, r.timestamp.unwrap_or_default(), r.split).unwrap();
    }
    std::fs::write(out.join("interactions.tsv"), tsv).map_err(data_err)?;
    table.save_with_sidecar(&out.join("items.semv")).map_err(data_err)?;
    let config = format!(
        "# synthetic: {users} users, {items} items, {clusters} clusters, dim {dim}, noise {noise}, seed {}\n\
         [data]\ninteractions = \"interactions.tsv\"\n\n[embeddings]\ntitle = \"items.semv\"\n\n\
         [run]\nvariants = [\"text-title\"]\nbaseline = \"text-title\"\ncoverage_subset = false\nout = \"out\"\n",
        spec.seed
    );
    std::fs::write(out.join("config.toml"), config).map_err(data_err)?;
    println!("wrote {} interactions and a {}x{} table to {}", log.len(), table.len(), table.dim(), out.display());
    Ok(())
}

fn check_lists(
    label: &str,
    log: &semrec::InteractionLog,
    table: &semrec::EmbeddingTable,
    users: &[String],
    l_max: usize,
    policy: MaskPolicy,
    ks: &[usize],
) -> Result<bool, BenchError> {
    let mut all_equal = true;
    for &k in ks {
        let batch = recommend_users(log, table, users, l_max, policy, k)?;
        let oracle = brute_force_oracle(&batch.profiles, table, &batch.masks, k);
        let same = batch.recs.iter().zip(&oracle).filter(|(a, b)| a.items() == b.items()).count();
        let ok = same == batch.recs.len();
        all_equal &= ok;
        println!("{label} K={k}: {same}/{} lists identical {}", batch.recs.len(), if ok { "ok" } else { "MISMATCH" });
    }
    Ok(all_equal)
}

fn oracle_check(datasets: u64, flags: &RunFlags) -> Result<bool, BenchError> {
    let mut all_equal = true;
    if flags.config.is_some() {
        let cfg = load_config(flags)?;
        let inputs = Inputs::load(&cfg, &cfg.run.variants)?;
        let truth = evaluation_truth(&cfg, &inputs);
        let users: Vec<String> = truth.per_user.keys().cloned().collect();
        for &v in &cfg.run.variants {
            let built = build_variant(&cfg, &inputs, v)?;
            all_equal &= check_lists(v.name(), &inputs.log, &built.table, &users, cfg.run.l_max, cfg.run.mask_policy, &cfg.run.ks)?;
        }
    } else {
        let ks = if flags.k.is_empty() { vec![1, 5, 10, 20] } else { flags.k.clone() };
        let base = flags.seed.unwrap_or(0);
        for seed in base..base + datasets {
            let spec = SyntheticSpec {
                n_users: 50,
                n_items: 200,
                dim: 16,
                seed,
                ..SyntheticSpec::default()
            };
            let (log, table, _) = generate_synthetic(&spec)?;
            let users: Vec<String> = log.users_in(Split::Train).into_iter().map(String::from).collect();
            let policy = flags.mask_policy.unwrap_or_default();
            all_equal &= check_lists(&format!("synthetic seed {seed}"), &log, &table, &users, 10, policy, &ks)?;
        }
    }
    Ok(all_equal)
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::Ground { items, stub, parallelism, flags } => ground(&items, stub, parallelism, &flags)?,
        Command::Encode { cache, stub, batch_size, flags } => encode(&cache, stub, batch_size, &flags)?,
        Command::FuseTrain { flags } => fuse_train(&flags)?,
        Command::Recommend { flags } => recommend(&flags)?,
        Command::Evaluate { recs, flags } => evaluate(&recs, &flags)?,
        Command::RunAll { flags } => run_all(&flags)?,
        Command::Synth { users, items, clusters, dim, noise, flags } => synth(users, items, clusters, dim, noise, &flags)?,
        Command::OracleCheck { datasets, flags } => return oracle_check(datasets, &flags),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("semrec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
