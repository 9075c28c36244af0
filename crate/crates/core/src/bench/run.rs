use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::variant::{Representation, TextSource, Variant};
use super::BenchError;
use crate::corpus::{coverage_filter, user_history, CoverageSet, InteractionLog, LogFormat, Recency};
use crate::encoding::{EmbeddingTable, ModalityBundle};
use crate::fusion::{
    fuse_table, save_model, smore_lite, train_contrastive, FusionError, FusionKind, FusionModel, TrainingLog,
};
use crate::metrics::{evaluate_run, results_table_csv, GroundTruth, Metric, MetricReport, TABLE_COLUMNS};
use crate::retrieval::{
    build_mask, build_profile, recommend_topk, write_recommendations, MaskPolicy, Recommendation, RetrievalError,
    UserProfile,
};
use crate::util::{derive_seed, sha256_hex};

/// Profiles, masks and top-K lists for a set of users, in user order.
#[derive(Debug, Clone, Default)]
pub struct UserBatch {
    pub profiles: Vec<UserProfile>,
    pub masks: Vec<BTreeSet<String>>,
    pub recs: Vec<Recommendation>,
    /// Users that produced no list, by reason.
    pub skipped: BTreeMap<String, usize>,
}

enum Outcome {
    Ranked(Box<(UserProfile, BTreeSet<String>, Recommendation)>),
    Skipped(&'static str),
}

/// Runs the retrieval stage for every user in `users` (parallel per user,
/// output order follows `users`).
pub fn recommend_users(
    log: &InteractionLog,
    table: &EmbeddingTable,
    users: &[String],
    l_max: usize,
    policy: MaskPolicy,
    k: usize,
) -> Result<UserBatch, BenchError> {
    let outcomes: Vec<Result<Outcome, BenchError>> = users
        .par_iter()
        .map(|user| {
            let Ok(history) = user_history(log, user, l_max, Recency::Timestamp) else {
                return Ok(Outcome::Skipped("no-history"));
            };
            let profile = match build_profile(&history, table) {
                Ok(p) => p,
                Err(RetrievalError::ColdProfile { .. }) => return Ok(Outcome::Skipped("cold-profile")),
                Err(e) => return Err(BenchError::Data(e.to_string())),
            };
            let mask = build_mask(log, &history, policy);
            match recommend_topk(&profile, table, &mask, k) {
                Ok(rec) => Ok(Outcome::Ranked(Box::new((profile, mask, rec)))),
                Err(RetrievalError::EmptyCandidateSet { .. }) => Ok(Outcome::Skipped("empty-candidates")),
                Err(RetrievalError::InvalidK) => Err(BenchError::Config("K must be at least 1".into())),
                Err(e) => Err(BenchError::Data(e.to_string())),
            }
        })
        .collect();
    let mut batch = UserBatch::default();
    for o in outcomes {
        match o? {
            Outcome::Ranked(b) => {
                let (p, m, r) = *b;
                batch.profiles.push(p);
                batch.masks.push(m);
                batch.recs.push(r);
            }
            Outcome::Skipped(reason) => *batch.skipped.entry(reason.to_string()).or_default() += 1,
        }
    }
    Ok(batch)
}

/// Tables and log referenced by a config.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub log: InteractionLog,
    pub grounded: Option<EmbeddingTable>,
    pub title: Option<EmbeddingTable>,
    pub vision: Option<EmbeddingTable>,
    /// sha256 of every input file, keyed by the path as written in the config.
    pub digests: BTreeMap<String, String>,
}

fn digest(path: &Path) -> Result<String, BenchError> {
    std::fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))
}

impl Inputs {
    /// Loads the log and every table the listed variants need.
    pub fn load(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Self, BenchError> {
        let mut digests = BTreeMap::new();
        let log_path = cfg.resolve(&cfg.data.interactions);
        let log = InteractionLog::load(&log_path, LogFormat::from_path(&log_path))
            .map_err(|e| BenchError::Data(e.to_string()))?;
        digests.insert(cfg.data.interactions.display().to_string(), digest(&log_path)?);

        let need_text = |s: TextSource| {
            variants.iter().any(|v| v.text_source() == Some(s)) || (s == TextSource::Grounded && cfg.run.coverage_subset)
        };
        let mut load = |p: Option<&Path>, wanted: bool| -> Result<Option<EmbeddingTable>, BenchError> {
            let (Some(p), true) = (p, wanted) else {
                return Ok(None);
            };
            let full = cfg.resolve(p);
            let table = EmbeddingTable::load_with_sidecar(&full)
                .map_err(|e| BenchError::Data(format!("{}: {e}", full.display())))?;
            digests.insert(p.display().to_string(), digest(&full)?);
            Ok(Some(table))
        };
        let grounded = load(cfg.embeddings.grounded.as_deref(), need_text(TextSource::Grounded))?;
        let title = load(cfg.embeddings.title.as_deref(), need_text(TextSource::Title))?;
        let vision = load(cfg.embeddings.vision.as_deref(), variants.iter().any(|v| v.uses_vision()))?;
        Ok(Self {
            log,
            grounded,
            title,
            vision,
            digests,
        })
    }

    pub fn text(&self, s: TextSource) -> Result<&EmbeddingTable, BenchError> {
        match s {
            TextSource::Grounded => self.grounded.as_ref(),
            TextSource::Title => self.title.as_ref(),
        }
        .ok_or_else(|| BenchError::Config(format!("no {s:?} text table loaded")))
    }

    pub fn vision(&self) -> Result<&EmbeddingTable, BenchError> {
        self.vision
            .as_ref()
            .ok_or_else(|| BenchError::Config("no vision table loaded".into()))
    }

    /// Items with a grounded description.
    pub fn coverage(&self) -> Option<CoverageSet> {
        self.grounded.as_ref().map(|t| t.ids().iter().cloned().collect())
    }
}

/// The scored table of one variant plus whatever was trained for it.
#[derive(Debug, Clone)]
pub struct VariantTable {
    pub variant: Variant,
    pub seed: u64,
    pub table: EmbeddingTable,
    pub model: Option<FusionModel>,
    pub training: Option<TrainingLog>,
    pub notes: BTreeMap<String, usize>,
}

fn fusion_err(e: FusionError) -> BenchError {
    match e {
        FusionError::InvalidConfig(_) | FusionError::NotTrainable { .. } => BenchError::Config(e.to_string()),
        other => BenchError::Data(other.to_string()),
    }
}

pub fn variant_seed(cfg: &ExperimentConfig, variant: Variant) -> u64 {
    derive_seed(cfg.run.seed, variant.name())
}

/// Builds (and trains, when needed) the item table of `variant`.
pub fn build_variant(cfg: &ExperimentConfig, inputs: &Inputs, variant: Variant) -> Result<VariantTable, BenchError> {
    let seed = variant_seed(cfg, variant);
    let out = |table: EmbeddingTable| VariantTable {
        variant,
        seed,
        table,
        model: None,
        training: None,
        notes: BTreeMap::new(),
    };
    let (kind, source) = match variant.representation() {
        Representation::Fused(kind, source) => (kind, source),
        plain => {
            let table = match plain {
                Representation::Text(s) => inputs.text(s)?.clone(),
                _ => inputs.vision()?.clone(),
            };
            let mut v = out(table);
            v.notes.insert("degenerate-items".into(), v.table.degenerate_ids().len());
            return Ok(v);
        }
    };
    let bundle = ModalityBundle::new(inputs.text(source)?.clone(), inputs.vision()?.clone());
    let (dt, dv) = (bundle.text.dim(), bundle.vision.dim());
    let mut model_out = None;
    let mut training = None;
    let mut notes = BTreeMap::new();
    let table = match kind {
        FusionKind::Graph => {
            let mut bpr = cfg.bpr();
            bpr.seed = seed;
            let (t, log) = smore_lite(&bundle, &inputs.log, &cfg.training.graph, &bpr).map_err(fusion_err)?;
            training = Some(log);
            t
        }
        _ => {
            let d = if kind == FusionKind::Concat { dt + dv } else { cfg.run.fused_dim };
            let mut model = FusionModel::new(kind, dt, dv, d, seed).map_err(fusion_err)?;
            if matches!(kind, FusionKind::Gating | FusionKind::Attention) {
                let mut c = cfg.contrastive();
                c.seed = seed;
                let (trained, log) = train_contrastive(&model, &bundle, &inputs.log, &c).map_err(fusion_err)?;
                model = trained;
                training = Some(log);
            }
            let (t, report) = fuse_table(&model, &bundle).map_err(fusion_err)?;
            notes.insert("missing-text-items".to_string(), report.missing_text);
            notes.insert("missing-vision-items".to_string(), report.missing_vision);
            model_out = Some(model);
            t
        }
    };
    if let Some(log) = &training {
        notes.insert("training-examples".into(), log.examples);
        notes.insert("training-skipped".into(), log.skipped);
    }
    notes.insert("degenerate-items".into(), table.degenerate_ids().len());
    let mut v = out(table);
    v.model = model_out;
    v.training = training;
    v.notes = notes;
    Ok(v)
}

/// Ground truth of the evaluation split, restricted to the coverage subset
/// when the config asks for it.
pub fn evaluation_truth(cfg: &ExperimentConfig, inputs: &Inputs) -> GroundTruth {
    let mut truth = GroundTruth::from_log(&inputs.log, cfg.data.eval_split);
    if cfg.run.coverage_subset {
        if let Some(cov) = inputs.coverage() {
            let users = coverage_filter(&inputs.log, &cov);
            truth.per_user.retain(|u, _| users.contains(u));
        }
    }
    truth
}

/// Recommends for every truth user and scores the lists.
pub fn evaluate_variant(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    built: &VariantTable,
    truth: &GroundTruth,
) -> Result<(MetricReport, Vec<Recommendation>), BenchError> {
    let users: Vec<String> = truth.per_user.keys().cloned().collect();
    let k = *cfg.run.ks.iter().max().expect("validated ks");
    let batch = recommend_users(&inputs.log, &built.table, &users, cfg.run.l_max, cfg.run.mask_policy, k)?;
    let mut report = evaluate_run(built.variant.name(), &batch.recs, truth, &cfg.run.ks);
    report.excluded_users.remove("no-recommendation");
    for (reason, n) in &batch.skipped {
        report.exclude(reason, *n);
    }
    report.notes = built.notes.clone();
    Ok((report, batch.recs))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub provenance: String,
    pub config_hash: String,
    pub seed: u64,
    pub variant_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub evaluated_pool: usize,
    pub coverage_items: Option<usize>,
    pub outputs: Vec<String>,
}

/// Everything a run wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub reports: Vec<MetricReport>,
    pub full_set: Vec<MetricReport>,
    pub manifest: RunManifest,
}

fn ensure_dir(dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::Data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    std::fs::write(path, bytes).map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))
}

/// Rows: variants; columns: the results-table metrics.
pub fn heatmap_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("model");
    for (m, k) in TABLE_COLUMNS {
        write!(out, ",{}@{k}", m.label()).unwrap();
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.variant);
        for (m, k) in TABLE_COLUMNS {
            write!(out, ",{:.6}", r.mean(m, k).unwrap_or(f64::NAN)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Long format: one line per (variant, metric, K).
pub fn profile_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("model,metric,k,mean,std\n");
    for r in reports {
        for s in &r.summary {
            writeln!(out, "{},{},{},{:.6},{:.6}", r.variant, s.metric.label(), s.k, s.mean, s.std).unwrap();
        }
    }
    out
}

/// Mean and population std of Recall@10 and NDCG@10 per variant and scope.
pub fn bars_csv(scoped: &[(&str, &MetricReport)]) -> String {
    let mut out = String::from("model,scope,metric,mean,std,users\n");
    for (scope, r) in scoped {
        for m in [Metric::Recall, Metric::Ndcg] {
            if let (Some(mean), Some(std)) = (r.mean(m, 10), r.std(m, 10)) {
                writeln!(out, "{},{scope},{}@10,{mean:.6},{std:.6},{}", r.variant, m.label(), r.evaluated_users).unwrap();
            }
        }
    }
    out
}

/// Runs every configured variant and writes reports, tables and plot data
/// under the output directory:
///
/// ```text
/// reports/<variant>.json   recommendations/<variant>.jsonl
/// results.csv              plots/{heatmap,profile,bars}.csv
/// models/<variant>.*       manifest.json
/// ```
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, BenchError> {
    cfg.validate()?;
    let inputs = Inputs::load(cfg, &cfg.run.variants)?;
    let out_dir = cfg.out_dir();
    let truth = evaluation_truth(cfg, &inputs);
    let full_truth = GroundTruth::from_log(&inputs.log, cfg.data.eval_split);
    let config_hash = cfg.hash();
    let mut outputs = Vec::new();
    let emit = |outputs: &mut Vec<String>, rel: String, bytes: &[u8]| -> Result<(), BenchError> {
        write_file(&out_dir.join(&rel), bytes)?;
        outputs.push(rel);
        Ok(())
    };

    let mut reports = Vec::new();
    let mut full_set = Vec::new();
    let mut variant_seeds = BTreeMap::new();
    for &variant in &cfg.run.variants {
        log::info!("variant {variant}");
        let built = build_variant(cfg, &inputs, variant)?;
        variant_seeds.insert(variant.name().to_string(), built.seed);
        let (report, recs) = evaluate_variant(cfg, &inputs, &built, &truth)?;
        emit(&mut outputs, format!("reports/{variant}.json"), report.to_json().as_bytes())?;
        let rec_rel = format!("recommendations/{variant}.jsonl");
        ensure_dir(&out_dir.join("recommendations"))?;
        write_recommendations(&out_dir.join(&rec_rel), &recs, variant.name()).map_err(|e| BenchError::Data(e.to_string()))?;
        outputs.push(rec_rel);
        if let Some(model) = built.model.as_ref().filter(|m| m.n_params() > 0) {
            let rel = format!("models/{variant}.semv");
            ensure_dir(&out_dir.join("models"))?;
            save_model(model, &out_dir.join(&rel), &config_hash).map_err(fusion_err)?;
            outputs.push(rel);
        }
        if let Some(log) = &built.training {
            let json = serde_json::to_string_pretty(log).expect("log serializes") + "\n";
            emit(&mut outputs, format!("models/{variant}.training.json"), json.as_bytes())?;
        }
        if cfg.run.coverage_subset && variant.text_source() != Some(TextSource::Grounded) {
            let (full, _) = evaluate_variant(cfg, &inputs, &built, &full_truth)?;
            full_set.push(full);
        }
        reports.push(report);
    }

    let baseline = cfg.run.baseline.filter(|b| cfg.run.variants.contains(b)).map(|b| b.name());
    emit(&mut outputs, "results.csv".into(), results_table_csv(&reports, baseline).as_bytes())?;
    emit(&mut outputs, "plots/heatmap.csv".into(), heatmap_csv(&reports).as_bytes())?;
    emit(&mut outputs, "plots/profile.csv".into(), profile_csv(&reports).as_bytes())?;
    let mut scoped: Vec<(&str, &MetricReport)> = reports.iter().map(|r| ("evaluated", r)).collect();
    scoped.extend(full_set.iter().map(|r| ("full", r)));
    emit(&mut outputs, "plots/bars.csv".into(), bars_csv(&scoped).as_bytes())?;

    let short = &sha256_hex(format!("{config_hash}{:?}", inputs.digests).as_bytes())[..7];
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        provenance: format!("{}-v{}-g{short}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        config_hash,
        seed: cfg.run.seed,
        variant_seeds,
        inputs: inputs.digests.clone(),
        evaluated_pool: truth.per_user.len(),
        coverage_items: inputs.coverage().map(|c| c.len()),
        outputs: Vec::new(),
    };
    outputs.push("manifest.json".into());
    outputs.sort();
    manifest.outputs = outputs;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&out_dir.join("manifest.json"), json.as_bytes())?;
    Ok(RunSummary {
        out_dir,
        reports,
        full_set,
        manifest,
    })
}
