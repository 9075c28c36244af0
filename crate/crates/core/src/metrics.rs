//! Recall@K, NDCG@K (binary gain) and Hit@K, per user and averaged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionLog, Split};
use crate::retrieval::Recommendation;

pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("ground-truth set is empty")]
    EmptyTruth,
    #[error("K must be at least 1")]
    InvalidK,
}

fn check(truth: &BTreeSet<String>, k: usize) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if truth.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    Ok(())
}

fn hits_in_top<S: AsRef<str>>(ranked: &[S], truth: &BTreeSet<String>, k: usize) -> usize {
    ranked
        .iter()
        .take(k)
        .filter(|i| truth.contains(i.as_ref()))
        .count()
}

/// `|top-K ∩ truth| / |truth|`.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], truth: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    check(truth, k)?;
    Ok(hits_in_top(ranked, truth, k) as f64 / truth.len() as f64)
}

/// Binary-gain NDCG with a log2 discount; the ideal list has
/// `min(K, |truth|)` relevant items.
pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], truth: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    check(truth, k)?;
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| truth.contains(item.as_ref()))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=k.min(truth.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// 1 when any relevant item is in the top K.
pub fn hit_at_k<S: AsRef<str>>(ranked: &[S], truth: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    check(truth, k)?;
    Ok(if hits_in_top(ranked, truth, k) > 0 { 1.0 } else { 0.0 })
}

/// Relevant items per evaluated user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub per_user: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn from_log(log: &InteractionLog, split: Split) -> Self {
        let mut per_user: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in log.interactions().iter().filter(|r| r.split == split) {
            per_user
                .entry(r.user_id.clone())
                .or_default()
                .insert(r.item_id.clone());
        }
        Self { per_user }
    }

    pub fn get(&self, user_id: &str) -> Option<&BTreeSet<String>> {
        self.per_user.get(user_id).filter(|s| !s.is_empty())
    }

    /// Drops relevant items that `keep` rejects; users left empty disappear.
    pub fn retain_items(&mut self, mut keep: impl FnMut(&str) -> bool) {
        for set in self.per_user.values_mut() {
            set.retain(|i| keep(i));
        }
        self.per_user.retain(|_, s| !s.is_empty());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Recall,
    Ndcg,
    Hit,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::Ndcg, Metric::Hit];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Recall => "Recall",
            Metric::Ndcg => "NDCG",
            Metric::Hit => "Hit",
        }
    }

    pub fn compute<S: AsRef<str>>(self, ranked: &[S], truth: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
        match self {
            Metric::Recall => recall_at_k(ranked, truth, k),
            Metric::Ndcg => ndcg_at_k(ranked, truth, k),
            Metric::Hit => hit_at_k(ranked, truth, k),
        }
    }
}

/// Metric values of one user, aligned with the report's `ks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user_id: String,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub hit: Vec<f64>,
}

impl UserMetrics {
    fn values(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Recall => &self.recall,
            Metric::Ndcg => &self.ndcg,
            Metric::Hit => &self.hit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub k: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: String,
    pub ks: Vec<usize>,
    pub evaluated_users: usize,
    /// Excluded user counts keyed by reason.
    pub excluded_users: BTreeMap<String, usize>,
    pub summary: Vec<MetricSummary>,
    pub users: Vec<UserMetrics>,
    /// Free-form run counters (missing-modality items, unscoreable items, ...).
    #[serde(default)]
    pub notes: BTreeMap<String, usize>,
}

impl MetricReport {
    pub fn mean(&self, metric: Metric, k: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.metric == metric && s.k == k)
            .map(|s| s.mean)
    }

    pub fn std(&self, metric: Metric, k: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.metric == metric && s.k == k)
            .map(|s| s.std)
    }

    pub fn exclude(&mut self, reason: &str, count: usize) {
        if count > 0 {
            *self.excluded_users.entry(reason.to_string()).or_default() += count;
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Scores every recommendation that has ground truth. Users with truth but
/// no recommendation, and recommendations without truth, are counted as
/// excluded.
pub fn evaluate_run(variant: &str, recs: &[Recommendation], truth: &GroundTruth, ks: &[usize]) -> MetricReport {
    let mut users = Vec::new();
    let mut no_truth = 0;
    let mut seen = BTreeSet::new();
    for rec in recs {
        let Some(relevant) = truth.get(&rec.user_id) else {
            no_truth += 1;
            continue;
        };
        seen.insert(rec.user_id.as_str());
        let items = rec.items();
        let row = |m: Metric| -> Vec<f64> {
            ks.iter()
                .map(|&k| m.compute(&items, relevant, k).expect("non-empty truth, K >= 1"))
                .collect()
        };
        users.push(UserMetrics {
            user_id: rec.user_id.clone(),
            recall: row(Metric::Recall),
            ndcg: row(Metric::Ndcg),
            hit: row(Metric::Hit),
        });
    }
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let no_rec = truth
        .per_user
        .keys()
        .filter(|u| !seen.contains(u.as_str()))
        .count();

    let mut summary = Vec::new();
    for metric in Metric::ALL {
        for (ki, &k) in ks.iter().enumerate() {
            let (mean, std) = mean_std(users.iter().map(|u| u.values(metric)[ki]));
            summary.push(MetricSummary { metric, k, mean, std });
        }
    }
    let mut report = MetricReport {
        variant: variant.to_string(),
        ks: ks.to_vec(),
        evaluated_users: users.len(),
        excluded_users: BTreeMap::new(),
        summary,
        users,
        notes: BTreeMap::new(),
    };
    report.exclude("no-ground-truth", no_truth);
    report.exclude("no-recommendation", no_rec);
    report
}

/// Column layout of the combined results table.
pub const TABLE_COLUMNS: [(Metric, usize); 6] = [
    (Metric::Recall, 5),
    (Metric::Recall, 10),
    (Metric::Recall, 20),
    (Metric::Ndcg, 10),
    (Metric::Ndcg, 20),
    (Metric::Hit, 10),
];

/// Relative Recall@10 change over `baseline`, in percent.
pub fn improvement_pct(report: &MetricReport, baseline: &MetricReport) -> Option<f64> {
    let r = report.mean(Metric::Recall, 10)?;
    let b = baseline.mean(Metric::Recall, 10)?;
    (b > 0.0).then(|| (r - b) / b * 100.0)
}

/// Combined CSV: one row per report with Recall@5/10/20, NDCG@10/20,
/// Hit@10 and the Recall@10 improvement over the `baseline` variant.
pub fn results_table_csv(reports: &[MetricReport], baseline: Option<&str>) -> String {
    let base = baseline.and_then(|b| reports.iter().find(|r| r.variant == b));
    let mut out = String::from("model");
    for (m, k) in TABLE_COLUMNS {
        write!(out, ",{}@{}", m.label(), k).unwrap();
    }
    out.push_str(",improvement_over_baseline,evaluated_users\n");
    for r in reports {
        out.push_str(&r.variant);
        for (m, k) in TABLE_COLUMNS {
            match r.mean(m, k) {
                Some(v) => write!(out, ",{v:.6}").unwrap(),
                None => out.push(','),
            }
        }
        let improvement = match base {
            Some(b) if b.variant == r.variant => "baseline".to_string(),
            Some(b) => improvement_pct(r, b).map_or(String::new(), |p| format!("{p:+.1}%")),
            None => String::new(),
        };
        writeln!(out, ",{improvement},{}", r.evaluated_users).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_cases() {
        assert_eq!(recall_at_k(&["a", "z"], &set(&["a", "b", "c"]), 2).unwrap(), 1.0 / 3.0);
        assert_eq!(recall_at_k(&["b", "a", "x"], &set(&["a", "b"]), 3).unwrap(), 1.0);
        assert_eq!(recall_at_k(&["x", "y"], &set(&["a"]), 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&["x"], &set(&[]), 2), Err(MetricError::EmptyTruth));
    }

    /// Exhaustive DCG over every binary relevance pattern of length 3,
    /// written independently of `ndcg_at_k`.
    fn brute_ndcg(pattern: &[bool], n_truth: usize) -> f64 {
        let dcg: f64 = pattern
            .iter()
            .enumerate()
            .map(|(i, &r)| if r { 1.0 / (i as f64 + 2.0).log2() } else { 0.0 })
            .sum();
        let mut best: Vec<bool> = vec![false; pattern.len()];
        for b in best.iter_mut().take(n_truth) {
            *b = true;
        }
        let idcg: f64 = best
            .iter()
            .enumerate()
            .map(|(i, &r)| if r { 1.0 / (i as f64 + 2.0).log2() } else { 0.0 })
            .sum();
        dcg / idcg
    }

    #[test]
    fn ndcg_hand_case() {
        // DCG = 1 + 1/log2(4) = 1.5, IDCG = 1 + 1/log2(3) = 1.63093.
        let v = ndcg_at_k(&["a", "x", "b"], &set(&["a", "b"]), 3).unwrap();
        assert!((v - 0.91973).abs() < 1e-5, "{v}");
        assert!((v - brute_ndcg(&[true, false, true], 2)).abs() < 1e-15);
    }

    #[test]
    fn ndcg_matches_exhaustive_oracle() {
        for mask in 0u8..8 {
            let ranked: Vec<String> = (0..3)
                .map(|i| if mask & (1 << i) != 0 { format!("r{i}") } else { format!("x{i}") })
                .collect();
            let pattern: Vec<bool> = (0..3).map(|i| mask & (1 << i) != 0).collect();
            let mut truth: BTreeSet<String> = ranked.iter().filter(|s| s.starts_with('r')).cloned().collect();
            truth.insert("elsewhere".into());
            let got = ndcg_at_k(&ranked, &truth, 3).unwrap();
            assert!((got - brute_ndcg(&pattern, truth.len().min(3))).abs() < 1e-15);
        }
        assert_eq!(ndcg_at_k(&["a", "b"], &set(&["a", "b", "c"]), 2).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["x", "y"], &set(&["a"]), 2).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_can_drop_as_k_grows() {
        // With IDCG truncated at min(K, |truth|) a miss at rank 2 lowers the score.
        let truth = set(&["a", "b"]);
        assert_eq!(ndcg_at_k(&["a", "x"], &truth, 1).unwrap(), 1.0);
        assert!(ndcg_at_k(&["a", "x"], &truth, 2).unwrap() < 1.0);
    }

    #[test]
    fn hit_boundary() {
        let truth = set(&["r"]);
        assert_eq!(hit_at_k(&["x", "y", "r"], &truth, 3).unwrap(), 1.0);
        assert_eq!(hit_at_k(&["x", "y", "r"], &truth, 2).unwrap(), 0.0);
    }

    fn rec(user: &str, items: &[&str]) -> Recommendation {
        Recommendation {
            user_id: user.into(),
            ranked: items.iter().map(|i| (i.to_string(), 0.0)).collect(),
            k: items.len(),
        }
    }

    #[test]
    fn single_user_means() {
        let truth = GroundTruth {
            per_user: [("u".to_string(), set(&["a", "b"]))].into(),
        };
        let r = evaluate_run("v", &[rec("u", &["a", "x", "y", "z", "w"])], &truth, &[1, 2, 5]);
        for k in [1, 2, 5] {
            assert_eq!(r.mean(Metric::Recall, k), Some(0.5));
        }
        assert_eq!(r.evaluated_users, 1);
    }

    #[test]
    fn two_user_population_std() {
        let truth = GroundTruth {
            per_user: [("u1".to_string(), set(&["a"])), ("u2".to_string(), set(&["b"])), ("u3".to_string(), set(&["c"]))]
                .into(),
        };
        let recs = [rec("u1", &["x"]), rec("u2", &["b"]), rec("nobody", &["b"])];
        let r = evaluate_run("v", &recs, &truth, &[1]);
        assert_eq!(r.mean(Metric::Recall, 1), Some(0.5));
        assert_eq!(r.std(Metric::Recall, 1), Some(0.5));
        assert_eq!(r.excluded_users.get("no-ground-truth"), Some(&1));
        assert_eq!(r.excluded_users.get("no-recommendation"), Some(&1));
    }

    fn report_with_recall10(variant: &str, recall10: f64) -> MetricReport {
        MetricReport {
            variant: variant.into(),
            ks: vec![10],
            evaluated_users: 1,
            excluded_users: BTreeMap::new(),
            summary: vec![MetricSummary {
                metric: Metric::Recall,
                k: 10,
                mean: recall10,
                std: 0.0,
            }],
            users: vec![],
            notes: BTreeMap::new(),
        }
    }

    #[test]
    fn table_carries_headline_row() {
        // 0.354 vs 0.228 rounds to +55.3%; the published +54.9% comes from
        // unrounded means, e.g. a baseline of 0.22853.
        let reports = [report_with_recall10("text-grounded", 0.354), report_with_recall10("text-title", 0.22853)];
        let csv = results_table_csv(&reports, Some("text-title"));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "model,Recall@5,Recall@10,Recall@20,NDCG@10,NDCG@20,Hit@10,improvement_over_baseline,evaluated_users"
        );
        assert_eq!(lines[1], "text-grounded,,0.354000,,,,,+54.9%,1");
        assert_eq!(lines[2], "text-title,,0.228530,,,,,baseline,1");
    }

    fn arb_case() -> impl Strategy<Value = (Vec<String>, BTreeSet<String>)> {
        (
            Just((0..30).map(|i| format!("i{i}")).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::btree_set(0usize..30, 1..8),
        )
            .prop_map(|(ranked, t)| (ranked, t.into_iter().map(|i| format!("i{i}")).collect()))
    }

    proptest! {
        #[test]
        fn metrics_monotone_in_k((ranked, truth) in arb_case()) {
            for m in Metric::ALL {
                let mut prev = 0.0;
                for k in 1..=30 {
                    let v = m.compute(&ranked, &truth, k).unwrap();
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                    // NDCG is not monotone in general; recall and hit are.
                    if m != Metric::Ndcg {
                        prop_assert!(v + 1e-12 >= prev);
                    }
                    prev = v;
                }
            }
        }

        #[test]
        fn recall_never_exceeds_hit((ranked, truth) in arb_case(), k in 1usize..30) {
            prop_assert!(recall_at_k(&ranked, &truth, k).unwrap() <= hit_at_k(&ranked, &truth, k).unwrap());
        }

        #[test]
        fn tail_permutation_is_invisible((ranked, truth) in arb_case(), k in 1usize..29, seed in any::<u64>()) {
            let mut other = ranked.clone();
            let tail = &mut other[k..];
            let n = tail.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize;
                tail.swap(i, j);
            }
            for m in Metric::ALL {
                prop_assert_eq!(m.compute(&ranked, &truth, k).unwrap(), m.compute(&other, &truth, k).unwrap());
            }
        }
    }
}
