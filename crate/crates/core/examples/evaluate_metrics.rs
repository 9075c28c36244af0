//! Recall, NDCG and Hit at several cutoffs for a handful of ranked lists.
//!
//! cargo run --example evaluate_metrics

use semrec::metrics::{evaluate_run, ndcg_at_k, GroundTruth, Metric};
use semrec::retrieval::Recommendation;

fn rec(user: &str, items: &[&str]) -> Recommendation {
    Recommendation {
        user_id: user.into(),
        ranked: items.iter().enumerate().map(|(i, s)| (s.to_string(), 1.0 - i as f64 * 0.1)).collect(),
        k: items.len(),
    }
}

fn main() {
    let mut truth = GroundTruth::default();
    truth.per_user.insert("alice".into(), ["a", "b"].map(String::from).into());
    truth.per_user.insert("bob".into(), ["z"].map(String::from).into());
    truth.per_user.insert("carol".into(), ["q"].map(String::from).into());

    let recs = vec![rec("alice", &["a", "x", "b", "y"]), rec("bob", &["x", "y", "w", "z"])];
    let report = evaluate_run("demo", &recs, &truth, &[1, 3, 4]);
    for k in [1, 3, 4] {
        println!(
            "K={k}: Recall {:.3}  NDCG {:.3}  Hit {:.3}",
            report.mean(Metric::Recall, k).unwrap(),
            report.mean(Metric::Ndcg, k).unwrap(),
            report.mean(Metric::Hit, k).unwrap()
        );
    }
    println!("excluded: {:?}", report.excluded_users);
    let single = ndcg_at_k(&["a", "x", "b"], &truth.per_user["alice"], 3).unwrap();
    println!("NDCG@3 of [a, x, b] against {{a, b}}: {single:.5}");
}
