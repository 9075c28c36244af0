//! Implicit-feedback interaction logs, truncated user histories and
//! coverage-filtered user subsets.
//!
//! Two input formats are accepted, both UTF-8:
//!
//! - TSV with columns `user_id  item_id  timestamp  split` (the timestamp
//!   column may be empty or omitted entirely). Lines starting with `#` are
//!   comments and a leading `user_id` header row is skipped.
//! - JSONL objects with keys `user_id`, `item_id`, optional `timestamp`,
//!   and `split`.
//!
//! Splits are spelled `train`, `validation` (or `valid`/`val`), `test`, or
//! `0`/`1`/`2`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Default history cap.
pub const DEFAULT_L_MAX: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {detail}")]
    ParseError { path: PathBuf, line: usize, detail: String },
    #[error("{0}: no interactions")]
    EmptyLog(PathBuf),
    #[error("user {user_id:?} has no training interactions")]
    UnknownUser { user_id: String },
    #[error("history length cap must be at least 1")]
    InvalidHistoryCap,
    #[error("({user_id}, {item_id}, {timestamp:?}) appears in both {a} and {b}")]
    OverlappingSplits {
        user_id: String,
        item_id: String,
        timestamp: Option<i64>,
        a: Split,
        b: Split,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "0" => Ok(Split::Train),
            "validation" | "valid" | "val" | "1" => Ok(Split::Validation),
            "test" | "2" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Tsv,
    Jsonl,
}

impl LogFormat {
    /// Guess from the file extension; anything but `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => LogFormat::Jsonl,
            _ => LogFormat::Tsv,
        }
    }
}

/// How "most recent" is decided when truncating histories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recency {
    /// Timestamp order, ties by ascending item id counting as more recent.
    /// Falls back to file order when any of the user's records lacks a timestamp.
    #[default]
    Timestamp,
    FileOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: Option<i64>,
    pub split: Split,
    /// Position in the source file.
    pub seq: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Immutable interaction log with a per-user index.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    by_user: HashMap<String, Vec<usize>>,
}

#[derive(Deserialize)]
struct JsonRow {
    user_id: serde_json::Value,
    item_id: serde_json::Value,
    #[serde(default)]
    timestamp: Option<i64>,
    split: serde_json::Value,
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

impl InteractionLog {
    /// Builds a log from raw records: drops duplicate `(user, item, split)`
    /// entries keeping the earliest one and checks split disjointness.
    pub fn from_interactions(raw: Vec<Interaction>) -> Result<Self, CorpusError> {
        let mut kept: HashMap<(String, String, Split), Interaction> = HashMap::new();
        for rec in raw {
            let key = (rec.user_id.clone(), rec.item_id.clone(), rec.split);
            match kept.get(&key) {
                Some(prev) if earlier(prev, &rec) => {}
                _ => {
                    kept.insert(key, rec);
                }
            }
        }
        let mut interactions: Vec<Interaction> = kept.into_values().collect();
        interactions.sort_by_key(|r| r.seq);

        let mut seen: HashMap<(&str, &str, Option<i64>), Split> = HashMap::new();
        for r in &interactions {
            if let Some(&other) = seen.get(&(r.user_id.as_str(), r.item_id.as_str(), r.timestamp)) {
                if other != r.split {
                    return Err(CorpusError::OverlappingSplits {
                        user_id: r.user_id.clone(),
                        item_id: r.item_id.clone(),
                        timestamp: r.timestamp,
                        a: other,
                        b: r.split,
                    });
                }
            }
            seen.insert((&r.user_id, &r.item_id, r.timestamp), r.split);
        }

        let mut by_user: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in interactions.iter().enumerate() {
            by_user.entry(r.user_id.clone()).or_default().push(i);
        }
        Ok(Self {
            interactions,
            by_user,
        })
    }

    pub fn load(path: &Path, format: LogFormat) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw = match format {
            LogFormat::Tsv => parse_tsv(path, &text)?,
            LogFormat::Jsonl => parse_jsonl(path, &text)?,
        };
        if raw.is_empty() {
            return Err(CorpusError::EmptyLog(path.to_path_buf()));
        }
        Self::from_interactions(raw)
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for r in &self.interactions {
            match r.split {
                Split::Train => c.train += 1,
                Split::Validation => c.validation += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    /// All users, sorted.
    pub fn users(&self) -> BTreeSet<&str> {
        self.by_user.keys().map(String::as_str).collect()
    }

    /// Users with at least one interaction in `split`, sorted.
    pub fn users_in(&self, split: Split) -> BTreeSet<&str> {
        self.interactions
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.user_id.as_str())
            .collect()
    }

    /// The item catalog referenced by the log, sorted.
    pub fn items(&self) -> BTreeSet<&str> {
        self.interactions.iter().map(|r| r.item_id.as_str()).collect()
    }

    pub fn user_interactions(&self, user_id: &str) -> impl Iterator<Item = &Interaction> {
        self.by_user
            .get(user_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.interactions[i])
    }

    /// The distinct items a user touched in `split`.
    pub fn items_of(&self, user_id: &str, split: Split) -> BTreeSet<&str> {
        self.user_interactions(user_id)
            .filter(|r| r.split == split)
            .map(|r| r.item_id.as_str())
            .collect()
    }
}

fn earlier(a: &Interaction, b: &Interaction) -> bool {
    match (a.timestamp, b.timestamp) {
        (Some(x), Some(y)) if x != y => x < y,
        _ => a.seq <= b.seq,
    }
}

fn parse_tsv(path: &Path, text: &str) -> Result<Vec<Interaction>, CorpusError> {
    let mut out = Vec::new();
    let mut header_checked = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: String| CorpusError::ParseError {
            path: path.to_path_buf(),
            line: n + 1,
            detail,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if !header_checked {
            header_checked = true;
            if cols[0].trim() == "user_id" {
                continue;
            }
        }
        let (user, item, ts, split) = match cols.as_slice() {
            [u, i, t, s] => (*u, *i, Some(*t), *s),
            [u, i, s] => (*u, *i, None, *s),
            _ => return Err(err(format!("expected 3 or 4 tab-separated columns, found {}", cols.len()))),
        };
        let timestamp = match ts.map(str::trim).filter(|t| !t.is_empty()) {
            Some(t) => Some(t.parse::<i64>().map_err(|e| err(format!("bad timestamp {t:?}: {e}")))?),
            None => None,
        };
        out.push(make_interaction(user, item, timestamp, split, out.len()).map_err(err)?);
    }
    Ok(out)
}

fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<Interaction>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |detail: String| CorpusError::ParseError {
            path: path.to_path_buf(),
            line: n + 1,
            detail,
        };
        let row: JsonRow = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let user = json_scalar(&row.user_id).ok_or_else(|| err("user_id must be a string or number".into()))?;
        let item = json_scalar(&row.item_id).ok_or_else(|| err("item_id must be a string or number".into()))?;
        let split = json_scalar(&row.split).ok_or_else(|| err("split must be a string or number".into()))?;
        out.push(make_interaction(&user, &item, row.timestamp, &split, out.len()).map_err(err)?);
    }
    Ok(out)
}

fn make_interaction(
    user: &str,
    item: &str,
    timestamp: Option<i64>,
    split: &str,
    seq: usize,
) -> Result<Interaction, String> {
    let (user, item) = (user.trim(), item.trim());
    if user.is_empty() || item.is_empty() {
        return Err("empty user or item id".into());
    }
    Ok(Interaction {
        user_id: user.to_string(),
        item_id: item.to_string(),
        timestamp,
        split: split.parse()?,
        seq,
    })
}

/// The last `l_max` training items of one user, most recent last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserHistory {
    pub user_id: String,
    pub items: Vec<String>,
    pub l_max: usize,
}

/// Truncated training history of `user_id`.
pub fn user_history(
    log: &InteractionLog,
    user_id: &str,
    l_max: usize,
    recency: Recency,
) -> Result<UserHistory, CorpusError> {
    if l_max == 0 {
        return Err(CorpusError::InvalidHistoryCap);
    }
    let mut train: Vec<&Interaction> = log
        .user_interactions(user_id)
        .filter(|r| r.split == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(CorpusError::UnknownUser {
            user_id: user_id.to_string(),
        });
    }
    let timestamped = train.iter().all(|r| r.timestamp.is_some());
    if recency == Recency::Timestamp && timestamped {
        train.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| b.item_id.cmp(&a.item_id))
        });
    } else {
        train.sort_by_key(|r| r.seq);
    }
    // An item seen twice in train counts once, at its latest position.
    let mut items: Vec<String> = Vec::with_capacity(l_max);
    for r in train.iter().rev() {
        if items.len() == l_max {
            break;
        }
        if !items.contains(&r.item_id) {
            items.push(r.item_id.clone());
        }
    }
    items.reverse();
    Ok(UserHistory {
        user_id: user_id.to_string(),
        items,
        l_max,
    })
}

/// Items with grounded descriptions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageSet(pub BTreeSet<String>);

impl CoverageSet {
    pub fn contains(&self, item_id: &str) -> bool {
        self.0.contains(item_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every covered item appears in `catalog`.
    pub fn is_subset_of(&self, catalog: &BTreeSet<&str>) -> bool {
        self.0.iter().all(|i| catalog.contains(i.as_str()))
    }
}

impl<S: Into<String>> FromIterator<S> for CoverageSet {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

/// Users with at least one covered item in train and one in validation.
pub fn coverage_filter(log: &InteractionLog, cov: &CoverageSet) -> BTreeSet<String> {
    let mut train = BTreeSet::new();
    let mut valid = BTreeSet::new();
    for r in log.interactions() {
        if !cov.contains(&r.item_id) {
            continue;
        }
        match r.split {
            Split::Train => {
                train.insert(r.user_id.as_str());
            }
            Split::Validation => {
                valid.insert(r.user_id.as_str());
            }
            Split::Test => {}
        }
    }
    train
        .intersection(&valid)
        .map(|u| u.to_string())
        .collect()
}
