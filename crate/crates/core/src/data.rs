//! Interaction log ingestion, filtering, chronological splitting and session
//! matrix construction.
//!
//! Logs are delimiter-separated text with columns `session_id, item_id,
//! timestamp`. Within a session, interactions are ordered by timestamp with
//! ties broken by input-file order.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::scalar::Scalar;
use crate::sparse::SessionMatrix;

/// One row of an interaction log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub session_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

/// Layout of a delimiter-separated log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogFormat {
    pub delimiter: char,
    pub header: bool,
}

impl Default for LogFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            header: false,
        }
    }
}

/// Parsed interactions plus malformed-row bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub interactions: Vec<Interaction>,
    /// 1-based line numbers of rows that were skipped.
    pub malformed_lines: Vec<usize>,
}

impl IngestReport {
    pub fn malformed(&self) -> usize {
        self.malformed_lines.len()
    }
}

pub fn ingest_sessions(path: impl AsRef<Path>, format: &LogFormat) -> Result<IngestReport, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    parse_interactions(BufReader::new(file), format).map_err(io_err)
}

/// Parses a log from any reader. Blank lines are ignored; rows with a missing
/// or empty column or a non-integer timestamp are recorded as malformed.
pub fn parse_interactions(reader: impl BufRead, format: &LogFormat) -> std::io::Result<IngestReport> {
    let mut report = IngestReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if format.header && lineno == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(format.delimiter).map(str::trim);
        let parsed = match (cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(i), Some(t)) if !s.is_empty() && !i.is_empty() => {
                t.parse::<i64>().ok().map(|timestamp| Interaction {
                    session_id: s.to_string(),
                    item_id: i.to_string(),
                    timestamp,
                })
            }
            _ => None,
        };
        match parsed {
            Some(it) => report.interactions.push(it),
            None => report.malformed_lines.push(lineno + 1),
        }
    }
    Ok(report)
}

/// Bijection between item tokens and dense column indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemVocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::default();
        for t in tokens {
            let t = t.into();
            if vocab.index.contains_key(&t) {
                return Err(DataError::DuplicateToken(t));
            }
            vocab.index.insert(t.clone(), vocab.tokens.len());
            vocab.tokens.push(t);
        }
        Ok(vocab)
    }

    /// Vocabulary `"0", "1", ..., "n-1"`; handy for synthetic data and tests.
    pub fn numbered(n: usize) -> Self {
        Self::from_tokens((0..n).map(|i| i.to_string())).expect("numbered tokens are unique")
    }

    fn insert_if_absent(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Reads a vocabulary file: one token per line, line number = index.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            let line = line.trim_end_matches('\r');
            if !line.is_empty() {
                tokens.push(line.to_string());
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// A session before vocabulary mapping: tokens in interaction order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSession {
    pub id: String,
    pub items: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl RawSession {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn last_timestamp(&self) -> i64 {
        self.timestamps.last().copied().unwrap_or(i64::MIN)
    }

    /// Maps tokens through `vocab`; unknown tokens become `None`.
    pub fn map_items(&self, vocab: &ItemVocab) -> Vec<Option<usize>> {
        self.items.iter().map(|t| vocab.index_of(t)).collect()
    }

    fn retain_items(&mut self, mut keep: impl FnMut(&str) -> bool) {
        let mut items = Vec::with_capacity(self.items.len());
        let mut ts = Vec::with_capacity(self.items.len());
        for (item, t) in self.items.drain(..).zip(self.timestamps.drain(..)) {
            if keep(&item) {
                items.push(item);
                ts.push(t);
            }
        }
        self.items = items;
        self.timestamps = ts;
    }
}

/// Groups interactions by session id. Sessions come out in order of first
/// appearance; interactions within a session are stably sorted by timestamp.
pub fn group_sessions(interactions: &[Interaction]) -> Vec<RawSession> {
    let mut position: HashMap<&str, usize> = HashMap::new();
    let mut sessions: Vec<RawSession> = Vec::new();
    for it in interactions {
        let idx = *position.entry(it.session_id.as_str()).or_insert_with(|| {
            sessions.push(RawSession {
                id: it.session_id.clone(),
                items: Vec::new(),
                timestamps: Vec::new(),
            });
            sessions.len() - 1
        });
        sessions[idx].items.push(it.item_id.clone());
        sessions[idx].timestamps.push(it.timestamp);
    }
    for s in &mut sessions {
        let mut order: Vec<usize> = (0..s.items.len()).collect();
        order.sort_by_key(|&i| s.timestamps[i]);
        s.items = order.iter().map(|&i| s.items[i].clone()).collect();
        s.timestamps = order.iter().map(|&i| s.timestamps[i]).collect();
    }
    sessions
}

/// Removes items whose total occurrence count is below `min_freq`.
pub fn filter_item_frequency(sessions: &[RawSession], min_freq: usize) -> Vec<RawSession> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sessions {
        for item in &s.items {
            *counts.entry(item.as_str()).or_default() += 1;
        }
    }
    sessions
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.retain_items(|item| counts.get(item).copied().unwrap_or(0) >= min_freq);
            s
        })
        .collect()
}

/// Drops sessions shorter than `min_len`.
pub fn filter_session_length(sessions: Vec<RawSession>, min_len: usize) -> Vec<RawSession> {
    sessions.into_iter().filter(|s| s.len() >= min_len).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Valid => "valid",
            Self::Test => "test",
        })
    }
}

/// A session mapped to column indices. Timestamps are kept for writing split files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: String,
    pub items: Vec<usize>,
    pub timestamps: Vec<i64>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn last_timestamp(&self) -> i64 {
        self.timestamps.last().copied().unwrap_or(i64::MIN)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionDataset {
    pub sessions: Vec<Session>,
    pub split: SplitTag,
    pub vocab: Arc<ItemVocab>,
}

impl SessionDataset {
    /// Builds a dataset from index sequences; ids and timestamps are synthesized
    /// from the session position.
    pub fn from_indices(
        sessions: Vec<Vec<usize>>,
        vocab: Arc<ItemVocab>,
        split: SplitTag,
    ) -> Result<Self, DataError> {
        let n = vocab.len();
        let sessions = sessions
            .into_iter()
            .enumerate()
            .map(|(k, items)| {
                if let Some(&bad) = items.iter().find(|&&i| i >= n) {
                    return Err(DataError::ItemOutOfRange { index: bad, n });
                }
                Ok(Session {
                    id: k.to_string(),
                    timestamps: vec![k as i64; items.len()],
                    items,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sessions,
            split,
            vocab,
        })
    }

    /// Maps raw sessions through `vocab`, dropping unknown items and then any
    /// session shorter than `min_len`. Returns the dataset and the number of
    /// dropped item occurrences.
    pub fn from_raw(
        raw: &[RawSession],
        vocab: Arc<ItemVocab>,
        split: SplitTag,
        min_len: usize,
    ) -> (Self, usize) {
        let mut dropped = 0;
        let mut sessions = Vec::new();
        for r in raw {
            let mut items = Vec::with_capacity(r.len());
            let mut timestamps = Vec::with_capacity(r.len());
            for (tok, &t) in r.items.iter().zip(&r.timestamps) {
                match vocab.index_of(tok) {
                    Some(i) => {
                        items.push(i);
                        timestamps.push(t);
                    }
                    None => dropped += 1,
                }
            }
            if items.len() >= min_len {
                sessions.push(Session {
                    id: r.id.clone(),
                    items,
                    timestamps,
                });
            }
        }
        (
            Self {
                sessions,
                split,
                vocab,
            },
            dropped,
        )
    }

    pub fn n_items(&self) -> usize {
        self.vocab.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn item_sequences(&self) -> impl Iterator<Item = &[usize]> {
        self.sessions.iter().map(|s| s.items.as_slice())
    }

    pub fn interaction_count(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    /// Writes the split as a log file (`session_id, item_token, timestamp`).
    pub fn write(&self, path: impl AsRef<Path>, delimiter: char) -> Result<(), DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for s in &self.sessions {
            for (&i, &t) in s.items.iter().zip(&s.timestamps) {
                let tok = self.vocab.token(i).expect("item index within vocab");
                writeln!(w, "{}{delimiter}{tok}{delimiter}{t}", s.id).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    /// Reads a split file written by [`SessionDataset::write`] (or any log in
    /// the same format) against an existing vocabulary.
    pub fn read(
        path: impl AsRef<Path>,
        format: &LogFormat,
        vocab: Arc<ItemVocab>,
        split: SplitTag,
        min_len: usize,
    ) -> Result<Self, DataError> {
        let report = ingest_sessions(path, format)?;
        if report.malformed() > 0 {
            log::warn!("skipped {} malformed rows", report.malformed());
        }
        let raw = group_sessions(&report.interactions);
        Ok(Self::from_raw(&raw, vocab, split, min_len).0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_item_freq: usize,
    pub min_session_len: usize,
    pub ratios: [f64; 3],
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_item_freq: 5,
            min_session_len: 2,
            ratios: [0.8, 0.1, 0.1],
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidRatios(self.ratios));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub interactions: usize,
    pub raw_sessions: usize,
    pub raw_items: usize,
    pub items_below_frequency: usize,
    pub short_sessions_dropped: usize,
    pub sessions_kept: usize,
    pub train_sessions: usize,
    pub valid_sessions: usize,
    pub test_sessions: usize,
    pub unseen_items_dropped: usize,
    pub eval_sessions_dropped: usize,
    pub vocab_size: usize,
}

impl fmt::Display for FilterStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interactions {}", self.interactions)?;
        writeln!(f, "raw_sessions {}", self.raw_sessions)?;
        writeln!(f, "raw_items {}", self.raw_items)?;
        writeln!(f, "items_below_frequency {}", self.items_below_frequency)?;
        writeln!(f, "short_sessions_dropped {}", self.short_sessions_dropped)?;
        writeln!(f, "sessions_kept {}", self.sessions_kept)?;
        writeln!(f, "train_sessions {}", self.train_sessions)?;
        writeln!(f, "valid_sessions {}", self.valid_sessions)?;
        writeln!(f, "test_sessions {}", self.test_sessions)?;
        writeln!(f, "unseen_items_dropped {}", self.unseen_items_dropped)?;
        writeln!(f, "eval_sessions_dropped {}", self.eval_sessions_dropped)?;
        write!(f, "vocab_size {}", self.vocab_size)
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: SessionDataset,
    pub valid: SessionDataset,
    pub test: SessionDataset,
    pub stats: FilterStats,
}

/// Filters items by frequency (single pass), drops short sessions, orders
/// sessions by their last timestamp and splits them chronologically.
///
/// The vocabulary is built from the train split in order of first appearance;
/// valid/test items not in it are dropped and the length filter is re-applied.
pub fn filter_and_split(interactions: &[Interaction], config: &FilterConfig) -> Result<Splits, DataError> {
    config.validate()?;
    let grouped = group_sessions(interactions);
    let mut stats = FilterStats {
        interactions: interactions.len(),
        raw_sessions: grouped.len(),
        ..FilterStats::default()
    };
    {
        let mut items: HashMap<&str, ()> = HashMap::new();
        for s in &grouped {
            for t in &s.items {
                items.insert(t, ());
            }
        }
        stats.raw_items = items.len();
    }

    let freq_filtered = filter_item_frequency(&grouped, config.min_item_freq);
    {
        let mut surviving: HashMap<&str, ()> = HashMap::new();
        for s in &freq_filtered {
            for t in &s.items {
                surviving.insert(t, ());
            }
        }
        stats.items_below_frequency = stats.raw_items - surviving.len();
    }
    let before = freq_filtered.len();
    let mut kept = filter_session_length(freq_filtered, config.min_session_len);
    stats.short_sessions_dropped = before - kept.len();
    stats.sessions_kept = kept.len();
    if kept.is_empty() {
        return Err(DataError::EmptyDataset { stage: "filtering" });
    }

    // stable: equal last timestamps keep first-appearance order
    kept.sort_by_key(RawSession::last_timestamp);

    let m = kept.len();
    let n_train = (m as f64 * config.ratios[0]).round() as usize;
    let n_train_valid = ((m as f64 * (config.ratios[0] + config.ratios[1])).round() as usize).clamp(n_train, m);
    let n_train = n_train.min(m);
    if n_train == 0 {
        return Err(DataError::EmptyDataset { stage: "train split" });
    }

    let mut vocab = ItemVocab::default();
    for s in &kept[..n_train] {
        for t in &s.items {
            vocab.insert_if_absent(t);
        }
    }
    let vocab = Arc::new(vocab);
    let (train, _) = SessionDataset::from_raw(&kept[..n_train], vocab.clone(), SplitTag::Train, 0);
    let (valid, dv) =
        SessionDataset::from_raw(&kept[n_train..n_train_valid], vocab.clone(), SplitTag::Valid, config.min_session_len);
    let (test, dt) = SessionDataset::from_raw(&kept[n_train_valid..], vocab.clone(), SplitTag::Test, config.min_session_len);

    stats.train_sessions = train.len();
    stats.valid_sessions = valid.len();
    stats.test_sessions = test.len();
    stats.unseen_items_dropped = dv + dt;
    stats.eval_sessions_dropped = (n_train_valid - n_train - valid.len()) + (m - n_train_valid - test.len());
    stats.vocab_size = vocab.len();
    Ok(Splits {
        train,
        valid,
        test,
        stats,
    })
}

/// Binary session matrix: one row per session, weight 1 at each distinct item.
pub fn build_session_matrix<T: Scalar>(dataset: &SessionDataset) -> Result<SessionMatrix<T>, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset { stage: "session matrix" });
    }
    let n = dataset.n_items();
    let mut x = SessionMatrix::empty(n);
    for (k, s) in dataset.sessions.iter().enumerate() {
        if s.is_empty() {
            return Err(DataError::EmptySession { session: k });
        }
        if let Some(&bad) = s.items.iter().find(|&&i| i >= n) {
            return Err(DataError::ItemOutOfRange { index: bad, n });
        }
        x.push_row(s.items.iter().map(|&i| (i, T::one())), |a, _| a);
    }
    Ok(x)
}
