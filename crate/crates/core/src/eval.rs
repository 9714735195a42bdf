//! Inference vectors, top-N prediction and the evaluation harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{RawSession, SessionDataset};
use crate::error::EvalError;
use crate::model::ItemItemModel;
use crate::partial::decay_weight;
use crate::scalar::Scalar;

/// Sparse decayed session vector. Entries are kept sorted by item index so
/// scores do not depend on construction order.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceVector<T> {
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> InferenceVector<T> {
    /// Weights each mapped item by `exp(-(|prefix| - position) / delta_inf)`
    /// using its most recent occurrence. Unmapped items (`None`) are skipped
    /// but still count toward positions.
    pub fn from_prefix(prefix: &[Option<usize>], delta_inf: f64) -> Result<Self, EvalError> {
        if !(delta_inf.is_finite() && delta_inf > 0.0) {
            return Err(EvalError::InvalidDecay(delta_inf));
        }
        let len = prefix.len();
        let mut entries: Vec<(usize, T)> = Vec::new();
        for (p, item) in prefix.iter().enumerate().rev() {
            if let Some(i) = *item {
                if !entries.iter().any(|&(j, _)| j == i) {
                    entries.push((i, decay_weight(len - 1 - p, delta_inf)));
                }
            }
        }
        if entries.is_empty() {
            return Err(EvalError::EmptyVector);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_items(prefix: &[usize], delta_inf: f64) -> Result<Self, EvalError> {
        let mapped: Vec<Option<usize>> = prefix.iter().copied().map(Some).collect();
        Self::from_prefix(&mapped, delta_inf)
    }

    /// Builds a vector from explicit `(item, weight)` pairs.
    pub fn from_entries(mut entries: Vec<(usize, T)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn weight(&self, item: usize) -> Option<T> {
        self.entries.iter().find(|&&(i, _)| i == item).map(|&(_, w)| w)
    }

    /// `x · B`.
    pub fn scores(&self, model: &ItemItemModel<T>) -> Vec<T> {
        let mut scores = vec![T::zero(); model.n_items()];
        for &(i, w) in &self.entries {
            for (s, &b) in scores.iter_mut().zip(model.matrix.row(i)) {
                *s += w * b;
            }
        }
        scores
    }
}

/// Multiply-adds touched by one prediction: `2 · nnz(x) · n`.
pub fn count_inference_flops<T: Scalar>(x: &InferenceVector<T>, n: usize) -> u64 {
    2 * x.nnz() as u64 * n as u64
}

/// Top-N items with scores in descending order; equal scores rank the lower
/// item index first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList<T> {
    pub items: Vec<usize>,
    pub scores: Vec<T>,
}

fn ranks_before<T: Scalar>(a: (usize, T), b: (usize, T)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

pub fn predict_topn<T: Scalar>(
    x: &InferenceVector<T>,
    model: &ItemItemModel<T>,
    n: usize,
    exclude_seen: bool,
) -> RankedList<T> {
    let scores = x.scores(model);
    let mut candidates: Vec<(usize, T)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(i, _)| !(exclude_seen && x.weight(i).is_some()))
        .collect();
    if n > candidates.len() {
        log::warn!("requested top-{n} but only {} candidates exist; truncating", candidates.len());
    }
    candidates.sort_by(|&a, &b| {
        if ranks_before(a, b) {
            std::cmp::Ordering::Less
        } else if ranks_before(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    candidates.truncate(n);
    RankedList {
        items: candidates.iter().map(|&(i, _)| i).collect(),
        scores: candidates.iter().map(|&(_, s)| s).collect(),
    }
}

/// 1-based rank of `target` under the same ordering as [`predict_topn`];
/// `None` when the target is masked out.
pub fn rank_of<T: Scalar>(scores: &[T], target: usize, masked: impl Fn(usize) -> bool) -> Option<usize> {
    if masked(target) {
        return None;
    }
    let t = (target, scores[target]);
    let ahead = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(j, s)| j != target && !masked(j) && ranks_before((j, s), t))
        .count();
    Some(ahead + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Predict every next item of each session from its growing prefix.
    Iterative,
    /// Predict only the last item from everything before it.
    LeaveOneOut,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Iterative => "iterative",
            Self::LeaveOneOut => "leave_one_out",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iterative" => Ok(Self::Iterative),
            "leave_one_out" | "loo" => Ok(Self::LeaveOneOut),
            other => Err(format!("unknown protocol {other:?} (expected iterative or leave_one_out)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub delta_inf: f64,
    pub exclude_seen: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![5, 20],
            delta_inf: 1.0,
            exclude_seen: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(EvalError::InvalidCutoffs);
        }
        if !(self.delta_inf.is_finite() && self.delta_inf > 0.0) {
            return Err(EvalError::InvalidDecay(self.delta_inf));
        }
        Ok(())
    }
}

/// Head/tail membership by training popularity: the top `⌈0.2·n⌉` items by
/// interaction count are head, ties broken by ascending index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadTail {
    is_head: Vec<bool>,
}

impl HeadTail {
    pub fn from_counts(counts: &[usize]) -> Self {
        let n = counts.len();
        let head_size = (n as f64 * 0.2).ceil() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let mut is_head = vec![false; n];
        for &i in &order[..head_size.min(n)] {
            is_head[i] = true;
        }
        Self { is_head }
    }

    pub fn is_head(&self, item: usize) -> bool {
        self.is_head[item]
    }

    pub fn head_items(&self) -> Vec<usize> {
        (0..self.is_head.len()).filter(|&i| self.is_head[i]).collect()
    }
}

pub fn head_tail_partition(train: &SessionDataset) -> HeadTail {
    let mut counts = vec![0usize; train.n_items()];
    for items in train.item_sequences() {
        for &i in items {
            counts[i] += 1;
        }
    }
    HeadTail::from_counts(&counts)
}

/// Evaluation input: sessions whose tokens may be missing from the vocabulary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSessions {
    pub sessions: Vec<Vec<Option<usize>>>,
}

impl EvalSessions {
    pub fn from_dataset(ds: &SessionDataset) -> Self {
        Self {
            sessions: ds.item_sequences().map(|s| s.iter().copied().map(Some).collect()).collect(),
        }
    }

    pub fn from_raw(raw: &[RawSession], vocab: &crate::data::ItemVocab) -> Self {
        Self {
            sessions: raw.iter().map(|r| r.map_items(vocab)).collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut sessions = self.sessions.clone();
        sessions.extend(other.sessions.iter().cloned());
        Self { sessions }
    }
}

/// Metric means at each cutoff over a set of predictions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub predictions: usize,
    pub recall: BTreeMap<usize, f64>,
    pub mrr: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
}

impl MetricSet {
    fn from_ranks<'a>(ranks: impl Iterator<Item = &'a Option<usize>>, ks: &[usize]) -> Self {
        let mut set = Self::default();
        let mut sums: Vec<[f64; 3]> = vec![[0.0; 3]; ks.len()];
        for rank in ranks {
            set.predictions += 1;
            let Some(r) = *rank else { continue };
            for (k, acc) in ks.iter().zip(sums.iter_mut()) {
                if r <= *k {
                    acc[0] += 1.0;
                    acc[1] += 1.0 / r as f64;
                    acc[2] += 1.0 / (1.0 + r as f64).log2();
                }
            }
        }
        let denom = set.predictions.max(1) as f64;
        for (&k, acc) in ks.iter().zip(&sums) {
            set.recall.insert(k, acc[0] / denom);
            set.mrr.insert(k, acc[1] / denom);
            set.ndcg.insert(k, acc[2] / denom);
        }
        set
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    pub overall: MetricSet,
    pub head: MetricSet,
    pub tail: MetricSet,
    /// Predictions skipped because the target or the whole prefix was unknown.
    pub skipped: usize,
    pub flops_per_prediction: u64,
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    rank: Option<usize>,
    head: bool,
    flops: u64,
}

/// Iterative revealing: one prediction per prefix length `1..|s|`.
pub fn evaluate_iterative<T: Scalar>(
    model: &ItemItemModel<T>,
    test: &EvalSessions,
    config: &EvalConfig,
    partition: &HeadTail,
) -> Result<EvalReport, EvalError> {
    evaluate(model, test, Protocol::Iterative, config, partition)
}

/// Leave-one-out: predict the last item of each session from the rest.
pub fn evaluate_leave_one_out<T: Scalar>(
    model: &ItemItemModel<T>,
    test: &EvalSessions,
    config: &EvalConfig,
    partition: &HeadTail,
) -> Result<EvalReport, EvalError> {
    evaluate(model, test, Protocol::LeaveOneOut, config, partition)
}

pub fn evaluate<T: Scalar>(
    model: &ItemItemModel<T>,
    test: &EvalSessions,
    protocol: Protocol,
    config: &EvalConfig,
    partition: &HeadTail,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let n = model.n_items();
    let per_session: Vec<(Vec<Outcome>, usize)> = test
        .sessions
        .par_iter()
        .map(|session| {
            let mut outcomes = Vec::new();
            let mut skipped = 0;
            if session.len() < 2 {
                return (outcomes, skipped);
            }
            let cuts = match protocol {
                Protocol::Iterative => 1..session.len(),
                Protocol::LeaveOneOut => session.len() - 1..session.len(),
            };
            for cut in cuts {
                let Some(target) = session[cut] else {
                    skipped += 1;
                    continue;
                };
                let Ok(x) = InferenceVector::<T>::from_prefix(&session[..cut], config.delta_inf) else {
                    skipped += 1;
                    continue;
                };
                let scores = x.scores(model);
                let rank = rank_of(&scores, target, |j| config.exclude_seen && x.weight(j).is_some());
                outcomes.push(Outcome {
                    rank,
                    head: partition.is_head(target),
                    flops: count_inference_flops(&x, n),
                });
            }
            (outcomes, skipped)
        })
        .collect();

    let skipped = per_session.iter().map(|(_, s)| s).sum();
    let outcomes: Vec<Outcome> = per_session.into_iter().flat_map(|(o, _)| o).collect();
    if outcomes.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let ranks: Vec<Option<usize>> = outcomes.iter().map(|o| o.rank).collect();
    let head: Vec<Option<usize>> = outcomes.iter().filter(|o| o.head).map(|o| o.rank).collect();
    let tail: Vec<Option<usize>> = outcomes.iter().filter(|o| !o.head).map(|o| o.rank).collect();
    let total_flops: u64 = outcomes.iter().map(|o| o.flops).sum();
    let count = outcomes.len() as u64;
    Ok(EvalReport {
        protocol,
        ks: config.ks.clone(),
        overall: MetricSet::from_ranks(ranks.iter(), &config.ks),
        head: MetricSet::from_ranks(head.iter(), &config.ks),
        tail: MetricSet::from_ranks(tail.iter(), &config.ks),
        skipped,
        flops_per_prediction: (total_flops + count / 2) / count,
    })
}

impl EvalReport {
    /// Flat `(key, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("protocol".to_string(), self.protocol.to_string()),
            ("predictions".to_string(), self.overall.predictions.to_string()),
            ("skipped".to_string(), self.skipped.to_string()),
            ("flops_per_prediction".to_string(), self.flops_per_prediction.to_string()),
        ];
        for (prefix, set) in [("", &self.overall), ("head.", &self.head), ("tail.", &self.tail)] {
            if !prefix.is_empty() {
                out.push((format!("{prefix}predictions"), set.predictions.to_string()));
            }
            for (name, map) in [("recall", &set.recall), ("mrr", &set.mrr), ("ndcg", &set.ndcg)] {
                for k in &self.ks {
                    out.push((format!("{prefix}{name}@{k}"), map[k].to_string()));
                }
            }
        }
        out
    }

    /// One `key value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&k);
            s.push(' ');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Flat JSON object with the same keys as [`EvalReport::to_text`].
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for (k, v) in self.entries() {
            let value = if k == "protocol" {
                serde_json::Value::String(v)
            } else {
                serde_json::from_str(&v).unwrap_or(serde_json::Value::String(v))
            };
            map.insert(k, value);
        }
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("report serializes");
        s.push('\n');
        s
    }
}
