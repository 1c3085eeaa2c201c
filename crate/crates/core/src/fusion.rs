//! N-best fusion: merge hypothesis lists from several systems, rescore them
//! with a weighted log-linear combination divided by a length penalty, and
//! tune the weights on a development set by grid search.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{bleu_corpus, MetricsError, SegmentedText};

pub const FIELD_SEP: &str = " ||| ";

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("n-best line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("cannot merge lists for different sentences ({0:?} vs {1:?})")]
    IdMismatch(String, String),
    #[error("nothing to merge")]
    NoLists,
    #[error("hypothesis {hyp:?} of sentence {id:?} has no score for model {model:?}")]
    MissingScore {
        id: String,
        hyp: String,
        model: String,
    },
    #[error("weight vector needs at least one nonzero finite weight")]
    ZeroWeights,
    #[error("weights line {line}: {reason}")]
    MalformedWeights { line: usize, reason: String },
    #[error("search grid is empty")]
    GridEmpty,
    #[error("references do not match the dev set: {0}")]
    RefMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    /// Log-domain model scores; higher is better.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub id: String,
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    pub fn new(id: impl Into<String>) -> Self {
        NBestList {
            id: id.into(),
            hypotheses: Vec::new(),
        }
    }

    /// Add a hypothesis, merging score maps with an existing identical token
    /// sequence (new values win).
    pub fn push(&mut self, hyp: Hypothesis) {
        match self.hypotheses.iter_mut().find(|h| h.tokens == hyp.tokens) {
            Some(existing) => existing.scores.extend(hyp.scores),
            None => self.hypotheses.push(hyp),
        }
    }
}

/// Parse `id ||| tokens ||| name=value ...` lines, grouped by id in order of
/// first appearance.
pub fn parse_nbest(text: &str) -> Result<Vec<NBestList>, FusionError> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| FusionError::MalformedLine {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(FIELD_SEP).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(bad("empty sentence id".into()));
        }
        let tokens: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(bad("empty hypothesis".into()));
        }
        let mut scores = BTreeMap::new();
        for item in fields[2].split_whitespace() {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("score {item:?} is not name=value")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| bad(format!("score {item:?} is not numeric")))?;
            if name.is_empty() || !v.is_finite() {
                return Err(bad(format!("invalid score {item:?}")));
            }
            scores.insert(name.to_string(), v);
        }
        let k = *by_id.entry(id.to_string()).or_insert_with(|| {
            lists.push(NBestList::new(id));
            lists.len() - 1
        });
        lists[k].push(Hypothesis { tokens, scores });
    }
    Ok(lists)
}

pub fn format_nbest(lists: &[NBestList]) -> String {
    let mut out = String::new();
    for list in lists {
        for h in &list.hypotheses {
            let scores: Vec<String> = h.scores.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!(
                "{}{FIELD_SEP}{}{FIELD_SEP}{}\n",
                list.id,
                h.tokens.join(" "),
                scores.join(" ")
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingScorePolicy {
    /// Assign the worst (minimum) score that model gave in the merged list.
    ImputeWorst,
    /// Remove hypotheses lacking any model's score.
    Drop,
}

/// Union of several lists for one sentence, keyed by token sequence in
/// order of first occurrence.
pub fn merge_nbest(
    lists: &[NBestList],
    policy: MissingScorePolicy,
) -> Result<NBestList, FusionError> {
    let first = lists.first().ok_or(FusionError::NoLists)?;
    let mut merged = NBestList::new(first.id.clone());
    for list in lists {
        if list.id != first.id {
            return Err(FusionError::IdMismatch(first.id.clone(), list.id.clone()));
        }
        for h in &list.hypotheses {
            merged.push(h.clone());
        }
    }
    let models: BTreeSet<String> = merged
        .hypotheses
        .iter()
        .flat_map(|h| h.scores.keys().cloned())
        .collect();
    match policy {
        MissingScorePolicy::Drop => merged
            .hypotheses
            .retain(|h| models.iter().all(|m| h.scores.contains_key(m))),
        MissingScorePolicy::ImputeWorst => {
            for m in &models {
                let worst = merged
                    .hypotheses
                    .iter()
                    .filter_map(|h| h.scores.get(m))
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                for h in &mut merged.hypotheses {
                    h.scores.entry(m.clone()).or_insert(worst);
                }
            }
        }
    }
    Ok(merged)
}

/// Merge whole systems' outputs sentence by sentence, ids in order of first
/// appearance across systems.
pub fn merge_systems(
    systems: &[Vec<NBestList>],
    policy: MissingScorePolicy,
) -> Result<Vec<NBestList>, FusionError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<NBestList>> = HashMap::new();
    for system in systems {
        for list in system {
            groups
                .entry(&list.id)
                .or_insert_with(|| {
                    order.push(&list.id);
                    Vec::new()
                })
                .push(list.clone());
        }
    }
    order
        .into_iter()
        .map(|id| merge_nbest(&groups[id], policy))
        .collect()
}

/// `((5 + length) / 6) ^ alpha`.
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: BTreeMap<String, f64>,
    alpha: f64,
}

impl WeightVector {
    pub fn new(weights: BTreeMap<String, f64>, alpha: f64) -> Result<Self, FusionError> {
        if !alpha.is_finite()
            || weights.values().any(|w| !w.is_finite())
            || weights.values().all(|&w| w == 0.0)
        {
            return Err(FusionError::ZeroWeights);
        }
        Ok(WeightVector { weights, alpha })
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Multiply every model weight by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, FusionError> {
        Self::new(
            self.weights
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .collect(),
            self.alpha,
        )
    }

    /// Lines `model<TAB>weight` followed by `alpha<TAB>value`.
    pub fn to_text(&self) -> String {
        let mut out: String = self
            .weights
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect();
        out.push_str(&format!("alpha\t{}\n", self.alpha));
        out
    }

    pub fn parse(text: &str) -> Result<Self, FusionError> {
        let mut weights = BTreeMap::new();
        let mut alpha = 0.0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| FusionError::MalformedWeights {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected name<TAB>value"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
            if k == "alpha" {
                alpha = v;
            } else {
                weights.insert(k.to_string(), v);
            }
        }
        Self::new(weights, alpha)
    }
}

/// Weighted score sum divided by the length penalty.
pub fn combined_score(id: &str, hyp: &Hypothesis, w: &WeightVector) -> Result<f64, FusionError> {
    let mut total = 0.0;
    for (model, &weight) in &w.weights {
        if weight == 0.0 {
            continue;
        }
        let s = hyp
            .scores
            .get(model)
            .ok_or_else(|| FusionError::MissingScore {
                id: id.to_string(),
                hyp: hyp.tokens.join(" "),
                model: model.clone(),
            })?;
        total += weight * s;
    }
    Ok(total / length_penalty(hyp.tokens.len(), w.alpha))
}

/// Hypotheses sorted by descending combined score; ties keep input order.
pub fn rescore(list: &NBestList, w: &WeightVector) -> Result<NBestList, FusionError> {
    let mut scored = list
        .hypotheses
        .iter()
        .map(|h| Ok((combined_score(&list.id, h, w)?, h)))
        .collect::<Result<Vec<_>, FusionError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(NBestList {
        id: list.id.clone(),
        hypotheses: scored.into_iter().map(|(_, h)| h.clone()).collect(),
    })
}

/// Search grid: candidate weights per model plus length-penalty exponents.
///
/// Points are visited like an odometer: the first model varies slowest and
/// alpha fastest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightGrid {
    pub models: Vec<(String, Vec<f64>)>,
    pub alphas: Vec<f64>,
}

impl WeightGrid {
    /// Points in iteration order; all-zero points are skipped.
    pub fn points(&self) -> Vec<WeightVector> {
        if self.alphas.is_empty() || self.models.iter().any(|(_, v)| v.is_empty()) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.models.len()];
        loop {
            let weights: BTreeMap<String, f64> = self
                .models
                .iter()
                .zip(&idx)
                .map(|((name, vals), &i)| (name.clone(), vals[i]))
                .collect();
            for &alpha in &self.alphas {
                if let Ok(w) = WeightVector::new(weights.clone(), alpha) {
                    out.push(w);
                }
            }
            // advance, last model fastest
            let mut k = self.models.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.models[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Map each list to its reference segment: ids are 0-based line numbers.
fn reference_slots(dev: &[NBestList], refs: &SegmentedText) -> Result<Vec<usize>, FusionError> {
    let mut used = vec![false; refs.len()];
    dev.iter()
        .map(|list| {
            let k: usize = list.id.parse().map_err(|_| {
                FusionError::RefMismatch(format!("id {:?} is not a line index", list.id))
            })?;
            if k >= refs.len() || used[k] {
                return Err(FusionError::RefMismatch(format!(
                    "id {k} is out of range or repeated"
                )));
            }
            used[k] = true;
            Ok(k)
        })
        .collect()
}

/// Best hypothesis per reference line under `w`; sentences without an
/// n-best list contribute an empty hypothesis.
pub fn top1_outputs(
    dev: &[NBestList],
    slots: &[usize],
    n_refs: usize,
    w: &WeightVector,
) -> Result<Vec<Vec<String>>, FusionError> {
    let mut hyps = vec![Vec::new(); n_refs];
    for (list, &slot) in dev.iter().zip(slots) {
        if let Some(best) = rescore(list, w)?.hypotheses.into_iter().next() {
            hyps[slot] = best.tokens;
        }
    }
    Ok(hyps)
}

/// Exhaustive grid search maximizing case-sensitive corpus BLEU of the
/// top-1 outputs. Ties go to the earliest grid point.
pub fn tune_weights_grid(
    dev: &[NBestList],
    refs: &SegmentedText,
    grid: &WeightGrid,
) -> Result<(WeightVector, f64), FusionError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(FusionError::GridEmpty);
    }
    let slots = reference_slots(dev, refs)?;
    let scores = points
        .par_iter()
        .map(|w| {
            let hyps = top1_outputs(dev, &slots, refs.len(), w)?;
            Ok(bleu_corpus(&refs.segments, &hyps, 4, true)?.bleu)
        })
        .collect::<Result<Vec<f64>, FusionError>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((points[best].clone(), scores[best]))
}
