//! Bitext cleaning: length and duplicate filters, a word-translation
//! lexicon trained by expectation maximization, lexical similarity
//! filtering, and z-score rejection of abnormal per-utterance scores.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to each target word's best translation probability.
pub const SIMILARITY_FLOOR: f64 = 1e-6;

/// Name of the empty source word in lexicon files.
pub const NULL_WORD: &str = "NULL";

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("sentence pair has an empty side")]
    EmptySide,
    #[error("need at least two scores, got {0}")]
    TooFew(usize),
    #[error("threshold must be finite and non-negative, got {0}")]
    BadThreshold(f64),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub id: Option<String>,
}

impl SentencePair {
    /// Build a pair by splitting both sides on whitespace.
    pub fn from_text(source: &str, target: &str) -> Self {
        SentencePair {
            source: source.split_whitespace().map(str::to_string).collect(),
            target: target.split_whitespace().map(str::to_string).collect(),
            id: None,
        }
    }
}

/// Parse `source<TAB>target[<TAB>id]` lines.
pub fn parse_bitext(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(CorpusError::Malformed {
                line: i + 1,
                reason: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let mut pair = SentencePair::from_text(fields[0], fields[1]);
        pair.id = fields.get(2).map(|s| s.to_string());
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn format_bitext(pairs: &[SentencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source.join(" "));
        out.push('\t');
        out.push_str(&p.target.join(" "));
        if let Some(id) = &p.id {
            out.push('\t');
            out.push_str(id);
        }
        out.push('\n');
    }
    out
}

/// Keep pairs whose sides both have at most `max_words` tokens.
pub fn filter_length(pairs: &[SentencePair], max_words: usize) -> Vec<SentencePair> {
    pairs
        .iter()
        .filter(|p| p.source.len() <= max_words && p.target.len() <= max_words)
        .cloned()
        .collect()
}

/// Keep the first occurrence of each (source, target) pair.
pub fn dedup(pairs: &[SentencePair]) -> Vec<SentencePair> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert((&p.source, &p.target)))
        .cloned()
        .collect()
}

/// Word translation table `t(target | source)` with a null source word.
///
/// Source index 0 is the null word.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconModel {
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    source_index: HashMap<String, u32>,
    target_index: HashMap<String, u32>,
    // (target, source) -> probability
    table: HashMap<(u32, u32), f64>,
}

/// Lexicon plus the corpus log-likelihood under the initial parameters and
/// after each EM iteration.
#[derive(Debug, Clone)]
pub struct LexiconTraining {
    pub model: LexiconModel,
    pub log_likelihood: Vec<f64>,
}

impl LexiconModel {
    fn empty() -> Self {
        let mut m = LexiconModel {
            source_vocab: Vec::new(),
            target_vocab: Vec::new(),
            source_index: HashMap::new(),
            target_index: HashMap::new(),
            table: HashMap::new(),
        };
        m.intern_source(NULL_WORD);
        m
    }

    fn intern_source(&mut self, w: &str) -> u32 {
        if let Some(&i) = self.source_index.get(w) {
            return i;
        }
        let i = self.source_vocab.len() as u32;
        self.source_vocab.push(w.to_string());
        self.source_index.insert(w.to_string(), i);
        i
    }

    fn intern_target(&mut self, w: &str) -> u32 {
        if let Some(&i) = self.target_index.get(w) {
            return i;
        }
        let i = self.target_vocab.len() as u32;
        self.target_vocab.push(w.to_string());
        self.target_index.insert(w.to_string(), i);
        i
    }

    /// Build a table from `(target, source, probability)` triples. The source
    /// word [`NULL_WORD`] denotes the null word.
    pub fn from_entries<'a, I>(entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut m = Self::empty();
        for (k, (f, e, p)) in entries.into_iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Malformed {
                    line: k + 1,
                    reason: format!("probability {p} outside [0, 1]"),
                });
            }
            let fi = m.intern_target(f);
            let ei = m.intern_source(e);
            m.table.insert((fi, ei), p);
        }
        Ok(m)
    }

    /// `t(target | source)`; zero for unseen pairs.
    pub fn prob(&self, target: &str, source: &str) -> f64 {
        match (self.target_index.get(target), self.source_index.get(source)) {
            (Some(&f), Some(&e)) => self.table.get(&(f, e)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Sum of `t(f | source)` over all target words.
    pub fn source_mass(&self, source: &str) -> f64 {
        let Some(&e) = self.source_index.get(source) else {
            return 0.0;
        };
        let mut entries: Vec<(u32, f64)> = self
            .table
            .iter()
            .filter(|((_, ei), _)| *ei == e)
            .map(|((f, _), p)| (*f, *p))
            .collect();
        entries.sort_by_key(|x| x.0);
        entries.iter().map(|x| x.1).sum()
    }

    pub fn source_words(&self) -> impl Iterator<Item = &str> {
        self.source_vocab.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Lines `target<TAB>source<TAB>prob`, sorted by target then source.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&str, &str, f64)> = self
            .table
            .iter()
            .map(|(&(f, e), &p)| {
                (
                    self.target_vocab[f as usize].as_str(),
                    self.source_vocab[e as usize].as_str(),
                    p,
                )
            })
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        rows.iter()
            .map(|(f, e, p)| format!("{f}\t{e}\t{p}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| CorpusError::Malformed {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected target<TAB>source<TAB>prob"));
            }
            let p: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| bad("probability is not a number"))?;
            rows.push((fields[0], fields[1], p));
        }
        Self::from_entries(rows)
    }

    /// Mean over target words of the best translation probability from any
    /// source word or the null word, floored at [`SIMILARITY_FLOOR`].
    pub fn coverage(&self, source: &[String], target: &[String]) -> Result<f64, CorpusError> {
        if source.is_empty() || target.is_empty() {
            return Err(CorpusError::EmptySide);
        }
        let src: Vec<u32> = std::iter::once(0)
            .chain(
                source
                    .iter()
                    .filter_map(|w| self.source_index.get(w).copied()),
            )
            .collect();
        let total: f64 = target
            .iter()
            .map(|f| {
                let best = self.target_index.get(f).map_or(0.0, |&fi| {
                    src.iter()
                        .filter_map(|&e| self.table.get(&(fi, e)))
                        .fold(0.0f64, |a, &b| a.max(b))
                });
                best.max(SIMILARITY_FLOOR)
            })
            .sum();
        Ok(total / target.len() as f64)
    }
}

/// Index-encoded corpus used during EM.
struct Encoded {
    // per pair: source ids (null first), target ids
    pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

fn log_likelihood(model: &LexiconModel, corpus: &Encoded) -> f64 {
    let mut ll = 0.0;
    for (src, tgt) in &corpus.pairs {
        let norm = (src.len() as f64).ln();
        for &f in tgt {
            let s: f64 = src.iter().map(|&e| model.table[&(f, e)]).sum();
            ll += s.ln() - norm;
        }
    }
    ll
}

/// Train `t(target | source)` with IBM Model 1 expectation maximization.
///
/// Every source word's distribution starts uniform over the target words it
/// co-occurs with, so it sums to one before and after every iteration.
pub fn train_lexicon(
    pairs: &[SentencePair],
    iterations: usize,
) -> Result<LexiconTraining, CorpusError> {
    if iterations == 0 {
        return Err(CorpusError::NoIterations);
    }
    let usable: Vec<&SentencePair> = pairs.iter().filter(|p| !p.target.is_empty()).collect();
    if usable.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut model = LexiconModel::empty();
    let mut corpus = Encoded { pairs: Vec::new() };
    for p in usable {
        let mut src = vec![0u32];
        src.extend(p.source.iter().map(|w| model.intern_source(w)));
        let tgt: Vec<u32> = p.target.iter().map(|w| model.intern_target(w)).collect();
        corpus.pairs.push((src, tgt));
    }

    // uniform start over co-occurring targets
    let mut cooc: Vec<Vec<u32>> = vec![Vec::new(); model.source_vocab.len()];
    let mut seen = HashSet::new();
    for (src, tgt) in &corpus.pairs {
        for &e in src {
            for &f in tgt {
                if seen.insert((f, e)) {
                    cooc[e as usize].push(f);
                }
            }
        }
    }
    for (e, targets) in cooc.iter().enumerate() {
        let p = 1.0 / targets.len() as f64;
        for &f in targets {
            model.table.insert((f, e as u32), p);
        }
    }

    let mut history = Vec::with_capacity(iterations + 1);
    let mut counts: HashMap<(u32, u32), f64> = HashMap::with_capacity(model.table.len());
    let mut totals = vec![0.0f64; model.source_vocab.len()];
    for _ in 0..iterations {
        counts.clear();
        totals.iter_mut().for_each(|t| *t = 0.0);
        let mut ll = 0.0;
        // expectation, accumulated in corpus order
        for (src, tgt) in &corpus.pairs {
            let norm = (src.len() as f64).ln();
            for &f in tgt {
                let z: f64 = src.iter().map(|&e| model.table[&(f, e)]).sum();
                ll += z.ln() - norm;
                for &e in src {
                    let c = model.table[&(f, e)] / z;
                    *counts.entry((f, e)).or_insert(0.0) += c;
                    totals[e as usize] += c;
                }
            }
        }
        history.push(ll);
        // maximization
        for (key, p) in model.table.iter_mut() {
            let c = counts.get(key).copied().unwrap_or(0.0);
            let t = totals[key.1 as usize];
            *p = if t > 0.0 { c / t } else { 0.0 };
        }
    }
    history.push(log_likelihood(&model, &corpus));
    Ok(LexiconTraining {
        model,
        log_likelihood: history,
    })
}

/// Swap source and target sides, e.g. to train the reverse-direction lexicon.
pub fn reversed(pairs: &[SentencePair]) -> Vec<SentencePair> {
    pairs
        .iter()
        .map(|p| SentencePair {
            source: p.target.clone(),
            target: p.source.clone(),
            id: p.id.clone(),
        })
        .collect()
}

/// Lexical similarity in `[SIMILARITY_FLOOR, 1]`.
///
/// With a `reverse` model (trained target-to-source) the result is the
/// geometric mean of both directions' coverage.
pub fn similarity(
    pair: &SentencePair,
    forward: &LexiconModel,
    reverse: Option<&LexiconModel>,
) -> Result<f64, CorpusError> {
    let fwd = forward.coverage(&pair.source, &pair.target)?;
    match reverse {
        Some(rev) => Ok((fwd * rev.coverage(&pair.target, &pair.source)?).sqrt()),
        None => Ok(fwd),
    }
}

/// Keep pairs whose similarity is at least `threshold`. Pairs with an empty
/// side are dropped.
pub fn filter_similarity(
    pairs: &[SentencePair],
    forward: &LexiconModel,
    reverse: Option<&LexiconModel>,
    threshold: f64,
) -> Vec<SentencePair> {
    pairs
        .iter()
        .filter(|p| similarity(p, forward, reverse).is_ok_and(|s| s >= threshold))
        .cloned()
        .collect()
}

/// Ids whose score lies within `z_threshold` population standard
/// deviations of the mean (boundary inclusive).
pub fn filter_outlier_scores(
    items: &[(String, f64)],
    z_threshold: f64,
) -> Result<Vec<String>, CorpusError> {
    if items.len() < 2 {
        return Err(CorpusError::TooFew(items.len()));
    }
    if !(z_threshold.is_finite() && z_threshold >= 0.0) {
        return Err(CorpusError::BadThreshold(z_threshold));
    }
    let n = items.len() as f64;
    let mean = items.iter().map(|x| x.1).sum::<f64>() / n;
    let var = items.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / n;
    let limit = z_threshold * var.sqrt();
    Ok(items
        .iter()
        .filter(|x| (x.1 - mean).abs() <= limit)
        .map(|x| x.0.clone())
        .collect())
}

/// Parse `id<TAB>score` lines.
pub fn parse_scores(text: &str) -> Result<Vec<(String, f64)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| CorpusError::Malformed {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (id, score) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected id<TAB>score"))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| bad("score is not a number"))?;
        if !score.is_finite() {
            return Err(bad("score is not finite"));
        }
        out.push((id.to_string(), score));
    }
    Ok(out)
}
