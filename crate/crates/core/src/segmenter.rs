//! Sentence re-segmentation of unpunctuated ASR token streams.
//!
//! A logistic boundary classifier over a window of surrounding tokens is
//! trained on punctuated paragraphs (".", "!" and "?" mark sentence ends).
//! Decoding is a global dynamic program over cut positions with segment
//! length limits.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::metrics::SegmentedText;
use crate::seed;
use crate::textnorm::{normalize_written_to_spoken, SpokenText};

const PAD_BEFORE: &str = "<s>";
const PAD_AFTER: &str = "</s>";
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SegmenterError {
    #[error("window must be at least 1")]
    BadWindow,
    #[error("training data needs both boundary and non-boundary examples")]
    DegenerateLabels,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("segment length bounds [{min}, {max}] are infeasible")]
    Infeasible { min: usize, max: usize },
    #[error("model file line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },
}

/// Tokens around a candidate cut between `before.last()` and `after[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryExample {
    /// The `w` tokens preceding the cut, nearest last, padded with `<s>`.
    pub before: Vec<String>,
    /// The `w` tokens following the cut, nearest first, padded with `</s>`.
    pub after: Vec<String>,
    pub label: bool,
}

impl BoundaryExample {
    /// Indicator feature names such as `-1=hi` or `+2=</s>`.
    pub fn features(&self) -> Vec<String> {
        window_features(&self.before, &self.after)
    }
}

fn window_features<S: AsRef<str>>(before: &[S], after: &[S]) -> Vec<String> {
    let w = before.len();
    let mut f = Vec::with_capacity(before.len() + after.len());
    for (k, t) in before.iter().enumerate() {
        f.push(format!("-{}={}", w - k, t.as_ref()));
    }
    for (k, t) in after.iter().enumerate() {
        f.push(format!("+{}={}", k + 1, t.as_ref()));
    }
    f
}

fn context(tokens: &[String], cut: usize, w: usize) -> (Vec<&str>, Vec<&str>) {
    // cut is the index of the first token after the boundary
    let before = (0..w)
        .rev()
        .map(|k| {
            if cut > k {
                tokens[cut - 1 - k].as_str()
            } else {
                PAD_BEFORE
            }
        })
        .collect();
    let after = (0..w)
        .map(|k| tokens.get(cut + k).map_or(PAD_AFTER, String::as_str))
        .collect();
    (before, after)
}

fn ends_sentence(written: &str) -> bool {
    written
        .trim_end_matches(['"', '\'', ')', ']', '}', '»', '”', '’'])
        .ends_with(['.', '!', '?'])
}

/// Spoken tokens of a paragraph and, for each token, whether a sentence
/// ends right after it.
fn spoken_with_labels(paragraph: &str) -> (Vec<String>, Vec<bool>) {
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    for written in paragraph.split_whitespace() {
        let spoken = normalize_written_to_spoken(written).into_tokens();
        labels.extend(std::iter::repeat_n(false, spoken.len()));
        tokens.extend(spoken);
        // a boundary with no spoken token of its own ("...") attaches to the
        // previous token
        if ends_sentence(written) {
            if let Some(last) = labels.last_mut() {
                *last = true;
            }
        }
    }
    (tokens, labels)
}

/// One example per gap between consecutive spoken tokens of each paragraph.
pub fn extract_training_examples<S: AsRef<str>>(
    paragraphs: &[S],
    window: usize,
) -> Result<Vec<BoundaryExample>, SegmenterError> {
    if window == 0 {
        return Err(SegmenterError::BadWindow);
    }
    let mut out = Vec::new();
    for p in paragraphs {
        let (tokens, labels) = spoken_with_labels(p.as_ref());
        for cut in 1..tokens.len() {
            let (before, after) = context(&tokens, cut, window);
            out.push(BoundaryExample {
                before: before.into_iter().map(str::to_string).collect(),
                after: after.into_iter().map(str::to_string).collect(),
                label: labels[cut - 1],
            });
        }
    }
    Ok(out)
}

/// Logistic regression over window indicator features.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryModel {
    weights: BTreeMap<String, f64>,
    bias: f64,
    window: usize,
}

fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

impl BoundaryModel {
    pub fn new(
        weights: BTreeMap<String, f64>,
        bias: f64,
        window: usize,
    ) -> Result<Self, SegmenterError> {
        if window == 0 {
            return Err(SegmenterError::BadWindow);
        }
        Ok(BoundaryModel {
            weights,
            bias,
            window,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    fn score<S: AsRef<str>>(&self, before: &[S], after: &[S]) -> f64 {
        self.bias
            + window_features(before, after)
                .iter()
                .filter_map(|f| self.weights.get(f))
                .sum::<f64>()
    }

    /// Boundary probability, strictly inside `(0, 1)`.
    pub fn predict<S: AsRef<str>>(&self, before: &[S], after: &[S]) -> f64 {
        sigmoid(self.score(before, after))
    }

    /// Probability of a cut after each token except the last.
    pub fn boundary_probs(&self, tokens: &[String]) -> Vec<f64> {
        (1..tokens.len())
            .map(|cut| {
                let (b, a) = context(tokens, cut, self.window);
                self.predict(&b, &a)
            })
            .collect()
    }

    /// Lines `bias<TAB>v`, `window<TAB>w`, then `feature<TAB>weight`.
    pub fn to_text(&self) -> String {
        let mut out = format!("bias\t{}\nwindow\t{}\n", self.bias, self.window);
        for (f, w) in &self.weights {
            out.push_str(&format!("{f}\t{w}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SegmenterError> {
        let mut bias = None;
        let mut window = None;
        let mut weights = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| SegmenterError::MalformedModel {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected key<TAB>value"))?;
            match key {
                "window" => {
                    window = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|_| bad("bad window"))?,
                    )
                }
                _ => {
                    let v: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| bad("value is not a number"))?;
                    if !v.is_finite() {
                        return Err(bad("value is not finite"));
                    }
                    if key == "bias" {
                        bias = Some(v);
                    } else {
                        weights.insert(key.to_string(), v);
                    }
                }
            }
        }
        let missing = |what: &str| SegmenterError::MalformedModel {
            line: 0,
            reason: format!("missing {what} line"),
        };
        BoundaryModel::new(
            weights,
            bias.ok_or_else(|| missing("bias"))?,
            window.ok_or_else(|| missing("window"))?,
        )
    }
}

/// Model together with the mean training log-loss after each epoch.
#[derive(Debug, Clone)]
pub struct BoundaryTraining {
    pub model: BoundaryModel,
    pub epoch_losses: Vec<f64>,
}

/// Fit the boundary classifier by stochastic gradient descent on log-loss.
///
/// Examples are shuffled once with `seed` and visited in that fixed order
/// every epoch, so the result is deterministic.
pub fn train_boundary_model(
    examples: &[BoundaryExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<BoundaryTraining, SegmenterError> {
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(SegmenterError::BadLearningRate(learning_rate));
    }
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(SegmenterError::DegenerateLabels);
    }
    let window = examples[0].before.len();
    if window == 0 {
        return Err(SegmenterError::BadWindow);
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let encoded: Vec<(Vec<usize>, f64)> = examples
        .iter()
        .map(|e| {
            let ids = e
                .features()
                .into_iter()
                .map(|f| {
                    *index.entry(f.clone()).or_insert_with(|| {
                        names.push(f);
                        names.len() - 1
                    })
                })
                .collect();
            (ids, if e.label { 1.0 } else { 0.0 })
        })
        .collect();

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    order.shuffle(&mut seed::rng(seed));

    let mut weights = vec![0.0f64; names.len()];
    let mut bias = 0.0f64;
    let z = |weights: &[f64], bias: f64, ids: &[usize]| -> f64 {
        bias + ids.iter().map(|&i| weights[i]).sum::<f64>()
    };
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        for &k in &order {
            let (ids, y) = &encoded[k];
            let g = sigmoid(z(&weights, bias, ids)) - y;
            bias -= learning_rate * g;
            for &i in ids {
                weights[i] -= learning_rate * g;
            }
        }
        let loss = encoded
            .iter()
            .map(|(ids, y)| {
                let p = sigmoid(z(&weights, bias, ids));
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / encoded.len() as f64;
        epoch_losses.push(loss);
    }

    let weights = names
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w != 0.0)
        .collect();
    Ok(BoundaryTraining {
        model: BoundaryModel::new(weights, bias, window)?,
        epoch_losses,
    })
}

/// Score of a segmentation given cut probabilities: `ln p` at each cut plus
/// `ln (1 - p)` at every other gap.
pub fn segmentation_objective(probs: &[f64], cuts: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut next = cuts.iter().peekable();
    for (gap, &p) in probs.iter().enumerate() {
        // cut position c means a boundary after token c - 1, i.e. gap c - 1
        if next.peek().is_some_and(|&&c| c == gap + 1) {
            next.next();
            total += p.ln();
        } else {
            total += (1.0 - p).ln();
        }
    }
    total
}

#[derive(Clone, Copy)]
struct Best {
    score: f64,
    segments: usize,
}

// scores reached through different summation orders may differ by rounding
fn same_score(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl Best {
    fn better_than(&self, other: &Best) -> bool {
        if same_score(self.score, other.score) {
            self.segments < other.segments
        } else {
            self.score.total_cmp(&other.score) == Ordering::Greater
        }
    }
}

/// Cut positions (start indices of every segment after the first) of the
/// best length-constrained segmentation of `n = probs.len() + 1` tokens.
///
/// Every segment length lies in `[min_len, max_len]`; when that is
/// infeasible the final segment alone may be shorter than `min_len`. Ties go
/// to fewer segments, then to the earliest cuts.
#[allow(clippy::needless_range_loop)]
pub fn best_cuts(
    probs: &[f64],
    min_len: usize,
    max_len: usize,
) -> Result<Vec<usize>, SegmenterError> {
    if min_len == 0 || min_len > max_len {
        return Err(SegmenterError::Infeasible {
            min: min_len,
            max: max_len,
        });
    }
    let n = probs.len() + 1;
    let cut_lp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    // prefix sums of ln(1 - p) over gaps
    let mut keep = vec![0.0f64; n];
    for (g, p) in probs.iter().enumerate() {
        keep[g + 1] = keep[g] + (1.0 - p).ln();
    }
    // segment [i, j): interior gaps i..j-1, plus the cut at gap j-1 if j < n
    let seg_score = |i: usize, j: usize| -> f64 {
        let interior = keep[j - 1] - keep[i];
        if j < n {
            interior + cut_lp[j - 1]
        } else {
            interior
        }
    };

    let solve = |final_min: usize| -> Option<Vec<Option<Best>>> {
        // suffix[i]: best segmentation of tokens[i..]
        let mut suffix: Vec<Option<Best>> = vec![None; n + 1];
        suffix[n] = Some(Best {
            score: 0.0,
            segments: 0,
        });
        for i in (0..n).rev() {
            let mut best: Option<Best> = None;
            for j in i + 1..=(i + max_len).min(n) {
                let lo = if j == n { final_min } else { min_len };
                if j - i < lo {
                    continue;
                }
                let Some(rest) = suffix[j] else { continue };
                let cand = Best {
                    score: seg_score(i, j) + rest.score,
                    segments: rest.segments + 1,
                };
                if best.is_none_or(|b| cand.better_than(&b)) {
                    best = Some(cand);
                }
            }
            suffix[i] = best;
        }
        suffix[0].map(|_| suffix)
    };

    let (suffix, final_min) = match solve(min_len) {
        Some(s) => (s, min_len),
        None => (solve(1).expect("relaxed problem is always feasible"), 1),
    };

    // forward pass picks the earliest cut that attains the optimum
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < n {
        let target = suffix[i].expect("reachable state");
        let j = (i + 1..=(i + max_len).min(n))
            .find(|&j| {
                let lo = if j == n { final_min } else { min_len };
                j - i >= lo
                    && suffix[j].is_some_and(|rest| {
                        same_score(seg_score(i, j) + rest.score, target.score)
                            && rest.segments + 1 == target.segments
                    })
            })
            .expect("optimal successor exists");
        if j < n {
            cuts.push(j);
        }
        i = j;
    }
    Ok(cuts)
}

/// Re-segment a spoken token stream with `model`.
pub fn segment(
    tokens: &SpokenText,
    model: &BoundaryModel,
    min_len: usize,
    max_len: usize,
) -> Result<SegmentedText, SegmenterError> {
    let toks = tokens.tokens();
    if toks.is_empty() {
        if min_len == 0 || min_len > max_len {
            return Err(SegmenterError::Infeasible {
                min: min_len,
                max: max_len,
            });
        }
        return Ok(SegmentedText::default());
    }
    let cuts = best_cuts(&model.boundary_probs(toks), min_len, max_len)?;
    Ok(split_at(toks, &cuts))
}

pub(crate) fn split_at(tokens: &[String], cuts: &[usize]) -> SegmentedText {
    let mut segments = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&tokens.len())) {
        segments.push(tokens[prev..c].to_vec());
        prev = c;
    }
    SegmentedText::new(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ex: &[BoundaryExample]) -> Vec<bool> {
        ex.iter().map(|e| e.label).collect()
    }

    #[test]
    fn examples_from_paragraphs() {
        let ex = extract_training_examples(&["Hi. Go now."], 1).unwrap();
        assert_eq!(labels(&ex), [true, false]);
        assert_eq!(ex[0].before, ["hi"]);
        assert_eq!(ex[0].after, ["go"]);

        let ex = extract_training_examples(&["no marks here at all"], 2).unwrap();
        assert!(ex.iter().all(|e| !e.label));
        assert_eq!(ex[0].before, ["<s>", "no"]);
        assert_eq!(ex[3].after, ["all", "</s>"]);

        let ex = extract_training_examples(&["Really?! Yes."], 1).unwrap();
        assert_eq!(labels(&ex), [true]);

        // numerals are expanded before features are built
        let ex = extract_training_examples(&["I saw 2. Then left."], 1).unwrap();
        assert_eq!(labels(&ex), [false, false, true, false]);
        assert_eq!(ex[2].before, ["two"]);

        assert!(extract_training_examples(&[""], 1).unwrap().is_empty());
        assert_eq!(
            extract_training_examples(&["a"], 0),
            Err(SegmenterError::BadWindow)
        );
    }

    #[test]
    fn features_are_named_by_offset() {
        let ex = extract_training_examples(&["a b. c d"], 2).unwrap();
        assert_eq!(ex[1].features(), ["-2=a", "-1=b", "+1=c", "+2=d"]);
    }

    #[test]
    fn degenerate_training_data() {
        let ex = extract_training_examples(&["one two three"], 1).unwrap();
        assert_eq!(
            train_boundary_model(&ex, 3, 0.5, 1).unwrap_err(),
            SegmenterError::DegenerateLabels
        );
    }

    #[test]
    fn model_text_round_trip() {
        let ex = extract_training_examples(&["a b. c d. e f g."], 1).unwrap();
        let m = train_boundary_model(&ex, 5, 0.5, 9).unwrap().model;
        assert_eq!(BoundaryModel::parse(&m.to_text()).unwrap(), m);
        assert!(BoundaryModel::parse("bias\t0\n").is_err());
        assert!(BoundaryModel::parse("window\tx\nbias\t0\n").is_err());
    }

    #[test]
    fn planted_probabilities_are_recovered() {
        // cuts after tokens 2 and 5 of an 8-token stream
        let mut probs = vec![PROB_EPS; 7];
        probs[2] = 1.0 - PROB_EPS;
        probs[5] = 1.0 - PROB_EPS;
        assert_eq!(best_cuts(&probs, 1, 8).unwrap(), [3, 6]);
    }

    #[test]
    fn single_segment_when_no_boundaries() {
        let probs = vec![1e-9; 9];
        assert!(best_cuts(&probs, 1, 10).unwrap().is_empty());
    }

    #[test]
    fn length_limits() {
        let probs = vec![0.5; 9];
        let cuts = best_cuts(&probs, 3, 4).unwrap();
        let seg = split_at(&(0..10).map(|i| i.to_string()).collect::<Vec<_>>(), &cuts);
        assert!(seg.segments.iter().all(|s| (3..=4).contains(&s.len())));
        // 5 tokens cannot be split into pieces of 3..=4: the tail is exempt
        let cuts = best_cuts(&[0.5; 4], 3, 4).unwrap();
        assert!(cuts == [3] || cuts == [4]);
        // fewer tokens than min_len
        assert!(best_cuts(&[0.9], 3, 4).unwrap().is_empty());
        assert!(best_cuts(&[0.5], 4, 3).is_err());
        assert!(best_cuts(&[0.5], 0, 3).is_err());
    }

    #[test]
    fn ties_prefer_fewer_then_earlier() {
        // p = 0.5 everywhere: every segmentation scores 9 ln 0.5
        let cuts = best_cuts(&[0.5; 9], 1, 10).unwrap();
        assert!(cuts.is_empty());
        let cuts = best_cuts(&[0.5; 9], 1, 4).unwrap();
        assert_eq!(cuts, [2, 6]);
    }
}
