//! Word error rate, corpus BLEU, and segmentation-tolerant scoring.
//!
//! A translation of a whole talk rarely shares the reference's sentence
//! boundaries. [`mwer_resegment`] cuts the hypothesis stream into as many
//! pieces as there are reference segments so that the summed word edit
//! distance is minimal; BLEU is then computed on the realigned segments.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("{refs} reference segments but {hyps} hypothesis segments")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("at least one reference segment is required")]
    NoSegments,
    #[error("max n-gram order must be at least 1")]
    BadOrder,
    #[error("malformed CTM line {line}: {reason}")]
    MalformedCtm { line: usize, reason: String },
}

/// Ordered token segments; their concatenation is the stream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentedText {
    pub segments: Vec<Vec<String>>,
}

impl SegmentedText {
    pub fn new(segments: Vec<Vec<String>>) -> Self {
        SegmentedText { segments }
    }

    /// One segment per line, whitespace tokenized. Blank lines are empty
    /// segments.
    pub fn from_lines(text: &str) -> Self {
        SegmentedText {
            segments: text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        }
    }

    pub fn to_lines(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{}\n", s.join(" ")))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn flatten(&self) -> Vec<String> {
        self.segments.iter().flatten().cloned().collect()
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

/// Levenshtein distance with unit costs and one optimal operation breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Word-level edit distance turning `a` (reference) into `b` (hypothesis).
///
/// The backtrace prefers a diagonal move (match or substitution), then a
/// deletion, then an insertion.
#[allow(clippy::needless_range_loop)]
pub fn edit_distance<S: AsRef<str>>(a: &[S], b: &[S]) -> EditCounts {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1].as_ref() != b[j - 1].as_ref());
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut counts = EditCounts {
        distance: d[n * w + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let differ = a[i - 1].as_ref() != b[j - 1].as_ref();
            if d[(i - 1) * w + j - 1] + usize::from(differ) == here {
                counts.substitutions += usize::from(differ);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(edit_distance(reference, hypothesis).distance as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// BLEU in `[0, 100]`.
    pub bleu: f64,
    /// Corpus WER: summed segment edit distance over reference tokens.
    pub wer: f64,
    /// Modified n-gram precisions, `p1` first.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub segments: usize,
    /// Cut positions in the hypothesis stream, when it was realigned.
    pub boundaries: Option<Vec<usize>>,
}

impl ScoreReport {
    /// Plain `key<TAB>value` block.
    pub fn to_kv_block(&self) -> String {
        let mut out = format!("bleu\t{:.4}\n", self.bleu);
        for (i, p) in self.precisions.iter().enumerate() {
            out.push_str(&format!("p{}\t{:.4}\n", i + 1, p * 100.0));
        }
        out.push_str(&format!("bp\t{:.4}\n", self.brevity_penalty));
        out.push_str(&format!("wer\t{:.4}\n", self.wer * 100.0));
        out.push_str(&format!(
            "hyp_len\t{}\nref_len\t{}\n",
            self.hyp_len, self.ref_len
        ));
        out.push_str(&format!("segments\t{}\n", self.segments));
        if let Some(b) = &self.boundaries {
            let cuts: Vec<String> = b.iter().map(usize::to_string).collect();
            out.push_str(&format!("boundaries\t{}\n", cuts.join(" ")));
        }
        out
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_block())
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Single-reference corpus BLEU without smoothing.
pub fn bleu_corpus(
    refs: &[Vec<String>],
    hyps: &[Vec<String>],
    max_n: usize,
    case_sensitive: bool,
) -> Result<ScoreReport, MetricsError> {
    if refs.len() != hyps.len() {
        return Err(MetricsError::LengthMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    if refs.is_empty() {
        return Err(MetricsError::NoSegments);
    }
    if max_n == 0 {
        return Err(MetricsError::BadOrder);
    }
    let fold = |segs: &[Vec<String>]| -> Vec<Vec<String>> {
        if case_sensitive {
            segs.to_vec()
        } else {
            segs.iter()
                .map(|s| s.iter().map(|t| t.to_lowercase()).collect())
                .collect()
        }
    };
    let (refs, hyps) = (fold(refs), fold(hyps));

    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len, mut edits) = (0, 0, 0);
    for (r, h) in refs.iter().zip(&hyps) {
        hyp_len += h.len();
        ref_len += r.len();
        edits += edit_distance(r, h).distance;
        for n in 1..=max_n {
            let rc = ngram_counts(r, n);
            let hc = ngram_counts(h, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        100.0 * brevity_penalty * mean_log.exp()
    } else {
        0.0
    };
    Ok(ScoreReport {
        bleu,
        wer: edits as f64 / ref_len.max(1) as f64,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        segments: refs.len(),
        boundaries: None,
    })
}

/// Given `prev[i]` = best cost of earlier segments ending at stream position
/// `i`, return `next[j]` = min over `i <= j` of `prev[i] + ed(seg, hyp[i..j])`.
fn extend_layer(prev: &[u32], seg: &[String], hyp: &[String]) -> Vec<u32> {
    // row r holds the cost with the first r tokens of seg consumed
    let mut row: Vec<u32> = Vec::with_capacity(prev.len());
    for (j, &p) in prev.iter().enumerate() {
        let ins = if j == 0 {
            u32::MAX
        } else {
            row[j - 1].saturating_add(1)
        };
        row.push(p.min(ins));
    }
    for tok in seg {
        let mut next = Vec::with_capacity(prev.len());
        for j in 0..prev.len() {
            let del = row[j].saturating_add(1);
            let mut best = del;
            if j > 0 {
                let sub = row[j - 1].saturating_add(u32::from(&hyp[j - 1] != tok));
                let ins = next[j - 1] + 1;
                best = best.min(sub).min(ins);
            }
            next.push(best);
        }
        row = next;
    }
    row
}

/// Edit distance between `seg` and every prefix `hyp[start..j]`.
fn prefix_distances(seg: &[String], hyp: &[String], start: usize) -> Vec<u32> {
    let mut prev = vec![u32::MAX; hyp.len() + 1 - start];
    prev[0] = 0;
    extend_layer(&prev, seg, &hyp[start..])
}

/// Realigned segmentation and its total edit cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realignment {
    pub segments: SegmentedText,
    /// `K - 1` cut positions into the hypothesis stream.
    pub cuts: Vec<usize>,
    pub cost: usize,
}

/// Split `hyp` into exactly `refs.len()` contiguous, possibly empty segments
/// minimizing the summed word edit distance to the reference segments.
/// Among optimal splits the lexicographically earliest cut positions win.
pub fn mwer_resegment(hyp: &[String], refs: &SegmentedText) -> Result<Realignment, MetricsError> {
    let k = refs.len();
    if k == 0 {
        return Err(MetricsError::NoSegments);
    }
    let n = hyp.len();

    // Suffix costs via the forward recurrence on reversed inputs:
    // suffix[s][i] = best cost of aligning refs[s..] with hyp[i..].
    let hyp_rev: Vec<String> = hyp.iter().rev().cloned().collect();
    let mut suffix = vec![Vec::new(); k + 1];
    let mut layer = vec![u32::MAX; n + 1];
    layer[0] = 0;
    suffix[k] = layer.iter().rev().copied().collect();
    for s in (0..k).rev() {
        let seg_rev: Vec<String> = refs.segments[s].iter().rev().cloned().collect();
        layer = extend_layer(&layer, &seg_rev, &hyp_rev);
        suffix[s] = layer.iter().rev().copied().collect();
    }

    let mut cuts = Vec::with_capacity(k - 1);
    let mut start = 0;
    for s in 0..k - 1 {
        let target = suffix[s][start];
        let dist = prefix_distances(&refs.segments[s], hyp, start);
        let end = (start..=n)
            .find(|&j| dist[j - start].saturating_add(suffix[s + 1][j]) == target)
            .expect("optimal cut exists");
        cuts.push(end);
        start = end;
    }

    let mut segments = Vec::with_capacity(k);
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&n)) {
        segments.push(hyp[prev..c].to_vec());
        prev = c;
    }
    Ok(Realignment {
        segments: SegmentedText::new(segments),
        cuts,
        cost: suffix[0][0] as usize,
    })
}

/// Realign the flattened hypothesis to the references, then score BLEU.
pub fn score_speech_translation(
    hyp: &SegmentedText,
    refs: &SegmentedText,
    case_sensitive: bool,
) -> Result<ScoreReport, MetricsError> {
    let stream = hyp.flatten();
    let aligned = mwer_resegment(&stream, refs)?;
    let mut report = bleu_corpus(
        &refs.segments,
        &aligned.segments.segments,
        4,
        case_sensitive,
    )?;
    report.boundaries = Some(aligned.cuts);
    Ok(report)
}

/// Parse CTM lines `utt channel start dur word [conf]` into one segment per
/// utterance, in order of first appearance, words ordered by start time.
pub fn parse_ctm(text: &str) -> Result<Vec<(String, Vec<String>)>, MetricsError> {
    let mut order: Vec<String> = Vec::new();
    let mut words: HashMap<String, Vec<(f64, usize, String)>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(";;") {
            continue;
        }
        let bad = |reason: &str| MetricsError::MalformedCtm {
            line: i + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !(5..=6).contains(&fields.len()) {
            return Err(bad("expected 5 or 6 fields"));
        }
        let start: f64 = fields[2]
            .parse()
            .map_err(|_| bad("start is not a number"))?;
        let _dur: f64 = fields[3]
            .parse()
            .map_err(|_| bad("duration is not a number"))?;
        if let Some(conf) = fields.get(5) {
            conf.parse::<f64>()
                .map_err(|_| bad("confidence is not a number"))?;
        }
        let utt = fields[0].to_string();
        let entry = words.entry(utt.clone()).or_insert_with(|| {
            order.push(utt);
            Vec::new()
        });
        entry.push((start, i, fields[4].to_string()));
    }
    Ok(order
        .into_iter()
        .map(|utt| {
            let mut ws = words.remove(&utt).unwrap_or_default();
            ws.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (utt, ws.into_iter().map(|w| w.2).collect())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn seg(lines: &[&str]) -> SegmentedText {
        SegmentedText::new(lines.iter().map(|l| toks(l)).collect())
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&toks("a b"), &toks("a b")).distance, 0);
        let e = edit_distance(&toks("a b c d"), &toks("a x c"));
        assert_eq!(
            (e.distance, e.substitutions, e.deletions, e.insertions),
            (2, 1, 1, 0)
        );
        let e = edit_distance(&toks(""), &toks("a b"));
        assert_eq!((e.distance, e.insertions), (2, 2));
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&toks("a b c"), &toks("a b c")).unwrap(), 0.0);
        assert_eq!(wer(&toks("a b c d"), &toks("a x c")).unwrap(), 0.5);
        assert_eq!(
            wer(&toks(""), &toks("a")),
            Err(MetricsError::EmptyReference)
        );
    }

    #[test]
    fn bleu_perfect_and_clipping() {
        let refs = vec![toks("the cat sat on the mat"), toks("a b c d e")];
        let r = bleu_corpus(&refs, &refs, 4, true).unwrap();
        assert_eq!(r.bleu, 100.0);
        assert_eq!(r.brevity_penalty, 1.0);

        let r = bleu_corpus(&[toks("the cat")], &[toks("the the the")], 4, true).unwrap();
        assert!((r.precisions[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.bleu, 0.0);

        let r = bleu_corpus(&[toks("a b c d e")], &[toks("a b c e d")], 4, true).unwrap();
        assert_eq!(r.precisions[3], 0.0);
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn bleu_brevity_and_case() {
        let refs = vec![toks("A b c d e f g h")];
        let hyps = vec![toks("a b c d")];
        let r = bleu_corpus(&refs, &hyps, 4, false).unwrap();
        assert!((r.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-15);
        assert!((r.bleu - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(
            bleu_corpus(&refs, &hyps, 4, true).unwrap().precisions[0],
            0.75
        );
        assert!(matches!(
            bleu_corpus(&refs, &[], 4, true),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn resegment_examples() {
        let refs = seg(&["a b", "c"]);
        let out = mwer_resegment(&toks("a x c"), &refs).unwrap();
        assert_eq!(out.segments, seg(&["a x", "c"]));
        assert_eq!(out.cost, 1);

        let refs = seg(&["one two", "three", "four five six"]);
        let out = mwer_resegment(&refs.flatten(), &refs).unwrap();
        assert_eq!(out.segments, refs);
        assert_eq!(out.cost, 0);

        let out = mwer_resegment(&toks("p q r"), &seg(&["x"])).unwrap();
        assert_eq!(out.segments, seg(&["p q r"]));

        let out = mwer_resegment(&[], &seg(&["a", "b"])).unwrap();
        assert_eq!(out.cost, 2);
        assert_eq!(out.segments.segments, vec![Vec::<String>::new(); 2]);
    }

    #[test]
    fn score_perfect_stream() {
        let refs = seg(&["the cat sat on the mat", "it was a sunny day"]);
        let hyp = SegmentedText::new(vec![refs.flatten()]);
        let r = score_speech_translation(&hyp, &refs, true).unwrap();
        assert_eq!(r.bleu, 100.0);
        assert_eq!(r.boundaries, Some(vec![6]));
        assert!(r
            .to_kv_block()
            .starts_with("bleu\t100.0000\np1\t100.0000\n"));
    }

    #[test]
    fn ctm_parsing() {
        let ctm = ";; header\nu1 1 0.50 0.2 world\nu1 1 0.10 0.3 hello 0.9\nu2 A 0 1 bye\n";
        let utts = parse_ctm(ctm).unwrap();
        assert_eq!(
            utts,
            vec![
                ("u1".to_string(), toks("hello world")),
                ("u2".to_string(), toks("bye"))
            ]
        );
        assert!(parse_ctm("u1 1 x 0.1 w\n").is_err());
        assert!(parse_ctm("u1 1 0.1\n").is_err());
    }

    proptest! {
        #[test]
        fn edit_distance_metric(a in prop::collection::vec("[abc]", 0..8),
                                b in prop::collection::vec("[abc]", 0..8),
                                c in prop::collection::vec("[abc]", 0..8)) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab.distance, edit_distance(&b, &a).distance);
            prop_assert_eq!(ab.distance, ab.substitutions + ab.insertions + ab.deletions);
            prop_assert_eq!(a.len() + ab.insertions - ab.deletions, b.len());
            let ac = edit_distance(&a, &c).distance;
            let cb = edit_distance(&c, &b).distance;
            prop_assert!(ab.distance <= ac + cb);
        }

        #[test]
        fn realignment_preserves_stream(hyp in prop::collection::vec("[abcd]", 0..15),
                                        refs in prop::collection::vec(prop::collection::vec("[abcd]", 0..4), 1..5)) {
            let refs = SegmentedText::new(refs);
            let out = mwer_resegment(&hyp, &refs).unwrap();
            prop_assert_eq!(out.segments.len(), refs.len());
            prop_assert_eq!(out.segments.flatten(), hyp);
            let summed: usize = refs.segments.iter().zip(&out.segments.segments)
                .map(|(r, h)| edit_distance(r, h).distance).sum();
            prop_assert_eq!(summed, out.cost);
        }
    }
}
