//! Simulated ASR errors for spoken-form text.
//!
//! A seeded rule engine stands in for a learned written-to-ASR translator:
//! each token independently undergoes a homophone swap, a random
//! substitution, a deletion, an insertion after it, or nothing.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpusops::SentencePair;
use crate::seed;
use crate::textnorm::{is_spoken_form, normalize_written_to_spoken, SpokenText};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("rate {name} = {value} is outside [0, 1]")]
    BadRate { name: &'static str, value: f64 },
    #[error("rates sum to {0}, which exceeds 1")]
    RatesExceedOne(f64),
    #[error("substitution or insertion requires a non-empty vocabulary")]
    EmptyVocab,
    #[error("vocabulary word {0:?} is not in spoken form")]
    BadVocabWord(String),
    #[error("homophone table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
}

/// Word to confusable alternatives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HomophoneTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl HomophoneTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add alternatives for `word`. Entries must be spoken-form tokens and a
    /// word may not list itself.
    pub fn insert(&mut self, word: &str, alternatives: Vec<String>) -> Result<(), AugmentError> {
        let bad = |reason: String| AugmentError::BadTable { line: 0, reason };
        if !is_spoken_form(&[word]) {
            return Err(bad(format!("{word:?} is not in spoken form")));
        }
        if alternatives.is_empty() {
            return Err(bad(format!("{word:?} has no alternatives")));
        }
        for alt in &alternatives {
            if !is_spoken_form(&[alt]) {
                return Err(bad(format!("{alt:?} is not in spoken form")));
            }
            if alt == word {
                return Err(bad(format!("{word:?} maps to itself")));
            }
        }
        self.entries.insert(word.to_string(), alternatives);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse lines of the form `word<TAB>alt1 alt2 ...`.
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut table = HomophoneTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((word, alts)) = line.split_once('\t') else {
                return Err(AugmentError::BadTable {
                    line: i + 1,
                    reason: "expected word<TAB>alternatives".into(),
                });
            };
            let alts = alts.split_whitespace().map(str::to_string).collect();
            table.insert(word.trim(), alts).map_err(|e| match e {
                AugmentError::BadTable { reason, .. } => AugmentError::BadTable {
                    line: i + 1,
                    reason,
                },
                other => other,
            })?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(w, alts)| format!("{w}\t{}\n", alts.join(" ")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    pub homophone_rate: f64,
    pub sub_rate: f64,
    pub del_rate: f64,
    pub ins_rate: f64,
    pub vocab: Vec<String>,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            homophone_rate: 0.0,
            sub_rate: 0.0,
            del_rate: 0.0,
            ins_rate: 0.0,
            vocab: Vec::new(),
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let rates = [
            ("homophone_rate", self.homophone_rate),
            ("sub_rate", self.sub_rate),
            ("del_rate", self.del_rate),
            ("ins_rate", self.ins_rate),
        ];
        for (name, value) in rates {
            if !(0.0..=1.0).contains(&value) {
                return Err(AugmentError::BadRate { name, value });
            }
        }
        let total: f64 = rates.iter().map(|r| r.1).sum();
        if total > 1.0 + 1e-12 {
            return Err(AugmentError::RatesExceedOne(total));
        }
        if (self.sub_rate > 0.0 || self.ins_rate > 0.0) && self.vocab.is_empty() {
            return Err(AugmentError::EmptyVocab);
        }
        if let Some(w) = self.vocab.iter().find(|w| !is_spoken_form(&[w])) {
            return Err(AugmentError::BadVocabWord(w.clone()));
        }
        Ok(())
    }
}

/// Apply seeded ASR-style errors to `text`.
///
/// One uniform draw per token is partitioned by the rates, in the order
/// homophone, substitution, deletion, insertion; the remainder keeps the
/// token. A homophone draw on a word absent from the table keeps the word.
pub fn corrupt(
    text: &SpokenText,
    table: &HomophoneTable,
    config: &CorruptionConfig,
) -> Result<SpokenText, AugmentError> {
    config.validate()?;
    Ok(corrupt_with_seed(text, table, config, config.seed))
}

fn corrupt_with_seed(
    text: &SpokenText,
    table: &HomophoneTable,
    config: &CorruptionConfig,
    seed: u64,
) -> SpokenText {
    let mut rng = seed::rng(seed);
    let h = config.homophone_rate;
    let s = h + config.sub_rate;
    let d = s + config.del_rate;
    let ins = d + config.ins_rate;
    let mut out = Vec::with_capacity(text.len());
    for token in text.tokens() {
        let u: f64 = rng.random();
        if u < h {
            match table.get(token) {
                Some(alts) => out.push(alts[rng.random_range(0..alts.len())].clone()),
                None => out.push(token.clone()),
            }
        } else if u < s {
            out.push(config.vocab[rng.random_range(0..config.vocab.len())].clone());
        } else if u < d {
            // deleted
        } else if u < ins {
            out.push(token.clone());
            out.push(config.vocab[rng.random_range(0..config.vocab.len())].clone());
        } else {
            out.push(token.clone());
        }
    }
    SpokenText::from_valid(out)
}

/// Replace each source side by a corrupted spoken form of itself.
///
/// Pair `i` uses the seed derived from `(config.seed, i)`, so the result does
/// not depend on how the work is scheduled across threads.
pub fn augment_bitext(
    pairs: &[SentencePair],
    table: &HomophoneTable,
    config: &CorruptionConfig,
) -> Result<Vec<SentencePair>, AugmentError> {
    config.validate()?;
    Ok(pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let spoken = normalize_written_to_spoken(&pair.source.join(" "));
            let noisy = corrupt_with_seed(
                &spoken,
                table,
                config,
                seed::derive_index(config.seed, i as u64),
            );
            SentencePair {
                source: noisy.into_tokens(),
                target: pair.target.clone(),
                id: pair.id.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spoken(s: &str) -> SpokenText {
        SpokenText::parse(s).unwrap()
    }

    fn two_to() -> HomophoneTable {
        HomophoneTable::parse("two\tto too\n").unwrap()
    }

    #[test]
    fn zero_rates_are_identity() {
        let text = spoken("the top two percent");
        let out = corrupt(&text, &two_to(), &CorruptionConfig::default()).unwrap();
        assert_eq!(out, text);
    }

    #[test]
    fn homophone_swap() {
        let table = HomophoneTable::parse("two\tto\n").unwrap();
        let config = CorruptionConfig {
            homophone_rate: 1.0,
            ..Default::default()
        };
        let out = corrupt(&spoken("two percent"), &table, &config).unwrap();
        assert_eq!(out.tokens(), ["to", "percent"]);
    }

    #[test]
    fn delete_everything() {
        let config = CorruptionConfig {
            del_rate: 1.0,
            ..Default::default()
        };
        let out = corrupt(&spoken("a b c d e"), &two_to(), &config).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn insert_after_every_token() {
        let config = CorruptionConfig {
            ins_rate: 1.0,
            vocab: vec!["uh".into()],
            ..Default::default()
        };
        let out = corrupt(&spoken("a b"), &two_to(), &config).unwrap();
        assert_eq!(out.tokens(), ["a", "uh", "b", "uh"]);
    }

    #[test]
    fn substitution_draws_from_vocab() {
        let config = CorruptionConfig {
            sub_rate: 1.0,
            vocab: vec!["x".into(), "y".into()],
            seed: 3,
            ..Default::default()
        };
        let out = corrupt(&spoken("a b c d e f"), &two_to(), &config).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.tokens().iter().all(|t| t == "x" || t == "y"));
    }

    #[test]
    fn config_validation() {
        let mut c = CorruptionConfig {
            del_rate: 0.7,
            homophone_rate: 0.7,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(AugmentError::RatesExceedOne(_))));
        c.homophone_rate = -0.1;
        assert!(matches!(c.validate(), Err(AugmentError::BadRate { .. })));
        c.homophone_rate = 0.0;
        c.sub_rate = 0.1;
        assert_eq!(c.validate(), Err(AugmentError::EmptyVocab));
        c.vocab = vec!["Bad".into()];
        assert!(matches!(c.validate(), Err(AugmentError::BadVocabWord(_))));
    }

    #[test]
    fn table_validation() {
        assert!(HomophoneTable::parse("two\ttwo\n").is_err());
        assert!(HomophoneTable::parse("two\t\n").is_err());
        assert!(HomophoneTable::parse("two to\n").is_err());
        assert!(HomophoneTable::parse("Two\tto\n").is_err());
        let t = HomophoneTable::parse("two\tto too\nfor\tfour\n").unwrap();
        assert_eq!(HomophoneTable::parse(&t.to_text()).unwrap(), t);
    }

    fn pair(src: &str, tgt: &str) -> SentencePair {
        SentencePair::from_text(src, tgt)
    }

    #[test]
    fn augment_normalizes_and_keeps_targets() {
        let pairs = vec![
            pair("I have 2 cats.", "Ich habe 2 Katzen."),
            pair("Hello!", "Hallo!"),
        ];
        let out = augment_bitext(&pairs, &two_to(), &CorruptionConfig::default()).unwrap();
        assert_eq!(out[0].source, ["i", "have", "two", "cats"]);
        assert_eq!(out[0].target, pairs[0].target);
        assert_eq!(out[1].source, ["hello"]);
        assert!(augment_bitext(&[], &two_to(), &CorruptionConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn augment_is_deterministic() {
        let pairs: Vec<_> = (0..100)
            .map(|i| pair(&format!("Sentence {i} has 2 words, maybe more."), "Ziel"))
            .collect();
        let config = CorruptionConfig {
            homophone_rate: 0.2,
            sub_rate: 0.1,
            del_rate: 0.1,
            ins_rate: 0.1,
            vocab: vec!["uh".into(), "the".into()],
            seed: 42,
        };
        let a = augment_bitext(&pairs, &two_to(), &config).unwrap();
        let b = augment_bitext(&pairs, &two_to(), &config).unwrap();
        assert_eq!(a, b);
        let serial: Vec<_> = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| augment_bitext(&pairs, &two_to(), &config).unwrap());
        assert_eq!(a, serial);
    }
}
