//! Python bindings: `import stpipe`.
//!
//! Library errors surface as `ValueError`. Token sequences cross the
//! boundary as `list[str]`, segmented text as `list[list[str]]`.

use std::collections::{BTreeMap, HashMap};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use stpipe_core::{
    audio, augment, corpusops, fusion, metrics, segmenter, textnorm, CorruptionConfig,
    HomophoneTable, MissingScorePolicy, SegmentedText, SentencePair, SpokenText, WeightGrid,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pairs_of(pairs: Vec<(String, String)>) -> Vec<SentencePair> {
    pairs
        .iter()
        .map(|(s, t)| SentencePair::from_text(s, t))
        .collect()
}

// ------------------------------------------------------------------ audio

/// Mono audio with samples in [-1, 1].
#[pyclass(name = "AudioSignal", module = "stpipe", frozen)]
struct PyAudioSignal(stpipe_core::AudioSignal);

#[pymethods]
impl PyAudioSignal {
    #[new]
    fn new(samples: Vec<f32>, sample_rate_hz: u32) -> PyResult<Self> {
        stpipe_core::AudioSignal::new(samples, sample_rate_hz)
            .map(Self)
            .map_err(err)
    }

    /// Parse 16-bit mono PCM WAV bytes.
    #[staticmethod]
    fn from_wav(data: &[u8]) -> PyResult<Self> {
        audio::parse_wav(data).map(Self).map_err(err)
    }

    fn to_wav<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &audio::write_wav(&self.0))
    }

    #[getter]
    fn samples(&self) -> Vec<f32> {
        self.0.samples().to_vec()
    }

    #[getter]
    fn sample_rate_hz(&self) -> u32 {
        self.0.sample_rate_hz()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s()
    }

    fn power(&self) -> f64 {
        self.0.power()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn speed_perturb(&self, factor: f64) -> PyResult<Self> {
        audio::speed_perturb(&self.0, factor).map(Self).map_err(err)
    }

    fn add_noise(&self, snr_db: f64, seed: u64) -> PyResult<Self> {
        audio::add_noise(&self.0, snr_db, seed)
            .map(Self)
            .map_err(err)
    }

    /// Speech fragments as `(start_s, end_s)` tuples.
    #[pyo3(signature = (frame_ms=10.0, threshold=1e-4, min_gap_frames=30))]
    fn energy_vad(
        &self,
        frame_ms: f64,
        threshold: f64,
        min_gap_frames: usize,
    ) -> PyResult<Vec<(f64, f64)>> {
        let frags = audio::energy_vad(&self.0, frame_ms, threshold, min_gap_frames).map_err(err)?;
        Ok(frags.iter().map(|f| (f.start_s, f.end_s)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioSignal({} samples, {} Hz)",
            self.0.len(),
            self.0.sample_rate_hz()
        )
    }
}

#[pyfunction]
fn splice_min_duration(fragments: Vec<(f64, f64)>, min_s: f64) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let frags = fragments
        .into_iter()
        .map(|(a, b)| stpipe_core::Fragment::new(a, b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    audio::check_fragments(&frags).map_err(err)?;
    Ok(audio::splice_min_duration(&frags, min_s)
        .into_iter()
        .map(|g| g.iter().map(|f| (f.start_s, f.end_s)).collect())
        .collect())
}

// -------------------------------------------------------------- text

#[pyfunction]
fn number_to_words(numeral: &str) -> PyResult<Vec<&'static str>> {
    textnorm::number_to_words(numeral).map_err(err)
}

/// Written text to a space-joined spoken form.
#[pyfunction]
fn normalize(text: &str) -> String {
    textnorm::normalize_written_to_spoken(text).to_string()
}

#[pyfunction]
fn is_spoken_form(tokens: Vec<String>) -> bool {
    textnorm::is_spoken_form(&tokens)
}

fn corruption(
    homophones: Option<HashMap<String, Vec<String>>>,
    rates: (f64, f64, f64, f64),
    vocab: Option<Vec<String>>,
    seed: u64,
) -> PyResult<(HomophoneTable, CorruptionConfig)> {
    let mut table = HomophoneTable::new();
    let mut entries: Vec<_> = homophones.unwrap_or_default().into_iter().collect();
    entries.sort();
    for (word, alts) in entries {
        table.insert(&word, alts).map_err(err)?;
    }
    let config = CorruptionConfig {
        homophone_rate: rates.0,
        sub_rate: rates.1,
        del_rate: rates.2,
        ins_rate: rates.3,
        vocab: vocab.unwrap_or_default(),
        seed,
    };
    config.validate().map_err(err)?;
    Ok((table, config))
}

/// Simulated ASR errors on a spoken-form line.
#[pyfunction]
#[pyo3(signature = (text, homophones=None, homophone_rate=0.0, sub_rate=0.0, del_rate=0.0, ins_rate=0.0, vocab=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn corrupt(
    text: &str,
    homophones: Option<HashMap<String, Vec<String>>>,
    homophone_rate: f64,
    sub_rate: f64,
    del_rate: f64,
    ins_rate: f64,
    vocab: Option<Vec<String>>,
    seed: u64,
) -> PyResult<String> {
    let (table, config) = corruption(
        homophones,
        (homophone_rate, sub_rate, del_rate, ins_rate),
        vocab,
        seed,
    )?;
    let spoken = SpokenText::parse(text).map_err(err)?;
    Ok(augment::corrupt(&spoken, &table, &config)
        .map_err(err)?
        .to_string())
}

/// Normalize and corrupt the source side of `(source, target)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, homophones=None, homophone_rate=0.0, sub_rate=0.0, del_rate=0.0, ins_rate=0.0, vocab=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn augment_bitext(
    pairs: Vec<(String, String)>,
    homophones: Option<HashMap<String, Vec<String>>>,
    homophone_rate: f64,
    sub_rate: f64,
    del_rate: f64,
    ins_rate: f64,
    vocab: Option<Vec<String>>,
    seed: u64,
) -> PyResult<Vec<(String, String)>> {
    let (table, config) = corruption(
        homophones,
        (homophone_rate, sub_rate, del_rate, ins_rate),
        vocab,
        seed,
    )?;
    let out = augment::augment_bitext(&pairs_of(pairs), &table, &config).map_err(err)?;
    Ok(out
        .into_iter()
        .map(|p| (p.source.join(" "), p.target.join(" ")))
        .collect())
}

// ---------------------------------------------------------- segmenter

#[pyclass(name = "BoundaryModel", module = "stpipe", frozen)]
struct PyBoundaryModel(segmenter::BoundaryModel);

#[pymethods]
impl PyBoundaryModel {
    /// Train on punctuated paragraphs; returns the model and per-epoch losses.
    #[staticmethod]
    #[pyo3(signature = (paragraphs, window=2, epochs=10, lr=0.1, seed=0))]
    fn train(
        paragraphs: Vec<String>,
        window: usize,
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let examples = segmenter::extract_training_examples(&paragraphs, window).map_err(err)?;
        let t = segmenter::train_boundary_model(&examples, epochs, lr, seed).map_err(err)?;
        Ok((Self(t.model), t.epoch_losses))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        segmenter::BoundaryModel::parse(text).map(Self).map_err(err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn boundary_probs(&self, tokens: Vec<String>) -> Vec<f64> {
        self.0.boundary_probs(&tokens)
    }

    /// Split a spoken token stream into sentences.
    #[pyo3(signature = (tokens, min_len=1, max_len=50))]
    fn segment(
        &self,
        tokens: Vec<String>,
        min_len: usize,
        max_len: usize,
    ) -> PyResult<Vec<Vec<String>>> {
        let stream = SpokenText::new(tokens).map_err(err)?;
        Ok(segmenter::segment(&stream, &self.0, min_len, max_len)
            .map_err(err)?
            .segments)
    }
}

// --------------------------------------------------------- corpusops

#[pyclass(name = "LexiconModel", module = "stpipe", frozen)]
struct PyLexiconModel(corpusops::LexiconModel);

#[pymethods]
impl PyLexiconModel {
    /// EM training on `(source, target)` pairs; returns the model and the
    /// log-likelihood before and after each iteration.
    #[staticmethod]
    #[pyo3(signature = (pairs, iterations=5, reverse=false))]
    fn train(
        pairs: Vec<(String, String)>,
        iterations: usize,
        reverse: bool,
    ) -> PyResult<(Self, Vec<f64>)> {
        let mut pairs = pairs_of(pairs);
        if reverse {
            pairs = corpusops::reversed(&pairs);
        }
        let t = corpusops::train_lexicon(&pairs, iterations).map_err(err)?;
        Ok((Self(t.model), t.log_likelihood))
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        corpusops::LexiconModel::parse(text).map(Self).map_err(err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn prob(&self, target: &str, source: &str) -> f64 {
        self.0.prob(target, source)
    }

    #[pyo3(signature = (source, target, reverse=None))]
    fn similarity(
        &self,
        source: &str,
        target: &str,
        reverse: Option<&PyLexiconModel>,
    ) -> PyResult<f64> {
        corpusops::similarity(
            &SentencePair::from_text(source, target),
            &self.0,
            reverse.map(|r| &r.0),
        )
        .map_err(err)
    }
}

/// Length and duplicate filtering of `(source, target)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, max_words=100, dedup=false))]
fn filter_bitext(
    pairs: Vec<(String, String)>,
    max_words: usize,
    dedup: bool,
) -> Vec<(String, String)> {
    let mut p = corpusops::filter_length(&pairs_of(pairs), max_words);
    if dedup {
        p = corpusops::dedup(&p);
    }
    p.into_iter()
        .map(|p| (p.source.join(" "), p.target.join(" ")))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (items, z_threshold=3.0))]
fn filter_outlier_scores(items: Vec<(String, f64)>, z_threshold: f64) -> PyResult<Vec<String>> {
    corpusops::filter_outlier_scores(&items, z_threshold).map_err(err)
}

// ------------------------------------------------------------ metrics

#[pyclass(name = "ScoreReport", module = "stpipe", frozen, get_all)]
struct PyScoreReport {
    bleu: f64,
    wer: f64,
    precisions: Vec<f64>,
    brevity_penalty: f64,
    hyp_len: usize,
    ref_len: usize,
    segments: usize,
    boundaries: Option<Vec<usize>>,
    text: String,
}

impl From<metrics::ScoreReport> for PyScoreReport {
    fn from(r: metrics::ScoreReport) -> Self {
        PyScoreReport {
            text: r.to_kv_block(),
            bleu: r.bleu,
            wer: r.wer,
            precisions: r.precisions,
            brevity_penalty: r.brevity_penalty,
            hyp_len: r.hyp_len,
            ref_len: r.ref_len,
            segments: r.segments,
            boundaries: r.boundaries,
        }
    }
}

#[pymethods]
impl PyScoreReport {
    fn __str__(&self) -> String {
        self.text.clone()
    }

    fn __repr__(&self) -> String {
        format!("ScoreReport(bleu={:.4}, wer={:.4})", self.bleu, self.wer)
    }
}

/// `(distance, substitutions, deletions, insertions)`.
#[pyfunction]
fn edit_distance(a: Vec<String>, b: Vec<String>) -> (usize, usize, usize, usize) {
    let c = metrics::edit_distance(&a, &b);
    (c.distance, c.substitutions, c.deletions, c.insertions)
}

#[pyfunction]
fn wer(reference: Vec<String>, hypothesis: Vec<String>) -> PyResult<f64> {
    metrics::wer(&reference, &hypothesis).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (refs, hyps, max_n=4, case_sensitive=true))]
fn bleu(
    refs: Vec<Vec<String>>,
    hyps: Vec<Vec<String>>,
    max_n: usize,
    case_sensitive: bool,
) -> PyResult<PyScoreReport> {
    metrics::bleu_corpus(&refs, &hyps, max_n, case_sensitive)
        .map(Into::into)
        .map_err(err)
}

/// Split `hyp` into `len(refs)` segments with minimal total edit distance;
/// returns `(segments, cuts, cost)`.
#[pyfunction]
fn mwer_resegment(
    hyp: Vec<String>,
    refs: Vec<Vec<String>>,
) -> PyResult<(Vec<Vec<String>>, Vec<usize>, usize)> {
    let r = metrics::mwer_resegment(&hyp, &SegmentedText::new(refs)).map_err(err)?;
    Ok((r.segments.segments, r.cuts, r.cost))
}

/// Realign hypothesis segments to the references, then score.
#[pyfunction]
#[pyo3(signature = (hyp, refs, case_sensitive=true))]
fn score_speech_translation(
    hyp: Vec<Vec<String>>,
    refs: Vec<Vec<String>>,
    case_sensitive: bool,
) -> PyResult<PyScoreReport> {
    metrics::score_speech_translation(
        &SegmentedText::new(hyp),
        &SegmentedText::new(refs),
        case_sensitive,
    )
    .map(Into::into)
    .map_err(err)
}

// ------------------------------------------------------------- fusion

#[pyfunction]
fn length_penalty(length: usize, alpha: f64) -> f64 {
    fusion::length_penalty(length, alpha)
}

fn policy(name: &str) -> PyResult<MissingScorePolicy> {
    match name {
        "impute-worst" => Ok(MissingScorePolicy::ImputeWorst),
        "drop" => Ok(MissingScorePolicy::Drop),
        other => Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    }
}

/// Merge n-best texts (`id ||| tokens ||| name=value ...`) from several systems.
#[pyfunction]
#[pyo3(signature = (systems, policy="impute-worst"))]
fn merge_nbest(systems: Vec<String>, policy: &str) -> PyResult<String> {
    let parsed = systems
        .iter()
        .map(|t| fusion::parse_nbest(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let merged = fusion::merge_systems(&parsed, self::policy(policy)?).map_err(err)?;
    Ok(fusion::format_nbest(&merged))
}

/// Rerank an n-best text by the weighted, length-normalized score.
#[pyfunction]
#[pyo3(signature = (nbest, weights, alpha=0.0))]
fn rescore(nbest: &str, weights: BTreeMap<String, f64>, alpha: f64) -> PyResult<String> {
    let w = stpipe_core::WeightVector::new(weights, alpha).map_err(err)?;
    let ranked = fusion::parse_nbest(nbest)
        .map_err(err)?
        .iter()
        .map(|l| fusion::rescore(l, &w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(fusion::format_nbest(&ranked))
}

/// Grid search over `grid` (model name to candidate weights, searched in
/// the given order) and `alphas`; returns `(weights, alpha, bleu)`.
#[pyfunction]
fn tune_weights(
    nbest: &str,
    refs: Vec<Vec<String>>,
    grid: Vec<(String, Vec<f64>)>,
    alphas: Vec<f64>,
) -> PyResult<(BTreeMap<String, f64>, f64, f64)> {
    let dev = fusion::parse_nbest(nbest).map_err(err)?;
    let grid = WeightGrid {
        models: grid,
        alphas,
    };
    let (w, bleu) =
        fusion::tune_weights_grid(&dev, &SegmentedText::new(refs), &grid).map_err(err)?;
    Ok((w.weights().clone(), w.alpha(), bleu))
}

#[pymodule]
fn stpipe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAudioSignal>()?;
    m.add_class::<PyBoundaryModel>()?;
    m.add_class::<PyLexiconModel>()?;
    m.add_class::<PyScoreReport>()?;
    m.add_function(wrap_pyfunction!(splice_min_duration, m)?)?;
    m.add_function(wrap_pyfunction!(number_to_words, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(is_spoken_form, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(augment_bitext, m)?)?;
    m.add_function(wrap_pyfunction!(filter_bitext, m)?)?;
    m.add_function(wrap_pyfunction!(filter_outlier_scores, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wer, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(mwer_resegment, m)?)?;
    m.add_function(wrap_pyfunction!(score_speech_translation, m)?)?;
    m.add_function(wrap_pyfunction!(length_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(merge_nbest, m)?)?;
    m.add_function(wrap_pyfunction!(rescore, m)?)?;
    m.add_function(wrap_pyfunction!(tune_weights, m)?)?;
    Ok(())
}
