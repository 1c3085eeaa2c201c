use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stpipe_core::{
    audio, augment, corpusops, fusion, metrics, seed, segmenter, textnorm, CorruptionConfig,
    HomophoneTable, LexiconModel, MissingScorePolicy, SegmentedText, SpokenText, WeightGrid,
    WeightVector,
};

use crate::config::Config;
use crate::{Cli, Command, Io, RateArgs, RefArgs};

fn read_bytes(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))
        }
        _ => {
            let mut buf = Vec::new();
            std::io::stdin()
                .read_to_end(&mut buf)
                .context("cannot read stdin")?;
            Ok(buf)
        }
    }
}

fn read_text(path: Option<&Path>) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).context("input is not valid UTF-8")
}

fn read_file(path: &Path) -> Result<String> {
    read_text(Some(path))
}

/// Write via a temporary file in the destination directory and rename, so
/// a failed run never leaves a partial file behind.
fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(&dir)
                .with_context(|| format!("cannot create temporary file in {}", dir.display()))?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(p)
                .with_context(|| format!("cannot write {}", p.display()))?;
            Ok(())
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn lines_of(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l))
}

struct Ctx {
    config: Config,
    seed: u64,
}

impl Ctx {
    fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive_stage(self.seed, stage)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get("", "seed")?.unwrap_or(0),
    };
    let ctx = Ctx { config, seed };
    match cli.command {
        Command::WavInfo { io } => wav_info(&io),
        Command::Perturb { io, speed, snr_db } => perturb(&ctx, &io, speed, snr_db),
        Command::Vad {
            io,
            frame_ms,
            threshold,
            min_gap_frames,
        } => vad(&ctx, &io, frame_ms, threshold, min_gap_frames),
        Command::Splice { io, min_s } => splice(&ctx, &io, min_s),
        Command::Normalize { io } => normalize(&io),
        Command::Num2words { numerals } => num2words(&numerals),
        Command::Corrupt { io, rates } => corrupt(&ctx, &io, &rates),
        Command::Augment { io, rates } => augment(&ctx, &io, &rates),
        Command::SegTrain {
            io,
            window,
            epochs,
            lr,
        } => seg_train(&ctx, &io, window, epochs, lr),
        Command::SegApply {
            io,
            model,
            min_len,
            max_len,
        } => seg_apply(&ctx, &io, &model, min_len, max_len),
        Command::Filter {
            io,
            max_words,
            dedup,
            lexicon,
            reverse_lexicon,
            threshold,
            scores,
            z_threshold,
        } => {
            if scores {
                filter_scores(&ctx, &io, z_threshold)
            } else {
                filter(
                    &ctx,
                    &io,
                    max_words,
                    dedup,
                    lexicon,
                    reverse_lexicon,
                    threshold,
                )
            }
        }
        Command::LexiconTrain {
            io,
            iterations,
            reverse_output,
        } => lexicon_train(&ctx, &io, iterations, reverse_output),
        Command::Similarity {
            io,
            lexicon,
            reverse_lexicon,
        } => similarity(&io, &lexicon, reverse_lexicon.as_deref()),
        Command::Score {
            refs,
            hyp,
            output,
            case_insensitive,
            json,
        } => score(&refs, &hyp, output.as_deref(), case_insensitive, json),
        Command::Resegment { refs, hyp, output } => resegment(&refs, &hyp, output.as_deref()),
        Command::NbestMerge {
            inputs,
            output,
            policy,
        } => nbest_merge(&ctx, &inputs, output.as_deref(), policy),
        Command::Rescore { io, weights, top1 } => rescore(&io, &weights, top1),
        Command::Tune {
            io,
            refs,
            grid,
            alphas,
        } => tune(&ctx, &io, &refs, grid, alphas),
    }
}

fn wav_info(io: &Io) -> Result<()> {
    let sig = audio::parse_wav(&read_bytes(io.input.as_deref())?)?;
    let text = format!(
        "sample_rate\t{}\nsamples\t{}\nduration_s\t{:.3}\nrms\t{:.6}\n",
        sig.sample_rate_hz(),
        sig.len(),
        sig.duration_s(),
        sig.power().sqrt()
    );
    write_output(io.output.as_deref(), text.as_bytes())
}

fn perturb(ctx: &Ctx, io: &Io, speed: Option<f64>, snr_db: Option<f64>) -> Result<()> {
    let c = &ctx.config;
    let speed = c.pick_opt(speed, "perturb", "speed")?;
    let snr_db = c.pick_opt(snr_db, "perturb", "snr_db")?;
    let mut sig = audio::parse_wav(&read_bytes(io.input.as_deref())?)?;
    if let Some(f) = speed {
        sig = audio::speed_perturb(&sig, f)?;
    }
    if let Some(snr) = snr_db {
        sig = audio::add_noise(&sig, snr, ctx.stage_seed("perturb"))?;
    }
    write_output(io.output.as_deref(), &audio::write_wav(&sig))
}

fn vad(
    ctx: &Ctx,
    io: &Io,
    frame_ms: Option<f64>,
    threshold: Option<f64>,
    min_gap: Option<usize>,
) -> Result<()> {
    let c = &ctx.config;
    let frame_ms = c.pick(frame_ms, "vad", "frame_ms", 10.0)?;
    let threshold = c.pick(threshold, "vad", "threshold", 1e-4)?;
    let min_gap = c.pick(min_gap, "vad", "min_gap_frames", 30)?;
    if min_gap == 0 {
        bail!("min_gap_frames must be positive");
    }
    let sig = audio::parse_wav(&read_bytes(io.input.as_deref())?)?;
    let frags = audio::energy_vad(&sig, frame_ms, threshold, min_gap)?;
    write_output(
        io.output.as_deref(),
        audio::format_fragments(&frags).as_bytes(),
    )
}

fn splice(ctx: &Ctx, io: &Io, min_s: Option<f64>) -> Result<()> {
    let min_s = ctx.config.pick(min_s, "splice", "min_s", 10.0)?;
    if !(min_s.is_finite() && min_s > 0.0) {
        bail!("min_s must be positive");
    }
    let frags = audio::parse_fragments(&read_text(io.input.as_deref())?)?;
    let groups = audio::splice_min_duration(&frags, min_s);
    let mut out = String::new();
    for (g, group) in groups.iter().enumerate() {
        for f in group {
            out.push_str(&format!("{g}\t{f}\n"));
        }
    }
    write_output(io.output.as_deref(), out.as_bytes())
}

fn normalize(io: &Io) -> Result<()> {
    let text = read_text(io.input.as_deref())?;
    let out: String = lines_of(&text)
        .map(|l| format!("{}\n", textnorm::normalize_written_to_spoken(l)))
        .collect();
    write_output(io.output.as_deref(), out.as_bytes())
}

fn num2words(numerals: &[String]) -> Result<()> {
    if numerals.is_empty() {
        bail!("no numerals given");
    }
    let mut out = String::new();
    for n in numerals {
        out.push_str(&textnorm::number_to_words(n)?.join(" "));
        out.push('\n');
    }
    write_output(None, out.as_bytes())
}

fn corruption_setup(
    ctx: &Ctx,
    stage: &str,
    rates: &RateArgs,
) -> Result<(HomophoneTable, CorruptionConfig)> {
    let c = &ctx.config;
    let table = match c.pick_opt(rates.homophones.clone(), stage, "homophones")? {
        Some(p) => HomophoneTable::parse(&read_file(&p)?)?,
        None => HomophoneTable::new(),
    };
    let vocab = match c.pick_opt(rates.vocab.clone(), stage, "vocab")? {
        Some(p) => read_file(&p)?
            .split_whitespace()
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    let config = CorruptionConfig {
        homophone_rate: c.pick(rates.homophone_rate, stage, "homophone_rate", 0.0)?,
        sub_rate: c.pick(rates.sub_rate, stage, "sub_rate", 0.0)?,
        del_rate: c.pick(rates.del_rate, stage, "del_rate", 0.0)?,
        ins_rate: c.pick(rates.ins_rate, stage, "ins_rate", 0.0)?,
        vocab,
        seed: ctx.stage_seed(stage),
    };
    config.validate()?;
    Ok((table, config))
}

fn corrupt(ctx: &Ctx, io: &Io, rates: &RateArgs) -> Result<()> {
    let (table, config) = corruption_setup(ctx, "corrupt", rates)?;
    let text = read_text(io.input.as_deref())?;
    let mut out = String::new();
    for (i, line) in lines_of(&text).enumerate() {
        let spoken = SpokenText::parse(line).with_context(|| format!("line {}", i + 1))?;
        let line_config = CorruptionConfig {
            seed: seed::derive_index(config.seed, i as u64),
            ..config.clone()
        };
        out.push_str(&augment::corrupt(&spoken, &table, &line_config)?.to_string());
        out.push('\n');
    }
    write_output(io.output.as_deref(), out.as_bytes())
}

fn augment(ctx: &Ctx, io: &Io, rates: &RateArgs) -> Result<()> {
    let (table, config) = corruption_setup(ctx, "augment", rates)?;
    let pairs = corpusops::parse_bitext(&read_text(io.input.as_deref())?)?;
    let out = augment::augment_bitext(&pairs, &table, &config)?;
    write_output(
        io.output.as_deref(),
        corpusops::format_bitext(&out).as_bytes(),
    )
}

fn seg_train(
    ctx: &Ctx,
    io: &Io,
    window: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
) -> Result<()> {
    let c = &ctx.config;
    let window = c.pick(window, "seg-train", "window", 2)?;
    let epochs = c.pick(epochs, "seg-train", "epochs", 10)?;
    let lr = c.pick(lr, "seg-train", "lr", 0.1)?;
    let text = read_text(io.input.as_deref())?;
    let paragraphs: Vec<&str> = lines_of(&text).filter(|l| !l.trim().is_empty()).collect();
    let examples = segmenter::extract_training_examples(&paragraphs, window)?;
    let trained =
        segmenter::train_boundary_model(&examples, epochs, lr, ctx.stage_seed("seg-train"))?;
    write_output(io.output.as_deref(), trained.model.to_text().as_bytes())
}

fn seg_apply(
    ctx: &Ctx,
    io: &Io,
    model: &Path,
    min_len: Option<usize>,
    max_len: Option<usize>,
) -> Result<()> {
    let c = &ctx.config;
    let min_len = c.pick(min_len, "seg-apply", "min_len", 1)?;
    let max_len = c.pick(max_len, "seg-apply", "max_len", 50)?;
    let model = segmenter::BoundaryModel::parse(&read_file(model)?)?;
    let stream = SpokenText::parse(&read_text(io.input.as_deref())?)?;
    let segs = segmenter::segment(&stream, &model, min_len, max_len)?;
    write_output(io.output.as_deref(), segs.to_lines().as_bytes())
}

fn filter(
    ctx: &Ctx,
    io: &Io,
    max_words: Option<usize>,
    dedup: bool,
    lexicon: Option<PathBuf>,
    reverse_lexicon: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<()> {
    let c = &ctx.config;
    let max_words = c.pick(max_words, "filter", "max_words", 100)?;
    let dedup = dedup || c.get("filter", "dedup")?.unwrap_or(false);
    let lexicon: Option<PathBuf> = c.pick_opt(lexicon, "filter", "lexicon")?;
    let reverse_lexicon: Option<PathBuf> =
        c.pick_opt(reverse_lexicon, "filter", "reverse_lexicon")?;
    let threshold = c.pick_opt(threshold, "filter", "threshold")?;

    let mut pairs = corpusops::parse_bitext(&read_text(io.input.as_deref())?)?;
    if max_words > 0 {
        pairs = corpusops::filter_length(&pairs, max_words);
    }
    if dedup {
        pairs = corpusops::dedup(&pairs);
    }
    match (lexicon, threshold) {
        (Some(lex), Some(t)) => {
            if !(0.0..=1.0).contains(&t) {
                bail!("threshold must be in [0, 1]");
            }
            let fwd = LexiconModel::parse(&read_file(&lex)?)?;
            let rev = match reverse_lexicon {
                Some(p) => Some(LexiconModel::parse(&read_file(&p)?)?),
                None => None,
            };
            pairs = corpusops::filter_similarity(&pairs, &fwd, rev.as_ref(), t);
        }
        (None, None) => {}
        _ => bail!("similarity filtering needs both --lexicon and --threshold"),
    }
    write_output(
        io.output.as_deref(),
        corpusops::format_bitext(&pairs).as_bytes(),
    )
}

fn filter_scores(ctx: &Ctx, io: &Io, z: Option<f64>) -> Result<()> {
    let z = ctx.config.pick(z, "filter", "z_threshold", 3.0)?;
    let items = corpusops::parse_scores(&read_text(io.input.as_deref())?)?;
    let kept = corpusops::filter_outlier_scores(&items, z)?;
    let out: String = kept.iter().map(|id| format!("{id}\n")).collect();
    write_output(io.output.as_deref(), out.as_bytes())
}

fn lexicon_train(
    ctx: &Ctx,
    io: &Io,
    iterations: Option<usize>,
    reverse_output: Option<PathBuf>,
) -> Result<()> {
    let c = &ctx.config;
    let iterations = c.pick(iterations, "lexicon-train", "iterations", 5)?;
    let reverse_output: Option<PathBuf> =
        c.pick_opt(reverse_output, "lexicon-train", "reverse_output")?;
    let pairs = corpusops::parse_bitext(&read_text(io.input.as_deref())?)?;
    let fwd = corpusops::train_lexicon(&pairs, iterations)?;
    let rev = match &reverse_output {
        Some(_) => Some(corpusops::train_lexicon(
            &corpusops::reversed(&pairs),
            iterations,
        )?),
        None => None,
    };
    write_output(io.output.as_deref(), fwd.model.to_text().as_bytes())?;
    if let (Some(path), Some(rev)) = (reverse_output, rev) {
        write_output(Some(&path), rev.model.to_text().as_bytes())?;
    }
    Ok(())
}

fn similarity(io: &Io, lexicon: &Path, reverse: Option<&Path>) -> Result<()> {
    let fwd = LexiconModel::parse(&read_file(lexicon)?)?;
    let rev = match reverse {
        Some(p) => Some(LexiconModel::parse(&read_file(p)?)?),
        None => None,
    };
    let pairs = corpusops::parse_bitext(&read_text(io.input.as_deref())?)?;
    let mut out = String::new();
    for (i, p) in pairs.iter().enumerate() {
        let s = corpusops::similarity(p, &fwd, rev.as_ref())
            .with_context(|| format!("pair {}", i + 1))?;
        out.push_str(&format!("{s:.6}\n"));
    }
    write_output(io.output.as_deref(), out.as_bytes())
}

fn load_refs(refs: &RefArgs) -> Result<SegmentedText> {
    let text = read_file(&refs.reference)?;
    match refs.ref_format.as_str() {
        "lines" => Ok(SegmentedText::from_lines(&text)),
        "ctm" => Ok(SegmentedText::new(
            metrics::parse_ctm(&text)?
                .into_iter()
                .map(|(_, words)| words)
                .collect(),
        )),
        other => bail!("unknown reference format {other:?} (expected lines or ctm)"),
    }
}

fn score(
    refs: &RefArgs,
    hyp: &Path,
    output: Option<&Path>,
    case_insensitive: bool,
    json: bool,
) -> Result<()> {
    let refs = load_refs(refs)?;
    let hyp = SegmentedText::from_lines(&read_file(hyp)?);
    let report = metrics::score_speech_translation(&hyp, &refs, !case_insensitive)?;
    let text = if json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.to_kv_block()
    };
    write_output(output, text.as_bytes())
}

fn resegment(refs: &RefArgs, hyp: &Path, output: Option<&Path>) -> Result<()> {
    let refs = load_refs(refs)?;
    let stream = SegmentedText::from_lines(&read_file(hyp)?).flatten();
    let aligned = metrics::mwer_resegment(&stream, &refs)?;
    write_output(output, aligned.segments.to_lines().as_bytes())
}

fn parse_policy(s: &str) -> Result<MissingScorePolicy> {
    match s {
        "impute-worst" | "impute_worst" => Ok(MissingScorePolicy::ImputeWorst),
        "drop" => Ok(MissingScorePolicy::Drop),
        other => bail!("unknown policy {other:?} (expected impute-worst or drop)"),
    }
}

fn nbest_merge(
    ctx: &Ctx,
    inputs: &[PathBuf],
    output: Option<&Path>,
    policy: Option<String>,
) -> Result<()> {
    let policy =
        parse_policy(
            &ctx.config
                .pick(policy, "nbest-merge", "policy", "impute-worst".into())?,
        )?;
    let systems = inputs
        .iter()
        .map(|p| fusion::parse_nbest(&read_file(p)?).with_context(|| format!("in {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let merged = fusion::merge_systems(&systems, policy)?;
    write_output(output, fusion::format_nbest(&merged).as_bytes())
}

fn rescore(io: &Io, weights: &Path, top1: bool) -> Result<()> {
    let w = WeightVector::parse(&read_file(weights)?)?;
    let lists = fusion::parse_nbest(&read_text(io.input.as_deref())?)?;
    let ranked = lists
        .iter()
        .map(|l| fusion::rescore(l, &w))
        .collect::<Result<Vec<_>, _>>()?;
    let text = if top1 {
        ranked
            .iter()
            .map(|l| {
                format!(
                    "{}\n",
                    l.hypotheses
                        .first()
                        .map(|h| h.tokens.join(" "))
                        .unwrap_or_default()
                )
            })
            .collect()
    } else {
        fusion::format_nbest(&ranked)
    };
    write_output(io.output.as_deref(), text.as_bytes())
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value {v:?}"))
        })
        .collect()
}

/// `model=v1,v2` items; the config form is `tune.grid = tm=0,1; lm=0,0.5`.
fn parse_grid(items: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    items
        .iter()
        .map(|item| {
            let (name, vals) = item
                .split_once('=')
                .with_context(|| format!("grid item {item:?} is not model=v1,v2,..."))?;
            Ok((name.trim().to_string(), parse_values(vals)?))
        })
        .collect()
}

fn tune(ctx: &Ctx, io: &Io, refs: &Path, grid: Vec<String>, alphas: Option<String>) -> Result<()> {
    let c = &ctx.config;
    let grid = if grid.is_empty() {
        c.raw("tune", "grid")
            .map(|g| {
                g.split(';')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    } else {
        grid
    };
    let alphas = parse_values(&c.pick(alphas, "tune", "alphas", "0.6".into())?)?;
    let grid = WeightGrid {
        models: parse_grid(&grid)?,
        alphas,
    };
    let refs = SegmentedText::from_lines(&read_file(refs)?);
    let dev = fusion::parse_nbest(&read_text(io.input.as_deref())?)?;
    let (best, bleu) = fusion::tune_weights_grid(&dev, &refs, &grid)?;
    eprintln!("stpipe: best dev BLEU {bleu:.4}");
    write_output(io.output.as_deref(), best.to_text().as_bytes())
}
