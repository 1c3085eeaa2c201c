//! `stpipe`: pipeline stages for speech translation data and evaluation.
//!
//! Exit status is 0 on success, 1 on invalid input or parameters (with a
//! one-line diagnostic on stderr) and 2 on command-line usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "stpipe", version, propagate_version = true)]
#[command(about = "Audio, text, corpus, fusion and scoring stages for speech translation")]
pub struct Cli {
    /// Flat key = value config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; each stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Io {
    /// Input file (stdin when omitted or "-").
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Output file, written atomically (stdout when omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print sample rate, length, duration and RMS of a WAV file.
    WavInfo {
        #[command(flatten)]
        io: Io,
    },
    /// Speed and/or noise perturbation of a WAV file.
    Perturb {
        #[command(flatten)]
        io: Io,
        /// Speed factor (e.g. 0.8 or 1.2).
        #[arg(long)]
        speed: Option<f64>,
        /// Add white Gaussian noise at this SNR.
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Energy-threshold voice activity detection; writes start<TAB>end lines.
    Vad {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        frame_ms: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_gap_frames: Option<usize>,
    },
    /// Group consecutive fragments until each group lasts at least --min-s.
    Splice {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        min_s: Option<f64>,
    },
    /// Convert written text (one sentence per line) to spoken form.
    Normalize {
        #[command(flatten)]
        io: Io,
    },
    /// Spell out numerals.
    Num2words { numerals: Vec<String> },
    /// Apply simulated ASR errors to spoken-form lines.
    Corrupt {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        rates: RateArgs,
    },
    /// Turn a written bitext's sources into noisy spoken form.
    Augment {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        rates: RateArgs,
    },
    /// Train the sentence boundary model on punctuated paragraphs.
    SegTrain {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Re-segment a spoken token stream; one sentence per output line.
    SegApply {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        min_len: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Clean a bitext, or reject outliers from an id<TAB>score list.
    Filter {
        #[command(flatten)]
        io: Io,
        /// Maximum words per side (0 disables).
        #[arg(long)]
        max_words: Option<usize>,
        /// Drop duplicate pairs.
        #[arg(long)]
        dedup: bool,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        reverse_lexicon: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Treat the input as id<TAB>score lines and keep non-outlier ids.
        #[arg(long)]
        scores: bool,
        #[arg(long)]
        z_threshold: Option<f64>,
    },
    /// Train a word-translation lexicon on a bitext.
    LexiconTrain {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        iterations: Option<usize>,
        /// Also train the target-to-source lexicon and write it here.
        #[arg(long)]
        reverse_output: Option<PathBuf>,
    },
    /// Print the lexical similarity of each bitext pair.
    Similarity {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        reverse_lexicon: Option<PathBuf>,
    },
    /// Realign a hypothesis stream to the references and report BLEU.
    Score {
        #[command(flatten)]
        refs: RefArgs,
        /// Hypothesis text; line breaks are ignored.
        #[arg(long)]
        hyp: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        case_insensitive: bool,
        #[arg(long)]
        json: bool,
    },
    /// Realign a hypothesis stream to the reference segmentation.
    Resegment {
        #[command(flatten)]
        refs: RefArgs,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Merge n-best files from several systems.
    NbestMerge {
        /// N-best files (repeat).
        #[arg(short, long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// impute-worst or drop.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Rerank n-best lists with a weights file.
    Rescore {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        weights: PathBuf,
        /// Emit only the best hypothesis per sentence.
        #[arg(long)]
        top1: bool,
    },
    /// Grid-search fusion weights for BLEU on a dev set.
    Tune {
        #[command(flatten)]
        io: Io,
        /// Reference file, one sentence per line; n-best ids are 0-based line numbers.
        #[arg(long)]
        refs: PathBuf,
        /// model=v1,v2,... (repeat per model).
        #[arg(long)]
        grid: Vec<String>,
        /// Comma-separated length-penalty exponents.
        #[arg(long)]
        alphas: Option<String>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RateArgs {
    #[arg(long)]
    pub homophones: Option<PathBuf>,
    /// One word per line, used for substitutions and insertions.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub homophone_rate: Option<f64>,
    #[arg(long)]
    pub sub_rate: Option<f64>,
    #[arg(long)]
    pub del_rate: Option<f64>,
    #[arg(long)]
    pub ins_rate: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RefArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// lines (one segment per line) or ctm (one segment per utterance).
    #[arg(long, default_value = "lines")]
    pub ref_format: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("stpipe: error: {msg}");
            ExitCode::from(1)
        }
    }
}
