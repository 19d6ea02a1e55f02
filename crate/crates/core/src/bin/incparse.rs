//! Command-line front end: train, parse, ppl, eval and oracle-check.
//!
//! Exit status: 0 on success, 1 on errors, 2 when `parse` hit at least one
//! garden path, 3 when `oracle-check` found a disagreement.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser as ClapParser, Subcommand};

use incparse::check::{check_sentences, PlainModel};
use incparse::conditioning::CondConfig;
use incparse::evaluation::{score_corpus, score_pair, ParseStats};
use incparse::langmodel::{
    corpus_perplexity, interpolate_perplexity, vocab_mass_diagnostic, DEFAULT_LAMBDA_MIX, DEFAULT_PARSER_WEIGHT,
};
use incparse::lookahead::DEFAULT_K;
use incparse::model_file::{load_model, save_model};
use incparse::oracle::{enumerate_language, OracleConfig};
use incparse::parser::{ParserConfig, DEFAULT_BASE_BEAM, DEFAULT_MAX_QUEUE};
use incparse::pipeline::{train, Model, TrainConfig};
use incparse::report::{parse_record, parseval_record, trace_record, Record};
use incparse::treebank::{
    parse_trees, read_corpus, read_sentences, sentence_tree, NormalizationConfig, Role, Tree, DEFAULT_END_TOKEN,
};
use incparse::{fixtures, Error, Result};

const EXIT_GARDEN_PATH: u8 = 2;
const EXIT_ORACLE_MISMATCH: u8 = 3;

#[derive(ClapParser)]
#[command(name = "incparse", version, about = "Incremental top-down PCFG parser and syntactic language model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model bundle from bracketed treebanks.
    Train(TrainArgs),
    /// Parse sentences, one bracketed tree per output line.
    Parse(ParseArgs),
    /// Parser, trigram and interpolated perplexity.
    Ppl(PplArgs),
    /// Labeled bracket scores of test trees against gold trees.
    Eval(EvalArgs),
    /// Compare the beam parser against exhaustive enumeration on a small grammar.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    /// Held-out treebank for tuning the mixing weights.
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Preset name (none, par+sib, nt-struct, nt-head, pos-struct, attach, all) or a triple like 6,6,4.
    #[arg(long, default_value = "all")]
    conditioning: CondConfig,
    /// Keep punctuation preterminals.
    #[arg(long)]
    no_strip_punct: bool,
    /// Replacement token for numerals.
    #[arg(long, default_value = "N", conflicts_with = "keep_numbers")]
    number_token: String,
    #[arg(long)]
    keep_numbers: bool,
    /// Keep only the most frequent tokens; the rest become the unknown token.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    vocab_cap: Option<u64>,
    /// Turn corpus normalization off entirely.
    #[arg(long, conflicts_with_all = ["no_strip_punct", "keep_numbers", "vocab_cap"])]
    no_normalize: bool,
    /// Smoothing constant of the look-ahead weights.
    #[arg(long, default_value_t = DEFAULT_K)]
    lap_k: f64,
}

#[derive(Args)]
struct BeamArgs {
    /// Base beam factor; 0 disables pruning.
    #[arg(long, default_value_t = DEFAULT_BASE_BEAM)]
    base_beam: f64,
    /// Maximum number of analyses popped per word.
    #[arg(long, default_value_t = DEFAULT_MAX_QUEUE, value_parser = positive)]
    max_queue: usize,
    /// Parse on this many threads.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    jobs: usize,
}

impl BeamArgs {
    fn config(&self) -> Result<ParserConfig> {
        let c = ParserConfig {
            base_beam: self.base_beam,
            max_queue: self.max_queue,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "trees"])))]
struct InputArgs {
    /// Tokenized sentences, one per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treebank whose yields are parsed after tree-level normalization.
    #[arg(long)]
    trees: Option<PathBuf>,
    /// Reject tokens outside the model vocabulary instead of mapping them to the unknown token.
    #[arg(long)]
    closed_vocab: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    beam: BeamArgs,
    /// Trees go here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-sentence efficiency records.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PplArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    beam: BeamArgs,
    /// Share of the trigram in the interpolated estimate.
    #[arg(long, default_value_t = DEFAULT_LAMBDA_MIX)]
    lambda_mix: f64,
    /// Weight of the parser against the unigram floor.
    #[arg(long, default_value_t = DEFAULT_PARSER_WEIGHT)]
    parser_weight: f64,
    /// Print one record per sentence before the summary.
    #[arg(long)]
    per_sentence: bool,
    /// Sum next-word probabilities over the vocabulary at every prefix of the first N sentences.
    #[arg(long, value_name = "N")]
    vocab_mass: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Normalize gold trees with this model's settings first.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Only score sentences of at most this many words.
    #[arg(long)]
    max_len: Option<usize>,
    /// Parse records from `parse --report`, for failure and efficiency figures.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    per_sentence: bool,
    /// Print one key=value line instead of the table.
    #[arg(long)]
    machine: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("grammar").args(["fixture", "grammar_trees"])))]
struct OracleArgs {
    /// Built-in fixture grammar: g1, g2, g3 or all.
    #[arg(long, default_value = "all")]
    fixture: String,
    /// Induce the grammar from this treebank instead.
    #[arg(long)]
    grammar_trees: Option<PathBuf>,
    /// Sentences to check; by default every sentence of the language up to --max-len words.
    #[arg(long)]
    sentences: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Beam setting compared besides exact mode.
    #[arg(long, default_value_t = DEFAULT_BASE_BEAM)]
    base_beam: f64,
    /// Relative tolerance for exact mode.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = OracleConfig::default().max_derivation_steps)]
    max_steps: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Parse(a) => cmd_parse(a),
        Cmd::Ppl(a) => cmd_ppl(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::OracleCheck(a) => cmd_oracle_check(a),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(a: TrainArgs) -> Result<u8> {
    let Some(heldout_path) = a.heldout else {
        return Err(Error::Config(
            "no held-out treebank given; pass --heldout <FILE> (a few hundred trees kept out of --train) \
             so the mixing weights can be tuned"
                .into(),
        ));
    };
    if !(a.lap_k > 0.0) {
        return Err(Error::Config(format!("--lap-k must be positive, got {}", a.lap_k)));
    }
    let normalization = if a.no_normalize {
        NormalizationConfig::identity()
    } else {
        NormalizationConfig {
            strip_punctuation: !a.no_strip_punct,
            number_token: (!a.keep_numbers).then_some(a.number_token),
            vocab_cap: a.vocab_cap.map(|v| v as usize),
            ..Default::default()
        }
    };
    a.conditioning.validate()?;
    let cfg = TrainConfig {
        normalization,
        conditioning: a.conditioning,
        lap_k: a.lap_k,
        ..Default::default()
    };
    let tr = read_corpus(&a.train, Role::Train)?;
    let he = read_corpus(&heldout_path, Role::Heldout)?;
    let (model, s) = train(&tr, &he, &cfg)?;
    save_model(&a.output, &model)?;
    let r = Record::new()
        .with("train_trees", s.train_trees)
        .with("heldout_trees", s.heldout_trees)
        .with("nonterminals", s.nonterminals)
        .with("rules", s.rules)
        .with("vocabulary", s.vocabulary)
        .with("conditioning", cfg.conditioning)
        .with("em_iterations", s.em_iterations)
        .with("heldout_loglik", s.heldout_log_likelihood)
        .with("trigram_em_iterations", s.trigram_em_iterations);
    println!("{r}");
    Ok(0)
}

/// One sentence to process, with the line or tree number it came from.
struct Item {
    index: usize,
    words: Vec<String>,
}

fn load_items(m: &Model, input: &InputArgs) -> Result<Vec<Item>> {
    if let Some(path) = &input.trees {
        let c = read_corpus(path, Role::Test)?;
        return c
            .trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let g = m.normalize_gold(t)?;
                let toks: Vec<String> = g.yield_tokens().iter().map(|s| s.to_string()).collect();
                Ok(Item {
                    index: i + 1,
                    words: m.prepare_sentence(&toks, input.closed_vocab)?,
                })
            })
            .collect();
    }
    let path = input.input.as_ref().expect("clap requires a source");
    let mut out = Vec::new();
    for line in read_sentences(path)? {
        if line.tokens.is_empty() {
            eprintln!("warning: {}:{} is empty, skipped", path.display(), line.line);
            continue;
        }
        let words = m
            .prepare_sentence(&line.tokens, input.closed_vocab)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), line.line)))?;
        out.push(Item {
            index: line.line,
            words,
        });
    }
    Ok(out)
}

fn cmd_parse(a: ParseArgs) -> Result<u8> {
    let cfg = a.beam.config()?;
    let m = load_model(&a.model)?;
    let items = load_items(&m, &a.input)?;
    let sents: Vec<Vec<String>> = items.iter().map(|i| i.words.clone()).collect();
    let outs = m.parse_all(&sents, cfg, a.beam.jobs);
    let (mut trees, mut report) = (String::new(), String::new());
    let mut garden_paths = 0;
    for (item, po) in items.iter().zip(outs) {
        let po = po?;
        if po.failed {
            garden_paths += 1;
        }
        trees.push_str(&sentence_tree(&po.best, m.end_token()).to_string());
        trees.push('\n');
        report.push_str(&parse_record(item.index, &po).to_string());
        report.push('\n');
    }
    match &a.output {
        Some(p) => write_text(p, &trees)?,
        None => io::stdout().write_all(trees.as_bytes()).map_err(|e| Error::io("<stdout>", e))?,
    }
    if let Some(p) = &a.report {
        write_text(p, &report)?;
    }
    if garden_paths > 0 {
        eprintln!("{garden_paths} of {} sentences ended in a garden path", items.len());
        return Ok(EXIT_GARDEN_PATH);
    }
    Ok(0)
}

fn cmd_ppl(a: PplArgs) -> Result<u8> {
    unit_interval("--lambda-mix", a.lambda_mix)?;
    unit_interval("--parser-weight", a.parser_weight)?;
    let cfg = a.beam.config()?;
    let m = load_model(&a.model)?;
    let items = load_items(&m, &a.input)?;
    if items.is_empty() {
        return Err(Error::Empty("no sentences to score".into()));
    }
    let sents: Vec<Vec<String>> = items.iter().map(|i| i.words.clone()).collect();
    let mut traces = Vec::with_capacity(items.len());
    let mut failed = 0;
    for (item, po) in items.iter().zip(m.parse_all(&sents, cfg, a.beam.jobs)) {
        let po = po?;
        failed += po.failed as usize;
        let t = m.trace(&po, a.parser_weight)?;
        if a.per_sentence {
            let tri: f64 = m.ngram.sentence_probs(&t.words).iter().map(|p| p.ln()).sum();
            println!("{}", trace_record(item.index, &t, Some(tri)));
        }
        traces.push(t);
    }
    let tokens: usize = traces.iter().map(|t| t.len()).sum();
    let fallbacks: usize = traces.iter().map(|t| t.fallbacks()).sum();
    let mut r = Record::new()
        .with("sentences", traces.len())
        .with("tokens", tokens)
        .with("failed", failed)
        .with("fallbacks", fallbacks)
        .with("base_beam", cfg.base_beam)
        .with("parser_ppl", corpus_perplexity(&traces)?)
        .with("trigram_ppl", m.ngram.perplexity(&sents)?)
        .with("lambda_mix", a.lambda_mix)
        .with("interpolated_ppl", interpolate_perplexity(&traces, &m.ngram, a.lambda_mix)?);
    if let Some(n) = a.vocab_mass {
        let parser = m.parser(cfg);
        let vocab: Vec<String> = m.grammar.tokens().map(|(_, w)| w.to_string()).collect();
        let mut sums = Vec::new();
        for s in sents.iter().take(n) {
            for k in 0..s.len() {
                sums.push(vocab_mass_diagnostic(&parser, &s[..k], &vocab));
            }
        }
        if !sums.is_empty() {
            let mean = sums.iter().sum::<f64>() / sums.len() as f64;
            r.push("vocab_mass_positions", sums.len());
            r.push("vocab_mass_mean", mean);
            r.push("vocab_mass_min", sums.iter().copied().fold(f64::INFINITY, f64::min));
            r.push("vocab_mass_max", sums.iter().copied().fold(0.0, f64::max));
        }
    }
    println!("{r}");
    Ok(0)
}

fn read_stats(path: &Path) -> Result<Vec<ParseStats>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| Error::Syntax {
        line,
        msg: format!("parse record {what}"),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r = Record::parse(l).ok_or_else(|| bad(i + 1, "is not key=value"))?;
            let num = |k: &str| -> Result<u64> {
                r.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(i + 1, &format!("lacks a numeric {k}")))
            };
            Ok(ParseStats {
                failed: num("failed")? != 0,
                words: num("words")? as usize,
                expansions: num("expansions")?,
                advanced: num("advanced")?,
            })
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<u8> {
    let gold = read_corpus(&a.gold, Role::Test)?.trees;
    let test = read_corpus(&a.test, Role::Test)?.trees;
    if gold.len() != test.len() {
        return Err(Error::Alignment(format!(
            "{} gold trees but {} test trees",
            gold.len(),
            test.len()
        )));
    }
    let gold: Vec<Tree> = match &a.model {
        Some(p) => {
            let m = load_model(p)?;
            gold.iter().map(|t| m.normalize_gold(t)).collect::<Result<_>>()?
        }
        None => gold,
    };
    let stats = match &a.report {
        Some(p) => {
            let s = read_stats(p)?;
            if s.len() != gold.len() {
                return Err(Error::Alignment(format!("{} parse records for {} trees", s.len(), gold.len())));
            }
            s
        }
        None => Vec::new(),
    };
    let mut pairs = Vec::new();
    let mut kept_stats = Vec::new();
    let mut mismatches = 0;
    for (i, (g, t)) in gold.into_iter().zip(test).enumerate() {
        if a.max_len.is_some_and(|n| g.yield_tokens().len() > n) {
            continue;
        }
        match score_pair(&g, &t) {
            Ok(s) => {
                if a.per_sentence {
                    let r = Record::new()
                        .with("sentence", i + 1)
                        .with("matched", s.matched)
                        .with("gold", s.gold)
                        .with("test", s.test)
                        .with("crossing", s.crossing)
                        .with("exact", s.exact() as u8);
                    println!("{r}");
                }
            }
            Err(e) => {
                eprintln!("line {}: {e}", i + 1);
                mismatches += 1;
                continue;
            }
        }
        if !stats.is_empty() {
            kept_stats.push(stats[i]);
        }
        pairs.push((g, t));
    }
    if mismatches > 0 {
        return Err(Error::YieldMismatch(format!("{mismatches} sentence pairs have different yields")));
    }
    let r = score_corpus(&pairs, &kept_stats)?;
    if a.machine {
        println!("{}", parseval_record(&r));
    } else {
        print!("{r}");
    }
    Ok(0)
}

fn cmd_oracle_check(a: OracleArgs) -> Result<u8> {
    let oracle = OracleConfig {
        max_derivation_steps: a.max_steps,
        ..Default::default()
    };
    oracle.validate()?;
    let beam = ParserConfig::with_beam(a.base_beam);
    beam.validate()?;
    let grammars: Vec<(String, Vec<Tree>)> = match &a.grammar_trees {
        Some(p) => vec![(p.display().to_string(), read_corpus(p, Role::Train)?.trees)],
        None => {
            let key = a.fixture.to_lowercase();
            let chosen: Vec<_> = fixtures::all()
                .into_iter()
                .filter(|(n, _)| key == "all" || n.to_lowercase() == key)
                .collect();
            if chosen.is_empty() {
                return Err(Error::Config(format!("unknown fixture {:?}; use g1, g2, g3 or all", a.fixture)));
            }
            chosen
                .into_iter()
                .map(|(n, text)| Ok((n.to_string(), parse_trees(text)?)))
                .collect::<Result<_>>()?
        }
    };
    let given: Option<Vec<Vec<String>>> = match &a.sentences {
        Some(p) => Some(
            read_sentences(p)?
                .into_iter()
                .filter(|l| !l.tokens.is_empty())
                .map(|l| {
                    let mut w = l.tokens;
                    w.push(DEFAULT_END_TOKEN.to_string());
                    w
                })
                .collect(),
        ),
        None => None,
    };
    let mut ok = true;
    for (name, trees) in grammars {
        let m = PlainModel::from_trees(&trees)?;
        let sents = match &given {
            Some(s) => s.clone(),
            None => enumerate_language(&m.grammar, a.max_len + 1, &oracle)?.into_keys().collect(),
        };
        for cfg in [ParserConfig::exact(), beam] {
            let r = check_sentences(&m, &sents, cfg, &oracle, a.tolerance)?;
            let exact = cfg.is_exact();
            let pass = r.bound_violations() == 0
                && (!exact || (r.max_rel_err() <= a.tolerance && r.parse_set_mismatches() == 0));
            ok &= pass;
            let rec = Record::new()
                .with("grammar", &name)
                .with("mode", if exact { "exact" } else { "beam" })
                .with("base_beam", cfg.base_beam)
                .with("sentences", r.sentences.len())
                .with("zero_mass", r.zero_mass())
                .with("max_rel_err", r.max_rel_err())
                .with("parse_set_mismatches", r.parse_set_mismatches())
                .with("bound_violations", r.bound_violations())
                .with("pass", pass as u8);
            println!("{rec}");
        }
    }
    Ok(if ok { 0 } else { EXIT_ORACLE_MISMATCH })
}
