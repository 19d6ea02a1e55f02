//! Training and applying the full model bundle.

use std::thread;

use crate::conditioning::{train_counts, tune_mix_weights, CondConfig, CondModel};
use crate::error::{Error, Result};
use crate::grammar::{induce_pcfg, left_factor_tree, Pcfg};
use crate::heads::HeadTable;
use crate::langmodel::{word_probabilities, NgramModel, WordProbTrace};
use crate::lookahead::{LapTables, DEFAULT_K};
use crate::parser::{with_end, ParseOutput, Parser, ParserConfig};
use crate::treebank::{augment_with_stop, Corpus, NormalizationConfig, Normalizer, Role, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub normalization: NormalizationConfig,
    pub conditioning: CondConfig,
    pub head_table: HeadTable,
    pub lap_k: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            normalization: NormalizationConfig::default(),
            conditioning: CondConfig::all(),
            head_table: HeadTable::default(),
            lap_k: DEFAULT_K,
        }
    }
}

/// Everything needed to parse and score text, trained together so the parts
/// cannot disagree about the vocabulary.
#[derive(Debug, Clone)]
pub struct Model {
    pub normalizer: Normalizer,
    pub grammar: Pcfg,
    pub cond: CondModel,
    pub lap: LapTables,
    pub ngram: NgramModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_trees: usize,
    pub heldout_trees: usize,
    pub nonterminals: usize,
    pub rules: usize,
    pub vocabulary: usize,
    pub em_iterations: usize,
    pub heldout_log_likelihood: f64,
    pub trigram_em_iterations: usize,
}

/// Stop-augments and left-factors normalized sentence trees.
pub fn prepare_trees(trees: &[Tree], end: &str) -> Result<Vec<Tree>> {
    trees
        .iter()
        .map(|t| left_factor_tree(&augment_with_stop(t, end)?))
        .collect()
}

fn sentences_with_end(c: &Corpus, end: &str) -> Vec<Vec<String>> {
    c.sentences().iter().map(|s| with_end(s, end)).collect()
}

pub fn train(train: &Corpus, heldout: &Corpus, cfg: &TrainConfig) -> Result<(Model, TrainSummary)> {
    if train.trees.is_empty() {
        return Err(Error::Empty("training corpus has no trees".into()));
    }
    if heldout.trees.is_empty() {
        return Err(Error::Empty(
            "held-out corpus has no trees; mixing weights are tuned on it".into(),
        ));
    }
    let normalizer = Normalizer::fit(train, cfg.normalization.clone())?;
    let end = normalizer.config.end_token.clone();
    let unk = normalizer.config.unk_token.clone();
    let train = normalizer.normalize(train)?;
    let heldout = normalizer.normalize(heldout)?;
    let train_f = prepare_trees(&train.trees, &end)?;
    let heldout_f = prepare_trees(&heldout.trees, &end)?;

    let grammar = induce_pcfg(&Corpus::new(train_f.clone(), Role::Train))?;
    let mut cond = train_counts(&grammar, &train_f, cfg.conditioning, cfg.head_table.clone())?;
    let em = tune_mix_weights(&mut cond, &grammar, &heldout_f)?;
    let lap = LapTables::collect(&grammar, &train_f, cfg.lap_k)?;

    let train_s = sentences_with_end(&train, &end);
    let heldout_s = sentences_with_end(&heldout, &end);
    let mut ngram = NgramModel::count(&train_s, &end, &unk, 0.5)?;
    let tri_em = ngram.tune(&heldout_s)?;

    let summary = TrainSummary {
        train_trees: train.trees.len(),
        heldout_trees: heldout.trees.len(),
        nonterminals: grammar.num_nonterminals(),
        rules: grammar.num_rules(),
        vocabulary: grammar.num_tokens(),
        em_iterations: em.iterations(),
        heldout_log_likelihood: *em.log_likelihoods.last().unwrap_or(&f64::NAN),
        trigram_em_iterations: tri_em.iterations(),
    };
    let model = Model {
        normalizer,
        grammar,
        cond,
        lap,
        ngram,
    };
    Ok((model, summary))
}

impl Model {
    pub fn end_token(&self) -> &str {
        &self.normalizer.config.end_token
    }

    pub fn unk_token(&self) -> &str {
        &self.normalizer.config.unk_token
    }

    pub fn parser(&self, cfg: ParserConfig) -> Parser<'_> {
        Parser::new(&self.grammar, &self.cond, &self.lap, cfg)
    }

    /// Normalizes a raw sentence and appends the end marker. Words the grammar
    /// has never seen become the unknown token; with `closed` they are an error
    /// instead.
    pub fn prepare_sentence(&self, words: &[String], closed: bool) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(words.len() + 1);
        for w in self.normalizer.normalize_sentence(words) {
            if self.grammar.token_id(&w).is_some() || w == self.end_token() {
                out.push(w);
            } else if closed {
                return Err(Error::OutOfVocabulary(w));
            } else {
                out.push(self.unk_token().to_string());
            }
        }
        Ok(with_end(&out, self.end_token()))
    }

    /// Normalizes a gold tree the way its sentence would be prepared for
    /// parsing, so it can be scored against parser output.
    pub fn normalize_gold(&self, t: &Tree) -> Result<Tree> {
        fn close(t: &mut Tree, m: &Model) {
            if t.is_leaf() {
                if m.grammar.token_id(&t.label).is_none() {
                    t.label = m.unk_token().to_string();
                }
            } else {
                for c in &mut t.children {
                    close(c, m);
                }
            }
        }
        let mut out = self.normalizer.normalize_tree(t)?;
        close(&mut out, self);
        Ok(out)
    }

    /// Parses a prepared sentence (end marker included).
    pub fn parse(&self, words: &[String], cfg: ParserConfig) -> Result<ParseOutput> {
        self.parser(cfg).parse(words)
    }

    pub fn unigram(&self, w: &str) -> f64 {
        self.ngram.unigram_prob(w)
    }

    pub fn trace(&self, po: &ParseOutput, parser_weight: f64) -> Result<WordProbTrace> {
        word_probabilities(po, &|w| self.unigram(w), parser_weight)
    }

    /// Parses prepared sentences on up to `jobs` threads; results keep the
    /// input order.
    pub fn parse_all(&self, sentences: &[Vec<String>], cfg: ParserConfig, jobs: usize) -> Vec<Result<ParseOutput>> {
        let jobs = jobs.max(1).min(sentences.len().max(1));
        if jobs == 1 {
            return sentences.iter().map(|s| self.parse(s, cfg)).collect();
        }
        let chunk = sentences.len().div_ceil(jobs);
        thread::scope(|scope| {
            let handles: Vec<_> = sentences
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|s| self.parse(s, cfg)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("parser thread panicked"))
                .collect()
        })
    }
}
