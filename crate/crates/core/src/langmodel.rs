//! Word probabilities from parser queue masses, perplexity, and the
//! interpolated trigram baseline.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use crate::conditioning::{bucket, NUM_BUCKETS};
use crate::error::{Error, Result};
use crate::grammar::Interner;
use crate::lookahead::{LapCache, Lookahead};
use crate::mixture::{self, NestedEvent};
use crate::parser::{log_sum_exp, Candidate, ParseOutput, Parser};

/// Share of the parser estimate when it is mixed with the unigram floor.
pub const DEFAULT_PARSER_WEIGHT: f64 = 0.999;
/// Share of the trigram when it is mixed with the parser model.
pub const DEFAULT_LAMBDA_MIX: f64 = 0.36;

#[derive(Debug, Clone, PartialEq)]
pub struct WordProbTrace {
    pub words: Vec<String>,
    /// Ratio of successive queue masses; 0 once the parse has failed.
    pub model_probs: Vec<f64>,
    pub fallback: Vec<bool>,
    pub final_probs: Vec<f64>,
    /// Σ ln final_probs.
    pub log_prob: f64,
    pub failure_position: Option<usize>,
}

impl WordProbTrace {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn fallbacks(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Turns the per-queue masses of a parse into conditional word probabilities.
/// `unigram` supplies the floor model; `parser_weight` is the parser's share
/// whenever the current queue is nonempty.
pub fn word_probabilities(
    po: &ParseOutput,
    unigram: &dyn Fn(&str) -> f64,
    parser_weight: f64,
) -> Result<WordProbTrace> {
    if !(0.0..=1.0).contains(&parser_weight) {
        return Err(Error::Config(format!("parser weight must lie in [0, 1], got {parser_weight}")));
    }
    let n = po.words.len();
    if po.per_word.len() != n + 1 {
        return Err(Error::Alignment(format!(
            "{} queue records for {} words",
            po.per_word.len(),
            n
        )));
    }
    let mut t = WordProbTrace {
        words: po.words.clone(),
        model_probs: Vec::with_capacity(n),
        fallback: Vec::with_capacity(n),
        final_probs: Vec::with_capacity(n),
        log_prob: 0.0,
        failure_position: po.failure_position(),
    };
    for (i, w) in po.words.iter().enumerate() {
        let here = po.per_word[i].log_mass;
        let there = po.per_word[i + 1].log_mass;
        let u = unigram(w);
        if !(u > 0.0) {
            return Err(Error::ZeroProbability(format!("unigram gives no mass to {w:?}")));
        }
        let (model, fallback, p) = if here == f64::NEG_INFINITY {
            (0.0, true, u)
        } else {
            let m = (there - here).exp();
            (m, false, parser_weight * m + (1.0 - parser_weight) * u)
        };
        if !(p > 0.0) {
            return Err(Error::ZeroProbability(format!("word {i} ({w:?})")));
        }
        t.model_probs.push(model);
        t.fallback.push(fallback);
        t.final_probs.push(p);
        t.log_prob += p.ln();
    }
    Ok(t)
}

/// Total log probability and token count of a set of per-word probabilities.
fn totals<'a>(probs: impl Iterator<Item = &'a [f64]>) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut n = 0;
    for ps in probs {
        for &p in ps {
            if !(p > 0.0) {
                return Err(Error::ZeroProbability("a test token has probability zero".into()));
            }
            sum += p.ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no tokens to compute perplexity over".into()));
    }
    Ok((sum, n))
}

/// `exp(−Σ ln p / N)` over per-sentence probability lists.
pub fn perplexity_of<'a>(probs: impl Iterator<Item = &'a [f64]>) -> Result<f64> {
    let (sum, n) = totals(probs)?;
    Ok((-sum / n as f64).exp())
}

pub fn corpus_perplexity(traces: &[WordProbTrace]) -> Result<f64> {
    perplexity_of(traces.iter().map(|t| t.final_probs.as_slice()))
}

/// Mixes per-word parser and n-gram probabilities, giving `lambda_mix` to the
/// n-gram.
pub fn mix_probs(traces: &[WordProbTrace], ngram: &[Vec<f64>], lambda_mix: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&lambda_mix) {
        return Err(Error::Config(format!("mixing weight must lie in [0, 1], got {lambda_mix}")));
    }
    if traces.len() != ngram.len() {
        return Err(Error::Alignment(format!(
            "{} parser sentences against {} n-gram sentences",
            traces.len(),
            ngram.len()
        )));
    }
    traces
        .iter()
        .zip(ngram)
        .enumerate()
        .map(|(i, (t, q))| {
            if t.final_probs.len() != q.len() {
                return Err(Error::Alignment(format!(
                    "sentence {}: {} parser tokens against {} n-gram tokens",
                    i + 1,
                    t.final_probs.len(),
                    q.len()
                )));
            }
            Ok(t.final_probs
                .iter()
                .zip(q)
                .map(|(&p, &r)| (1.0 - lambda_mix) * p + lambda_mix * r)
                .collect())
        })
        .collect()
}

pub fn interpolate_perplexity(traces: &[WordProbTrace], ngram: &NgramModel, lambda_mix: f64) -> Result<f64> {
    let q: Vec<Vec<f64>> = traces.iter().map(|t| ngram.sentence_probs(&t.words)).collect();
    let mixed = mix_probs(traces, &q, lambda_mix)?;
    perplexity_of(mixed.iter().map(Vec::as_slice))
}

/// Interpolated trigram over a closed vocabulary.
///
/// `P1` is add-one smoothed; `P2` and `P3` interpolate relative frequencies
/// with the next lower order, with one weight per frequency bucket of the
/// history count. Histories are padded with a begin marker that is never
/// predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    pub vocab: Interner,
    pub unk: u32,
    pub end: u32,
    pub unigram: Vec<u64>,
    pub total: u64,
    pub bigram: FxHashMap<(u32, u32), u64>,
    pub bigram_hist: FxHashMap<u32, u64>,
    pub trigram: FxHashMap<(u32, u32, u32), u64>,
    pub trigram_hist: FxHashMap<(u32, u32), u64>,
    /// `[bigram, trigram]` weights by bucket.
    pub lambdas: [[f64; NUM_BUCKETS]; 2],
}

impl NgramModel {
    /// Counts only; every weight starts at `init` except bucket 0, which is 0.
    pub fn count(train: &[Vec<String>], end: &str, unk: &str, init: f64) -> Result<NgramModel> {
        if train.iter().all(Vec::is_empty) {
            return Err(Error::Empty("no training tokens for the trigram".into()));
        }
        let mut names: BTreeSet<&str> = train.iter().flatten().map(String::as_str).collect();
        names.insert(end);
        names.insert(unk);
        let mut vocab = Interner::default();
        for s in names {
            vocab.intern(s);
        }
        let mut lambdas = [[init; NUM_BUCKETS]; 2];
        lambdas[0][0] = 0.0;
        lambdas[1][0] = 0.0;
        let mut m = NgramModel {
            unk: vocab.get(unk).unwrap_or_default(),
            end: vocab.get(end).unwrap_or_default(),
            unigram: vec![0; vocab.len()],
            vocab,
            total: 0,
            bigram: FxHashMap::default(),
            bigram_hist: FxHashMap::default(),
            trigram: FxHashMap::default(),
            trigram_hist: FxHashMap::default(),
            lambdas,
        };
        for s in train {
            let ids = m.ids(s);
            let bos = m.bos();
            let (mut u, mut v) = (bos, bos);
            for w in ids {
                m.unigram[w as usize] += 1;
                m.total += 1;
                *m.bigram.entry((v, w)).or_default() += 1;
                *m.bigram_hist.entry(v).or_default() += 1;
                *m.trigram.entry((u, v, w)).or_default() += 1;
                *m.trigram_hist.entry((u, v)).or_default() += 1;
                u = v;
                v = w;
            }
        }
        Ok(m)
    }

    /// Id of the begin-of-sentence history marker.
    pub fn bos(&self) -> u32 {
        self.vocab.len() as u32
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn id(&self, w: &str) -> u32 {
        self.vocab.get(w).unwrap_or(self.unk)
    }

    /// Maps a sentence to ids, appending the end marker if it is missing.
    pub fn ids(&self, words: &[String]) -> Vec<u32> {
        let mut v: Vec<u32> = words.iter().map(|w| self.id(w)).collect();
        if v.last() != Some(&self.end) {
            v.push(self.end);
        }
        v
    }

    pub fn unigram_prob(&self, w: &str) -> f64 {
        self.p1(self.id(w))
    }

    fn p1(&self, w: u32) -> f64 {
        (self.unigram[w as usize] + 1) as f64 / (self.total + self.vocab.len() as u64) as f64
    }

    fn hat2(&self, v: u32, w: u32) -> Option<(usize, f64)> {
        let h = *self.bigram_hist.get(&v)?;
        let c = self.bigram.get(&(v, w)).copied().unwrap_or(0);
        Some((bucket(h), c as f64 / h as f64))
    }

    fn hat3(&self, u: u32, v: u32, w: u32) -> Option<(usize, f64)> {
        let h = *self.trigram_hist.get(&(u, v))?;
        let c = self.trigram.get(&(u, v, w)).copied().unwrap_or(0);
        Some((bucket(h), c as f64 / h as f64))
    }

    /// `P(w | u v)` on ids; use [`NgramModel::bos`] for padding.
    pub fn prob_ids(&self, u: u32, v: u32, w: u32) -> f64 {
        let mut p = self.p1(w);
        if let Some((b, ph)) = self.hat2(v, w) {
            let l = self.lambdas[0][b];
            p = l * ph + (1.0 - l) * p;
        }
        if let Some((b, ph)) = self.hat3(u, v, w) {
            let l = self.lambdas[1][b];
            p = l * ph + (1.0 - l) * p;
        }
        p
    }

    /// `P(w | history)`; the history may be shorter than two words, in which
    /// case it is padded with the begin marker.
    pub fn prob(&self, history: &[String], w: &str) -> f64 {
        let bos = self.bos();
        let n = history.len();
        let v = if n >= 1 { self.id(&history[n - 1]) } else { bos };
        let u = if n >= 2 { self.id(&history[n - 2]) } else { bos };
        self.prob_ids(u, v, self.id(w))
    }

    /// Per-token probabilities of a sentence, end marker included.
    pub fn sentence_probs(&self, words: &[String]) -> Vec<f64> {
        let bos = self.bos();
        let (mut u, mut v) = (bos, bos);
        self.ids(words)
            .into_iter()
            .map(|w| {
                let p = self.prob_ids(u, v, w);
                u = v;
                v = w;
                p
            })
            .collect()
    }

    pub fn perplexity(&self, sentences: &[Vec<String>]) -> Result<f64> {
        let probs: Vec<Vec<f64>> = sentences.iter().map(|s| self.sentence_probs(s)).collect();
        perplexity_of(probs.iter().map(Vec::as_slice))
    }

    fn events(&self, heldout: &[Vec<String>]) -> Vec<NestedEvent> {
        let mut out = Vec::new();
        let bos = self.bos();
        for s in heldout {
            let (mut u, mut v) = (bos, bos);
            for w in self.ids(s) {
                let mut levels = Vec::with_capacity(2);
                if let Some((b, ph)) = self.hat2(v, w) {
                    if b > 0 {
                        levels.push((b, ph));
                    }
                }
                if let Some((b, ph)) = self.hat3(u, v, w) {
                    if b > 0 {
                        levels.push((NUM_BUCKETS + b, ph));
                    }
                }
                out.push(NestedEvent {
                    weight: 1.0,
                    base: self.p1(w),
                    levels,
                });
                u = v;
                v = w;
            }
        }
        out
    }

    /// Fits the bucket weights to maximize held-out likelihood.
    pub fn tune(&mut self, heldout: &[Vec<String>]) -> Result<mixture::EmOutcome> {
        let events = self.events(heldout);
        if events.is_empty() {
            return Err(Error::Empty("no held-out tokens for the trigram".into()));
        }
        let init: Vec<f64> = self.lambdas.iter().flatten().copied().collect();
        let out = mixture::fit(&events, init, mixture::DEFAULT_TOLERANCE, mixture::DEFAULT_MAX_ITERATIONS);
        for (k, l) in out.lambdas.iter().enumerate() {
            self.lambdas[k / NUM_BUCKETS][k % NUM_BUCKETS] = *l;
        }
        self.lambdas[0][0] = 0.0;
        self.lambdas[1][0] = 0.0;
        Ok(out)
    }
}

pub fn train_trigram(train: &[Vec<String>], heldout: &[Vec<String>], end: &str, unk: &str) -> Result<NgramModel> {
    let mut m = NgramModel::count(train, end, unk, 0.5)?;
    m.tune(heldout)?;
    Ok(m)
}

/// Sum over `vocabulary` of the parser's next-word probability after
/// `prefix`.
///
/// The last admission of the prefix is ranked without look-ahead, so every
/// candidate word is scored against the same prefix queue; each word then
/// gets its own pass over that queue. Returns 0 if the prefix fails.
pub fn vocab_mass_diagnostic(p: &Parser<'_>, prefix: &[String], vocabulary: &[String]) -> f64 {
    let k = prefix.len();
    let mut current = vec![Candidate::initial(p.g)];
    for i in 0..k {
        let next_la = if i + 1 < k { p.lookahead(prefix, i + 1) } else { Lookahead::Unknown };
        current = p.advance(current, p.lookahead(prefix, i), next_la).next.into_vec();
        if current.is_empty() {
            return 0.0;
        }
    }
    let base = log_sum_exp(current.iter().map(|c| c.log_pd));
    let mut sum = 0.0;
    for w in vocabulary {
        let Some(id) = p.g.token_id(w) else { continue };
        let la = Lookahead::Word(Some(id));
        let mut cache = LapCache::new(p.g, p.lap, la);
        let rescored: Vec<Candidate> = current.iter().map(|c| c.rescored(&mut cache)).collect();
        let after = if w == p.end_token() { Lookahead::End } else { Lookahead::Unknown };
        let next = p.advance(rescored, la, after).next;
        let mass = log_sum_exp(next.iter().map(|c| c.log_pd));
        sum += (mass - base).exp();
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::CondModel;
    use crate::fixtures;
    use crate::heads::HeadTable;
    use crate::lookahead::{LapTables, DEFAULT_K};
    use crate::oracle::{exact_word_probabilities, OracleConfig};
    use crate::parser::ParserConfig;
    use crate::treebank::Tree;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn sentences(s: &str) -> Vec<Vec<String>> {
        s.lines().map(words).filter(|w| !w.is_empty()).collect()
    }

    struct G1 {
        g: crate::grammar::Pcfg,
        m: CondModel,
        lap: LapTables,
    }

    fn g1() -> G1 {
        let g = fixtures::g1_grammar();
        let trees: Vec<Tree> = fixtures::g1_trees().iter().map(fixtures::prepare).collect();
        G1 {
            m: CondModel::unconditioned(&g, HeadTable::default()),
            lap: LapTables::collect(&g, &trees, DEFAULT_K).unwrap(),
            g,
        }
    }

    #[test]
    fn perplexity_basics() {
        let t = WordProbTrace {
            words: words("a </s>"),
            model_probs: vec![0.5, 0.5],
            fallback: vec![false, false],
            final_probs: vec![0.5, 0.5],
            log_prob: 2.0 * 0.5f64.ln(),
            failure_position: None,
        };
        assert!((corpus_perplexity(std::slice::from_ref(&t)).unwrap() - 2.0).abs() < 1e-12);
        let mut z = t;
        z.final_probs[1] = 0.0;
        assert!(corpus_perplexity(&[z]).is_err());
        assert!(corpus_perplexity(&[]).is_err());
    }

    #[test]
    fn trace_matches_oracle_on_g1() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::exact());
        let w = words("the dog ran </s>");
        let out = p.parse(&w).unwrap();
        let uni = |_: &str| 0.1;
        let t = word_probabilities(&out, &uni, DEFAULT_PARSER_WEIGHT).unwrap();
        let exact = exact_word_probabilities(&s.g, &w, &OracleConfig::default()).unwrap();
        for (a, b) in t.model_probs.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
        }
        assert!((t.model_probs[1] - 0.2).abs() < 1e-12);
        assert!((t.final_probs[1] - (0.999 * 0.2 + 0.001 * 0.1)).abs() < 1e-12);
        // telescoping
        let prod: f64 = t.model_probs.iter().product();
        let last = out.per_word[w.len()].log_mass.exp();
        assert!((prod - last).abs() <= 1e-12 * last);
    }

    #[test]
    fn failed_parse_falls_back() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let out = p.parse(&words("the the ran </s>")).unwrap();
        let uni = |_: &str| 0.25;
        let t = word_probabilities(&out, &uni, DEFAULT_PARSER_WEIGHT).unwrap();
        assert_eq!(t.failure_position, Some(1));
        assert_eq!(t.fallback, [false, false, true, true]);
        // the word that breaks the parse keeps only the floor share
        assert!((t.final_probs[1] - 0.001 * 0.25).abs() < 1e-15);
        assert_eq!(t.final_probs[2], 0.25);
        assert!(word_probabilities(&out, &|_| 0.0, 0.999).is_err());
    }

    const TRAIN: &str = "\
the dog ran
the dog chased the cat
a cat ran
the cat sat
a dog sat
";

    const HELDOUT: &str = "\
the cat ran
a dog chased the cat
the bird sat
";

    #[test]
    fn trigram_is_proper() {
        let m = train_trigram(&sentences(TRAIN), &sentences(HELDOUT), "</s>", "<unk>").unwrap();
        let vocab: Vec<String> = m.vocab.iter().map(|(_, w)| w.to_string()).collect();
        for h in [vec![], words("the"), words("the dog"), words("zebra zebra"), words("cat </s>")] {
            let s: f64 = vocab.iter().map(|w| m.prob(&h, w)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{h:?}: {s}");
        }
        for l in m.lambdas.iter().flatten() {
            assert!((0.0..=1.0).contains(l));
        }
    }

    #[test]
    fn zero_weights_give_unigram() {
        let mut m = NgramModel::count(&sentences(TRAIN), "</s>", "<unk>", 0.0).unwrap();
        m.lambdas = [[0.0; NUM_BUCKETS]; 2];
        // 22 training tokens (with end markers) over 9 types
        assert_eq!(m.total, 22);
        assert_eq!(m.vocab_size(), 9);
        let expect = (4 + 1) as f64 / (22 + 9) as f64;
        assert!((m.prob(&words("the"), "dog") - (3 + 1) as f64 / 31.0).abs() < 1e-15);
        assert!((m.prob(&[], "the") - expect).abs() < 1e-15);
        assert_eq!(m.prob(&[], "zebra"), m.prob(&[], "<unk>"));
    }

    #[test]
    fn unseen_history_backs_off() {
        let m = train_trigram(&sentences(TRAIN), &sentences(HELDOUT), "</s>", "<unk>").unwrap();
        // the unknown token never conditions anything in training
        let u = m.unigram_prob("dog");
        assert_eq!(m.prob(&words("zebra"), "dog"), u);
        assert_eq!(m.prob(&words("the zebra"), "dog"), u);
        // "sat" is only ever followed by the end marker
        let l = m.lambdas[0][bucket(2)];
        assert!((m.prob(&words("zebra sat"), "dog") - (1.0 - l) * u).abs() < 1e-15);
    }

    #[test]
    fn uniform_corpus_has_vocabulary_perplexity() {
        let k = 8;
        let ws: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
        let mut fwd = ws.clone();
        fwd.push("<unk>".into());
        let train = vec![fwd.clone(); 30];
        let mut rev = fwd;
        rev.reverse();
        let test = vec![rev; 5];
        let m = train_trigram(&train, &test, "</s>", "<unk>").unwrap();
        let ppl = m.perplexity(&test).unwrap();
        let v = m.vocab_size() as f64;
        assert!((ppl - v).abs() / v < 1e-3, "{ppl} vs {v}");
    }

    #[test]
    fn mixing_endpoints() {
        let m = train_trigram(&sentences(TRAIN), &sentences(HELDOUT), "</s>", "<unk>").unwrap();
        let t = WordProbTrace {
            words: words("the cat ran </s>"),
            model_probs: vec![0.3; 4],
            fallback: vec![false; 4],
            final_probs: vec![0.3, 0.2, 0.5, 0.9],
            log_prob: 0.0,
            failure_position: None,
        };
        let ts = [t];
        let tri = m.perplexity(&[words("the cat ran")]).unwrap();
        assert!((interpolate_perplexity(&ts, &m, 1.0).unwrap() - tri).abs() < 1e-12);
        let parser = corpus_perplexity(&ts).unwrap();
        assert!((interpolate_perplexity(&ts, &m, 0.0).unwrap() - parser).abs() < 1e-12);
        assert!(mix_probs(&ts, &[vec![0.1; 3]], 0.5).is_err());
        assert!(mix_probs(&ts, &[], 0.5).is_err());
    }

    #[test]
    fn vocabulary_mass_on_g1() {
        let s = g1();
        let vocab: Vec<String> = s.g.tokens().map(|(_, w)| w.to_string()).collect();
        for (cfg, exact) in [(ParserConfig::exact(), true), (ParserConfig::default(), false)] {
            let p = Parser::new(&s.g, &s.m, &s.lap, cfg);
            for prefix in ["", "Spot", "the", "the dog", "Spot chased the"] {
                let sum = vocab_mass_diagnostic(&p, &words(prefix), &vocab);
                if exact {
                    assert!((sum - 1.0).abs() < 1e-9, "{prefix}: {sum}");
                } else {
                    assert!(sum > 0.0 && sum <= 1.0 + 1e-9, "{prefix}: {sum}");
                }
            }
            assert_eq!(vocab_mass_diagnostic(&p, &words("the the"), &vocab), 0.0);
        }
    }
}
