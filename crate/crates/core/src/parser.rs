//! Incremental top-down beam search.
//!
//! Candidate analyses are rooted leftmost partial derivations. There is one
//! priority queue per input position, ranked by derivation probability times
//! look-ahead probability. The queue for the current word is worked off
//! best-first; analyses that consume the word move to the next queue, where
//! they are admitted only if their figure of merit is within
//! `best · γ · |queue|³` of the best analysis already there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::conditioning::CondModel;
use crate::error::{Error, Result};
use crate::grammar::{Pcfg, Rhs, RuleId};
use crate::lookahead::{LapCache, LapTables, Lookahead};
use crate::state::{apply, close_partial, Frame, Node, Step};
use crate::treebank::Tree;

pub const DEFAULT_BASE_BEAM: f64 = 1e-11;
pub const DEFAULT_MAX_QUEUE: usize = 10_000;
pub const BEAM_EXPONENT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParserConfig {
    /// γ; zero switches pruning off entirely.
    pub base_beam: f64,
    pub max_queue: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            base_beam: DEFAULT_BASE_BEAM,
            max_queue: DEFAULT_MAX_QUEUE,
        }
    }
}

impl ParserConfig {
    /// No pruning and no work limit. Only sensible on small grammars without
    /// left recursion.
    pub fn exact() -> Self {
        ParserConfig {
            base_beam: 0.0,
            max_queue: usize::MAX,
        }
    }

    pub fn with_beam(base_beam: f64) -> Self {
        ParserConfig {
            base_beam,
            ..Default::default()
        }
    }

    pub fn is_exact(&self) -> bool {
        self.base_beam == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_beam) {
            return Err(Error::Config(format!(
                "base beam must lie in (0, 1] (or be 0 for exact mode), got {}",
                self.base_beam
            )));
        }
        if self.max_queue == 0 {
            return Err(Error::Config("max queue must be at least 1".into()));
        }
        Ok(())
    }
}

/// `p̃ · γ · n³`.
pub fn prune_threshold(best: f64, gamma: f64, n: usize) -> f64 {
    best * gamma * (n as f64).powi(BEAM_EXPONENT)
}

fn ln_prune_threshold(ln_best: f64, gamma: f64, n: usize) -> f64 {
    if gamma == 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_best + gamma.ln() + BEAM_EXPONENT as f64 * (n.max(1) as f64).ln()
}

#[derive(Debug)]
struct Deriv {
    rule: RuleId,
    prev: Option<Rc<Deriv>>,
}

fn deriv_vec(mut d: &Option<Rc<Deriv>>) -> Vec<RuleId> {
    let mut v = Vec::new();
    while let Some(c) = d {
        v.push(c.rule);
        d = &c.prev;
    }
    v.reverse();
    v
}

/// Compares two equally long rule sequences from their first rule.
fn lex_cmp(a: &Option<Rc<Deriv>>, b: &Option<Rc<Deriv>>) -> Ordering {
    let (mut x, mut y) = (a, b);
    let mut first_diff = Ordering::Equal;
    loop {
        match (x, y) {
            (Some(p), Some(q)) => {
                if Rc::ptr_eq(p, q) {
                    return first_diff;
                }
                if p.rule != q.rule {
                    first_diff = p.rule.cmp(&q.rule);
                }
                x = &p.prev;
                y = &q.prev;
            }
            _ => return first_diff,
        }
    }
}

/// A candidate analysis.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub top: Rc<Frame>,
    pub log_pd: f64,
    pub log_fom: f64,
    pub len: u32,
    deriv: Option<Rc<Deriv>>,
}

impl Candidate {
    pub fn initial(g: &Pcfg) -> Candidate {
        Candidate {
            top: Frame::root(g.start()),
            log_pd: 0.0,
            log_fom: 0.0,
            len: 0,
            deriv: None,
        }
    }

    /// The same analysis ranked under a different look-ahead.
    pub fn rescored(&self, lap: &mut LapCache<'_>) -> Candidate {
        Candidate {
            log_fom: self.log_pd + lap.ln_lap(&self.top),
            ..self.clone()
        }
    }

    pub fn derivation(&self) -> Vec<RuleId> {
        deriv_vec(&self.deriv)
    }

    pub fn stack(&self) -> Vec<u32> {
        self.top.symbols()
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greater means popped first: higher figure of merit, then the shorter
/// derivation, then the lexicographically smaller rule-id sequence.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_fom
            .total_cmp(&other.log_fom)
            .then_with(|| other.len.cmp(&self.len))
            .then_with(|| lex_cmp(&other.deriv, &self.deriv))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WordStats {
    /// ln Σ P_D over the queue when its word becomes the look-ahead.
    pub log_mass: f64,
    pub queue_size: usize,
    pub pops: u64,
    /// Successor analyses built from popped analyses.
    pub expansions: u64,
    /// Analyses admitted to the next queue.
    pub advanced: u64,
}

#[derive(Debug, Clone)]
pub struct CompleteParse {
    /// Unfactored and stop-augmented.
    pub tree: Tree,
    pub log_prob: f64,
    pub derivation: Vec<RuleId>,
}

#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub words: Vec<String>,
    pub completed: Vec<CompleteParse>,
    /// Best complete parse, or the completed partial tree on failure;
    /// stop-augmented and unfactored.
    pub best: Tree,
    pub best_log_prob: Option<f64>,
    pub failed: bool,
    /// One entry per queue `H_0 ..= H_n`; entry `i` describes the queue whose
    /// look-ahead is word `i` (the last one follows the end marker).
    pub per_word: Vec<WordStats>,
}

impl ParseOutput {
    /// Sum over the complete parses found.
    pub fn string_prob(&self) -> f64 {
        self.completed.iter().map(|c| c.log_prob.exp()).sum()
    }

    pub fn log_string_prob(&self) -> f64 {
        log_sum_exp(self.completed.iter().map(|c| c.log_prob))
    }

    /// Index of the first word no analysis could attach, if the parse failed.
    /// A failure to close the tree after the end marker reports the number of words.
    pub fn failure_position(&self) -> Option<usize> {
        if !self.failed {
            return None;
        }
        Some(
            self.per_word
                .iter()
                .position(|w| w.queue_size == 0)
                .map_or(self.words.len(), |i| i - 1),
        )
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub struct Parser<'a> {
    pub g: &'a Pcfg,
    pub model: &'a CondModel,
    pub lap: &'a LapTables,
    pub config: ParserConfig,
}

/// Result of working off one queue.
pub struct Advance {
    pub next: BinaryHeap<Candidate>,
    pub stats: WordStats,
}

impl<'a> Parser<'a> {
    pub fn new(g: &'a Pcfg, model: &'a CondModel, lap: &'a LapTables, config: ParserConfig) -> Self {
        Parser {
            g,
            model,
            lap,
            config,
        }
    }

    pub fn lookahead(&self, words: &[String], i: usize) -> Lookahead {
        match words.get(i) {
            Some(w) => Lookahead::Word(self.g.token_id(w)),
            None => Lookahead::End,
        }
    }

    /// Successors of `c` under every rule of its top symbol. Consumed-word
    /// successors come back in the second vector.
    pub fn derive_step<'c>(
        &self,
        c: &Candidate,
        la: Lookahead,
        here: &mut LapCache<'c>,
        there: &mut LapCache<'c>,
    ) -> (Vec<Candidate>, Vec<Candidate>) {
        let mut same = Vec::new();
        let mut advanced = Vec::new();
        let sym = c.top.sym;
        let scorer = self.model.scorer(self.g, &c.top);
        let terminal = match la {
            Lookahead::Word(Some(w)) => self.g.terminal_rule(sym, w),
            _ => None,
        };
        let rules = self.g.structural_rules(sym).iter().copied().chain(terminal);
        for r in rules {
            let p = scorer.prob(self.g, r);
            if p <= 0.0 {
                continue;
            }
            let consumes = matches!(self.g.rule(r).rhs, Rhs::Terminal(_));
            if la == Lookahead::End && !matches!(self.g.rule(r).rhs, Rhs::Epsilon) {
                continue;
            }
            let Step::Continue(top) = apply(self.g, &self.model.heads, &c.top, r) else {
                // the root only closes after the end marker, handled by `finish`
                continue;
            };
            let log_pd = c.log_pd + p.ln();
            let cache = if consumes { &mut *there } else { &mut *here };
            let log_fom = log_pd + cache.ln_lap(&top);
            let succ = Candidate {
                top,
                log_pd,
                log_fom,
                len: c.len + 1,
                deriv: Some(Rc::new(Deriv {
                    rule: r,
                    prev: c.deriv.clone(),
                })),
            };
            if consumes {
                advanced.push(succ);
            } else {
                same.push(succ);
            }
        }
        (same, advanced)
    }

    /// Works off the queue whose look-ahead is `la`; consumed-word successors
    /// are ranked with `next_la` and filtered by the beam.
    pub fn advance(&self, init: Vec<Candidate>, la: Lookahead, next_la: Lookahead) -> Advance {
        let mut here = LapCache::new(self.g, self.lap, la);
        let mut there = LapCache::new(self.g, self.lap, next_la);
        let mut stats = WordStats {
            log_mass: log_sum_exp(init.iter().map(|c| c.log_pd)),
            queue_size: init.len(),
            ..Default::default()
        };
        let mut queue: BinaryHeap<Candidate> = init.into();
        let mut next: BinaryHeap<Candidate> = BinaryHeap::new();
        let gamma = self.config.base_beam;
        let mut next_best = f64::NEG_INFINITY;
        while let Some(c) = queue.pop() {
            let threshold = ln_prune_threshold(next_best, gamma, next.len());
            if !next.is_empty() && c.log_fom < threshold {
                break;
            }
            if stats.pops as usize >= self.config.max_queue {
                break;
            }
            stats.pops += 1;
            let (same, advanced) = self.derive_step(&c, la, &mut here, &mut there);
            stats.expansions += (same.len() + advanced.len()) as u64;
            queue.extend(same);
            for a in advanced {
                if !next.is_empty() && a.log_fom < ln_prune_threshold(next_best, gamma, next.len()) {
                    continue;
                }
                next_best = next_best.max(a.log_fom);
                stats.advanced += 1;
                next.push(a);
            }
        }
        Advance { next, stats }
    }

    /// Closes analyses that have consumed the end marker.
    fn finish(&self, init: Vec<Candidate>, stats: &mut WordStats) -> Vec<CompleteParse> {
        let mut queue: BinaryHeap<Candidate> = init.into();
        let mut done = Vec::new();
        while let Some(c) = queue.pop() {
            stats.pops += 1;
            let scorer = self.model.scorer(self.g, &c.top);
            let eps = self
                .g
                .structural_rules(c.top.sym)
                .iter()
                .copied()
                .find(|&r| self.g.rule(r).rhs == Rhs::Epsilon);
            let Some(r) = eps else { continue };
            let p = scorer.prob(self.g, r);
            if p <= 0.0 {
                continue;
            }
            stats.expansions += 1;
            let log_pd = c.log_pd + p.ln();
            let deriv = Some(Rc::new(Deriv {
                rule: r,
                prev: c.deriv.clone(),
            }));
            match apply(self.g, &self.model.heads, &c.top, r) {
                Step::Continue(top) => queue.push(Candidate {
                    top,
                    log_pd,
                    log_fom: log_pd,
                    len: c.len + 1,
                    deriv,
                }),
                Step::Complete(root) => done.push(complete(self.g, &root, log_pd, &deriv)),
            }
        }
        done
    }

    pub fn parse(&self, words: &[String]) -> Result<ParseOutput> {
        self.config.validate()?;
        let Some(last) = words.last() else {
            return Err(Error::Empty("cannot parse an empty sentence".into()));
        };
        let end = self.end_token();
        if last != end {
            return Err(Error::Config(format!("sentence must end with the end marker {end:?}")));
        }
        let n = words.len();
        let mut per_word = Vec::with_capacity(n + 1);
        let mut current = vec![Candidate::initial(self.g)];
        let mut last_top: (usize, Candidate) = (0, current[0].clone());
        let mut completed = Vec::new();
        for i in 0..=n {
            if current.is_empty() {
                per_word.push(WordStats {
                    log_mass: f64::NEG_INFINITY,
                    ..Default::default()
                });
                continue;
            }
            if let Some(best) = current.iter().max() {
                last_top = (i, best.clone());
            }
            if i == n {
                let mut stats = WordStats {
                    log_mass: log_sum_exp(current.iter().map(|c| c.log_pd)),
                    queue_size: current.len(),
                    ..Default::default()
                };
                completed = self.finish(std::mem::take(&mut current), &mut stats);
                per_word.push(stats);
                break;
            }
            let adv = self.advance(
                std::mem::take(&mut current),
                self.lookahead(words, i),
                self.lookahead(words, i + 1),
            );
            per_word.push(adv.stats);
            current = adv.next.into_vec();
        }
        let failed = completed.is_empty();
        let (best, best_log_prob) = if failed {
            let (pos, c) = &last_top;
            (complete_partial(self, c, &words[*pos..]), None)
        } else {
            let mut best = &completed[0];
            for c in &completed[1..] {
                if c.log_prob > best.log_prob {
                    best = c;
                }
            }
            (best.tree.clone(), Some(best.log_prob))
        };
        Ok(ParseOutput {
            words: words.to_vec(),
            completed,
            best,
            best_log_prob,
            failed,
            per_word,
        })
    }

    pub fn end_token(&self) -> &str {
        // STOP rewrites only to the end marker
        self.g
            .nt_id(crate::treebank::STOP_LABEL)
            .and_then(|s| {
                self.g.rules_for(s).iter().find_map(|&r| match self.g.rule(r).rhs {
                    Rhs::Terminal(w) => Some(self.g.token_name(w)),
                    _ => None,
                })
            })
            .unwrap_or(crate::treebank::DEFAULT_END_TOKEN)
    }
}

fn complete(g: &Pcfg, root: &Rc<Node>, log_pd: f64, deriv: &Option<Rc<Deriv>>) -> CompleteParse {
    CompleteParse {
        tree: root.to_tree(g),
        log_prob: log_pd,
        derivation: deriv_vec(deriv),
    }
}

/// Closes every open constituent of `c` and hangs the unconsumed words off
/// the root.
pub fn complete_partial(p: &Parser<'_>, c: &Candidate, remaining: &[String]) -> Tree {
    let mut t = close_partial(p.g, &p.model.heads, &c.top);
    t.children.extend(remaining.iter().map(Tree::leaf));
    t
}

/// Appends the end marker if it is missing.
pub fn with_end(words: &[String], end: &str) -> Vec<String> {
    let mut v = words.to_vec();
    if v.last().map(String::as_str) != Some(end) {
        v.push(end.to_string());
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadTable;
    use crate::treebank::{sentence_tree, DEFAULT_END_TOKEN};

    struct Setup {
        g: Pcfg,
        m: CondModel,
        lap: LapTables,
    }

    fn g1() -> Setup {
        let g = crate::fixtures::g1_grammar();
        let trees: Vec<Tree> = crate::fixtures::g1_trees().iter().map(crate::fixtures::prepare).collect();
        let m = CondModel::unconditioned(&g, HeadTable::default());
        let lap = LapTables::collect(&g, &trees, crate::lookahead::DEFAULT_K).unwrap();
        Setup { g, m, lap }
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn thresholds() {
        assert!((prune_threshold(1.0, 1e-11, 100) - 1e-5).abs() < 1e-20);
        assert!((prune_threshold(1.0, 1e-11, 1000) - 1e-2).abs() < 1e-15);
        assert_eq!(prune_threshold(0.5, 1e-11, 1), 0.5e-11);
        assert!((ln_prune_threshold(0.0, 1e-11, 100) - (1e-5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn root_expansion_is_deterministic() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let spot = Lookahead::Word(s.g.token_id("Spot"));
        let mut here = LapCache::new(&s.g, &s.lap, spot);
        let mut there = LapCache::new(&s.g, &s.lap, spot);
        let (same, adv) = p.derive_step(&Candidate::initial(&s.g), spot, &mut here, &mut there);
        assert!(adv.is_empty());
        assert_eq!(same.len(), 1);
        let names: Vec<&str> = same[0].stack().iter().map(|&x| s.g.nt_name(x)).collect();
        assert_eq!(names, ["S", "S†@S"]);
        assert_eq!(same[0].log_pd, 0.0);
    }

    #[test]
    fn terminal_must_match_lookahead() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let dt = Candidate {
            top: Rc::new(Frame {
                sym: s.g.nt_id("DT").unwrap(),
                kids: None,
                below: Some(Frame::root(s.g.nt_id("NP@DT").unwrap())),
            }),
            ..Candidate::initial(&s.g)
        };
        for (w, n) in [("the", 1), ("ball", 0)] {
            let la = Lookahead::Word(s.g.token_id(w));
            let mut here = LapCache::new(&s.g, &s.lap, la);
            let mut there = LapCache::new(&s.g, &s.lap, la);
            let (same, adv) = p.derive_step(&dt, la, &mut here, &mut there);
            assert!(same.is_empty());
            assert_eq!(adv.len(), n);
        }
    }

    #[test]
    fn spot_ran() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let out = p.parse(&words("Spot ran </s>")).unwrap();
        assert!(!out.failed);
        assert_eq!(out.completed.len(), 1);
        let expect = 0.6 * 0.75 * 0.6 * 0.75;
        assert!((out.string_prob() - expect).abs() < 1e-12);
        assert_eq!(
            sentence_tree(&out.best, DEFAULT_END_TOKEN).to_string(),
            "(S (NP (NN Spot)) (VP (VBD ran)))"
        );
        for w in out.per_word.windows(2) {
            assert!(w[1].log_mass <= w[0].log_mass);
        }
    }

    #[test]
    fn ball_chased() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::exact());
        let out = p.parse(&words("ball chased </s>")).unwrap();
        let expect = 0.6 * 0.2 * 0.75 * 0.25;
        assert!((out.string_prob() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn garden_path_keeps_words() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let out = p.parse(&words("the the </s>")).unwrap();
        assert!(out.failed);
        assert!(out.completed.is_empty());
        assert_eq!(out.best.yield_tokens(), ["the", "the", "</s>"]);
        assert_eq!(out.failure_position(), Some(1));
        let t = sentence_tree(&out.best, DEFAULT_END_TOKEN);
        assert_eq!(t.yield_tokens(), ["the", "the"]);
        assert_eq!(t.label, "S");
    }

    #[test]
    fn unknown_first_word_fails_cleanly() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        let out = p.parse(&words("zebra ran </s>")).unwrap();
        assert!(out.failed);
        assert_eq!(out.best.to_string(), "(S† zebra ran </s>)");
        assert_eq!(out.per_word[0].log_mass, 0.0);
        assert_eq!(out.per_word[1].log_mass, f64::NEG_INFINITY);
    }

    #[test]
    fn input_validation() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::default());
        assert!(p.parse(&[]).is_err());
        assert!(p.parse(&words("Spot ran")).is_err());
        let bad = Parser::new(&s.g, &s.m, &s.lap, ParserConfig { base_beam: 2.0, max_queue: 1 });
        assert!(bad.parse(&words("Spot ran </s>")).is_err());
    }

    #[test]
    fn complete_partial_of_finished_analysis_is_unchanged() {
        let s = g1();
        let p = Parser::new(&s.g, &s.m, &s.lap, ParserConfig::exact());
        let out = p.parse(&words("Spot ran </s>")).unwrap();
        let c = &out.completed[0];
        // replaying all but the final empty rule leaves a single open frame
        let mut top = Frame::root(s.g.start());
        for &r in &c.derivation[..c.derivation.len() - 1] {
            if let Step::Continue(f) = apply(&s.g, &s.m.heads, &top, r) {
                top = f;
            }
        }
        let cand = Candidate {
            top,
            ..Candidate::initial(&s.g)
        };
        assert_eq!(complete_partial(&p, &cand, &[]), c.tree);
    }

    #[test]
    fn tie_break_is_total() {
        let a = Rc::new(Deriv { rule: 1, prev: None });
        let b = Rc::new(Deriv { rule: 2, prev: None });
        let shared = Rc::new(Deriv { rule: 0, prev: None });
        let a2 = Some(Rc::new(Deriv { rule: 5, prev: Some(a.clone()) }));
        let b2 = Some(Rc::new(Deriv { rule: 3, prev: Some(b.clone()) }));
        assert_eq!(lex_cmp(&a2, &b2), Ordering::Less);
        let c1 = Some(Rc::new(Deriv { rule: 4, prev: Some(shared.clone()) }));
        let c2 = Some(Rc::new(Deriv { rule: 7, prev: Some(shared) }));
        assert_eq!(lex_cmp(&c1, &c2), Ordering::Less);
        assert_eq!(lex_cmp(&c1, &c1), Ordering::Equal);
    }
}
