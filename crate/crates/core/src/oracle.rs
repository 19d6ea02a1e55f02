//! Brute-force reference for the beam parser.
//!
//! Everything here walks leftmost derivations of the plain factored PCFG
//! depth first, without any beam, look-ahead or conditioning. Branches are
//! dropped only when their probability is exactly zero or when they provably
//! cannot cover the remaining words, so the results are exact as long as the
//! step budget suffices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grammar::{unfactor_tree, NtId, Pcfg, Rhs, RuleId, TokId};
use crate::treebank::{Tree, EPSILON_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_derivation_steps: u64,
    /// Probability mass that may be left unexplored when the budget runs out.
    pub mass_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_derivation_steps: 50_000_000,
            mass_tolerance: 1e-12,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_derivation_steps == 0 || !(self.mass_tolerance > 0.0) {
            return Err(Error::Config(
                "oracle step budget and mass tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParse {
    /// Unfactored, stop-augmented.
    pub tree: Tree,
    pub prob: f64,
    pub derivation: Vec<RuleId>,
}

struct Search<'a> {
    g: &'a Pcfg,
    cfg: OracleConfig,
    steps: u64,
    unexplored: f64,
    stack: Vec<NtId>,
    rules: Vec<RuleId>,
}

impl<'a> Search<'a> {
    fn new(g: &'a Pcfg, cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Search {
            g,
            cfg,
            steps: 0,
            unexplored: 0.0,
            stack: vec![g.start()],
            rules: Vec::new(),
        })
    }

    /// Counts the step and reports whether the branch may be explored.
    fn tick(&mut self, p: f64) -> bool {
        self.steps += 1;
        if self.steps > self.cfg.max_derivation_steps {
            self.unexplored += p;
            return false;
        }
        true
    }

    fn finish<T>(self, value: T) -> Result<T> {
        if self.unexplored > self.cfg.mass_tolerance {
            return Err(Error::OracleBudget {
                steps: self.steps,
                unexplored: self.unexplored,
            });
        }
        Ok(value)
    }

    /// Symbols that must each produce at least one word: every unfactored
    /// constituent has a nonempty yield.
    fn min_words(&self) -> usize {
        self.stack
            .iter()
            .filter(|&&a| !self.g.nt_info(a).is_factored())
            .count()
    }

    /// Runs `visit` for every rule that may rewrite the popped top symbol,
    /// restoring the stack afterwards.
    fn expand(&mut self, words: &[TokId], pos: usize, p: f64, on: &mut impl FnMut(&mut Self, usize, f64, bool)) {
        let Some(top) = self.stack.pop() else { return };
        for &r in self.g.rules_for(top) {
            let q = p * self.g.prob(r);
            if q == 0.0 {
                continue;
            }
            self.rules.push(r);
            match self.g.rule(r).rhs {
                Rhs::Terminal(w) => {
                    if words.get(pos) == Some(&w) {
                        on(self, pos + 1, q, true);
                    }
                }
                Rhs::Binary(a, b) => {
                    self.stack.push(b);
                    self.stack.push(a);
                    on(self, pos, q, false);
                    self.stack.pop();
                    self.stack.pop();
                }
                Rhs::Epsilon => on(self, pos, q, false),
            }
            self.rules.pop();
        }
        self.stack.push(top);
    }

    fn complete(&mut self, words: &[TokId], pos: usize, p: f64, out: &mut Vec<(Vec<RuleId>, f64)>) {
        if !self.tick(p) {
            return;
        }
        if self.stack.is_empty() {
            if pos == words.len() {
                out.push((self.rules.clone(), p));
            }
            return;
        }
        if self.min_words() > words.len() - pos {
            return;
        }
        self.expand(words, pos, p, &mut |s, pos, q, _| s.complete(words, pos, q, out));
    }

    fn prefix(&mut self, words: &[TokId], pos: usize, p: f64, total: &mut f64) {
        if !self.tick(p) {
            return;
        }
        self.expand(words, pos, p, &mut |s, next, q, consumed| {
            if consumed && next == words.len() {
                *total += q;
            } else {
                s.prefix(words, next, q, total);
            }
        });
    }

    fn language(&mut self, max_len: usize, words: &mut Vec<TokId>, p: f64, out: &mut BTreeMap<Vec<TokId>, f64>) {
        if !self.tick(p) {
            return;
        }
        if self.stack.is_empty() {
            *out.entry(words.clone()).or_insert(0.0) += p;
            return;
        }
        if words.len() + self.min_words() > max_len {
            return;
        }
        let Some(&top) = self.stack.last() else { return };
        if self.g.is_preterminal(top) {
            // generate instead of match
            self.stack.pop();
            for &r in self.g.rules_for(top) {
                if let Rhs::Terminal(w) = self.g.rule(r).rhs {
                    let q = p * self.g.prob(r);
                    if q == 0.0 {
                        continue;
                    }
                    words.push(w);
                    self.language(max_len, words, q, out);
                    words.pop();
                }
            }
            self.stack.push(top);
            return;
        }
        let w = words.clone();
        self.expand(&w, w.len(), p, &mut |s, _, q, _| s.language(max_len, words, q, out));
    }
}

fn token_ids(g: &Pcfg, words: &[String]) -> Option<Vec<TokId>> {
    words.iter().map(|w| g.token_id(w)).collect()
}

/// Rebuilds the factored tree of a leftmost derivation, independently of the
/// parser's own state machine.
pub fn derivation_tree(g: &Pcfg, rules: &[RuleId]) -> Result<Tree> {
    fn build(g: &Pcfg, rules: &[RuleId], at: &mut usize) -> Result<Tree> {
        let Some(&r) = rules.get(*at) else {
            return Err(Error::Factoring("derivation ends before the tree is complete".into()));
        };
        *at += 1;
        let rule = g.rule(r);
        let label = g.nt_name(rule.lhs);
        Ok(match rule.rhs {
            Rhs::Binary(..) => {
                let a = build(g, rules, at)?;
                let b = build(g, rules, at)?;
                Tree::node(label, vec![a, b])
            }
            Rhs::Terminal(w) => Tree::node(label, vec![Tree::leaf(g.token_name(w))]),
            Rhs::Epsilon => Tree::node(label, vec![Tree::leaf(EPSILON_TOKEN)]),
        })
    }
    let mut at = 0;
    let t = build(g, rules, &mut at)?;
    if at != rules.len() {
        return Err(Error::Factoring("derivation continues past a complete tree".into()));
    }
    Ok(t)
}

/// Every complete parse of `words` (which must include the end marker), in
/// depth-first order.
pub fn enumerate_complete_parses(g: &Pcfg, words: &[String], cfg: &OracleConfig) -> Result<Vec<OracleParse>> {
    let mut s = Search::new(g, *cfg)?;
    let Some(ids) = token_ids(g, words) else {
        return s.finish(Vec::new());
    };
    let mut found = Vec::new();
    s.complete(&ids, 0, 1.0, &mut found);
    let found = s.finish(found)?;
    found
        .into_iter()
        .map(|(derivation, prob)| {
            let tree = unfactor_tree(&derivation_tree(g, &derivation)?)?;
            Ok(OracleParse { tree, prob, derivation })
        })
        .collect()
}

/// Sum over all complete parses.
pub fn exact_string_probability(g: &Pcfg, words: &[String], cfg: &OracleConfig) -> Result<f64> {
    Ok(enumerate_complete_parses(g, words, cfg)?.iter().map(|p| p.prob).sum())
}

/// Total probability of the leftmost partial derivations whose last rule
/// generates the final word of `prefix`. The empty prefix has probability 1.
pub fn exact_prefix_probability(g: &Pcfg, prefix: &[String], cfg: &OracleConfig) -> Result<f64> {
    let mut s = Search::new(g, *cfg)?;
    if prefix.is_empty() {
        return s.finish(1.0);
    }
    let Some(ids) = token_ids(g, prefix) else {
        return s.finish(0.0);
    };
    let mut total = 0.0;
    s.prefix(&ids, 0, 1.0, &mut total);
    s.finish(total)
}

/// `P(w | prefix)` as a ratio of prefix probabilities.
pub fn exact_word_probability(g: &Pcfg, prefix: &[String], w: &str, cfg: &OracleConfig) -> Result<f64> {
    let den = exact_prefix_probability(g, prefix, cfg)?;
    if den == 0.0 {
        return Err(Error::ZeroProbability(format!("prefix {:?}", prefix.join(" "))));
    }
    let mut longer = prefix.to_vec();
    longer.push(w.to_string());
    Ok(exact_prefix_probability(g, &longer, cfg)? / den)
}

/// Conditional probability of each word of a sentence given the words
/// before it. Entries after a zero-probability prefix are zero.
pub fn exact_word_probabilities(g: &Pcfg, words: &[String], cfg: &OracleConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(words.len());
    let mut prev = 1.0;
    for i in 1..=words.len() {
        let p = exact_prefix_probability(g, &words[..i], cfg)?;
        out.push(if prev > 0.0 { p / prev } else { 0.0 });
        prev = p;
    }
    Ok(out)
}

/// Every sentence of at most `max_len` tokens (end marker included) the
/// grammar generates, with its string probability.
pub fn enumerate_language(g: &Pcfg, max_len: usize, cfg: &OracleConfig) -> Result<BTreeMap<Vec<String>, f64>> {
    let mut s = Search::new(g, *cfg)?;
    let mut out = BTreeMap::new();
    s.language(max_len, &mut Vec::new(), 1.0, &mut out);
    let out = s.finish(out)?;
    Ok(out
        .into_iter()
        .map(|(ids, p)| (ids.iter().map(|&w| g.token_name(w).to_string()).collect(), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grammar::NaryGrammar;
    use crate::treebank::augment_with_stop;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn spot_ran_has_one_parse() {
        let g = fixtures::g1_grammar();
        let ps = enumerate_complete_parses(&g, &words("Spot ran </s>"), &OracleConfig::default()).unwrap();
        assert_eq!(ps.len(), 1);
        assert!(close(ps[0].prob, 0.6 * 0.75 * 0.6 * 0.75));
        let gold = augment_with_stop(&fixtures::g1_trees()[0], "</s>").unwrap();
        assert_eq!(ps[0].tree, gold);
    }

    #[test]
    fn string_probabilities() {
        let g = fixtures::g1_grammar();
        let cfg = OracleConfig::default();
        let p = exact_string_probability(&g, &words("the dog ran </s>"), &cfg).unwrap();
        assert!(close(p, 0.4 * 0.2 * 0.75 * 0.75));
        assert_eq!(exact_string_probability(&g, &words("the the </s>"), &cfg).unwrap(), 0.0);
        assert_eq!(exact_string_probability(&g, &words("zebra </s>"), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn agrees_with_unfactored_grammar() {
        // an independent route to the same number: n-ary relative frequencies
        let trees = fixtures::g1_trees();
        let nary = NaryGrammar::induce(
            &trees.iter().map(|t| augment_with_stop(t, "</s>").unwrap()).collect::<Vec<_>>(),
        );
        let g = fixtures::g1_grammar();
        for t in &trees {
            let w: Vec<String> = t.yield_tokens().iter().map(|s| s.to_string()).chain(["</s>".into()]).collect();
            let total = exact_string_probability(&g, &w, &OracleConfig::default()).unwrap();
            let aug = augment_with_stop(t, "</s>").unwrap();
            let direct = nary.tree_log_probability(&aug).unwrap().exp();
            // G1 sentences are unambiguous
            assert!(close(total, direct));
        }
    }

    #[test]
    fn prefix_probabilities() {
        let g = fixtures::g1_grammar();
        let cfg = OracleConfig::default();
        assert!(close(exact_prefix_probability(&g, &words("the"), &cfg).unwrap(), 0.4));
        assert!(close(exact_prefix_probability(&g, &words("the dog"), &cfg).unwrap(), 0.08));
        assert!(close(exact_word_probability(&g, &words("the"), "dog", &cfg).unwrap(), 0.2));
        assert_eq!(exact_prefix_probability(&g, &[], &cfg).unwrap(), 1.0);
        let full = words("Spot chased the ball </s>");
        let enumerated = exact_string_probability(&g, &full, &cfg).unwrap();
        assert!(close(exact_prefix_probability(&g, &full, &cfg).unwrap(), enumerated));
        assert!(exact_word_probability(&g, &words("zebra"), "ran", &cfg).is_err());
    }

    #[test]
    fn next_word_distribution_is_proper() {
        let g = fixtures::g1_grammar();
        let cfg = OracleConfig::default();
        for prefix in ["", "Spot", "the", "the dog", "Spot chased", "Spot chased the"] {
            let prefix = words(prefix);
            let sum: f64 = g
                .tokens()
                .map(|(_, w)| exact_word_probability(&g, &prefix, w, &cfg).unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-9, "{prefix:?}: {sum}");
        }
    }

    #[test]
    fn language_mass_is_complete_for_g1() {
        let g = fixtures::g1_grammar();
        let lang = enumerate_language(&g, 8, &OracleConfig::default()).unwrap();
        // the longest G1 sentence has a DT NN subject and object
        assert_eq!(lang.keys().map(Vec::len).max(), Some(6));
        let total: f64 = lang.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let cfg = OracleConfig::default();
        for (s, p) in &lang {
            assert!(close(exact_string_probability(&g, s, &cfg).unwrap(), *p));
        }
    }

    #[test]
    fn ambiguous_sentence_sums_parses() {
        let g = fixtures::grammar(fixtures::G2);
        let ps = enumerate_complete_parses(
            &g,
            &words("John saw the man with Mary </s>"),
            &OracleConfig::default(),
        )
        .unwrap();
        assert_eq!(ps.len(), 2);
        assert_ne!(ps[0].tree, ps[1].tree);
    }

    #[test]
    fn budget_is_enforced() {
        let g = fixtures::g1_grammar();
        let tight = OracleConfig {
            max_derivation_steps: 3,
            mass_tolerance: 1e-12,
        };
        let e = exact_string_probability(&g, &words("Spot ran </s>"), &tight).unwrap_err();
        assert!(matches!(e, Error::OracleBudget { .. }));
        let lenient = OracleConfig {
            max_derivation_steps: 3,
            mass_tolerance: 1.0,
        };
        assert!(exact_string_probability(&g, &words("Spot ran </s>"), &lenient).is_ok());
    }

    #[test]
    fn derivation_tree_rejects_truncation() {
        let g = fixtures::g1_grammar();
        let ps = enumerate_complete_parses(&g, &words("Spot ran </s>"), &OracleConfig::default()).unwrap();
        let d = &ps[0].derivation;
        assert!(derivation_tree(&g, &d[..d.len() - 1]).is_err());
        let mut longer = d.clone();
        longer.push(d[0]);
        assert!(derivation_tree(&g, &longer).is_err());
    }
}
