//! Labeled bracket scoring and parser efficiency statistics.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::parser::ParseOutput;
use crate::treebank::{Tree, AXIOM_LABEL, STOP_LABEL};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledSpan {
    pub label: String,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

impl LabeledSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Overlapping without either containing the other.
    pub fn crosses(&self, other: &LabeledSpan) -> bool {
        (self.start < other.start && other.start < self.end && self.end < other.end)
            || (other.start < self.start && self.start < other.end && other.end < self.end)
    }
}

/// Spans of all phrasal nodes, preterminals, the axiom and STOP excluded.
pub fn constituents(t: &Tree) -> Vec<LabeledSpan> {
    fn walk(t: &Tree, at: &mut usize, out: &mut Vec<LabeledSpan>) {
        if t.is_leaf() {
            *at += 1;
            return;
        }
        let start = *at;
        let slot = out.len();
        let keep = !t.is_preterminal() && t.label != AXIOM_LABEL && t.label != STOP_LABEL;
        if keep {
            // reserve the slot so the list stays in preorder
            out.push(LabeledSpan {
                label: t.label.clone(),
                start,
                end: start,
            });
        }
        for c in &t.children {
            walk(c, at, out);
        }
        if keep {
            out[slot].end = *at;
        }
    }
    let mut out = Vec::new();
    walk(t, &mut 0, &mut out);
    out
}

fn multiset(spans: &[LabeledSpan]) -> BTreeMap<&LabeledSpan, usize> {
    let mut m = BTreeMap::new();
    for s in spans {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairScore {
    pub matched: usize,
    pub gold: usize,
    pub test: usize,
    /// Test brackets of two or more words crossing some gold bracket.
    pub crossing: usize,
}

impl PairScore {
    pub fn exact(&self) -> bool {
        self.matched == self.gold && self.matched == self.test
    }
}

pub fn score_pair(gold: &Tree, test: &Tree) -> Result<PairScore> {
    let (gy, ty) = (gold.yield_tokens(), test.yield_tokens());
    if gy != ty {
        return Err(Error::YieldMismatch(format!(
            "gold yield {:?} differs from test yield {:?}",
            gy.join(" "),
            ty.join(" ")
        )));
    }
    let g = constituents(gold);
    let t = constituents(test);
    let (gm, tm) = (multiset(&g), multiset(&t));
    let matched = tm
        .iter()
        .map(|(s, &n)| n.min(gm.get(s).copied().unwrap_or(0)))
        .sum();
    let crossing = t
        .iter()
        .filter(|s| s.len() > 1 && g.iter().any(|x| s.crosses(x)))
        .count();
    Ok(PairScore {
        matched,
        gold: g.len(),
        test: t.len(),
        crossing,
    })
}

/// Efficiency counters of one parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseStats {
    pub failed: bool,
    /// Tokens including the end marker.
    pub words: usize,
    pub expansions: u64,
    pub advanced: u64,
}

impl ParseStats {
    pub fn of(po: &ParseOutput) -> ParseStats {
        ParseStats {
            failed: po.failed,
            words: po.words.len(),
            expansions: po.per_word.iter().map(|w| w.expansions).sum(),
            advanced: po.per_word.iter().map(|w| w.advanced).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsevalReport {
    pub sentences: usize,
    pub matched: usize,
    pub gold: usize,
    pub test: usize,
    pub lr: f64,
    pub lp: f64,
    /// Mean crossing brackets per sentence.
    pub cb: f64,
    pub zero_cb: f64,
    pub le2_cb: f64,
    pub exact_match: f64,
    pub failed_pct: f64,
    pub avg_expansions_per_word: f64,
    pub avg_advanced_per_word: f64,
}

impl ParsevalReport {
    /// `1 − (LR + LP)/2`, as a fraction.
    pub fn error_rate(&self) -> f64 {
        1.0 - (self.lr + self.lp) / 200.0
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Micro-averaged scores over aligned gold/test pairs. `stats` is either empty
/// or aligned with `pairs`.
pub fn score_corpus(pairs: &[(Tree, Tree)], stats: &[ParseStats]) -> Result<ParsevalReport> {
    if !stats.is_empty() && stats.len() != pairs.len() {
        return Err(Error::Alignment(format!(
            "{} parse records for {} sentence pairs",
            stats.len(),
            pairs.len()
        )));
    }
    let mut r = ParsevalReport {
        sentences: pairs.len(),
        ..Default::default()
    };
    let (mut crossing, mut zero, mut le2, mut exact) = (0usize, 0usize, 0usize, 0usize);
    for (i, (g, t)) in pairs.iter().enumerate() {
        let s = score_pair(g, t).map_err(|e| match e {
            Error::YieldMismatch(m) => Error::YieldMismatch(format!("sentence {}: {m}", i + 1)),
            e => e,
        })?;
        r.matched += s.matched;
        r.gold += s.gold;
        r.test += s.test;
        crossing += s.crossing;
        zero += (s.crossing == 0) as usize;
        le2 += (s.crossing <= 2) as usize;
        exact += s.exact() as usize;
    }
    let n = pairs.len();
    r.lr = pct(r.matched, r.gold);
    r.lp = pct(r.matched, r.test);
    r.cb = if n == 0 { 0.0 } else { crossing as f64 / n as f64 };
    r.zero_cb = pct(zero, n);
    r.le2_cb = pct(le2, n);
    r.exact_match = pct(exact, n);
    if !stats.is_empty() {
        let words: usize = stats.iter().map(|s| s.words).sum();
        let failed = stats.iter().filter(|s| s.failed).count();
        r.failed_pct = 100.0 * failed as f64 / n as f64;
        if words > 0 {
            r.avg_expansions_per_word = stats.iter().map(|s| s.expansions).sum::<u64>() as f64 / words as f64;
            r.avg_advanced_per_word = stats.iter().map(|s| s.advanced).sum::<u64>() as f64 / words as f64;
        }
    }
    Ok(r)
}

impl fmt::Display for ParsevalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 11] = [
            ("sentences", self.sentences.to_string()),
            ("LR", format!("{:.2}", self.lr)),
            ("LP", format!("{:.2}", self.lp)),
            ("CB", format!("{:.2}", self.cb)),
            ("0 CB", format!("{:.2}", self.zero_cb)),
            ("<=2 CB", format!("{:.2}", self.le2_cb)),
            ("exact", format!("{:.2}", self.exact_match)),
            ("failed", format!("{:.2}", self.failed_pct)),
            ("expansions/word", format!("{:.1}", self.avg_expansions_per_word)),
            ("advanced/word", format!("{:.1}", self.avg_advanced_per_word)),
            ("brackets", format!("{}/{}/{}", self.matched, self.gold, self.test)),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<16} {v:>10}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Tree {
        s.parse().unwrap()
    }

    const FIG: &str = "(S (NP (NN Spot)) (VP (VBD chased) (NP (DT the) (NN ball))))";

    fn span(label: &str, start: usize, end: usize) -> LabeledSpan {
        LabeledSpan {
            label: label.into(),
            start,
            end,
        }
    }

    #[test]
    fn figure_constituents() {
        assert_eq!(
            constituents(&t(FIG)),
            [span("S", 0, 4), span("NP", 0, 1), span("VP", 1, 4), span("NP", 2, 4)]
        );
        assert!(constituents(&t("(NN dog)")).is_empty());
        let aug = t("(S† (S (NP (NN Spot)) (VP (VBD ran))) (STOP </s>))");
        assert_eq!(constituents(&aug), [span("S", 0, 2), span("NP", 0, 1), span("VP", 1, 2)]);
    }

    #[test]
    fn garden_path_tree_scores_closed_constituents() {
        let partial = t("(S (NP (DT the)) the)");
        assert_eq!(constituents(&partial), [span("S", 0, 2), span("NP", 0, 1)]);
    }

    #[test]
    fn identity_pair() {
        let s = score_pair(&t(FIG), &t(FIG)).unwrap();
        assert_eq!(s, PairScore { matched: 4, gold: 4, test: 4, crossing: 0 });
        assert!(s.exact());
    }

    #[test]
    fn missing_object() {
        let test = t("(S (NP (NN Spot)) (VP (VBD chased) (DT the) (NN ball)))");
        let r = score_corpus(&[(t(FIG), test)], &[]).unwrap();
        assert_eq!(r.lp, 100.0);
        assert_eq!(r.lr, 75.0);
        assert_eq!(r.exact_match, 0.0);
    }

    #[test]
    fn crossing_bracket() {
        let gold = t("(S (A (x a) (x b)) (B (x c) (x d)))");
        let test = t("(S (x a) (C (x b) (x c)) (x d))");
        let s = score_pair(&gold, &test).unwrap();
        assert_eq!(s.crossing, 1);
        assert_eq!(s.matched, 1);
        assert!(span("C", 1, 3).crosses(&span("A", 0, 2)));
        assert!(!span("C", 1, 3).crosses(&span("S", 0, 4)));
    }

    #[test]
    fn single_word_spans_never_cross() {
        let gold = t("(S (A (x a) (x b)) (x c))");
        let test = t("(S (x a) (B (x b)) (x c))");
        assert_eq!(score_pair(&gold, &test).unwrap().crossing, 0);
    }

    #[test]
    fn duplicates_are_a_multiset() {
        let gold = t("(S (NP (NP (NN a))) (VP (V b)))");
        let test = t("(S (NP (NN a)) (VP (V b)))");
        let s = score_pair(&gold, &test).unwrap();
        assert_eq!((s.matched, s.gold, s.test), (3, 4, 3));
    }

    #[test]
    fn micro_average() {
        let a_gold = t(FIG);
        let a_test = t("(S (NP (NN Spot)) (VP (VBD chased) (DT the) (NN ball)))");
        let b = t("(S (NP (NN Spot)) (VP (VBD ran) (NP (DT the) (NN ball))))");
        let r = score_corpus(&[(a_gold, a_test), (b.clone(), b)], &[]).unwrap();
        assert_eq!(r.lr, 87.5);
        assert_eq!(r.exact_match, 50.0);
    }

    #[test]
    fn failure_counting() {
        let p = t(FIG);
        let pairs = vec![(p.clone(), p); 10];
        let mut stats = vec![
            ParseStats {
                failed: false,
                words: 5,
                expansions: 10,
                advanced: 2
            };
            10
        ];
        stats[3].failed = true;
        let r = score_corpus(&pairs, &stats).unwrap();
        assert_eq!(r.failed_pct, 10.0);
        assert_eq!(r.avg_expansions_per_word, 2.0);
        assert!(score_corpus(&pairs, &stats[..3]).is_err());
    }

    #[test]
    fn yields_must_agree() {
        assert!(matches!(
            score_pair(&t("(S (x a))"), &t("(S (x b))")),
            Err(Error::YieldMismatch(_))
        ));
    }
}
