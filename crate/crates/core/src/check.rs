//! Beam parser against exhaustive enumeration on small grammars.

use std::collections::BTreeMap;

use crate::conditioning::CondModel;
use crate::error::Result;
use crate::grammar::{induce_pcfg, Pcfg};
use crate::heads::HeadTable;
use crate::lookahead::{LapTables, DEFAULT_K};
use crate::oracle::{enumerate_complete_parses, OracleConfig};
use crate::parser::{Parser, ParserConfig};
use crate::pipeline::prepare_trees;
use crate::treebank::{Corpus, Role, Tree, DEFAULT_END_TOKEN};

/// Slack allowed before a beam estimate counts as exceeding the oracle; the
/// two sums add the same terms in different orders.
pub const BOUND_SLACK: f64 = 1e-12;

/// A plain PCFG with look-ahead tables and no conditioning, the model the
/// oracle enumerates.
#[derive(Debug, Clone)]
pub struct PlainModel {
    pub grammar: Pcfg,
    pub cond: CondModel,
    pub lap: LapTables,
}

impl PlainModel {
    /// Trains on sentence trees that are neither augmented nor factored.
    pub fn from_trees(trees: &[Tree]) -> Result<PlainModel> {
        let prepared = prepare_trees(trees, DEFAULT_END_TOKEN)?;
        let grammar = induce_pcfg(&Corpus::new(prepared.clone(), Role::Train))?;
        let cond = CondModel::unconditioned(&grammar, HeadTable::default());
        let lap = LapTables::collect(&grammar, &prepared, DEFAULT_K)?;
        Ok(PlainModel { grammar, cond, lap })
    }

    pub fn parser(&self, cfg: ParserConfig) -> Parser<'_> {
        Parser::new(&self.grammar, &self.cond, &self.lap, cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCheck {
    pub words: Vec<String>,
    pub oracle_prob: f64,
    pub beam_prob: f64,
    /// `|beam − oracle| / oracle`; zero when both are zero.
    pub rel_err: f64,
    /// Same parse trees, each with a probability within `rel_tol` of the oracle's.
    pub parses_match: bool,
    pub bound_violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub base_beam: f64,
    pub sentences: Vec<SentenceCheck>,
}

impl OracleReport {
    pub fn max_rel_err(&self) -> f64 {
        self.sentences.iter().map(|s| s.rel_err).fold(0.0, f64::max)
    }

    pub fn bound_violations(&self) -> usize {
        self.sentences.iter().filter(|s| s.bound_violation).count()
    }

    pub fn parse_set_mismatches(&self) -> usize {
        self.sentences.iter().filter(|s| !s.parses_match).count()
    }

    pub fn zero_mass(&self) -> usize {
        self.sentences.iter().filter(|s| s.oracle_prob == 0.0).count()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        (a - b).abs() / b
    }
}

/// Parses every sentence (end marker included) with the beam parser and
/// compares against the enumerated parses.
pub fn check_sentences(
    m: &PlainModel,
    sentences: &[Vec<String>],
    cfg: ParserConfig,
    oracle: &OracleConfig,
    rel_tol: f64,
) -> Result<OracleReport> {
    let parser = m.parser(cfg);
    let mut out = Vec::with_capacity(sentences.len());
    for words in sentences {
        let exact = enumerate_complete_parses(&m.grammar, words, oracle)?;
        let po = parser.parse(words)?;
        let oracle_prob: f64 = exact.iter().map(|p| p.prob).sum();
        let beam_prob = po.string_prob();
        let mut want: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in &exact {
            want.entry(p.tree.to_string()).or_default().push(p.prob);
        }
        let mut got: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for c in &po.completed {
            got.entry(c.tree.to_string()).or_default().push(c.log_prob.exp());
        }
        let parses_match = want.len() == got.len()
            && want.iter().all(|(t, ps)| {
                got.get(t).is_some_and(|qs| {
                    let (mut ps, mut qs) = (ps.clone(), qs.clone());
                    ps.sort_by(f64::total_cmp);
                    qs.sort_by(f64::total_cmp);
                    ps.len() == qs.len() && ps.iter().zip(&qs).all(|(p, q)| rel(*q, *p) <= rel_tol)
                })
            });
        out.push(SentenceCheck {
            words: words.clone(),
            oracle_prob,
            beam_prob,
            rel_err: rel(beam_prob, oracle_prob),
            parses_match,
            bound_violation: beam_prob > oracle_prob * (1.0 + BOUND_SLACK),
        });
    }
    Ok(OracleReport {
        base_beam: cfg.base_beam,
        sentences: out,
    })
}
