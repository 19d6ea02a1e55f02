//! Left factorization of trees and relative-frequency PCFG induction.
//!
//! A node `A -> X0 X1 .. Xk` becomes the chain
//! `A -> X0 A@X0`, `A@X0 -> X1 A@X0@X1`, ..., `A@X0@..@Xk -> <eps>`.
//! Preterminal expansions are left alone, so every rule of the factored
//! grammar is binary over nonterminals, a single terminal, or empty.

use std::collections::BTreeMap;
use std::fmt;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::treebank::{Corpus, Tree, EPSILON_TOKEN, FACTOR_SEP};

pub type NtId = u32;
pub type TokId = u32;
pub type RuleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Terminal,
    Nonterminal,
}

/// A grammar symbol as seen by the factoring transform.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub base: String,
    pub consumed: Vec<String>,
}

impl Symbol {
    pub fn terminal(tok: impl Into<String>) -> Self {
        Symbol {
            kind: SymbolKind::Terminal,
            base: tok.into(),
            consumed: Vec::new(),
        }
    }

    pub fn nonterminal(base: impl Into<String>, consumed: Vec<String>) -> Self {
        Symbol {
            kind: SymbolKind::Nonterminal,
            base: base.into(),
            consumed,
        }
    }

    /// Splits a rendered nonterminal label into base and consumed labels.
    pub fn parse_label(label: &str) -> Result<Symbol> {
        let mut parts = label.split(FACTOR_SEP);
        let base = parts.next().unwrap_or_default();
        let consumed: Vec<String> = parts.map(str::to_string).collect();
        if base.is_empty() || consumed.iter().any(String::is_empty) {
            return Err(Error::Factoring(format!("malformed factored label {label:?}")));
        }
        Ok(Symbol::nonterminal(base, consumed))
    }

    pub fn is_factored(&self) -> bool {
        !self.consumed.is_empty()
    }

    pub fn render(&self) -> String {
        factored_label(&self.base, &self.consumed)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn factored_label(base: &str, consumed: &[String]) -> String {
    let mut s = base.to_string();
    for c in consumed {
        s.push(FACTOR_SEP);
        s.push_str(c);
    }
    s
}

/// Label of the constituent whose factorization produced `s`.
pub fn constituent_of(s: &Symbol) -> Result<&str> {
    match s.kind {
        SymbolKind::Terminal => Err(Error::Config(format!(
            "constituent_of called on terminal {:?}",
            s.base
        ))),
        SymbolKind::Nonterminal => Ok(&s.base),
    }
}

fn check_shape(t: &Tree) -> Result<()> {
    let leaves = t.children.iter().filter(|c| c.is_leaf()).count();
    if leaves > 0 && t.children.len() > 1 {
        return Err(Error::InvalidTree(format!(
            "node {:?} mixes bare tokens with constituents",
            t.label
        )));
    }
    Ok(())
}

pub fn left_factor_tree(t: &Tree) -> Result<Tree> {
    if t.is_leaf() {
        return Ok(t.clone());
    }
    check_shape(t)?;
    if t.is_preterminal() {
        return Ok(t.clone());
    }
    let first = left_factor_tree(&t.children[0])?;
    let tail = factor_chain(&t.label, vec![t.children[0].label.clone()], &t.children[1..])?;
    Ok(Tree::node(t.label.clone(), vec![first, tail]))
}

fn factor_chain(base: &str, consumed: Vec<String>, rest: &[Tree]) -> Result<Tree> {
    let label = factored_label(base, &consumed);
    match rest.split_first() {
        None => Ok(Tree::node(label, vec![Tree::leaf(EPSILON_TOKEN)])),
        Some((next, more)) => {
            let head = left_factor_tree(next)?;
            let mut c = consumed;
            c.push(next.label.clone());
            let tail = factor_chain(base, c, more)?;
            Ok(Tree::node(label, vec![head, tail]))
        }
    }
}

/// Exact inverse of [`left_factor_tree`]; defined on complete factored trees only.
pub fn unfactor_tree(t: &Tree) -> Result<Tree> {
    if t.is_leaf() {
        if t.label.contains(FACTOR_SEP) {
            return Err(Error::Factoring(format!(
                "dangling factored chain at {:?}",
                t.label
            )));
        }
        return Ok(t.clone());
    }
    let sym = Symbol::parse_label(&t.label)?;
    if sym.is_factored() {
        return Err(Error::Factoring(format!(
            "factored node {:?} outside of a chain",
            t.label
        )));
    }
    if t.is_preterminal() {
        return Ok(t.clone());
    }
    if t.children.len() != 2 {
        return Err(Error::Factoring(format!(
            "node {:?} has {} children, expected 2",
            t.label,
            t.children.len()
        )));
    }
    let mut children = vec![unfactor_tree(&t.children[0])?];
    let mut consumed = vec![t.children[0].label.clone()];
    let mut link = &t.children[1];
    loop {
        let s = Symbol::parse_label(&link.label)?;
        if s.base != sym.base || s.consumed != consumed {
            return Err(Error::Factoring(format!(
                "chain node {:?} does not continue {:?}",
                link.label,
                factored_label(&sym.base, &consumed)
            )));
        }
        if link.is_leaf() {
            return Err(Error::Factoring(format!(
                "dangling factored chain at {:?}",
                link.label
            )));
        }
        match link.children.as_slice() {
            [eps] if eps.is_leaf() && eps.label == EPSILON_TOKEN => break,
            [next, rest] if !next.is_leaf() => {
                children.push(unfactor_tree(next)?);
                consumed.push(next.label.clone());
                link = rest;
            }
            _ => {
                return Err(Error::Factoring(format!(
                    "chain node {:?} is not closed by an empty expansion",
                    link.label
                )))
            }
        }
    }
    Ok(Tree::node(sym.base, children))
}

/// Right-hand side of a factored rule, in its textual form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RhsText {
    Binary(String, String),
    Terminal(String),
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rhs {
    Binary(NtId, NtId),
    Terminal(TokId),
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rule {
    pub lhs: NtId,
    pub rhs: Rhs,
}

/// Reads the local expansion of an internal node of a factored tree.
pub fn local_rule(t: &Tree) -> Result<(String, RhsText)> {
    match t.children.as_slice() {
        [c] if c.is_leaf() && c.label == EPSILON_TOKEN => Ok((t.label.clone(), RhsText::Epsilon)),
        [c] if c.is_leaf() => Ok((t.label.clone(), RhsText::Terminal(c.label.clone()))),
        [a, b] if !a.is_leaf() && !b.is_leaf() => Ok((
            t.label.clone(),
            RhsText::Binary(a.label.clone(), b.label.clone()),
        )),
        _ => Err(Error::Factoring(format!(
            "node {:?} does not match a factored rule shape",
            t.label
        ))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: FxHashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names.iter().enumerate().map(|(i, s)| (i as u32, s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NtInfo {
    /// The unfactored constituent label, itself a nonterminal of the grammar.
    pub base: NtId,
    pub consumed: Vec<String>,
    pub is_preterminal: bool,
}

impl NtInfo {
    pub fn is_factored(&self) -> bool {
        !self.consumed.is_empty()
    }
}

/// Factored PCFG with relative-frequency probabilities.
///
/// Nonterminal, token and rule ids are assigned in sorted order of their
/// textual form, so two grammars built from the same counts are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    nts: Interner,
    nt_info: Vec<NtInfo>,
    tokens: Interner,
    rules: Vec<Rule>,
    counts: Vec<u64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    lhs_counts: Vec<u64>,
    by_lhs: Vec<Vec<RuleId>>,
    structural: Vec<Vec<RuleId>>,
    terminal_rules: FxHashMap<(NtId, TokId), RuleId>,
    start: NtId,
}

impl Pcfg {
    pub fn from_counts(counts: &BTreeMap<(String, RhsText), u64>, start: &str) -> Result<Pcfg> {
        if counts.is_empty() {
            return Err(Error::Empty("no rules to build a grammar from".into()));
        }
        let mut nt_names: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let mut tok_names: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for (lhs, rhs) in counts.keys() {
            nt_names.insert(lhs.clone());
            nt_names.insert(Symbol::parse_label(lhs)?.base);
            match rhs {
                RhsText::Binary(a, b) => {
                    nt_names.insert(a.clone());
                    nt_names.insert(b.clone());
                }
                RhsText::Terminal(w) => {
                    tok_names.insert(w.clone());
                }
                RhsText::Epsilon => {}
            }
        }
        // bases of rhs symbols as well
        let extra: Vec<String> = nt_names
            .iter()
            .map(|n| Symbol::parse_label(n).map(|s| s.base))
            .collect::<Result<_>>()?;
        nt_names.extend(extra);
        let mut nts = Interner::default();
        for n in &nt_names {
            nts.intern(n);
        }
        let mut tokens = Interner::default();
        for w in &tok_names {
            tokens.intern(w);
        }
        let mut nt_info = Vec::with_capacity(nts.len());
        for (_, name) in nts.iter() {
            let s = Symbol::parse_label(name)?;
            nt_info.push(NtInfo {
                base: nts.get(&s.base).expect("base interned"),
                consumed: s.consumed,
                is_preterminal: false,
            });
        }
        let start_id = nts
            .get(start)
            .ok_or_else(|| Error::Config(format!("start symbol {start:?} has no rules")))?;

        let mut rules = Vec::with_capacity(counts.len());
        let mut rule_counts = Vec::with_capacity(counts.len());
        let mut lhs_counts = vec![0u64; nts.len()];
        // BTreeMap order over rendered text; ids follow it.
        for ((lhs, rhs), &c) in counts.iter() {
            if c == 0 {
                continue;
            }
            let l = nts.get(lhs).unwrap();
            let r = match rhs {
                RhsText::Binary(a, b) => Rhs::Binary(nts.get(a).unwrap(), nts.get(b).unwrap()),
                RhsText::Terminal(w) => {
                    nt_info[l as usize].is_preterminal = true;
                    Rhs::Terminal(tokens.get(w).unwrap())
                }
                RhsText::Epsilon => {
                    if !nt_info[l as usize].is_factored() {
                        return Err(Error::Factoring(format!(
                            "empty expansion of unfactored {lhs:?}"
                        )));
                    }
                    Rhs::Epsilon
                }
            };
            lhs_counts[l as usize] += c;
            rules.push(Rule { lhs: l, rhs: r });
            rule_counts.push(c);
        }
        let mut by_lhs = vec![Vec::new(); nts.len()];
        let mut structural = vec![Vec::new(); nts.len()];
        let mut terminal_rules = FxHashMap::default();
        let mut probs = Vec::with_capacity(rules.len());
        for (i, r) in rules.iter().enumerate() {
            by_lhs[r.lhs as usize].push(i as RuleId);
            if let Rhs::Terminal(w) = r.rhs {
                terminal_rules.insert((r.lhs, w), i as RuleId);
            } else {
                structural[r.lhs as usize].push(i as RuleId);
            }
            probs.push(rule_counts[i] as f64 / lhs_counts[r.lhs as usize] as f64);
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Pcfg {
            nts,
            nt_info,
            tokens,
            rules,
            counts: rule_counts,
            probs,
            log_probs,
            lhs_counts,
            by_lhs,
            structural,
            terminal_rules,
            start: start_id,
        })
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nts.len()
    }

    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn nt_name(&self, id: NtId) -> &str {
        self.nts.name(id)
    }

    pub fn nt_id(&self, name: &str) -> Option<NtId> {
        self.nts.get(name)
    }

    pub fn nt_info(&self, id: NtId) -> &NtInfo {
        &self.nt_info[id as usize]
    }

    pub fn constituent(&self, id: NtId) -> NtId {
        self.nt_info[id as usize].base
    }

    pub fn is_preterminal(&self, id: NtId) -> bool {
        self.nt_info[id as usize].is_preterminal
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = (NtId, &str)> {
        self.nts.iter()
    }

    pub fn token_name(&self, id: TokId) -> &str {
        self.tokens.name(id)
    }

    pub fn token_id(&self, tok: &str) -> Option<TokId> {
        self.tokens.get(tok)
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (TokId, &str)> {
        self.tokens.iter()
    }

    pub fn rule(&self, id: RuleId) -> Rule {
        self.rules[id as usize]
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_count(&self, id: RuleId) -> u64 {
        self.counts[id as usize]
    }

    pub fn lhs_count(&self, lhs: NtId) -> u64 {
        self.lhs_counts[lhs as usize]
    }

    pub fn prob(&self, id: RuleId) -> f64 {
        self.probs[id as usize]
    }

    pub fn log_prob(&self, id: RuleId) -> f64 {
        self.log_probs[id as usize]
    }

    pub fn rules_for(&self, lhs: NtId) -> &[RuleId] {
        &self.by_lhs[lhs as usize]
    }

    /// Binary and empty rules of `lhs`, in id order.
    pub fn structural_rules(&self, lhs: NtId) -> &[RuleId] {
        &self.structural[lhs as usize]
    }

    pub fn terminal_rule(&self, lhs: NtId, tok: TokId) -> Option<RuleId> {
        self.terminal_rules.get(&(lhs, tok)).copied()
    }

    pub fn rule_text(&self, id: RuleId) -> (String, RhsText) {
        let r = self.rules[id as usize];
        let rhs = match r.rhs {
            Rhs::Binary(a, b) => RhsText::Binary(self.nt_name(a).into(), self.nt_name(b).into()),
            Rhs::Terminal(w) => RhsText::Terminal(self.token_name(w).into()),
            Rhs::Epsilon => RhsText::Epsilon,
        };
        (self.nt_name(r.lhs).to_string(), rhs)
    }

    pub fn rule_id(&self, lhs: &str, rhs: &RhsText) -> Option<RuleId> {
        let l = self.nt_id(lhs)?;
        let rhs = match rhs {
            RhsText::Binary(a, b) => Rhs::Binary(self.nt_id(a)?, self.nt_id(b)?),
            RhsText::Terminal(w) => return self.terminal_rule(l, self.token_id(w)?),
            RhsText::Epsilon => Rhs::Epsilon,
        };
        self.rules_for(l)
            .iter()
            .copied()
            .find(|&id| self.rules[id as usize].rhs == rhs)
    }

    pub fn rule_counts(&self) -> BTreeMap<(String, RhsText), u64> {
        (0..self.rules.len())
            .map(|i| (self.rule_text(i as RuleId), self.counts[i]))
            .collect()
    }

    pub fn render_rule(&self, id: RuleId) -> String {
        let (lhs, rhs) = self.rule_text(id);
        match rhs {
            RhsText::Binary(a, b) => format!("{lhs} -> {a} {b}"),
            RhsText::Terminal(w) => format!("{lhs} -> '{w}'"),
            RhsText::Epsilon => format!("{lhs} -> {EPSILON_TOKEN}"),
        }
    }

    /// Leftmost derivation (preorder rule sequence) of a factored tree.
    pub fn derivation(&self, t: &Tree) -> Result<Vec<RuleId>> {
        let mut out = Vec::new();
        let mut err = None;
        t.for_each_internal(&mut |n| {
            if err.is_some() {
                return;
            }
            match local_rule(n) {
                Ok((lhs, rhs)) => match self.rule_id(&lhs, &rhs) {
                    Some(id) => out.push(id),
                    None => err = Some(Error::ZeroProbability(format!("unseen rule {lhs} -> {rhs:?}"))),
                },
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// Counts the local rules of factored trees.
pub fn count_factored_rules(trees: &[Tree]) -> Result<BTreeMap<(String, RhsText), u64>> {
    let mut counts = BTreeMap::new();
    for t in trees {
        let mut err = None;
        t.for_each_internal(&mut |n| {
            if err.is_none() {
                match local_rule(n) {
                    Ok(k) => *counts.entry(k).or_insert(0) += 1,
                    Err(e) => err = Some(e),
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(counts)
}

/// Induces a PCFG from factored, stop-augmented trees.
pub fn induce_pcfg(c: &Corpus) -> Result<Pcfg> {
    if c.trees.is_empty() {
        return Err(Error::Empty("cannot induce a grammar from an empty corpus".into()));
    }
    let start = c.trees[0].label.clone();
    Pcfg::from_counts(&count_factored_rules(&c.trees)?, &start)
}

/// Log probability of a tree, or the zero-probability error when the tree
/// uses a rule the grammar never saw.
pub fn tree_log_probability(g: &Pcfg, t: &Tree) -> Result<f64> {
    Ok(g.derivation(t)?.iter().map(|&r| g.log_prob(r)).sum())
}

pub fn tree_probability(g: &Pcfg, t: &Tree) -> Result<f64> {
    tree_log_probability(g, t).map(f64::exp)
}

/// Relative-frequency grammar over unfactored n-ary rules. Used to check that
/// factoring leaves tree probabilities unchanged.
#[derive(Debug, Clone, Default)]
pub struct NaryGrammar {
    counts: BTreeMap<(String, Vec<String>), u64>,
    lhs_counts: BTreeMap<String, u64>,
}

impl NaryGrammar {
    pub fn induce(trees: &[Tree]) -> NaryGrammar {
        let mut g = NaryGrammar::default();
        for t in trees {
            t.for_each_internal(&mut |n| {
                let rhs: Vec<String> = n.children.iter().map(|c| c.label.clone()).collect();
                *g.counts.entry((n.label.clone(), rhs)).or_insert(0) += 1;
                *g.lhs_counts.entry(n.label.clone()).or_insert(0) += 1;
            });
        }
        g
    }

    pub fn prob(&self, lhs: &str, rhs: &[&str]) -> f64 {
        let key = (lhs.to_string(), rhs.iter().map(|s| s.to_string()).collect());
        match (self.counts.get(&key), self.lhs_counts.get(lhs)) {
            (Some(&c), Some(&n)) => c as f64 / n as f64,
            _ => 0.0,
        }
    }

    pub fn tree_log_probability(&self, t: &Tree) -> Result<f64> {
        let mut lp = 0.0;
        let mut missing = None;
        t.for_each_internal(&mut |n| {
            let rhs: Vec<&str> = n.children.iter().map(|c| c.label.as_str()).collect();
            let p = self.prob(&n.label, &rhs);
            if p == 0.0 {
                missing.get_or_insert_with(|| format!("{} -> {}", n.label, rhs.join(" ")));
            } else {
                lp += p.ln();
            }
        });
        match missing {
            Some(r) => Err(Error::ZeroProbability(format!("unseen rule {r}"))),
            None => Ok(lp),
        }
    }
}
