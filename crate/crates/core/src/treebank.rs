//! Bracketed trees, corpora and corpus normalization.
//!
//! The bracketed format is the usual treebank s-expression:
//!
//! ```text
//! tree  := "(" LABEL child+ ")"
//! child := tree | TOKEN
//! ```
//!
//! Brackets are self-delimiting, any amount of whitespace (including
//! newlines) separates atoms, and a tree may span several lines. An unlabeled
//! wrapper `( (S ...) )` around a single tree is accepted and removed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Label of the axiom node added by [`augment_with_stop`].
pub const AXIOM_LABEL: &str = "S†";
/// Label of the preterminal dominating the end marker.
pub const STOP_LABEL: &str = "STOP";
pub const DEFAULT_END_TOKEN: &str = "</s>";
pub const DEFAULT_UNK_TOKEN: &str = "<unk>";
/// Leaf token standing for an empty (epsilon) expansion in factored trees.
pub const EPSILON_TOKEN: &str = "<eps>";
/// Separator between the base label and the consumed children of a factored label.
pub const FACTOR_SEP: char = '@';

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tree {
    pub label: String,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn leaf(token: impl Into<String>) -> Self {
        Tree {
            label: token.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree {
            label: label.into(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_preterminal(&self) -> bool {
        self.children.len() == 1 && self.children[0].is_leaf()
    }

    /// Left-to-right leaf tokens, epsilon leaves excluded.
    pub fn yield_tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_yield(&mut out);
        out
    }

    fn collect_yield<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_leaf() {
            if self.label != EPSILON_TOKEN {
                out.push(&self.label);
            }
        } else {
            for c in &self.children {
                c.collect_yield(out);
            }
        }
    }

    pub fn preterminals(&self) -> Vec<&Tree> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a Tree, out: &mut Vec<&'a Tree>) {
            if t.is_preterminal() {
                out.push(t);
            } else {
                for c in &t.children {
                    walk(c, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Visits internal nodes in preorder.
    pub fn for_each_internal<'a>(&'a self, f: &mut impl FnMut(&'a Tree)) {
        if self.is_leaf() {
            return;
        }
        f(self);
        for c in &self.children {
            c.for_each_internal(f);
        }
    }

    /// Parses one bracketed tree. Labels are not checked for reserved characters.
    pub fn from_bracketed(s: &str) -> Result<Tree> {
        let mut trees = parse_trees(s)?;
        match trees.len() {
            0 => Err(Error::Empty("no tree in input".into())),
            1 => Ok(trees.pop().unwrap()),
            n => Err(Error::Syntax {
                line: 1,
                msg: format!("expected a single tree, found {n}"),
            }),
        }
    }

    fn write_to(&self, out: &mut String) {
        if self.is_leaf() {
            out.push_str(&self.label);
            return;
        }
        out.push('(');
        out.push_str(&self.label);
        for c in &self.children {
            out.push(' ');
            c.write_to(out);
        }
        out.push(')');
    }

    /// Checks the structural invariants of an input tree: internal nodes have
    /// children, the yield is nonempty, and labels avoid reserved characters.
    pub fn validate(&self) -> Result<()> {
        if self.is_leaf() {
            return Err(Error::InvalidTree(format!(
                "bare token {:?} is not a tree",
                self.label
            )));
        }
        fn walk(t: &Tree) -> Result<()> {
            if t.is_leaf() {
                return Ok(());
            }
            check_label(&t.label)?;
            for c in &t.children {
                walk(c)?;
            }
            Ok(())
        }
        walk(self)?;
        if self.yield_tokens().is_empty() {
            return Err(Error::InvalidTree("empty yield".into()));
        }
        Ok(())
    }
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::InvalidTree("empty label".into()));
    }
    if label.contains(FACTOR_SEP) || label.contains('(') || label.contains(')') {
        return Err(Error::InvalidTree(format!(
            "label {label:?} contains a reserved character"
        )));
    }
    if label == AXIOM_LABEL {
        return Err(Error::InvalidTree(format!("label {label:?} is reserved")));
    }
    Ok(())
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_to(&mut s);
        f.write_str(&s)
    }
}

impl FromStr for Tree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tree> {
        Tree::from_bracketed(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(s: &str) -> Vec<(Tok<'_>, usize)> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut start: Option<usize> = None;
    for (i, ch) in s.char_indices() {
        let delim = ch == '(' || ch == ')' || ch.is_whitespace();
        if delim {
            if let Some(st) = start.take() {
                out.push((Tok::Atom(&s[st..i]), line));
            }
            match ch {
                '(' => out.push((Tok::Open, line)),
                ')' => out.push((Tok::Close, line)),
                '\n' => line += 1,
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((Tok::Atom(&s[st..]), line));
    }
    out
}

/// Parses every tree in `s`, in order.
pub fn parse_trees(s: &str) -> Result<Vec<Tree>> {
    let toks = tokenize(s);
    let mut pos = 0;
    let mut trees = Vec::new();
    while pos < toks.len() {
        match toks[pos].0 {
            Tok::Open => {
                let t = parse_node(&toks, &mut pos)?;
                trees.push(t);
            }
            Tok::Close => {
                return Err(Error::Syntax {
                    line: toks[pos].1,
                    msg: "unbalanced closing bracket".into(),
                })
            }
            Tok::Atom(a) => {
                return Err(Error::Syntax {
                    line: toks[pos].1,
                    msg: format!("token {a:?} outside of any tree"),
                })
            }
        }
    }
    Ok(trees)
}

fn parse_node(toks: &[(Tok<'_>, usize)], pos: &mut usize) -> Result<Tree> {
    let open_line = toks[*pos].1;
    *pos += 1;
    let unbalanced = || Error::Syntax {
        line: open_line,
        msg: "unbalanced brackets: tree is not closed".into(),
    };
    let label = match toks.get(*pos) {
        None => return Err(unbalanced()),
        Some((Tok::Atom(a), _)) => {
            *pos += 1;
            Some(a.to_string())
        }
        Some((Tok::Close, line)) => {
            return Err(Error::Syntax {
                line: *line,
                msg: "empty node".into(),
            })
        }
        Some((Tok::Open, _)) => None,
    };
    let mut children = Vec::new();
    loop {
        match toks.get(*pos) {
            None => return Err(unbalanced()),
            Some((Tok::Close, _)) => {
                *pos += 1;
                break;
            }
            Some((Tok::Open, _)) => children.push(parse_node(toks, pos)?),
            Some((Tok::Atom(a), _)) => {
                children.push(Tree::leaf(*a));
                *pos += 1;
            }
        }
    }
    match label {
        Some(label) => {
            if children.is_empty() {
                return Err(Error::Syntax {
                    line: open_line,
                    msg: format!("node {label:?} has no children"),
                });
            }
            Ok(Tree { label, children })
        }
        None => {
            if children.len() == 1 && !children[0].is_leaf() {
                Ok(children.pop().unwrap())
            } else {
                Err(Error::Syntax {
                    line: open_line,
                    msg: "node without a label".into(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Heldout,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub trees: Vec<Tree>,
    pub vocabulary: BTreeSet<String>,
    pub role: Role,
}

impl Corpus {
    /// Builds a corpus whose vocabulary is the union of yields plus the
    /// default end and unknown tokens.
    pub fn new(trees: Vec<Tree>, role: Role) -> Self {
        Self::with_reserved(trees, role, DEFAULT_END_TOKEN, DEFAULT_UNK_TOKEN)
    }

    pub fn with_reserved(trees: Vec<Tree>, role: Role, end: &str, unk: &str) -> Self {
        let mut vocabulary: BTreeSet<String> = trees
            .iter()
            .flat_map(|t| t.yield_tokens())
            .map(str::to_string)
            .collect();
        vocabulary.insert(end.to_string());
        vocabulary.insert(unk.to_string());
        Corpus {
            trees,
            vocabulary,
            role,
        }
    }

    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.trees
            .iter()
            .map(|t| t.yield_tokens().into_iter().map(str::to_string).collect())
            .collect()
    }
}

pub fn parse_corpus(text: &str, role: Role) -> Result<Corpus> {
    let trees = parse_trees(text)?;
    if trees.is_empty() {
        return Err(Error::Empty("no trees found".into()));
    }
    for (i, t) in trees.iter().enumerate() {
        t.validate()
            .map_err(|e| Error::InvalidTree(format!("tree {}: {e}", i + 1)))?;
    }
    Ok(Corpus::new(trees, role))
}

pub fn read_corpus(path: impl AsRef<Path>, role: Role) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, role).map_err(|e| match e {
        Error::Empty(m) => Error::Empty(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_corpus(path: impl AsRef<Path>, trees: &[Tree]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, corpus_to_string(trees)).map_err(|e| Error::io(path, e))
}

pub fn corpus_to_string(trees: &[Tree]) -> String {
    let mut s = String::new();
    for t in trees {
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}

/// One line of a sentence file. Empty lines are kept so callers can report them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceLine {
    pub line: usize,
    pub tokens: Vec<String>,
}

pub fn parse_sentences(text: &str) -> Vec<SentenceLine> {
    text.lines()
        .enumerate()
        .map(|(i, l)| SentenceLine {
            line: i + 1,
            tokens: l.split_whitespace().map(str::to_string).collect(),
        })
        .collect()
}

pub fn read_sentences(path: impl AsRef<Path>) -> Result<Vec<SentenceLine>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_sentences(&text))
}

/// Wraps a sentence tree as `(S† t (STOP end))`.
pub fn augment_with_stop(t: &Tree, end_token: &str) -> Result<Tree> {
    if t.label == AXIOM_LABEL {
        return Err(Error::InvalidTree("tree is already rooted at the axiom".into()));
    }
    Ok(Tree::node(
        AXIOM_LABEL,
        vec![
            t.clone(),
            Tree::node(STOP_LABEL, vec![Tree::leaf(end_token)]),
        ],
    ))
}

/// Inverse of [`augment_with_stop`].
pub fn strip_stop(t: &Tree) -> Result<Tree> {
    let ok = t.label == AXIOM_LABEL
        && t.children.len() == 2
        && t.children[1].label == STOP_LABEL
        && t.children[1].is_preterminal();
    if !ok {
        return Err(Error::InvalidTree(
            "tree is not of the form (S† t (STOP end))".into(),
        ));
    }
    Ok(t.children[0].clone())
}

/// Converts a parser output tree (complete or garden-path) to a sentence-level
/// tree: the end marker and STOP are removed, and bare words hanging from the
/// axiom are attached to the highest constituent.
pub fn sentence_tree(t: &Tree, end_token: &str) -> Tree {
    if t.label != AXIOM_LABEL {
        return t.clone();
    }
    let kept: Vec<Tree> = t
        .children
        .iter()
        .filter(|c| c.label != STOP_LABEL && !(c.is_leaf() && c.label == end_token))
        .cloned()
        .collect();
    match kept.split_first() {
        Some((first, rest)) if !first.is_leaf() => {
            let mut top = first.clone();
            top.children.extend(rest.iter().cloned());
            top
        }
        _ => Tree::node(AXIOM_LABEL, kept),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationConfig {
    pub strip_punctuation: bool,
    /// Preterminal labels deleted when `strip_punctuation` is set.
    pub punctuation_labels: BTreeSet<String>,
    /// Replacement for numeric tokens; `None` leaves numbers alone.
    pub number_token: Option<String>,
    /// Number of most frequent tokens kept; `None` keeps all.
    pub vocab_cap: Option<usize>,
    pub unk_token: String,
    pub end_token: String,
}

pub const DEFAULT_PUNCTUATION: &[&str] = &[",", ".", ":", "``", "''", "-LRB-", "-RRB-"];

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            strip_punctuation: true,
            punctuation_labels: DEFAULT_PUNCTUATION.iter().map(|s| s.to_string()).collect(),
            number_token: Some("N".to_string()),
            vocab_cap: None,
            unk_token: DEFAULT_UNK_TOKEN.to_string(),
            end_token: DEFAULT_END_TOKEN.to_string(),
        }
    }
}

impl NormalizationConfig {
    /// Leaves the corpus untouched apart from reserved-token bookkeeping.
    pub fn identity() -> Self {
        NormalizationConfig {
            strip_punctuation: false,
            punctuation_labels: BTreeSet::new(),
            number_token: None,
            vocab_cap: None,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_cap == Some(0) {
            return Err(Error::Config("vocab_cap must be at least 1".into()));
        }
        if self.unk_token == self.end_token {
            return Err(Error::Config("unk and end tokens must differ".into()));
        }
        if self.unk_token.is_empty() || self.end_token.is_empty() {
            return Err(Error::Config("reserved tokens must be nonempty".into()));
        }
        Ok(())
    }
}

/// Optional sign, digits (with optional thousands commas) and an optional
/// fractional part, or a bare fraction like `.5`.
pub fn is_numeric_token(tok: &str) -> bool {
    let s = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let int_ok = !int.is_empty()
        && int.starts_with(|c: char| c.is_ascii_digit())
        && int.chars().all(|c| c.is_ascii_digit() || c == ',')
        && !int.ends_with(',');
    match frac {
        None => int_ok,
        Some(f) => {
            let frac_ok = !f.is_empty() && f.chars().all(|c| c.is_ascii_digit());
            frac_ok && (int_ok || int.is_empty())
        }
    }
}

/// Vocabulary closure fitted on a training corpus and applied to any corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub config: NormalizationConfig,
    /// Closed vocabulary; `None` when no cap is configured.
    pub vocabulary: Option<BTreeSet<String>>,
}

impl Normalizer {
    pub fn fit(train: &Corpus, config: NormalizationConfig) -> Result<Normalizer> {
        config.validate()?;
        let mut norm = Normalizer {
            config,
            vocabulary: None,
        };
        if let Some(cap) = norm.config.vocab_cap {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for t in &train.trees {
                if let Some(t) = norm.strip_and_number(t) {
                    for tok in t.yield_tokens() {
                        if tok != norm.config.unk_token && tok != norm.config.end_token {
                            *counts.entry(tok.to_string()).or_default() += 1;
                        }
                    }
                }
            }
            let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            norm.vocabulary = Some(ranked.into_iter().take(cap).map(|(t, _)| t).collect());
        }
        Ok(norm)
    }

    fn strip_and_number(&self, t: &Tree) -> Option<Tree> {
        if t.is_leaf() {
            let mut leaf = t.clone();
            if let Some(n) = &self.config.number_token {
                if is_numeric_token(&leaf.label) {
                    leaf.label = n.clone();
                }
            }
            return Some(leaf);
        }
        if self.config.strip_punctuation
            && t.is_preterminal()
            && self.config.punctuation_labels.contains(&t.label)
        {
            return None;
        }
        let children: Vec<Tree> = t
            .children
            .iter()
            .filter_map(|c| self.strip_and_number(c))
            .collect();
        if children.is_empty() {
            None
        } else {
            Some(Tree::node(t.label.clone(), children))
        }
    }

    /// Maps a single token into the closed vocabulary.
    pub fn map_token(&self, tok: &str) -> String {
        let tok = match &self.config.number_token {
            Some(n) if is_numeric_token(tok) => n.as_str(),
            _ => tok,
        };
        match &self.vocabulary {
            Some(v) if tok != self.config.end_token && !v.contains(tok) => {
                self.config.unk_token.clone()
            }
            _ => tok.to_string(),
        }
    }

    pub fn normalize_tree(&self, t: &Tree) -> Result<Tree> {
        let mut out = self
            .strip_and_number(t)
            .ok_or_else(|| Error::InvalidTree(format!("normalization empties tree {t}")))?;
        if self.vocabulary.is_some() {
            fn close(t: &mut Tree, n: &Normalizer) {
                if t.is_leaf() {
                    t.label = n.map_token(&t.label);
                } else {
                    for c in &mut t.children {
                        close(c, n);
                    }
                }
            }
            close(&mut out, self);
        }
        Ok(out)
    }

    pub fn normalize(&self, c: &Corpus) -> Result<Corpus> {
        let trees = c
            .trees
            .iter()
            .map(|t| self.normalize_tree(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::with_reserved(
            trees,
            c.role,
            &self.config.end_token,
            &self.config.unk_token,
        ))
    }

    /// Normalizes a tokenized sentence. Punctuation tokens cannot be
    /// identified without tags, so only number and vocabulary mapping apply.
    pub fn normalize_sentence(&self, words: &[String]) -> Vec<String> {
        words.iter().map(|w| self.map_token(w)).collect()
    }
}

/// Fits the vocabulary on `c` itself and normalizes it.
pub fn speech_normalize(c: &Corpus, cfg: &NormalizationConfig) -> Result<Corpus> {
    Normalizer::fit(c, cfg.clone())?.normalize(c)
}
