//! Conditional rule probabilities over tree-walking context functions.
//!
//! The context of a rule application is read off the partial tree by a small
//! decision tree with three paths:
//!
//! | level | left (non-POS)          | middle (POS, no left sibling) | right (POS after a sibling) |
//! |-------|-------------------------|-------------------------------|-----------------------------|
//! | 0     | lhs                     | lhs                           | lhs                         |
//! | 1     | parent                  | parent                        | parent                      |
//! | 2     | left sibling            | left sibling (NULL)           | left sibling                |
//! | 3     | grandparent             | grandparent                   | c-commanding head word 1    |
//! | 4     | parent's left sibling   | POS of c-commanding head 1    | c-commanding head word 2    |
//! | 5     | conjunct's first child  | c-commanding head word 1      |                             |
//! | 6     | head word so far        | c-commanding head word 2      |                             |
//!
//! Rule probabilities interpolate relative frequencies conditioned on longer
//! and longer context prefixes, bottoming out in the PCFG estimate.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::grammar::{NtId, Pcfg, RuleId, TokId};
use crate::heads::HeadTable;
use crate::mixture::{self, EmOutcome, NestedEvent};
use crate::state::{replay, Frame, HeadFinder};
use crate::treebank::Tree;

pub const NULL: u32 = 0;
const TOKEN_BIT: u32 = 1 << 31;

pub fn label_value(nt: NtId) -> u32 {
    nt + 1
}

pub fn token_value(w: TokId) -> u32 {
    TOKEN_BIT | (w + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Null,
    Label(String),
    Token(String),
}

impl Value {
    pub fn decode(g: &Pcfg, v: u32) -> Value {
        if v == NULL {
            Value::Null
        } else if v & TOKEN_BIT != 0 {
            Value::Token(g.token_name((v & !TOKEN_BIT) - 1).to_string())
        } else {
            Value::Label(g.nt_name(v - 1).to_string())
        }
    }

    pub fn encode(g: &Pcfg, v: &Value) -> Option<u32> {
        match v {
            Value::Null => Some(NULL),
            Value::Label(l) => g.nt_id(l).map(label_value),
            Value::Token(t) => g.token_id(t).map(token_value),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Label(l) => f.write_str(l),
            Value::Token(t) => write!(f, "'{t}'"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CondPath {
    Left = 0,
    Middle = 1,
    Right = 2,
}

impl CondPath {
    pub const ALL: [CondPath; 3] = [CondPath::Left, CondPath::Middle, CondPath::Right];

    pub fn max_depth(self) -> usize {
        match self {
            CondPath::Left | CondPath::Middle => 6,
            CondPath::Right => 4,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CondPath::Left => "left",
            CondPath::Middle => "middle",
            CondPath::Right => "right",
        }
    }

    pub fn from_name(s: &str) -> Option<CondPath> {
        CondPath::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Conditioning depth per decision-tree path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CondConfig {
    pub l_nonpos: usize,
    pub l_leftpos: usize,
    pub l_rightpos: usize,
}

pub const PRESETS: [(&str, CondConfig); 7] = [
    ("none", CondConfig::new(0, 0, 0)),
    ("par+sib", CondConfig::new(2, 2, 2)),
    ("nt-struct", CondConfig::new(5, 2, 2)),
    ("nt-head", CondConfig::new(6, 2, 2)),
    ("pos-struct", CondConfig::new(6, 3, 2)),
    ("attach", CondConfig::new(6, 5, 2)),
    ("all", CondConfig::new(6, 6, 4)),
];

impl CondConfig {
    pub const fn new(l_nonpos: usize, l_leftpos: usize, l_rightpos: usize) -> Self {
        CondConfig {
            l_nonpos,
            l_leftpos,
            l_rightpos,
        }
    }

    pub fn none() -> Self {
        CondConfig::new(0, 0, 0)
    }

    pub fn all() -> Self {
        CondConfig::new(6, 6, 4)
    }

    pub fn preset(name: &str) -> Option<CondConfig> {
        let key = name.trim().to_lowercase().replace([' ', '_'], "-");
        PRESETS.iter().find(|(n, _)| *n == key).map(|(_, c)| *c)
    }

    pub fn depth(&self, p: CondPath) -> usize {
        match p {
            CondPath::Left => self.l_nonpos,
            CondPath::Middle => self.l_leftpos,
            CondPath::Right => self.l_rightpos,
        }
    }

    pub fn max_level(&self) -> usize {
        self.l_nonpos.max(self.l_leftpos).max(self.l_rightpos)
    }

    pub fn validate(&self) -> Result<()> {
        for p in CondPath::ALL {
            if self.depth(p) > p.max_depth() {
                return Err(Error::Config(format!(
                    "{} path depth {} exceeds its maximum {}",
                    p.name(),
                    self.depth(p),
                    p.max_depth()
                )));
            }
        }
        Ok(())
    }

    /// Lowers each depth to at most `other`'s.
    pub fn min(&self, other: &CondConfig) -> CondConfig {
        CondConfig::new(
            self.l_nonpos.min(other.l_nonpos),
            self.l_leftpos.min(other.l_leftpos),
            self.l_rightpos.min(other.l_rightpos),
        )
    }
}

impl fmt::Display for CondConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.l_nonpos, self.l_leftpos, self.l_rightpos)
    }
}

impl FromStr for CondConfig {
    type Err = Error;

    /// A preset name or an explicit `a,b,c` triple.
    fn from_str(s: &str) -> Result<CondConfig> {
        if let Some(c) = CondConfig::preset(s) {
            return Ok(c);
        }
        let parts: Vec<&str> = s.trim_matches(|c| c == '(' || c == ')').split(',').collect();
        let nums: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
        match nums.as_deref() {
            Some(&[a, b, c]) => {
                let cfg = CondConfig::new(a, b, c);
                cfg.validate()?;
                Ok(cfg)
            }
            _ => Err(Error::Config(format!(
                "unknown conditioning {s:?}; use one of {} or a triple like 6,6,4",
                PRESETS.map(|(n, _)| n).join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondVector {
    pub path: CondPath,
    pub values: Vec<u32>,
}

impl CondVector {
    pub fn decode(&self, g: &Pcfg) -> Vec<Value> {
        self.values.iter().map(|&v| Value::decode(g, v)).collect()
    }
}

pub fn select_path(g: &Pcfg, top: &Frame) -> CondPath {
    if !g.is_preterminal(top.sym) {
        return CondPath::Left;
    }
    let has_left_sibling = top.below.as_ref().is_some_and(|b| b.kids.is_some());
    if has_left_sibling {
        CondPath::Right
    } else {
        CondPath::Middle
    }
}

/// Lexical heads of the constituents c-commanding the top symbol's
/// constituent, nearest first: left siblings, then the parent's left
/// siblings, and so on up to the root.
pub fn c_command_heads(top: &Frame) -> impl Iterator<Item = (TokId, NtId)> + '_ {
    std::iter::successors(top.below.as_deref(), |f| f.below.as_deref())
        .flat_map(|f| crate::state::Kids::iter(&f.kids))
        .map(|n| (n.head_tok, n.head_pos))
}

/// Reads the conditioning values for expanding the top symbol.
pub fn extract_values(g: &Pcfg, heads: &HeadFinder, top: &Frame, cfg: &CondConfig) -> CondVector {
    let path = select_path(g, top);
    let depth = cfg.depth(path);
    let mut values = Vec::with_capacity(depth + 1);
    values.push(label_value(top.sym));
    if depth == 0 {
        return CondVector { path, values };
    }
    let below = top.below.as_deref();
    let below2 = below.and_then(|b| b.below.as_deref());
    let last_kid = |f: Option<&Frame>| {
        f.and_then(|f| f.kids.as_ref())
            .map(|k| label_value(k.node.label))
            .unwrap_or(NULL)
    };
    let parent = below.map(|b| label_value(g.constituent(b.sym))).unwrap_or(NULL);
    let sibling = last_kid(below);
    let mut cc: [(TokId, NtId); 2] = [(0, 0); 2];
    let mut n_cc = 0;
    let needs_cc = match path {
        CondPath::Left => false,
        CondPath::Middle => depth >= 4,
        CondPath::Right => depth >= 3,
    };
    if needs_cc {
        for h in c_command_heads(top).take(2) {
            cc[n_cc] = h;
            n_cc += 1;
        }
    }
    let cc_tok = |i: usize| if i < n_cc { token_value(cc[i].0) } else { NULL };
    for level in 1..=depth {
        let v = match (path, level) {
            (_, 1) => parent,
            (_, 2) => sibling,
            (CondPath::Right, 3) => cc_tok(0),
            (CondPath::Right, 4) => cc_tok(1),
            (_, 3) => below2.map(|f| label_value(g.constituent(f.sym))).unwrap_or(NULL),
            (CondPath::Left, 4) => last_kid(below2),
            (CondPath::Left, 5) => conjunct_first_child(g, below),
            (CondPath::Left, 6) => heads
                .partial_head(g.constituent(top.sym), &top.kids)
                .map(|(w, _)| token_value(w))
                .unwrap_or(NULL),
            (CondPath::Middle, 4) => {
                if n_cc > 0 {
                    label_value(cc[0].1)
                } else {
                    NULL
                }
            }
            (CondPath::Middle, 5) => cc_tok(0),
            (CondPath::Middle, 6) => cc_tok(1),
            _ => unreachable!("level beyond path depth"),
        };
        values.push(v);
    }
    CondVector { path, values }
}

/// When the closest left sibling is a CC, the label of the first child of the
/// constituent just before it.
fn conjunct_first_child(g: &Pcfg, parent: Option<&Frame>) -> u32 {
    let Some(kids) = parent.and_then(|p| p.kids.as_ref()) else {
        return NULL;
    };
    if g.nt_name(kids.node.label) != "CC" {
        return NULL;
    }
    kids.prev
        .as_ref()
        .and_then(|k| k.node.first_child_label())
        .map(label_value)
        .unwrap_or(NULL)
}

/// Counts of rules observed under one conditioning context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dist {
    pub total: u64,
    /// Sorted by rule id.
    pub counts: Vec<(RuleId, u64)>,
}

impl Dist {
    pub fn count(&self, r: RuleId) -> u64 {
        match self.counts.binary_search_by_key(&r, |&(id, _)| id) {
            Ok(i) => self.counts[i].1,
            Err(_) => 0,
        }
    }

    pub fn rel(&self, r: RuleId) -> f64 {
        self.count(r) as f64 / self.total as f64
    }
}

/// Frequency bucket of a conditioning-context count: {0, 1, 2–4, 5–9, 10–99, ≥100}.
pub fn bucket(count: u64) -> usize {
    match count {
        0 => 0,
        1 => 1,
        2..=4 => 2,
        5..=9 => 3,
        10..=99 => 4,
        _ => 5,
    }
}

pub const NUM_BUCKETS: usize = 6;
pub const NUM_LEVELS: usize = 7;

pub fn lambda_index(path: CondPath, level: usize, b: usize) -> usize {
    (path.index() * NUM_LEVELS + level) * NUM_BUCKETS + b
}

pub type Table = FxHashMap<Box<[u32]>, Dist>;

#[derive(Debug, Clone)]
pub struct CondModel {
    pub config: CondConfig,
    pub head_table: HeadTable,
    pub heads: HeadFinder,
    /// `tables[path][level]`, keyed by the value prefix of length `level + 1`.
    pub tables: [Vec<Table>; 3],
    /// Indexed by [`lambda_index`]; bucket 0 stays at 0.
    pub lambdas: Vec<f64>,
}

/// Rule scorer for one fixed context.
pub struct Scorer<'a> {
    levels: [(Option<&'a Dist>, f64); NUM_LEVELS],
    len: usize,
}

impl Scorer<'_> {
    pub fn prob(&self, g: &Pcfg, r: RuleId) -> f64 {
        let mut p = g.prob(r);
        for &(d, l) in &self.levels[..self.len] {
            if let Some(d) = d {
                p = l * d.rel(r) + (1.0 - l) * p;
            }
        }
        p
    }
}

fn empty_tables(cfg: &CondConfig) -> [Vec<Table>; 3] {
    CondPath::ALL.map(|p| (0..=cfg.depth(p)).map(|_| Table::default()).collect())
}

impl CondModel {
    /// A model with no conditioning tables: every rule probability is the
    /// PCFG estimate.
    pub fn unconditioned(g: &Pcfg, head_table: HeadTable) -> CondModel {
        let cfg = CondConfig::none();
        CondModel {
            config: cfg,
            heads: HeadFinder::new(g, &head_table),
            head_table,
            tables: empty_tables(&cfg),
            lambdas: vec![0.0; 3 * NUM_LEVELS * NUM_BUCKETS],
        }
    }

    pub fn lambda(&self, path: CondPath, level: usize, b: usize) -> f64 {
        self.lambdas[lambda_index(path, level, b)]
    }

    /// Sets every λ of the given level (buckets 1 and up).
    pub fn set_level_lambda(&mut self, level: usize, value: f64) {
        for p in CondPath::ALL {
            for b in 1..NUM_BUCKETS {
                self.lambdas[lambda_index(p, level, b)] = value;
            }
        }
    }

    pub fn dist(&self, path: CondPath, prefix: &[u32]) -> Option<&Dist> {
        let level = prefix.len().checked_sub(1)?;
        self.tables[path.index()].get(level)?.get(prefix)
    }

    /// Count of `r` under a context prefix; `prefix[0]` is the lhs.
    pub fn table_count(&self, path: CondPath, prefix: &[u32], r: RuleId) -> u64 {
        self.dist(path, prefix).map(|d| d.count(r)).unwrap_or(0)
    }

    pub fn values(&self, g: &Pcfg, top: &Frame) -> CondVector {
        extract_values(g, &self.heads, top, &self.config)
    }

    pub fn scorer_for(&self, v: &CondVector) -> Scorer<'_> {
        let mut s = Scorer {
            levels: [(None, 0.0); NUM_LEVELS],
            len: 0,
        };
        let tables = &self.tables[v.path.index()];
        for k in 1..v.values.len() {
            let Some(d) = tables[k].get(&v.values[..=k]) else {
                break;
            };
            let l = self.lambdas[lambda_index(v.path, k, bucket(d.total))];
            s.levels[s.len] = (Some(d), l);
            s.len += 1;
        }
        s
    }

    pub fn scorer(&self, g: &Pcfg, top: &Frame) -> Scorer<'_> {
        if self.config.max_level() == 0 {
            return Scorer {
                levels: [(None, 0.0); NUM_LEVELS],
                len: 0,
            };
        }
        self.scorer_for(&self.values(g, top))
    }

    pub fn rule_prob(&self, g: &Pcfg, top: &Frame, r: RuleId) -> Result<f64> {
        if g.rules_for(top.sym).is_empty() {
            return Err(Error::ZeroProbability(format!(
                "{} has no expansions",
                g.nt_name(top.sym)
            )));
        }
        if g.rule(r).lhs != top.sym {
            return Err(Error::Config(format!(
                "rule {} does not expand {}",
                g.render_rule(r),
                g.nt_name(top.sym)
            )));
        }
        Ok(self.scorer(g, top).prob(g, r))
    }
}

/// Leftmost derivation of a factored tree, cut before the first rule the
/// grammar has never seen.
pub fn known_derivation_prefix(g: &Pcfg, t: &Tree) -> Vec<RuleId> {
    let mut out = Vec::new();
    let mut stopped = false;
    t.for_each_internal(&mut |n| {
        if stopped {
            return;
        }
        match crate::grammar::local_rule(n).ok().and_then(|(l, r)| g.rule_id(&l, &r)) {
            Some(id) => out.push(id),
            None => stopped = true,
        }
    });
    out
}

/// Walks the derivation of a factored tree, passing each rule application's
/// state, as far as the grammar covers it.
pub fn for_each_application(
    g: &Pcfg,
    heads: &HeadFinder,
    t: &Tree,
    mut visit: impl FnMut(&Rc<Frame>, RuleId),
) {
    let d = known_derivation_prefix(g, t);
    let _ = replay(g, heads, &d, |f, r| visit(f, r));
}

pub fn train_counts(g: &Pcfg, trees: &[Tree], cfg: CondConfig, head_table: HeadTable) -> Result<CondModel> {
    cfg.validate()?;
    if trees.is_empty() {
        return Err(Error::Empty("no training trees for conditioning".into()));
    }
    let heads = HeadFinder::new(g, &head_table);
    let mut raw: [Vec<FxHashMap<Box<[u32]>, FxHashMap<RuleId, u64>>>; 3] =
        CondPath::ALL.map(|p| (0..=cfg.depth(p)).map(|_| FxHashMap::default()).collect());
    for t in trees {
        let d = g.derivation(t)?;
        replay(g, &heads, &d, |top, r| {
            let v = extract_values(g, &heads, top, &cfg);
            let per_level = &mut raw[v.path.index()];
            for k in 1..v.values.len() {
                *per_level[k]
                    .entry(v.values[..=k].into())
                    .or_default()
                    .entry(r)
                    .or_insert(0) += 1;
            }
        })?;
    }
    let tables = raw.map(|levels| {
        levels
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|(k, rules)| {
                        let mut counts: Vec<(RuleId, u64)> = rules.into_iter().collect();
                        counts.sort_unstable();
                        let total = counts.iter().map(|c| c.1).sum();
                        (k, Dist { total, counts })
                    })
                    .collect()
            })
            .collect()
    });
    let mut lambdas = vec![0.0; 3 * NUM_LEVELS * NUM_BUCKETS];
    for p in CondPath::ALL {
        for level in 1..=cfg.depth(p) {
            for b in 1..NUM_BUCKETS {
                lambdas[lambda_index(p, level, b)] = 0.5;
            }
        }
    }
    Ok(CondModel {
        config: cfg,
        heads,
        head_table,
        tables,
        lambdas,
    })
}

/// Interpolation events of every scorable held-out rule application.
pub fn heldout_events(m: &CondModel, g: &Pcfg, heldout: &[Tree]) -> Vec<NestedEvent> {
    let mut events = Vec::new();
    for t in heldout {
        for_each_application(g, &m.heads, t, |top, r| {
            let v = m.values(g, top);
            let tables = &m.tables[v.path.index()];
            let mut levels = Vec::new();
            for k in 1..v.values.len() {
                let Some(d) = tables[k].get(&v.values[..=k]) else {
                    break;
                };
                levels.push((lambda_index(v.path, k, bucket(d.total)), d.rel(r)));
            }
            events.push(NestedEvent {
                weight: 1.0,
                base: g.prob(r),
                levels,
            });
        });
    }
    events
}

/// Chooses the mixing weights by EM on held-out rule applications.
pub fn tune_mix_weights(m: &mut CondModel, g: &Pcfg, heldout: &[Tree]) -> Result<EmOutcome> {
    tune_mix_weights_with(m, g, heldout, mixture::DEFAULT_TOLERANCE, mixture::DEFAULT_MAX_ITERATIONS)
}

pub fn tune_mix_weights_with(
    m: &mut CondModel,
    g: &Pcfg,
    heldout: &[Tree],
    tolerance: f64,
    max_iterations: usize,
) -> Result<EmOutcome> {
    let events = heldout_events(m, g, heldout);
    if events.is_empty() {
        return Err(Error::Empty(
            "held-out corpus has no rule applications the grammar can score".into(),
        ));
    }
    let out = mixture::fit(&events, m.lambdas.clone(), tolerance, max_iterations);
    m.lambdas = out.lambdas.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::state::{apply, Step};

    fn g1_model(cfg: CondConfig) -> (Pcfg, CondModel, Vec<Tree>) {
        let g = fixtures::g1_grammar();
        let trees: Vec<Tree> = fixtures::g1_trees().iter().map(fixtures::prepare).collect();
        let m = train_counts(&g, &trees, cfg, HeadTable::default()).unwrap();
        (g, m, trees)
    }

    /// State right before the `n`-th rule application of a tree whose lhs is `lhs`.
    fn state_before(g: &Pcfg, m: &CondModel, t: &Tree, lhs: &str, nth: usize) -> Rc<Frame> {
        let mut hits = Vec::new();
        for_each_application(g, &m.heads, t, |f, _| {
            if g.nt_name(f.sym) == lhs {
                hits.push(f.clone());
            }
        });
        hits.swap_remove(nth)
    }

    fn names(g: &Pcfg, v: &CondVector) -> Vec<String> {
        v.decode(g).iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn preset_table() {
        assert_eq!(CondConfig::preset("par+sib"), Some(CondConfig::new(2, 2, 2)));
        assert_eq!(CondConfig::preset("NT struct"), Some(CondConfig::new(5, 2, 2)));
        assert_eq!(CondConfig::preset("all"), Some(CondConfig::new(6, 6, 4)));
        assert_eq!("3,1,0".parse::<CondConfig>().unwrap(), CondConfig::new(3, 1, 0));
        assert!("7,0,0".parse::<CondConfig>().is_err());
        assert!("0,0,5".parse::<CondConfig>().is_err());
        assert!("bogus".parse::<CondConfig>().is_err());
        for (_, c) in PRESETS {
            c.validate().unwrap();
        }
    }

    #[test]
    fn paths() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let t = &trees[3]; // the dog ran
        assert_eq!(select_path(&g, &state_before(&g, &m, t, "VP", 0)), CondPath::Left);
        assert_eq!(select_path(&g, &state_before(&g, &m, t, "DT", 0)), CondPath::Middle);
        assert_eq!(select_path(&g, &state_before(&g, &m, t, "NN", 0)), CondPath::Right);
    }

    #[test]
    fn object_np_context() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let top = state_before(&g, &m, &trees[2], "NP", 1);
        let v = m.values(&g, &top);
        assert_eq!(v.path, CondPath::Left);
        assert_eq!(names(&g, &v)[..5], ["NP", "VP", "VBD", "S", "NP"]);
    }

    #[test]
    fn root_has_no_parent() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let top = state_before(&g, &m, &trees[0], "S†", 0);
        let v = m.values(&g, &top);
        assert_eq!(names(&g, &v), ["S†", "NULL", "NULL", "NULL", "NULL", "NULL", "NULL"]);
        assert_eq!(c_command_heads(&top).count(), 0);
    }

    #[test]
    fn verb_sees_subject_head() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let top = state_before(&g, &m, &trees[2], "VBD", 0);
        let v = m.values(&g, &top);
        assert_eq!(v.path, CondPath::Middle);
        assert_eq!(names(&g, &v), ["VBD", "VP", "NULL", "S", "NN", "'Spot'", "NULL"]);
    }

    #[test]
    fn noun_after_determiner_right_path() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let top = state_before(&g, &m, &trees[2], "NN", 1); // ball
        let v = m.values(&g, &top);
        assert_eq!(names(&g, &v), ["NN", "NP", "DT", "'the'", "'chased'"]);
    }

    #[test]
    fn head_so_far_on_factored_symbol() {
        let (g, m, trees) = g1_model(CondConfig::all());
        // VP@VBD after "chased": head of VP already seen
        let top = state_before(&g, &m, &trees[2], "VP@VBD", 0);
        assert_eq!(names(&g, &m.values(&g, &top))[6], "'chased'");
        // S@NP before the VP: proxy is the subject's head
        let top = state_before(&g, &m, &trees[3], "S@NP", 0);
        assert_eq!(names(&g, &m.values(&g, &top))[6], "'dog'");
    }

    #[test]
    fn pp_attachment_c_command_order() {
        let text = "(S (NP (DT the) (NN dog)) (VP (VBD chased) (NP (NP (DT the) (NN cat)) (PP (IN with) (NP (NNS spots))))))";
        let g = fixtures::grammar(text);
        let heads = HeadFinder::new(&g, &HeadTable::default());
        let t = fixtures::prepare(&fixtures::trees(text)[0]);
        let mut found = None;
        for_each_application(&g, &heads, &t, |f, _| {
            if g.nt_name(f.sym) == "IN" {
                found = Some(c_command_heads(f).map(|(w, _)| g.token_name(w).to_string()).collect::<Vec<_>>());
            }
        });
        assert_eq!(found.unwrap(), ["cat", "chased", "dog"]);
    }

    #[test]
    fn c_command_excludes_dominating() {
        let (g, m, trees) = g1_model(CondConfig::all());
        // subject NP: nothing to its left, its ancestors dominate it
        let top = state_before(&g, &m, &trees[2], "NP", 0);
        assert_eq!(c_command_heads(&top).count(), 0);
        // object NP is c-commanded by the verb and the subject
        let top = state_before(&g, &m, &trees[2], "NP", 1);
        let heads: Vec<&str> = c_command_heads(&top).map(|(w, _)| g.token_name(w)).collect();
        assert_eq!(heads, ["chased", "Spot"]);
    }

    #[test]
    fn coordination_level_five() {
        let text = "(S (NP (NP (DT the) (NNS dogs)) (CC and) (NP (NNS cats))) (VP (VBP sleep)))";
        let g = fixtures::grammar(text);
        let heads = HeadFinder::new(&g, &HeadTable::default());
        let t = fixtures::prepare(&fixtures::trees(text)[0]);
        let mut seen = Vec::new();
        for_each_application(&g, &heads, &t, |f, _| {
            if g.nt_name(f.sym) == "NP" {
                seen.push(extract_values(&g, &heads, f, &CondConfig::all()).decode(&g));
            }
        });
        // outer NP, first conjunct, second conjunct
        assert_eq!(seen[2][2], Value::Label("CC".into()));
        assert_eq!(seen[2][5], Value::Label("DT".into()));
        assert_eq!(seen[1][5], Value::Null);
    }

    #[test]
    fn level_zero_counts_are_pcfg_and_no_walk() {
        let (g, m, _) = g1_model(CondConfig::none());
        assert!(m.tables.iter().all(|levels| levels.len() == 1 && levels[0].is_empty()));
        for (i, _) in g.rules().iter().enumerate() {
            let top = Frame::root(g.rule(i as RuleId).lhs);
            let p = m.rule_prob(&g, &top, i as RuleId).unwrap();
            assert_eq!(p, g.prob(i as RuleId));
        }
    }

    #[test]
    fn subject_np_counts() {
        let (g, m, _) = g1_model(CondConfig::new(2, 2, 2));
        let np = g.nt_id("NP").unwrap();
        let s = g.nt_id("S").unwrap();
        let np_nn = g.rule_id("NP", &crate::grammar::RhsText::Binary("NN".into(), "NP@NN".into())).unwrap();
        let key = [label_value(np), label_value(s), NULL];
        assert_eq!(m.table_count(CondPath::Left, &key, np_nn), 3);
        assert_eq!(m.dist(CondPath::Left, &key).unwrap().total, 4);
        // prefix closure: level-1 total over the same restriction
        assert_eq!(m.dist(CondPath::Left, &key[..2]).unwrap().total, 4);
    }

    #[test]
    fn interpolated_subject_np_probability() {
        let (g, mut m, trees) = g1_model(CondConfig::new(2, 2, 2));
        let np_dt = g.rule_id("NP", &crate::grammar::RhsText::Binary("DT".into(), "NP@DT".into())).unwrap();
        let top = state_before(&g, &m, &trees[3], "NP", 0);
        m.set_level_lambda(1, 0.5);
        m.set_level_lambda(2, 0.5);
        let (p2, p1, p0) = (0.25, 0.25, 0.4);
        let expect = 0.5 * p2 + 0.5 * (0.5 * p1 + 0.5 * p0);
        assert!((m.rule_prob(&g, &top, np_dt).unwrap() - expect).abs() < 1e-15);
        m.set_level_lambda(2, 0.0);
        assert!((m.rule_prob(&g, &top, np_dt).unwrap() - 0.325).abs() < 1e-15);
        m.set_level_lambda(1, 1.0);
        m.set_level_lambda(2, 1.0);
        assert!((m.rule_prob(&g, &top, np_dt).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn distributions_sum_to_one_in_every_context() {
        let (g, mut m, trees) = g1_model(CondConfig::all());
        m.set_level_lambda(1, 0.3);
        m.set_level_lambda(3, 0.9);
        m.set_level_lambda(6, 0.7);
        for t in &trees {
            for_each_application(&g, &m.heads, t, |top, _| {
                let s: f64 = g.rules_for(top.sym).iter().map(|&r| m.rule_prob(&g, top, r).unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-9);
            });
        }
    }

    #[test]
    fn em_on_g1_is_monotone() {
        let (g, mut m, trees) = g1_model(CondConfig::new(2, 2, 2));
        let out = tune_mix_weights_with(&mut m, &g, &trees[3..], 0.0, 2).unwrap();
        for w in out.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(m.lambdas.iter().all(|l| (0.0..=1.0).contains(l)));
        for p in CondPath::ALL {
            for k in 0..NUM_LEVELS {
                assert_eq!(m.lambda(p, k, 0), 0.0);
            }
        }
    }

    #[test]
    fn em_on_training_data_trusts_context() {
        let text = (0..40).map(|_| fixtures::G1).collect::<String>();
        let g = fixtures::grammar(&text);
        let trees: Vec<Tree> = fixtures::trees(&text).iter().map(fixtures::prepare).collect();
        let mut m = train_counts(&g, &trees, CondConfig::new(1, 1, 1), HeadTable::default()).unwrap();
        let out = tune_mix_weights(&mut m, &g, &trees).unwrap();
        // parent-conditioned estimates fit the held-out data exactly, so the
        // weight moves toward them; contexts where both levels agree leave
        // the shared weight where it is
        assert!(m.lambda(CondPath::Left, 1, 5) > 0.6);
        assert!(out.log_likelihoods.last().unwrap() > &out.log_likelihoods[0]);
    }

    #[test]
    fn no_scorable_heldout_is_error() {
        let (g, mut m, _) = g1_model(CondConfig::new(2, 2, 2));
        let other = fixtures::prepare(&fixtures::trees("(X (Y z))")[0]);
        assert!(tune_mix_weights(&mut m, &g, &[other]).is_err());
    }

    #[test]
    fn replay_state_matches_apply() {
        let (g, m, trees) = g1_model(CondConfig::all());
        let d = g.derivation(&trees[2]).unwrap();
        let mut top = Frame::root(g.start());
        for &r in &d {
            let p = m.rule_prob(&g, &top, r).unwrap();
            assert!(p > 0.0 && p <= 1.0);
            match apply(&g, &m.heads, &top, r) {
                Step::Continue(f) => top = f,
                Step::Complete(_) => break,
            }
        }
    }
}
