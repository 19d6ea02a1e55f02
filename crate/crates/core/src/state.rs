//! Partial-tree state of a leftmost derivation over the factored grammar.
//!
//! The stack of pending symbols doubles as the spine of the partial tree:
//! every frame is the symbol still to be expanded together with the completed
//! children of the constituent it continues, and the frame below it belongs to
//! the parent constituent. Completed subtrees are stored unfactored, with
//! their lexical heads, so the conditioning functions can walk the
//! unfactored view directly.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::grammar::{NtId, Pcfg, Rhs, RuleId, TokId};
use crate::heads::{Direction, HeadTable};
use crate::treebank::Tree;

#[derive(Debug)]
pub enum NodeKind {
    Pre(TokId),
    Phrase(Vec<Rc<Node>>),
}

/// A completed, unfactored constituent.
#[derive(Debug)]
pub struct Node {
    pub label: NtId,
    pub kind: NodeKind,
    pub head_tok: TokId,
    pub head_pos: NtId,
}

impl Node {
    pub fn to_tree(&self, g: &Pcfg) -> Tree {
        match &self.kind {
            NodeKind::Pre(w) => Tree::node(g.nt_name(self.label), vec![Tree::leaf(g.token_name(*w))]),
            NodeKind::Phrase(kids) => Tree::node(
                g.nt_name(self.label),
                kids.iter().map(|k| k.to_tree(g)).collect(),
            ),
        }
    }

    /// Label of the leftmost child, if the node is a phrase.
    pub fn first_child_label(&self) -> Option<NtId> {
        match &self.kind {
            NodeKind::Pre(_) => None,
            NodeKind::Phrase(kids) => kids.first().map(|k| k.label),
        }
    }
}

/// Completed children of a constituent, most recent first.
#[derive(Debug)]
pub struct Kids {
    pub node: Rc<Node>,
    pub prev: Option<Rc<Kids>>,
}

impl Kids {
    pub fn iter(this: &Option<Rc<Kids>>) -> KidsIter<'_> {
        KidsIter {
            cur: this.as_deref(),
        }
    }

    /// Children in left-to-right order.
    pub fn to_vec(this: &Option<Rc<Kids>>) -> Vec<Rc<Node>> {
        let mut v: Vec<Rc<Node>> = Kids::iter(this).cloned().collect();
        v.reverse();
        v
    }
}

pub struct KidsIter<'a> {
    cur: Option<&'a Kids>,
}

impl<'a> Iterator for KidsIter<'a> {
    type Item = &'a Rc<Node>;

    fn next(&mut self) -> Option<Self::Item> {
        let k = self.cur?;
        self.cur = k.prev.as_deref();
        Some(&k.node)
    }
}

#[derive(Debug)]
pub struct Frame {
    pub sym: NtId,
    pub kids: Option<Rc<Kids>>,
    pub below: Option<Rc<Frame>>,
}

impl Frame {
    pub fn root(start: NtId) -> Rc<Frame> {
        Rc::new(Frame {
            sym: start,
            kids: None,
            below: None,
        })
    }

    /// Frames from this one downward.
    pub fn iter(self: &Rc<Frame>) -> impl Iterator<Item = &Frame> {
        std::iter::successors(Some(&**self), |f| f.below.as_deref())
    }

    pub fn symbols(self: &Rc<Frame>) -> Vec<NtId> {
        self.iter().map(|f| f.sym).collect()
    }
}

/// Head rules resolved against a grammar's nonterminal ids.
#[derive(Debug, Clone)]
pub struct HeadFinder {
    rules: Vec<(Direction, Vec<(Direction, Vec<NtId>)>)>,
}

impl HeadFinder {
    pub fn new(g: &Pcfg, table: &HeadTable) -> HeadFinder {
        let rules = (0..g.num_nonterminals() as NtId)
            .map(|nt| {
                let r = table.rule(g.nt_name(nt));
                let items = r
                    .items
                    .iter()
                    .map(|it| {
                        let ids = it.labels.iter().filter_map(|l| g.nt_id(l)).collect();
                        (it.direction, ids)
                    })
                    .collect();
                (r.fallback, items)
            })
            .collect();
        HeadFinder { rules }
    }

    fn find(&self, label: NtId, kids: &[Rc<Node>]) -> Option<usize> {
        for (dir, ids) in &self.rules[label as usize].1 {
            let hit = |i: &usize| ids.contains(&kids[*i].label);
            let found = match dir {
                Direction::Left => (0..kids.len()).find(hit),
                Direction::Right => (0..kids.len()).rev().find(hit),
            };
            if found.is_some() {
                return found;
            }
        }
        None
    }

    /// Head child of a completed constituent.
    pub fn head(&self, label: NtId, kids: &[Rc<Node>]) -> usize {
        self.find(label, kids).unwrap_or(match self.rules[label as usize].0 {
            Direction::Left => 0,
            Direction::Right => kids.len() - 1,
        })
    }

    /// Head of a constituent still being built: the head child if a priority
    /// item already matches, otherwise the last completed child as a proxy.
    pub fn partial_head(&self, label: NtId, kids: &Option<Rc<Kids>>) -> Option<(TokId, NtId)> {
        let last = kids.as_ref()?;
        let v = Kids::to_vec(kids);
        let n = match self.find(label, &v) {
            Some(i) => &v[i],
            None => &last.node,
        };
        Some((n.head_tok, n.head_pos))
    }
}

pub enum Step {
    Continue(Rc<Frame>),
    Complete(Rc<Node>),
}

fn attach(below: &Option<Rc<Frame>>, node: Rc<Node>) -> Step {
    match below {
        None => Step::Complete(node),
        Some(f) => Step::Continue(Rc::new(Frame {
            sym: f.sym,
            kids: Some(Rc::new(Kids {
                node,
                prev: f.kids.clone(),
            })),
            below: f.below.clone(),
        })),
    }
}

fn close(g: &Pcfg, heads: &HeadFinder, sym: NtId, kids: Vec<Rc<Node>>) -> Rc<Node> {
    let label = g.constituent(sym);
    let h = heads.head(label, &kids);
    let (head_tok, head_pos) = (kids[h].head_tok, kids[h].head_pos);
    Rc::new(Node {
        label,
        kind: NodeKind::Phrase(kids),
        head_tok,
        head_pos,
    })
}

/// Applies `rule` to the top frame. The caller guarantees the rule's lhs is
/// the top symbol and, for terminal rules, that the word matches.
pub fn apply(g: &Pcfg, heads: &HeadFinder, top: &Rc<Frame>, rule: RuleId) -> Step {
    let r = g.rule(rule);
    debug_assert_eq!(r.lhs, top.sym);
    match r.rhs {
        Rhs::Binary(b, rest) => {
            let cont = Rc::new(Frame {
                sym: rest,
                kids: top.kids.clone(),
                below: top.below.clone(),
            });
            Step::Continue(Rc::new(Frame {
                sym: b,
                kids: None,
                below: Some(cont),
            }))
        }
        Rhs::Terminal(w) => attach(
            &top.below,
            Rc::new(Node {
                label: top.sym,
                kind: NodeKind::Pre(w),
                head_tok: w,
                head_pos: top.sym,
            }),
        ),
        Rhs::Epsilon => {
            let kids = Kids::to_vec(&top.kids);
            if kids.is_empty() {
                // a factored symbol always continues a constituent with children
                unreachable!("empty expansion of a childless frame");
            }
            attach(&top.below, close(g, heads, top.sym, kids))
        }
    }
}

/// Replays a leftmost derivation from the start symbol, calling `visit`
/// with the state before each rule. Returns the completed root.
pub fn replay(
    g: &Pcfg,
    heads: &HeadFinder,
    rules: &[RuleId],
    mut visit: impl FnMut(&Rc<Frame>, RuleId),
) -> Result<Rc<Node>> {
    let mut top = Frame::root(g.start());
    for (i, &r) in rules.iter().enumerate() {
        if g.rule(r).lhs != top.sym {
            return Err(Error::Factoring(format!(
                "rule {} does not expand the leftmost symbol {}",
                g.render_rule(r),
                g.nt_name(top.sym)
            )));
        }
        visit(&top, r);
        match apply(g, heads, &top, r) {
            Step::Continue(f) => top = f,
            Step::Complete(n) if i + 1 == rules.len() => return Ok(n),
            Step::Complete(_) => {
                return Err(Error::Factoring("derivation continues past the root".into()))
            }
        }
    }
    Err(Error::Factoring("derivation leaves open symbols".into()))
}

/// Closes every open constituent of a partial analysis. Frames without any
/// completed child are dropped rather than closed, so no constituent is
/// predicted beyond what the words support. Returns the unfactored tree,
/// rooted at the start symbol.
pub fn close_partial(g: &Pcfg, heads: &HeadFinder, top: &Rc<Frame>) -> Tree {
    let mut pending: Option<Rc<Node>> = None;
    let mut root_label = g.constituent(top.sym);
    for f in top.iter() {
        let mut kids = Kids::to_vec(&f.kids);
        if let Some(p) = pending.take() {
            kids.push(p);
        }
        root_label = g.constituent(f.sym);
        if !kids.is_empty() {
            pending = Some(close(g, heads, f.sym, kids));
        }
    }
    match pending {
        Some(n) => n.to_tree(g),
        None => Tree::node(g.nt_name(root_label), Vec::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grammar::unfactor_tree;

    #[test]
    fn replay_rebuilds_unfactored_tree() {
        let g = fixtures::g1_grammar();
        let heads = HeadFinder::new(&g, &HeadTable::default());
        for t in fixtures::g1_trees() {
            let f = fixtures::prepare(&t);
            let d = g.derivation(&f).unwrap();
            let mut seen = 0;
            let root = replay(&g, &heads, &d, |_, _| seen += 1).unwrap();
            assert_eq!(seen, d.len());
            assert_eq!(root.to_tree(&g), unfactor_tree(&f).unwrap());
        }
    }

    #[test]
    fn heads_follow_table() {
        let g = fixtures::g1_grammar();
        let heads = HeadFinder::new(&g, &HeadTable::default());
        let t = fixtures::prepare(&fixtures::g1_trees()[2]);
        let root = replay(&g, &heads, &g.derivation(&t).unwrap(), |_, _| {}).unwrap();
        assert_eq!(g.token_name(root.head_tok), "chased");
        assert_eq!(g.nt_name(root.head_pos), "VBD");
    }

    #[test]
    fn stack_is_the_spine() {
        let g = fixtures::g1_grammar();
        let heads = HeadFinder::new(&g, &HeadTable::default());
        let t = fixtures::prepare(&fixtures::g1_trees()[3]);
        let d = g.derivation(&t).unwrap();
        let mut top = Frame::root(g.start());
        // S† -> S S†@S, S -> NP S@NP, NP -> DT NP@DT, DT -> the
        for &r in &d[..4] {
            top = match apply(&g, &heads, &top, r) {
                Step::Continue(f) => f,
                Step::Complete(_) => panic!(),
            };
        }
        let names: Vec<&str> = top.symbols().iter().map(|&s| g.nt_name(s)).collect();
        assert_eq!(names, ["NP@DT", "S@NP", "S†@S"]);
        let partial = close_partial(&g, &heads, &top);
        assert_eq!(partial.to_string(), "(S† (S (NP (DT the))))");
    }
}
