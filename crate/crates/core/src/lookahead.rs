//! Look-ahead probability: how likely a stack is to rewrite with a given word
//! as its left corner.
//!
//! For each nonterminal `A` the tables hold the empirical distribution of the
//! leftmost word under `A`, of the leftmost preterminal under `A`, and the
//! probability that `A` rewrote to nothing at all. A single symbol's estimate
//! mixes the direct word estimate with the preterminal route; a stack's
//! estimate adds the next symbol's share whenever the top can vanish.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::grammar::{NtId, Pcfg, TokId};
use crate::state::Frame;
use crate::treebank::{Tree, EPSILON_TOKEN};

pub const DEFAULT_K: f64 = 5.0;
pub const LAP_FLOOR: f64 = 1e-10;

/// The word the parser is trying to attach next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookahead {
    /// A word; `None` if the grammar has never seen it.
    Word(Option<TokId>),
    /// All input consumed.
    End,
    /// No look-ahead information; every stack scores 1.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LapTables {
    pub k: f64,
    pub nt_freq: Vec<u64>,
    /// Sorted by token id.
    pub word_counts: Vec<Vec<(TokId, u64)>>,
    /// Sorted by preterminal id.
    pub pos_counts: Vec<Vec<(NtId, u64)>>,
    pub eps_counts: Vec<u64>,
}

fn leftmost(t: &Tree) -> Option<(&str, &str)> {
    if t.is_preterminal() {
        let w = &t.children[0].label;
        return if w == EPSILON_TOKEN {
            None
        } else {
            Some((w.as_str(), t.label.as_str()))
        };
    }
    t.children.iter().find_map(leftmost)
}

impl LapTables {
    pub fn collect(g: &Pcfg, trees: &[Tree], k: f64) -> Result<LapTables> {
        if trees.is_empty() {
            return Err(Error::Empty("no trees to collect look-ahead tables from".into()));
        }
        if !(k > 0.0) {
            return Err(Error::Config(format!("look-ahead smoothing constant must be positive, got {k}")));
        }
        let n = g.num_nonterminals();
        let mut nt_freq = vec![0u64; n];
        let mut words: Vec<FxHashMap<TokId, u64>> = vec![FxHashMap::default(); n];
        let mut pos: Vec<FxHashMap<NtId, u64>> = vec![FxHashMap::default(); n];
        let mut eps = vec![0u64; n];
        let mut missing = None;
        for t in trees {
            t.for_each_internal(&mut |node| {
                let Some(a) = g.nt_id(&node.label) else {
                    missing.get_or_insert_with(|| node.label.clone());
                    return;
                };
                let a = a as usize;
                nt_freq[a] += 1;
                match leftmost(node) {
                    None => eps[a] += 1,
                    Some((w, x)) => match (g.token_id(w), g.nt_id(x)) {
                        (Some(w), Some(x)) => {
                            *words[a].entry(w).or_insert(0) += 1;
                            *pos[a].entry(x).or_insert(0) += 1;
                        }
                        _ => {
                            missing.get_or_insert_with(|| w.to_string());
                        }
                    },
                }
            });
        }
        if let Some(m) = missing {
            return Err(Error::Config(format!("symbol {m:?} is not part of the grammar")));
        }
        let sorted = |m: FxHashMap<u32, u64>| {
            let mut v: Vec<(u32, u64)> = m.into_iter().collect();
            v.sort_unstable();
            v
        };
        Ok(LapTables {
            k,
            nt_freq,
            word_counts: words.into_iter().map(sorted).collect(),
            pos_counts: pos.into_iter().map(sorted).collect(),
            eps_counts: eps,
        })
    }

    pub fn lambda(&self, a: NtId) -> f64 {
        let f = self.nt_freq[a as usize] as f64;
        f / (f + self.k)
    }

    pub fn word_lc(&self, a: NtId, w: TokId) -> f64 {
        let f = self.nt_freq[a as usize];
        if f == 0 {
            return 0.0;
        }
        let v = &self.word_counts[a as usize];
        match v.binary_search_by_key(&w, |e| e.0) {
            Ok(i) => v[i].1 as f64 / f as f64,
            Err(_) => 0.0,
        }
    }

    pub fn pos_lc(&self, a: NtId, x: NtId) -> f64 {
        let f = self.nt_freq[a as usize];
        if f == 0 {
            return 0.0;
        }
        let v = &self.pos_counts[a as usize];
        match v.binary_search_by_key(&x, |e| e.0) {
            Ok(i) => v[i].1 as f64 / f as f64,
            Err(_) => 0.0,
        }
    }

    pub fn eps(&self, a: NtId) -> f64 {
        let f = self.nt_freq[a as usize];
        if f == 0 {
            0.0
        } else {
            self.eps_counts[a as usize] as f64 / f as f64
        }
    }

    pub fn lap_single_with(&self, g: &Pcfg, a: NtId, w: TokId, lambda: f64) -> f64 {
        let f = self.nt_freq[a as usize];
        if f == 0 {
            return 0.0;
        }
        let direct = self.word_lc(a, w);
        let via_pos: f64 = self.pos_counts[a as usize]
            .iter()
            .filter_map(|&(x, c)| g.terminal_rule(x, w).map(|r| c as f64 / f as f64 * g.prob(r)))
            .sum();
        (lambda * direct + (1.0 - lambda) * via_pos).clamp(0.0, 1.0)
    }

    pub fn lap_single(&self, g: &Pcfg, a: NtId, w: TokId) -> f64 {
        self.lap_single_with(g, a, w, self.lambda(a))
    }

    /// Look-ahead probability of a symbol sequence, top first, without the floor.
    pub fn lap_symbols(&self, g: &Pcfg, stack: &[NtId], w: TokId) -> f64 {
        let mut total = 0.0;
        let mut carry = 1.0;
        for &a in stack {
            total += carry * self.lap_single(g, a, w);
            carry *= self.eps(a);
            if carry == 0.0 {
                break;
            }
        }
        total.clamp(0.0, 1.0)
    }

    pub fn lap_stack(&self, g: &Pcfg, stack: &[NtId], la: Lookahead) -> f64 {
        match la {
            Lookahead::End | Lookahead::Unknown => 1.0,
            Lookahead::Word(None) => LAP_FLOOR,
            Lookahead::Word(Some(w)) => self.lap_symbols(g, stack, w).max(LAP_FLOOR),
        }
    }
}

/// Per-position cache of single-symbol look-ahead values.
pub struct LapCache<'a> {
    tables: &'a LapTables,
    g: &'a Pcfg,
    la: Lookahead,
    single: Vec<f64>,
}

impl<'a> LapCache<'a> {
    pub fn new(g: &'a Pcfg, tables: &'a LapTables, la: Lookahead) -> Self {
        LapCache {
            tables,
            g,
            la,
            single: vec![f64::NAN; g.num_nonterminals()],
        }
    }

    pub fn lookahead(&self) -> Lookahead {
        self.la
    }

    fn single(&mut self, a: NtId, w: TokId) -> f64 {
        let v = self.single[a as usize];
        if !v.is_nan() {
            return v;
        }
        let v = self.tables.lap_single(self.g, a, w);
        self.single[a as usize] = v;
        v
    }

    /// Natural log of the floored look-ahead probability of a stack.
    pub fn ln_lap(&mut self, top: &Frame) -> f64 {
        let w = match self.la {
            Lookahead::End | Lookahead::Unknown => return 0.0,
            Lookahead::Word(None) => return LAP_FLOOR.ln(),
            Lookahead::Word(Some(w)) => w,
        };
        let mut total = 0.0;
        let mut carry = 1.0;
        let mut f = Some(top);
        while let Some(fr) = f {
            total += carry * self.single(fr.sym, w);
            carry *= self.tables.eps(fr.sym);
            if carry == 0.0 {
                break;
            }
            f = fr.below.as_deref();
        }
        total.clamp(LAP_FLOOR, 1.0).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn g1() -> (Pcfg, LapTables) {
        let g = fixtures::g1_grammar();
        let trees: Vec<Tree> = fixtures::g1_trees().iter().map(fixtures::prepare).collect();
        let t = LapTables::collect(&g, &trees, DEFAULT_K).unwrap();
        (g, t)
    }

    #[test]
    fn g1_tables() {
        let (g, t) = g1();
        let nt = |s: &str| g.nt_id(s).unwrap();
        let tok = |s: &str| g.token_id(s).unwrap();
        assert_eq!(t.eps(nt("NP@DT@NN")), 1.0);
        assert!((t.word_lc(nt("NP"), tok("the")) - 0.4).abs() < 1e-15);
        assert!((t.pos_lc(nt("NP"), nt("DT")) - 0.4).abs() < 1e-15);
        assert!((t.pos_lc(nt("NP"), nt("NN")) - 0.6).abs() < 1e-15);
        assert!((t.lap_single_with(&g, nt("NP"), tok("the"), 0.5) - 0.4).abs() < 1e-15);
        assert!((t.lambda(nt("NP")) - 5.0 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn tables_partition() {
        let (g, t) = g1();
        for (a, _) in g.nonterminals() {
            if t.nt_freq[a as usize] == 0 {
                continue;
            }
            let w: f64 = t.word_counts[a as usize].iter().map(|e| e.1 as f64).sum::<f64>()
                / t.nt_freq[a as usize] as f64;
            let p: f64 = t.pos_counts[a as usize].iter().map(|e| e.1 as f64).sum::<f64>()
                / t.nt_freq[a as usize] as f64;
            assert!((w + t.eps(a) - 1.0).abs() < 1e-9);
            assert!((p + t.eps(a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_extremes() {
        let (g, t) = g1();
        let nt = |s: &str| g.nt_id(s).unwrap();
        let tok = |s: &str| g.token_id(s).unwrap();
        let a = nt("VP");
        let w = tok("chased");
        assert!((t.lap_single_with(&g, a, w, 1.0) - t.word_lc(a, w)).abs() < 1e-15);
        let backoff = 1.0 * g.prob(g.terminal_rule(nt("VBD"), w).unwrap());
        assert!((t.lap_single_with(&g, a, w, 0.0) - backoff).abs() < 1e-15);
    }

    #[test]
    fn erasing_chain_reaches_stop() {
        let (g, t) = g1();
        let stack: Vec<NtId> = ["NP@DT@NN", "VP@VBD@NP", "S@NP@VP", "S†@S"]
            .iter()
            .map(|s| g.nt_id(s).unwrap())
            .collect();
        let end = g.token_id("</s>").unwrap();
        assert!((t.lap_symbols(&g, &stack, end) - 1.0).abs() < 1e-12);
        assert_eq!(t.lap_stack(&g, &[], Lookahead::End), 1.0);
        // a top that cannot vanish cuts the recursion
        let np = g.nt_id("NP").unwrap();
        let the = g.token_id("the").unwrap();
        assert_eq!(t.lap_symbols(&g, &[np, stack[3]], the), t.lap_single(&g, np, the));
    }

    #[test]
    fn floor_for_unknown_words() {
        let (g, t) = g1();
        let np = g.nt_id("NP").unwrap();
        assert_eq!(t.lap_stack(&g, &[np], Lookahead::Word(None)), LAP_FLOOR);
        let end = g.token_id("</s>").unwrap();
        assert_eq!(t.lap_stack(&g, &[np], Lookahead::Word(Some(end))), LAP_FLOOR);
    }

    #[test]
    fn cache_agrees_with_direct() {
        let (g, t) = g1();
        let trees: Vec<Tree> = fixtures::g1_trees().iter().map(fixtures::prepare).collect();
        let heads = crate::state::HeadFinder::new(&g, &crate::heads::HeadTable::default());
        for w in ["Spot", "the", "ran", "</s>"] {
            let la = Lookahead::Word(g.token_id(w));
            let mut cache = LapCache::new(&g, &t, la);
            crate::conditioning::for_each_application(&g, &heads, &trees[2], |f, _| {
                let direct = t.lap_stack(&g, &f.symbols(), la);
                assert!((cache.ln_lap(f) - direct.ln()).abs() < 1e-12);
            });
        }
    }
}
