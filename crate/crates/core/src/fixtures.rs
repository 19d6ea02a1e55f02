//! Small hand-built corpora used by tests, the oracle check and the docs.

use crate::grammar::{induce_pcfg, left_factor_tree, Pcfg};
use crate::treebank::{augment_with_stop, Corpus, Role, Tree, DEFAULT_END_TOKEN};

pub const G1: &str = "\
(S (NP (NN Spot)) (VP (VBD ran)))
(S (NP (NN Spot)) (VP (VBD ran)))
(S (NP (NN Spot)) (VP (VBD chased) (NP (DT the) (NN ball))))
(S (NP (DT the) (NN dog)) (VP (VBD ran)))
";

/// Prepositional attachment ambiguity without left recursion.
pub const G2: &str = "\
(S (NP (NN John)) (VP (VBD saw) (NP (DT the) (NN man)) (PP (IN with) (NP (NN Mary)))))
(S (NP (NN John)) (VP (VBD saw) (NP (DT the) (NN man) (PP (IN with) (NP (NN Mary))))))
(S (NP (DT the) (NN man)) (VP (VBD saw) (NP (NN John))))
";

/// Coordination and optional modifiers.
pub const G3: &str = "\
(S (NP (NNS dogs)) (VP (VBP bark)))
(S (NP (NNS dogs) (CC and) (NNS cats)) (VP (VBP sleep)))
(S (NP (JJ big) (NNS dogs)) (VP (VBP bark) (ADVP (RB loudly))))
";

pub fn trees(text: &str) -> Vec<Tree> {
    crate::treebank::parse_trees(text).expect("fixture parses")
}

pub fn g1_trees() -> Vec<Tree> {
    trees(G1)
}

/// Stop-augments and left-factors a sentence tree.
pub fn prepare(t: &Tree) -> Tree {
    left_factor_tree(&augment_with_stop(t, DEFAULT_END_TOKEN).expect("not yet augmented"))
        .expect("fixture factors")
}

pub fn prepared_corpus(text: &str) -> Corpus {
    Corpus::new(trees(text).iter().map(prepare).collect(), Role::Train)
}

pub fn grammar(text: &str) -> Pcfg {
    induce_pcfg(&prepared_corpus(text)).expect("fixture grammar")
}

pub fn g1_grammar() -> Pcfg {
    grammar(G1)
}

/// The fixture grammars used for oracle comparisons, by name.
pub fn all() -> [(&'static str, &'static str); 3] {
    [("G1", G1), ("G2", G2), ("G3", G3)]
}
