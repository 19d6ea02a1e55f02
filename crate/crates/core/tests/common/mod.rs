#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use incparse::pipeline::{train, Model, TrainConfig};
use incparse::treebank::{read_corpus, Corpus, Role, Tree};
use proptest::prelude::*;
use rand::Rng;

pub const TAGS: &[&str] = &["DT", "NN", "VB", "IN", "JJ", "CD", "."];
pub const WORDS: &[&str] = &["the", "a", "dog", "runs", "on", "big", "7", "1,000", ".", "of"];
/// Phrase labels; a first child always has a later label than its parent,
/// so grammars induced from these trees have no left recursion.
pub const PHRASES: &[&str] = &["S", "VP", "NP", "PP", "ADJP"];

pub fn desk_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/desk")
}

pub fn desk(name: &str) -> Corpus {
    let role = match name {
        "train" => Role::Train,
        "heldout" => Role::Heldout,
        _ => Role::Test,
    };
    read_corpus(desk_dir().join(format!("{name}.mrg")), role).expect("desk corpus")
}

/// Desk model with default settings, trained once per test binary.
pub fn desk_model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| train(&desk("train"), &desk("heldout"), &TrainConfig::default()).unwrap().0)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn preterminal(tag: usize, word: usize) -> Tree {
    Tree::node(TAGS[tag % TAGS.len()], vec![Tree::leaf(WORDS[word % WORDS.len()])])
}

/// A random sentence tree rooted at `PHRASES[level]`.
pub fn random_tree(rng: &mut impl Rng, level: usize, depth: usize) -> Tree {
    let n = rng.gen_range(1..=4);
    let kids = (0..n)
        .map(|i| {
            let deeper = level + 1 < PHRASES.len() && depth > 0 && rng.gen_bool(0.4);
            if deeper {
                // only later labels may come first
                let lo = if i == 0 { level + 1 } else { 0 };
                let l = rng.gen_range(lo.max(1)..PHRASES.len());
                random_tree(rng, l, depth - 1)
            } else {
                preterminal(rng.gen_range(0..TAGS.len()), rng.gen_range(0..WORDS.len()))
            }
        })
        .collect();
    Tree::node(PHRASES[level], kids)
}

pub fn arb_tree() -> impl Strategy<Value = Tree> {
    (any::<u64>(), 0..4usize).prop_map(|(seed, depth)| {
        use rand::SeedableRng;
        random_tree(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), 0, depth)
    })
}

/// Groups a sequence of preterminals into a random bracketing over the same yield.
pub fn rebracket(rng: &mut impl Rng, items: &[Tree]) -> Tree {
    if items.len() == 1 && rng.gen_bool(0.5) {
        return Tree::node(PHRASES[rng.gen_range(0..PHRASES.len())], items.to_vec());
    }
    let mut kids = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let take = rng.gen_range(1..=items.len() - i);
        if take == items.len() || take == 1 {
            kids.extend_from_slice(&items[i..i + take]);
        } else {
            kids.push(rebracket(rng, &items[i..i + take]));
        }
        i += take;
    }
    Tree::node(PHRASES[rng.gen_range(0..PHRASES.len())], kids)
}
