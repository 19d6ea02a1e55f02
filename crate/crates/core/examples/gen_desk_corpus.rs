//! Generates the synthetic desk treebank used by the trend tests.
//!
//! Usage: `cargo run -p incparse --example gen_desk_corpus -- [OUT_DIR] [SEED]`
//!
//! Sentences come from a small hand-written generator with lexical
//! dependencies a trigram cannot see across: subjects select verbs, verbs
//! select object nouns several words later, and prepositional phrases attach
//! to verbs or nouns depending on the words involved. Punctuation and
//! numerals are included so that corpus normalization has work to do.

use std::fs;
use std::path::PathBuf;

use incparse::treebank::{corpus_to_string, Tree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAIN: usize = 400;
const HELDOUT: usize = 80;
const TEST: usize = 60;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Class {
    Person,
    Animal,
    Food,
    Text,
    Thing,
    Place,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Num {
    Sg,
    Pl,
}

struct Noun {
    sg: &'static str,
    pl: &'static str,
    class: Class,
}

const NOUNS: &[Noun] = &[
    Noun { sg: "man", pl: "men", class: Class::Person },
    Noun { sg: "woman", pl: "women", class: Class::Person },
    Noun { sg: "teacher", pl: "teachers", class: Class::Person },
    Noun { sg: "farmer", pl: "farmers", class: Class::Person },
    Noun { sg: "child", pl: "children", class: Class::Person },
    Noun { sg: "dog", pl: "dogs", class: Class::Animal },
    Noun { sg: "cat", pl: "cats", class: Class::Animal },
    Noun { sg: "bird", pl: "birds", class: Class::Animal },
    Noun { sg: "horse", pl: "horses", class: Class::Animal },
    Noun { sg: "apple", pl: "apples", class: Class::Food },
    Noun { sg: "cake", pl: "cakes", class: Class::Food },
    Noun { sg: "soup", pl: "soups", class: Class::Food },
    Noun { sg: "book", pl: "books", class: Class::Text },
    Noun { sg: "letter", pl: "letters", class: Class::Text },
    Noun { sg: "story", pl: "stories", class: Class::Text },
    Noun { sg: "ball", pl: "balls", class: Class::Thing },
    Noun { sg: "box", pl: "boxes", class: Class::Thing },
    Noun { sg: "hat", pl: "hats", class: Class::Thing },
    Noun { sg: "garden", pl: "gardens", class: Class::Place },
    Noun { sg: "house", pl: "houses", class: Class::Place },
    Noun { sg: "park", pl: "parks", class: Class::Place },
];

fn adjectives(c: Class) -> &'static [&'static str] {
    match c {
        Class::Person => &["old", "young", "happy", "tall"],
        Class::Animal => &["big", "small", "happy", "old"],
        Class::Food => &["fresh", "warm", "sweet"],
        Class::Text => &["long", "short", "old"],
        Class::Thing => &["red", "small", "big"],
        Class::Place => &["big", "quiet", "green"],
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Frame {
    Intransitive,
    Transitive(&'static [Class]),
    /// Object then a locative PP.
    Locative(&'static [Class]),
    Ditransitive,
    Clausal,
}

struct Verb {
    base: &'static str,
    third: &'static str,
    past: &'static str,
    subjects: &'static [Class],
    frame: Frame,
    adverbs: &'static [&'static str],
    /// Prepositions of verb-attached PPs with the classes of their objects.
    pps: &'static [(&'static str, &'static [Class])],
}

const PEOPLE: &[Class] = &[Class::Person];
const ANIMATE: &[Class] = &[Class::Person, Class::Animal];

const VERBS: &[Verb] = &[
    Verb {
        base: "eat",
        third: "eats",
        past: "ate",
        subjects: ANIMATE,
        frame: Frame::Transitive(&[Class::Food]),
        adverbs: &["quickly", "slowly"],
        pps: &[("in", &[Class::Place]), ("with", &[Class::Thing])],
    },
    Verb {
        base: "read",
        third: "reads",
        past: "read",
        subjects: PEOPLE,
        frame: Frame::Transitive(&[Class::Text]),
        adverbs: &["quietly", "slowly"],
        pps: &[("in", &[Class::Place])],
    },
    Verb {
        base: "write",
        third: "writes",
        past: "wrote",
        subjects: PEOPLE,
        frame: Frame::Transitive(&[Class::Text]),
        adverbs: &["quickly"],
        pps: &[("for", &[Class::Person]), ("in", &[Class::Place])],
    },
    Verb {
        base: "chase",
        third: "chases",
        past: "chased",
        subjects: &[Class::Animal],
        frame: Frame::Transitive(&[Class::Animal, Class::Thing]),
        adverbs: &["quickly"],
        pps: &[("in", &[Class::Place])],
    },
    Verb {
        base: "see",
        third: "sees",
        past: "saw",
        subjects: ANIMATE,
        frame: Frame::Transitive(&[Class::Person, Class::Animal, Class::Thing, Class::Place]),
        adverbs: &[],
        pps: &[("with", &[Class::Thing]), ("in", &[Class::Place])],
    },
    Verb {
        base: "bark",
        third: "barks",
        past: "barked",
        subjects: &[Class::Animal],
        frame: Frame::Intransitive,
        adverbs: &["loudly"],
        pps: &[("at", &[Class::Person, Class::Animal])],
    },
    Verb {
        base: "sleep",
        third: "sleeps",
        past: "slept",
        subjects: ANIMATE,
        frame: Frame::Intransitive,
        adverbs: &["quietly"],
        pps: &[("in", &[Class::Place])],
    },
    Verb {
        base: "sing",
        third: "sings",
        past: "sang",
        subjects: ANIMATE,
        frame: Frame::Intransitive,
        adverbs: &["loudly", "softly"],
        pps: &[("for", &[Class::Person]), ("in", &[Class::Place])],
    },
    Verb {
        base: "put",
        third: "puts",
        past: "put",
        subjects: PEOPLE,
        frame: Frame::Locative(&[Class::Food, Class::Text, Class::Thing]),
        adverbs: &[],
        pps: &[],
    },
    Verb {
        base: "give",
        third: "gives",
        past: "gave",
        subjects: PEOPLE,
        frame: Frame::Ditransitive,
        adverbs: &[],
        pps: &[],
    },
    Verb {
        base: "say",
        third: "says",
        past: "said",
        subjects: PEOPLE,
        frame: Frame::Clausal,
        adverbs: &[],
        pps: &[],
    },
];

fn leaf(tag: &str, w: &str) -> Tree {
    Tree::node(tag, vec![Tree::leaf(w)])
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(&mut self.rng).expect("nonempty choice")
    }

    fn noun_of(&mut self, classes: &[Class]) -> &'static Noun {
        let pool: Vec<&'static Noun> = NOUNS.iter().filter(|n| classes.contains(&n.class)).collect();
        *self.pick(&pool)
    }

    /// A noun phrase headed by a noun of one of `classes`.
    fn np(&mut self, classes: &[Class], subject: bool, depth: usize) -> (Tree, Num) {
        if classes.contains(&Class::Person) && self.chance(0.15) {
            let (w, num) = *self.pick(if subject {
                &[("he", Num::Sg), ("she", Num::Sg), ("they", Num::Pl)][..]
            } else {
                &[("him", Num::Sg), ("her", Num::Sg), ("them", Num::Pl)][..]
            });
            return (Tree::node("NP", vec![leaf("PRP", w)]), num);
        }
        if classes.contains(&Class::Person) && self.chance(0.1) {
            let name = *self.pick(&["John", "Mary", "Sue"]);
            return (Tree::node("NP", vec![leaf("NNP", name)]), Num::Sg);
        }
        let n = self.noun_of(classes);
        if subject && self.chance(0.06) {
            // flat coordination of bare plurals
            let other = self.noun_of(&[n.class]);
            let kids = vec![leaf("NNS", n.pl), leaf("CC", "and"), leaf("NNS", other.pl)];
            return (Tree::node("NP", kids), Num::Pl);
        }
        let num = if self.chance(0.35) { Num::Pl } else { Num::Sg };
        let mut kids = Vec::new();
        if num == Num::Pl && self.chance(0.2) {
            let k = self.rng.gen_range(2..60);
            kids.push(leaf("CD", &k.to_string()));
        } else {
            let dets: &[&str] = match num {
                Num::Sg => &["the", "the", "a", "this"],
                Num::Pl => &["the", "the", "some", "these"],
            };
            kids.push(leaf("DT", self.pick(dets)));
        }
        let adj = adjectives(n.class);
        if self.chance(0.35) {
            kids.push(leaf("JJ", self.pick(adj)));
            if self.chance(0.15) {
                kids.push(leaf("JJ", self.pick(adj)));
            }
        }
        kids.push(match num {
            Num::Sg => leaf("NN", n.sg),
            Num::Pl => leaf("NNS", n.pl),
        });
        // noun-attached modifiers compete with the verb-attached ones
        if depth < 2 && self.chance(0.15) {
            let mods: &[(&str, &[Class])] = match n.class {
                Class::Person | Class::Animal => &[("with", &[Class::Thing]), ("in", &[Class::Place])],
                Class::Thing | Class::Food | Class::Text => &[("in", &[Class::Place, Class::Thing])],
                Class::Place => &[],
            };
            if !mods.is_empty() {
                let (prep, classes) = *self.pick(mods);
                kids.push(self.pp(prep, classes, depth + 1).0);
            }
        }
        (Tree::node("NP", kids), num)
    }

    fn pp(&mut self, prep: &str, classes: &[Class], depth: usize) -> (Tree, Num) {
        let (np, num) = self.np(classes, false, depth);
        (Tree::node("PP", vec![leaf("IN", prep), np]), num)
    }

    fn verb_leaf(&mut self, v: &Verb, num: Num, past: bool) -> Tree {
        if past {
            leaf("VBD", v.past)
        } else {
            match num {
                Num::Sg => leaf("VBZ", v.third),
                Num::Pl => leaf("VBP", v.base),
            }
        }
    }

    fn clause(&mut self, depth: usize, past: bool) -> Tree {
        let v = self.pick(VERBS);
        let v = if v.frame == Frame::Clausal && depth >= 2 { &VERBS[0] } else { v };
        let (subj, num) = self.np(v.subjects, true, depth);
        let mut vp = vec![self.verb_leaf(v, num, past)];
        match v.frame {
            Frame::Intransitive => {}
            Frame::Transitive(objs) => vp.push(self.np(objs, false, depth).0),
            Frame::Locative(objs) => {
                vp.push(self.np(objs, false, depth).0);
                let prep = *self.pick(&["on", "in"]);
                vp.push(self.pp(prep, &[Class::Place, Class::Thing], depth).0);
            }
            Frame::Ditransitive => {
                vp.push(self.np(&[Class::Person, Class::Animal], false, depth).0);
                vp.push(self.np(&[Class::Food, Class::Text, Class::Thing], false, depth).0);
            }
            Frame::Clausal => {
                let inner = self.clause(depth + 1, past);
                vp.push(Tree::node("SBAR", vec![leaf("IN", "that"), inner]));
            }
        }
        if !v.pps.is_empty() && self.chance(0.3) {
            let (prep, classes) = *self.pick(v.pps);
            vp.push(self.pp(prep, classes, depth).0);
        }
        if !v.adverbs.is_empty() && self.chance(0.25) {
            let rb = *self.pick(v.adverbs);
            vp.push(Tree::node("ADVP", vec![leaf("RB", rb)]));
        }
        Tree::node("S", vec![subj, Tree::node("VP", vp)])
    }

    fn sentence(&mut self) -> Tree {
        let fronted = self.chance(0.12);
        let past = fronted || self.chance(0.3);
        let mut s = self.clause(0, past);
        if fronted {
            let adv = *self.pick(&["yesterday", "then"]);
            s.children.insert(0, Tree::node("ADVP", vec![leaf("RB", adv)]));
            s.children.insert(1, leaf(",", ","));
        }
        s.children.push(leaf(".", "."));
        s
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/tests/data/desk".into()));
    let seed: u64 = args.next().map(|s| s.parse().expect("numeric seed")).unwrap_or(17);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut all: Vec<Tree> = (0..TRAIN + HELDOUT + TEST).map(|_| g.sentence()).collect();
    let test = all.split_off(TRAIN + HELDOUT);
    let heldout = all.split_off(TRAIN);
    fs::create_dir_all(&out).expect("create output directory");
    for (name, trees) in [("train", &all), ("heldout", &heldout), ("test", &test)] {
        fs::write(out.join(format!("{name}.mrg")), corpus_to_string(trees)).expect("write corpus");
    }
    // speech-like input: tokens as spoken, punctuation dropped, numerals raw
    let sentences: String = test
        .iter()
        .map(|t| {
            let words: Vec<&str> = t
                .preterminals()
                .into_iter()
                .filter(|p| p.label != "." && p.label != ",")
                .map(|p| p.children[0].label.as_str())
                .collect();
            words.join(" ") + "\n"
        })
        .collect();
    fs::write(out.join("test.txt"), sentences).expect("write sentences");
    eprintln!(
        "wrote {} / {} / {} trees to {}",
        all.len(),
        heldout.len(),
        test.len(),
        out.display()
    );
}
