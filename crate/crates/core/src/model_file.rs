//! Versioned plain-text model files.
//!
//! The file is a sequence of sections, each opened by a `[name]` line. Fields
//! are separated by single spaces; symbols and tokens never contain
//! whitespace, and every list is preceded by its length, so no other
//! delimiter is needed. Maps are written in sorted order and floats in their
//! shortest round-trip form, so equal models give byte-identical files.
//!
//! ```text
//! incparse-model 1
//! [normalization]   settings and the closed vocabulary
//! [grammar]         start symbol and one `count lhs kind rhs…` line per rule
//! [heads]           head-percolation table
//! [conditioning]    depths, mixing weights and per-context rule counts
//! [lookahead]       left-corner counts per nonterminal
//! [trigram]         vocabulary, weights and n-gram counts
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::SplitWhitespace;

use rustc_hash::FxHashMap;

use crate::conditioning::{
    lambda_index, CondConfig, CondModel, CondPath, Dist, Table, Value, NUM_BUCKETS, NUM_LEVELS,
};
use crate::error::{Error, Result};
use crate::grammar::{Interner, Pcfg, RhsText};
use crate::heads::HeadTable;
use crate::langmodel::NgramModel;
use crate::lookahead::LapTables;
use crate::pipeline::Model;
use crate::state::HeadFinder;
use crate::treebank::{NormalizationConfig, Normalizer};

pub const MAGIC: &str = "incparse-model";
pub const FORMAT_VERSION: u32 = 1;

fn opt(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("-")
}

fn value_text(g: &Pcfg, v: u32) -> String {
    match Value::decode(g, v) {
        Value::Null => "-".into(),
        Value::Label(l) => format!("L:{l}"),
        Value::Token(t) => format!("W:{t}"),
    }
}

pub fn write_model(m: &Model) -> String {
    let mut s = String::new();
    let g = &m.grammar;
    writeln!(s, "{MAGIC} {FORMAT_VERSION}").unwrap();

    let n = &m.normalizer.config;
    s.push_str("[normalization]\n");
    writeln!(s, "strip_punctuation {}", n.strip_punctuation).unwrap();
    write!(s, "punctuation {}", n.punctuation_labels.len()).unwrap();
    for p in &n.punctuation_labels {
        write!(s, " {p}").unwrap();
    }
    s.push('\n');
    writeln!(s, "number_token {}", opt(&n.number_token)).unwrap();
    match n.vocab_cap {
        Some(c) => writeln!(s, "vocab_cap {c}").unwrap(),
        None => s.push_str("vocab_cap -\n"),
    }
    writeln!(s, "unk {}", n.unk_token).unwrap();
    writeln!(s, "end {}", n.end_token).unwrap();
    match &m.normalizer.vocabulary {
        Some(v) => {
            writeln!(s, "vocabulary {}", v.len()).unwrap();
            for w in v {
                writeln!(s, "{w}").unwrap();
            }
        }
        None => s.push_str("vocabulary -\n"),
    }

    s.push_str("[grammar]\n");
    writeln!(s, "start {}", g.nt_name(g.start())).unwrap();
    writeln!(s, "rules {}", g.num_rules()).unwrap();
    for r in 0..g.num_rules() as u32 {
        let (lhs, rhs) = g.rule_text(r);
        let c = g.rule_count(r);
        match rhs {
            RhsText::Binary(a, b) => writeln!(s, "{c} {lhs} B {a} {b}"),
            RhsText::Terminal(w) => writeln!(s, "{c} {lhs} T {w}"),
            RhsText::Epsilon => writeln!(s, "{c} {lhs} E"),
        }
        .unwrap();
    }

    s.push_str("[heads]\n");
    let heads = m.cond.head_table.to_string();
    writeln!(s, "lines {}", heads.lines().count()).unwrap();
    s.push_str(&heads);
    if !heads.is_empty() && !heads.ends_with('\n') {
        s.push('\n');
    }

    s.push_str("[conditioning]\n");
    let c = &m.cond.config;
    writeln!(s, "depths {} {} {}", c.l_nonpos, c.l_leftpos, c.l_rightpos).unwrap();
    for p in CondPath::ALL {
        for level in 1..NUM_LEVELS {
            write!(s, "lambda {} {level}", p.name()).unwrap();
            for b in 0..NUM_BUCKETS {
                write!(s, " {}", m.cond.lambdas[lambda_index(p, level, b)]).unwrap();
            }
            s.push('\n');
        }
    }
    for p in CondPath::ALL {
        let tables = &m.cond.tables[p.index()];
        for (level, table) in tables.iter().enumerate().skip(1) {
            writeln!(s, "table {} {level} {}", p.name(), table.len()).unwrap();
            let mut keys: Vec<&Box<[u32]>> = table.keys().collect();
            keys.sort_unstable();
            for k in keys {
                let d = &table[k];
                for (i, &v) in k.iter().enumerate() {
                    if i > 0 {
                        s.push(' ');
                    }
                    s.push_str(&value_text(g, v));
                }
                write!(s, " {}", d.counts.len()).unwrap();
                for (r, n) in &d.counts {
                    write!(s, " {r} {n}").unwrap();
                }
                s.push('\n');
            }
        }
    }

    s.push_str("[lookahead]\n");
    writeln!(s, "k {}", m.lap.k).unwrap();
    for a in 0..g.num_nonterminals() {
        write!(
            s,
            "nt {} {} {} {}",
            g.nt_name(a as u32),
            m.lap.nt_freq[a],
            m.lap.eps_counts[a],
            m.lap.word_counts[a].len()
        )
        .unwrap();
        for (w, n) in &m.lap.word_counts[a] {
            write!(s, " {} {n}", g.token_name(*w)).unwrap();
        }
        write!(s, " {}", m.lap.pos_counts[a].len()).unwrap();
        for (x, n) in &m.lap.pos_counts[a] {
            write!(s, " {} {n}", g.nt_name(*x)).unwrap();
        }
        s.push('\n');
    }

    s.push_str("[trigram]\n");
    let t = &m.ngram;
    writeln!(s, "vocabulary {}", t.vocab.len()).unwrap();
    for (id, w) in t.vocab.iter() {
        writeln!(s, "{w} {}", t.unigram[id as usize]).unwrap();
    }
    writeln!(s, "unk {}", t.vocab.name(t.unk)).unwrap();
    writeln!(s, "end {}", t.vocab.name(t.end)).unwrap();
    for (i, row) in t.lambdas.iter().enumerate() {
        write!(s, "lambda {}", i + 2).unwrap();
        for l in row {
            write!(s, " {l}").unwrap();
        }
        s.push('\n');
    }
    let mut bi: Vec<(&(u32, u32), &u64)> = t.bigram.iter().collect();
    bi.sort_unstable();
    writeln!(s, "bigrams {}", bi.len()).unwrap();
    for ((v, w), c) in bi {
        writeln!(s, "{v} {w} {c}").unwrap();
    }
    let mut tri: Vec<(&(u32, u32, u32), &u64)> = t.trigram.iter().collect();
    tri.sort_unstable();
    writeln!(s, "trigrams {}", tri.len()).unwrap();
    for ((u, v, w), c) in tri {
        writeln!(s, "{u} {v} {w} {c}").unwrap();
    }
    s
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

struct Fields<'a> {
    it: SplitWhitespace<'a>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.it.next().ok_or_else(|| self.err("line ends early"))
    }

    fn keyword(&mut self, k: &str) -> Result<()> {
        let f = self.next()?;
        if f != k {
            return Err(self.err(format!("expected {k:?}, found {f:?}")));
        }
        Ok(())
    }

    fn num<T: std::str::FromStr>(&mut self) -> Result<T> {
        let f = self.next()?;
        f.parse().map_err(|_| self.err(format!("bad number {f:?}")))
    }

    fn opt_num<T: std::str::FromStr>(&mut self) -> Result<Option<T>> {
        match self.next()? {
            "-" => Ok(None),
            f => f.parse().map(Some).map_err(|_| self.err(format!("bad number {f:?}"))),
        }
    }

    fn end(mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(f) => Err(self.err(format!("unexpected trailing field {f:?}"))),
        }
    }
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn raw(&mut self) -> Result<&'a str> {
        let (i, l) = self.lines.next().ok_or(Error::ModelFormat {
            line: self.line + 1,
            msg: "file ends early".into(),
        })?;
        self.line = i + 1;
        Ok(l)
    }

    fn fields(&mut self) -> Result<Fields<'a>> {
        let l = self.raw()?;
        Ok(Fields {
            it: l.split_whitespace(),
            line: self.line,
        })
    }

    /// A `key value` line.
    fn entry(&mut self, key: &str) -> Result<Fields<'a>> {
        let mut f = self.fields()?;
        f.keyword(key)?;
        Ok(f)
    }

    fn single(&mut self, key: &str) -> Result<&'a str> {
        let mut f = self.entry(key)?;
        let v = f.next()?;
        f.end()?;
        Ok(v)
    }

    fn section(&mut self, name: &str) -> Result<()> {
        let l = self.raw()?;
        if l.trim() != format!("[{name}]") {
            return Err(Error::ModelFormat {
                line: self.line,
                msg: format!("expected section [{name}], found {l:?}"),
            });
        }
        Ok(())
    }
}

fn parse_value(g: &Pcfg, f: &Fields<'_>, s: &str) -> Result<u32> {
    let v = match s {
        "-" => Value::Null,
        _ => match s.split_once(':') {
            Some(("L", l)) => Value::Label(l.into()),
            Some(("W", w)) => Value::Token(w.into()),
            _ => return Err(f.err(format!("bad context value {s:?}"))),
        },
    };
    Value::encode(g, &v).ok_or_else(|| f.err(format!("context value {s:?} is not in the grammar")))
}

pub fn read_model(text: &str) -> Result<Model> {
    let mut r = Reader::new(text);
    {
        let mut f = r.fields()?;
        let magic = f.next()?;
        if magic != MAGIC {
            return Err(f.err(format!("not a model file (starts with {magic:?})")));
        }
        let v = f.next()?;
        if v.parse::<u32>().ok() != Some(FORMAT_VERSION) {
            return Err(Error::ModelVersion {
                found: v.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        f.end()?;
    }

    r.section("normalization")?;
    let strip_punctuation = match r.single("strip_punctuation")? {
        "true" => true,
        "false" => false,
        other => {
            return Err(Error::ModelFormat {
                line: r.line,
                msg: format!("bad flag {other:?}"),
            })
        }
    };
    let mut f = r.entry("punctuation")?;
    let n: usize = f.num()?;
    let mut punctuation_labels = BTreeSet::new();
    for _ in 0..n {
        punctuation_labels.insert(f.next()?.to_string());
    }
    f.end()?;
    let number_token = match r.single("number_token")? {
        "-" => None,
        t => Some(t.to_string()),
    };
    let mut f = r.entry("vocab_cap")?;
    let vocab_cap = f.opt_num()?;
    f.end()?;
    let unk_token = r.single("unk")?.to_string();
    let end_token = r.single("end")?.to_string();
    let mut f = r.entry("vocabulary")?;
    let vocabulary = match f.opt_num::<usize>()? {
        None => None,
        Some(n) => {
            let mut v = BTreeSet::new();
            for _ in 0..n {
                v.insert(r.raw()?.trim().to_string());
            }
            Some(v)
        }
    };
    let config = NormalizationConfig {
        strip_punctuation,
        punctuation_labels,
        number_token,
        vocab_cap,
        unk_token,
        end_token,
    };
    config.validate()?;
    let normalizer = Normalizer { config, vocabulary };

    r.section("grammar")?;
    let start = r.single("start")?.to_string();
    let mut f = r.entry("rules")?;
    let nrules: usize = f.num()?;
    f.end()?;
    let mut counts = BTreeMap::new();
    let mut order = Vec::with_capacity(nrules);
    for _ in 0..nrules {
        let mut f = r.fields()?;
        let c: u64 = f.num()?;
        let lhs = f.next()?.to_string();
        let rhs = match f.next()? {
            "B" => RhsText::Binary(f.next()?.into(), f.next()?.into()),
            "T" => RhsText::Terminal(f.next()?.into()),
            "E" => RhsText::Epsilon,
            k => return Err(f.err(format!("bad rule kind {k:?}"))),
        };
        let line = f.line;
        f.end()?;
        order.push((line, lhs.clone(), rhs.clone()));
        if counts.insert((lhs, rhs), c).is_some() {
            return Err(Error::ModelFormat {
                line,
                msg: "duplicate rule".into(),
            });
        }
    }
    let grammar = Pcfg::from_counts(&counts, &start)?;
    for (i, (line, lhs, rhs)) in order.iter().enumerate() {
        if grammar.rule_id(lhs, rhs) != Some(i as u32) {
            return Err(Error::ModelFormat {
                line: *line,
                msg: "rules are not in canonical order".into(),
            });
        }
    }

    r.section("heads")?;
    let mut f = r.entry("lines")?;
    let nheads: usize = f.num()?;
    f.end()?;
    let first = r.line + 1;
    let mut head_text = String::new();
    for _ in 0..nheads {
        head_text.push_str(r.raw()?);
        head_text.push('\n');
    }
    let head_table = HeadTable::parse(&head_text).map_err(|e| match e {
        Error::Syntax { line, msg } => Error::ModelFormat {
            line: first + line - 1,
            msg,
        },
        e => e,
    })?;

    r.section("conditioning")?;
    let mut f = r.entry("depths")?;
    let config = CondConfig::new(f.num()?, f.num()?, f.num()?);
    f.end()?;
    config.validate()?;
    let mut lambdas = vec![0.0; 3 * NUM_LEVELS * NUM_BUCKETS];
    for p in CondPath::ALL {
        for level in 1..NUM_LEVELS {
            let mut f = r.entry("lambda")?;
            f.keyword(p.name())?;
            if f.num::<usize>()? != level {
                return Err(f.err("mixing weights out of order"));
            }
            for b in 0..NUM_BUCKETS {
                let l: f64 = f.num()?;
                if !(0.0..=1.0).contains(&l) {
                    return Err(f.err(format!("mixing weight {l} outside [0, 1]")));
                }
                lambdas[lambda_index(p, level, b)] = l;
            }
            f.end()?;
        }
    }
    let mut tables: [Vec<Table>; 3] = Default::default();
    for p in CondPath::ALL {
        let levels = &mut tables[p.index()];
        levels.push(Table::default());
        for level in 1..=config.depth(p) {
            let mut f = r.entry("table")?;
            f.keyword(p.name())?;
            if f.num::<usize>()? != level {
                return Err(f.err("tables out of order"));
            }
            let n: usize = f.num()?;
            f.end()?;
            let mut table = Table::default();
            for _ in 0..n {
                let mut f = r.fields()?;
                let mut key = Vec::with_capacity(level + 1);
                for _ in 0..=level {
                    let s = f.next()?;
                    key.push(parse_value(&grammar, &f, s)?);
                }
                let m: usize = f.num()?;
                let mut counts = Vec::with_capacity(m);
                for _ in 0..m {
                    let rule: u32 = f.num()?;
                    if rule as usize >= grammar.num_rules() {
                        return Err(f.err(format!("rule index {rule} out of range")));
                    }
                    counts.push((rule, f.num::<u64>()?));
                }
                counts.sort_unstable();
                let total = counts.iter().map(|c| c.1).sum();
                let line = f.line;
                f.end()?;
                if table.insert(key.into(), Dist { total, counts }).is_some() {
                    return Err(Error::ModelFormat {
                        line,
                        msg: "duplicate context".into(),
                    });
                }
            }
            levels.push(table);
        }
    }
    let cond = CondModel {
        config,
        heads: HeadFinder::new(&grammar, &head_table),
        head_table,
        tables,
        lambdas,
    };

    r.section("lookahead")?;
    let mut f = r.entry("k")?;
    let k: f64 = f.num()?;
    f.end()?;
    let nn = grammar.num_nonterminals();
    let mut lap = LapTables {
        k,
        nt_freq: vec![0; nn],
        word_counts: vec![Vec::new(); nn],
        pos_counts: vec![Vec::new(); nn],
        eps_counts: vec![0; nn],
    };
    for a in 0..nn {
        let mut f = r.entry("nt")?;
        let name = f.next()?;
        if grammar.nt_id(name) != Some(a as u32) {
            return Err(f.err(format!("look-ahead entry for {name:?} out of order")));
        }
        lap.nt_freq[a] = f.num()?;
        lap.eps_counts[a] = f.num()?;
        let nw: usize = f.num()?;
        for _ in 0..nw {
            let w = f.next()?;
            let id = grammar.token_id(w).ok_or_else(|| f.err(format!("unknown token {w:?}")))?;
            lap.word_counts[a].push((id, f.num()?));
        }
        let np: usize = f.num()?;
        for _ in 0..np {
            let x = f.next()?;
            let id = grammar.nt_id(x).ok_or_else(|| f.err(format!("unknown symbol {x:?}")))?;
            lap.pos_counts[a].push((id, f.num()?));
        }
        f.end()?;
        lap.word_counts[a].sort_unstable();
        lap.pos_counts[a].sort_unstable();
    }

    r.section("trigram")?;
    let mut f = r.entry("vocabulary")?;
    let nv: usize = f.num()?;
    f.end()?;
    let mut vocab = Interner::default();
    let mut unigram = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut f = r.fields()?;
        let w = f.next()?;
        if vocab.intern(w) as usize != i {
            return Err(f.err(format!("duplicate token {w:?}")));
        }
        unigram.push(f.num::<u64>()?);
        f.end()?;
    }
    let lookup = |r: &Reader<'_>, w: &str| {
        vocab.get(w).ok_or_else(|| Error::ModelFormat {
            line: r.line,
            msg: format!("token {w:?} missing from the trigram vocabulary"),
        })
    };
    let unk = r.single("unk")?;
    let unk = lookup(&r, unk)?;
    let end = r.single("end")?;
    let end = lookup(&r, end)?;
    let mut tl = [[0.0; NUM_BUCKETS]; 2];
    for (i, row) in tl.iter_mut().enumerate() {
        let mut f = r.entry("lambda")?;
        if f.num::<usize>()? != i + 2 {
            return Err(f.err("trigram weights out of order"));
        }
        for l in row.iter_mut() {
            *l = f.num()?;
        }
        f.end()?;
    }
    let id_ok = |f: &Fields<'_>, id: u32, hist: bool| {
        if (id as usize) < nv || (hist && id as usize == nv) {
            Ok(id)
        } else {
            Err(f.err(format!("token id {id} out of range")))
        }
    };
    let mut f = r.entry("bigrams")?;
    let nb: usize = f.num()?;
    f.end()?;
    let mut bigram = FxHashMap::default();
    let mut bigram_hist: FxHashMap<u32, u64> = FxHashMap::default();
    for _ in 0..nb {
        let mut f = r.fields()?;
        let v = f.num()?;
        let v = id_ok(&f, v, true)?;
        let w = f.num()?;
        let w = id_ok(&f, w, false)?;
        let c: u64 = f.num()?;
        f.end()?;
        bigram.insert((v, w), c);
        *bigram_hist.entry(v).or_default() += c;
    }
    let mut f = r.entry("trigrams")?;
    let nt: usize = f.num()?;
    f.end()?;
    let mut trigram = FxHashMap::default();
    let mut trigram_hist: FxHashMap<(u32, u32), u64> = FxHashMap::default();
    for _ in 0..nt {
        let mut f = r.fields()?;
        let u = f.num()?;
        let u = id_ok(&f, u, true)?;
        let v = f.num()?;
        let v = id_ok(&f, v, true)?;
        let w = f.num()?;
        let w = id_ok(&f, w, false)?;
        let c: u64 = f.num()?;
        f.end()?;
        trigram.insert((u, v, w), c);
        *trigram_hist.entry((u, v)).or_default() += c;
    }
    if let Some((i, l)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::ModelFormat {
            line: i + 1,
            msg: format!("unexpected content {l:?} after the last section"),
        });
    }
    let total = unigram.iter().sum();
    let ngram = NgramModel {
        vocab,
        unk,
        end,
        unigram,
        total,
        bigram,
        bigram_hist,
        trigram,
        trigram_hist,
        lambdas: tl,
    };

    Ok(Model {
        normalizer,
        grammar,
        cond,
        lap,
        ngram,
    })
}

pub fn save_model(path: impl AsRef<Path>, m: &Model) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text)
}
