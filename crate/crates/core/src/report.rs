//! Line-oriented `key=value` reports.
//!
//! A record is one line of space-separated `key=value` fields in insertion
//! order. Keys are fixed identifiers and values never contain whitespace, so
//! a line splits on spaces and then on the first `=`.

use std::fmt;

use crate::evaluation::ParsevalReport;
use crate::langmodel::WordProbTrace;
use crate::parser::ParseOutput;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        let v = value.to_string();
        debug_assert!(!key.contains([' ', '=']) && !v.contains(char::is_whitespace));
        self.fields.push((key.to_string(), v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn parse(line: &str) -> Option<Record> {
        let fields = line
            .split_whitespace()
            .map(|f| f.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(Record { fields })
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn per_word(total: u64, words: usize) -> f64 {
    if words == 0 {
        0.0
    } else {
        total as f64 / words as f64
    }
}

/// Sidecar line for one parsed sentence.
pub fn parse_record(index: usize, po: &ParseOutput) -> Record {
    let expansions: u64 = po.per_word.iter().map(|w| w.expansions).sum();
    let advanced: u64 = po.per_word.iter().map(|w| w.advanced).sum();
    let n = po.words.len();
    let mut r = Record::new()
        .with("sentence", index)
        .with("words", n)
        .with("failed", po.failed as u8);
    match po.best_log_prob {
        Some(lp) => r.push("best_logprob", lp),
        None => r.push("best_logprob", "-inf"),
    }
    r.push("string_logprob", po.log_string_prob());
    r.push("parses", po.completed.len());
    r.push("expansions", expansions);
    r.push("advanced", advanced);
    r.push("expansions_per_word", per_word(expansions, n));
    r.push("advanced_per_word", per_word(advanced, n));
    if let Some(p) = po.failure_position() {
        r.push("failure_position", p);
    }
    r
}

/// Per-sentence perplexity line.
pub fn trace_record(index: usize, t: &WordProbTrace, ngram_logprob: Option<f64>) -> Record {
    let mut r = Record::new()
        .with("sentence", index)
        .with("tokens", t.len())
        .with("logprob", t.log_prob)
        .with("fallbacks", t.fallbacks());
    if let Some(p) = t.failure_position {
        r.push("failure_position", p);
    }
    if let Some(l) = ngram_logprob {
        r.push("trigram_logprob", l);
    }
    r
}

pub fn parseval_record(r: &ParsevalReport) -> Record {
    Record::new()
        .with("sentences", r.sentences)
        .with("matched", r.matched)
        .with("gold", r.gold)
        .with("test", r.test)
        .with("LR", r.lr)
        .with("LP", r.lp)
        .with("CB", r.cb)
        .with("zero_CB", r.zero_cb)
        .with("le2_CB", r.le2_cb)
        .with("exact", r.exact_match)
        .with("failed_pct", r.failed_pct)
        .with("expansions_per_word", r.avg_expansions_per_word)
        .with("advanced_per_word", r.avg_advanced_per_word)
}
