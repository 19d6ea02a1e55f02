//! Head percolation table.
//!
//! Each parent label has a fallback direction and an ordered list of
//! priority items. An item is one or more alternative child labels, scanned
//! across the children in the item's direction; the first item that matches
//! picks the head child. If nothing matches, the first child in the fallback
//! direction is the head.
//!
//! Text form, one rule per line, `#` starts a comment:
//!
//! ```text
//! VP left TO VBD VBN MD VBZ VB VBG VBP VP ADJP NN NNS NP
//! NP right NN|NNP|NNPS|NNS|NX|POS|JJR left:NP right:$|ADJP|PRN right:CD
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    fn parse(s: &str) -> Option<Direction> {
        match s {
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadItem {
    pub direction: Direction,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadRule {
    pub fallback: Direction,
    pub items: Vec<HeadItem>,
}

impl HeadRule {
    /// Index of the child matched by a priority item, if any.
    pub fn find<S: AsRef<str>>(&self, children: &[S]) -> Option<usize> {
        for item in &self.items {
            let hit = |i: &usize| item.labels.iter().any(|l| l == children[*i].as_ref());
            let found = match item.direction {
                Direction::Left => (0..children.len()).find(hit),
                Direction::Right => (0..children.len()).rev().find(hit),
            };
            if found.is_some() {
                return found;
            }
        }
        None
    }

    pub fn head<S: AsRef<str>>(&self, children: &[S]) -> usize {
        self.find(children).unwrap_or(match self.fallback {
            Direction::Left => 0,
            Direction::Right => children.len().saturating_sub(1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadTable {
    rules: BTreeMap<String, HeadRule>,
    default: HeadRule,
}

const DEFAULT_TABLE: &str = "\
ADJP left NNS QP NN $ ADVP JJ VBN VBG ADJP JJR NP JJS DT FW RBR RBS SBAR RB
ADVP right RB RBR RBS FW ADVP TO CD JJR JJ IN NP JJS NN
CONJP right CC RB IN
FRAG right
INTJ left
LST right LS :
NAC left NN NNS NNP NNPS NP NAC EX $ CD QP PRP VBG JJ JJS JJR ADJP FW
NP right NN|NNP|NNPS|NNS|NX|POS|JJR left:NP right:$|ADJP|PRN right:CD right:JJ|JJS|RB|QP
NX right NN|NNP|NNPS|NNS|NX|POS|JJR left:NP right:$|ADJP|PRN right:CD right:JJ|JJS|RB|QP
PP right IN TO VBG VBN RP FW
PRN left
PRT right RP
QP left $ IN NNS NN JJ RB DT CD NCD QP JJR JJS
RRC right VP NP ADVP ADJP PP
S left TO IN VP S SBAR ADJP UCP NP
SBAR left WHNP WHPP WHADVP WHADJP IN DT S SQ SINV SBAR FRAG
SBARQ left SQ S SINV SBARQ FRAG
SINV left VBZ VBD VBP VB MD VP S SINV ADJP NP
SQ left VBZ VBD VBP VB MD VP SQ
UCP right
VP left TO VBD VBN MD VBZ VB VBG VBP VP ADJP NN NNS NP
WHADJP left CC WRB JJ ADJP
WHADVP right CC WRB
WHNP left WDT WP WP$ WHADJP WHPP WHNP
WHPP right IN TO FW
S† left S
";

impl Default for HeadTable {
    fn default() -> Self {
        HeadTable::parse(DEFAULT_TABLE).expect("built-in head table")
    }
}

impl HeadTable {
    pub fn parse(text: &str) -> Result<HeadTable> {
        let mut rules = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Syntax { line: i + 1, msg };
            let mut fields = line.split_whitespace();
            let label = fields.next().unwrap();
            let fallback = fields
                .next()
                .and_then(Direction::parse)
                .ok_or_else(|| err(format!("head rule for {label} needs a direction")))?;
            let mut items = Vec::new();
            for f in fields {
                let (direction, alts) = match f.split_once(':') {
                    Some((d, rest)) if !rest.is_empty() => match Direction::parse(d) {
                        Some(d) => (d, rest),
                        None => (fallback, f),
                    },
                    _ => (fallback, f),
                };
                let labels: Vec<String> = alts.split('|').map(str::to_string).collect();
                if labels.iter().any(String::is_empty) {
                    return Err(err(format!("empty label in head item {f:?}")));
                }
                items.push(HeadItem { direction, labels });
            }
            if rules.insert(label.to_string(), HeadRule { fallback, items }).is_some() {
                return Err(err(format!("duplicate head rule for {label}")));
            }
        }
        Ok(HeadTable {
            rules,
            default: HeadRule {
                fallback: Direction::Left,
                items: Vec::new(),
            },
        })
    }

    pub fn rule(&self, label: &str) -> &HeadRule {
        self.rules.get(label).unwrap_or(&self.default)
    }
}

impl fmt::Display for HeadTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, rule) in &self.rules {
            write!(f, "{label} {}", rule.fallback.as_str())?;
            for item in &rule.items {
                if item.direction == rule.fallback {
                    write!(f, " {}", item.labels.join("|"))?;
                } else {
                    write!(f, " {}:{}", item.direction.as_str(), item.labels.join("|"))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
