//! Proof documents and the line-oriented `.proof` format.

use std::collections::BTreeSet;
use std::fmt;

use super::formula::{parse_formula, Formula};
use super::LogicError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Justification {
    Precondition,
    Hypothesis,
    ConjElim(Vec<usize>),
    ConjIntro(Vec<usize>),
    Mp(Vec<usize>),
    CondProof(usize, usize),
}

impl Justification {
    pub fn refs(&self) -> Vec<usize> {
        match self {
            Justification::Precondition | Justification::Hypothesis => Vec::new(),
            Justification::ConjElim(r) | Justification::ConjIntro(r) | Justification::Mp(r) => r.clone(),
            Justification::CondProof(i, j) => vec![*i, *j],
        }
    }
}

impl fmt::Display for Justification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |r: &[usize]| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        match self {
            Justification::Precondition => f.write_str("precondition"),
            Justification::Hypothesis => f.write_str("hypothesis"),
            Justification::ConjElim(r) => write!(f, "conj-elim {}", join(r)),
            Justification::ConjIntro(r) => write!(f, "conj-intro {}", join(r)),
            Justification::Mp(r) => write!(f, "mp {}", join(r)),
            Justification::CondProof(i, j) => write!(f, "cond-proof {i} {j}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofStep {
    pub index: usize,
    pub judgment: Formula,
    pub justification: Justification,
}

/// A derivation: precondition lines come first as `Precondition` steps,
/// numbered from 1, and the remaining steps continue that numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub preconditions: Vec<Formula>,
    pub steps: Vec<ProofStep>,
    pub goal: Formula,
}

/// A parsed `.proof` file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofDocument {
    pub symbols: BTreeSet<String>,
    pub proof: Proof,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_refs(line_no: usize, words: &[&str]) -> Result<Vec<usize>, LogicError> {
    words
        .iter()
        .map(|w| {
            w.trim_end_matches(',')
                .parse::<usize>()
                .map_err(|_| LogicError::Document { line: line_no, message: format!("bad reference '{w}'") })
        })
        .collect()
}

fn parse_justification(line_no: usize, text: &str) -> Result<Justification, LogicError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let Some((rule, rest)) = words.split_first() else {
        return Err(LogicError::Document { line: line_no, message: "missing justification".into() });
    };
    let refs = parse_refs(line_no, rest)?;
    let no_refs = |j: Justification| {
        if refs.is_empty() {
            Ok(j)
        } else {
            Err(LogicError::Document { line: line_no, message: format!("'{rule}' takes no references") })
        }
    };
    match *rule {
        "hypothesis" => no_refs(Justification::Hypothesis),
        "precondition" => no_refs(Justification::Precondition),
        "conj-elim" => Ok(Justification::ConjElim(refs)),
        "conj-intro" => Ok(Justification::ConjIntro(refs)),
        "mp" => Ok(Justification::Mp(refs)),
        "cond-proof" => match refs.as_slice() {
            [i, j] => Ok(Justification::CondProof(*i, *j)),
            _ => Err(LogicError::Document { line: line_no, message: "cond-proof takes two references".into() }),
        },
        other => Err(LogicError::Document { line: line_no, message: format!("unknown rule '{other}'") }),
    }
}

impl ProofDocument {
    /// Parses the `.proof` text format.
    ///
    /// ```text
    /// symbols: G KB G1 G2
    /// precondition 1: G -> G1 & G2
    /// step 2: G ; hypothesis
    /// step 3: G1 & G2 ; mp 1 2
    /// step 4: G -> G1 & G2 ; cond-proof 2 3
    /// goal: G -> G1 & G2
    /// ```
    pub fn parse(text: &str) -> Result<Self, LogicError> {
        let mut symbols: Option<BTreeSet<String>> = None;
        let mut preconditions = Vec::new();
        let mut steps = Vec::new();
        let mut goal = None;

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let doc_err = |message: String| LogicError::Document { line: line_no, message };
            let (head, body) = line
                .split_once(':')
                .ok_or_else(|| doc_err("expected '<keyword>: ...'".into()))?;
            let head = head.trim();
            let body = body.trim();
            let mut head_words = head.split_whitespace();
            let keyword = head_words.next().unwrap_or("");
            let number = head_words.next();
            let parse_f = |s: &str| {
                parse_formula(s).map_err(|e| LogicError::Document { line: line_no, message: e.to_string() })
            };
            match (keyword, number) {
                ("symbols", None) => {
                    if symbols.is_some() {
                        return Err(doc_err("duplicate symbols line".into()));
                    }
                    symbols = Some(body.split_whitespace().map(str::to_string).collect());
                }
                ("precondition", Some(num)) | ("step", Some(num)) => {
                    let index: usize = num.parse().map_err(|_| doc_err(format!("bad line number '{num}'")))?;
                    let (judgment, justification) = if keyword == "precondition" {
                        if !steps.is_empty() && steps.len() != preconditions.len() {
                            return Err(doc_err("preconditions must precede steps".into()));
                        }
                        (parse_f(body)?, Justification::Precondition)
                    } else {
                        let (f, j) = body
                            .split_once(';')
                            .ok_or_else(|| doc_err("step needs '; <rule> <refs>'".into()))?;
                        (parse_f(f.trim())?, parse_justification(line_no, j)?)
                    };
                    if index != steps.len() + 1 {
                        return Err(doc_err(format!("expected line {} but found {index}", steps.len() + 1)));
                    }
                    if justification == Justification::Precondition {
                        preconditions.push(judgment.clone());
                    }
                    steps.push(ProofStep { index, judgment, justification });
                }
                ("goal", None) => {
                    if goal.is_some() {
                        return Err(doc_err("duplicate goal".into()));
                    }
                    goal = Some(parse_f(body)?);
                }
                _ => return Err(doc_err(format!("unknown directive '{head}'"))),
            }
            let declared = symbols.as_ref();
            let last_formula = match keyword {
                "goal" => goal.as_ref(),
                "symbols" => None,
                _ => steps.last().map(|s| &s.judgment),
            };
            if let Some(f) = last_formula {
                let Some(declared) = declared else {
                    return Err(doc_err("symbols must be declared before use".into()));
                };
                if let Some(bad) = f.symbols().into_iter().find(|s| !declared.contains(*s)) {
                    return Err(doc_err(format!("undeclared symbol '{bad}'")));
                }
            }
        }

        let symbols = symbols.ok_or(LogicError::Document { line: 0, message: "missing symbols line".into() })?;
        let goal = goal.ok_or(LogicError::Document { line: 0, message: "missing goal".into() })?;
        Ok(ProofDocument { symbols, proof: Proof { preconditions, steps, goal } })
    }

    /// Renders back to the `.proof` format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("symbols: ");
        out.push_str(&self.symbols.iter().cloned().collect::<Vec<_>>().join(" "));
        out.push('\n');
        for s in &self.proof.steps {
            match s.justification {
                Justification::Precondition => out.push_str(&format!("precondition {}: {}\n", s.index, s.judgment)),
                ref j => out.push_str(&format!("step {}: {} ; {}\n", s.index, s.judgment, j)),
            }
        }
        out.push_str(&format!("goal: {}\n", self.proof.goal));
        out
    }
}
