//! Propositional proofs in the conjunction/implication fragment, their
//! checker, and the shipped corpus of reasonings that gates abduction and
//! evaluation.

mod check;
mod corpus;
mod formula;
pub mod mutation;
mod proof;

pub use check::{check_proof, StepFailure, ValidityReport};
pub use corpus::{
    check_text, require_all_valid, run_reasoning_suite, run_shipped_suite, shipped_corpus, write_shipped_corpus,
    REASONING_NAMES,
};
pub use formula::{parse_formula, Formula};
pub use proof::{Justification, Proof, ProofDocument, ProofStep};

#[derive(Debug, thiserror::Error)]
pub enum LogicError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown token '{token}' at offset {offset}")]
    UnknownToken { offset: usize, token: String },
    #[error("line {line}: {message}")]
    Document { line: usize, message: String },
    #[error("{0}")]
    Corpus(String),
    #[error("reasoning '{name}' is invalid at step {step}: {reason}")]
    Gate { name: String, step: usize, reason: String },
}
