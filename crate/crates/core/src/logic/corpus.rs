//! The shipped reasoning corpus and the suite runner that gates the pipeline.

use std::path::Path;

use super::check::{check_proof, StepFailure, ValidityReport};
use super::proof::ProofDocument;
use super::LogicError;

/// File stems of the seven shipped reasonings, in order.
pub const REASONING_NAMES: [&str; 7] = [
    "reasoning1",
    "reasoning2",
    "reasoning3",
    "reasoning4",
    "reasoning5",
    "reasoning6",
    "reasoning7",
];

const SHIPPED: [&str; 7] = [
    include_str!("../../reasonings/reasoning1.proof"),
    include_str!("../../reasonings/reasoning2.proof"),
    include_str!("../../reasonings/reasoning3.proof"),
    include_str!("../../reasonings/reasoning4.proof"),
    include_str!("../../reasonings/reasoning5.proof"),
    include_str!("../../reasonings/reasoning6.proof"),
    include_str!("../../reasonings/reasoning7.proof"),
];

/// `(name, source text)` for every shipped reasoning.
pub fn shipped_corpus() -> impl Iterator<Item = (&'static str, &'static str)> {
    REASONING_NAMES.into_iter().zip(SHIPPED)
}

/// Checks one document's text. Unparseable text is reported as invalid,
/// localized to the offending line.
pub fn check_text(text: &str) -> ValidityReport {
    match ProofDocument::parse(text) {
        Ok(doc) => check_proof(&doc.proof),
        Err(e) => {
            let step = match e {
                LogicError::Document { line, .. } => line,
                _ => 0,
            };
            ValidityReport { valid: false, first_failure: Some(StepFailure { step, reason: format!("parse error: {e}") }) }
        }
    }
}

/// Runs the seven reasonings found in `dir` (`reasoning1.proof` ...).
pub fn run_reasoning_suite(dir: &Path) -> Result<Vec<(String, ValidityReport)>, LogicError> {
    if !dir.is_dir() {
        return Err(LogicError::Corpus(format!("{} is not a directory", dir.display())));
    }
    let missing: Vec<&str> = REASONING_NAMES
        .iter()
        .copied()
        .filter(|n| !dir.join(format!("{n}.proof")).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(LogicError::Corpus(format!("corpus incomplete: missing {}", missing.join(", "))));
    }
    REASONING_NAMES
        .iter()
        .map(|name| {
            let path = dir.join(format!("{name}.proof"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| LogicError::Corpus(format!("cannot read {}: {e}", path.display())))?;
            Ok((name.to_string(), check_text(&text)))
        })
        .collect()
}

/// Runs the embedded copy of the shipped corpus.
pub fn run_shipped_suite() -> Vec<(String, ValidityReport)> {
    shipped_corpus().map(|(n, t)| (n.to_string(), check_text(t))).collect()
}

/// Fails unless every reasoning in `reports` is valid.
pub fn require_all_valid(reports: &[(String, ValidityReport)]) -> Result<(), LogicError> {
    match reports.iter().find(|(_, r)| !r.valid) {
        None => Ok(()),
        Some((name, r)) => {
            let f = r.first_failure.clone().unwrap_or(StepFailure { step: 0, reason: "invalid".into() });
            Err(LogicError::Gate { name: name.clone(), step: f.step, reason: f.reason })
        }
    }
}

/// Writes the shipped corpus into `dir`.
pub fn write_shipped_corpus(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in shipped_corpus() {
        std::fs::write(dir.join(format!("{name}.proof")), text)?;
    }
    Ok(())
}
