//! Single-line mutations of a proof, used to exercise checker soundness.

use super::formula::Formula;
use super::proof::{Justification, Proof};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MutationKind {
    Rule,
    Reference,
    Judgment,
}

#[derive(Clone, Debug)]
pub struct Mutant {
    pub kind: MutationKind,
    pub line: usize,
    pub description: String,
    pub proof: Proof,
    /// Line the checker must blame: the mutated line, except for a
    /// rewritten hypothesis, which is only wrong where it is first used.
    pub expected_failure: usize,
}

/// Atom guaranteed absent from any shipped reasoning.
pub const MUTANT_ATOM: &str = "MUTANT";

fn swapped_rule(j: &Justification) -> Justification {
    match j {
        Justification::Precondition => Justification::Hypothesis,
        Justification::Hypothesis => Justification::Precondition,
        Justification::ConjElim(r) => Justification::Mp(r.clone()),
        Justification::ConjIntro(r) => Justification::Mp(r.clone()),
        Justification::Mp(r) => Justification::ConjIntro(r.clone()),
        Justification::CondProof(i, j) => Justification::ConjIntro(vec![*i, *j]),
    }
}

fn with_ref(j: &Justification, slot: usize, value: usize) -> Justification {
    match j {
        Justification::ConjElim(r) | Justification::ConjIntro(r) | Justification::Mp(r) => {
            let mut r = r.clone();
            r[slot] = value;
            match j {
                Justification::ConjElim(_) => Justification::ConjElim(r),
                Justification::ConjIntro(_) => Justification::ConjIntro(r),
                _ => Justification::Mp(r),
            }
        }
        Justification::CondProof(a, b) => {
            if slot == 0 {
                Justification::CondProof(value, *b)
            } else {
                Justification::CondProof(*a, value)
            }
        }
        other => other.clone(),
    }
}

fn first_use(proof: &Proof, line: usize) -> usize {
    proof
        .steps
        .iter()
        .find(|s| s.index > line && s.justification.refs().contains(&line))
        .map_or(line, |s| s.index)
}

/// Every single-line mutation of `proof`: one rule swap and one judgment
/// rewrite per line, plus one re-pointed reference per cited slot.
pub fn single_step_mutants(proof: &Proof) -> Vec<Mutant> {
    let mut out = Vec::new();
    for (pos, step) in proof.steps.iter().enumerate() {
        let k = step.index;

        let mut p = proof.clone();
        p.steps[pos].justification = swapped_rule(&step.justification);
        out.push(Mutant {
            kind: MutationKind::Rule,
            line: k,
            description: format!("line {k}: '{}' -> '{}'", step.justification, p.steps[pos].justification),
            proof: p,
            expected_failure: k,
        });

        let mut p = proof.clone();
        p.steps[pos].judgment = Formula::atom(MUTANT_ATOM);
        let expected_failure = if step.justification == Justification::Hypothesis { first_use(proof, k) } else { k };
        out.push(Mutant {
            kind: MutationKind::Judgment,
            line: k,
            description: format!("line {k}: judgment '{}' -> '{MUTANT_ATOM}'", step.judgment),
            proof: p,
            expected_failure,
        });

        for (slot, &r) in step.justification.refs().iter().enumerate() {
            // Nearest earlier line whose judgment differs from the one cited.
            let target = (1..k).rev().find(|&c| c != r && proof.steps[c - 1].judgment != proof.steps[r - 1].judgment);
            if let Some(c) = target {
                let mut p = proof.clone();
                p.steps[pos].justification = with_ref(&step.justification, slot, c);
                out.push(Mutant {
                    kind: MutationKind::Reference,
                    line: k,
                    description: format!("line {k}: reference {r} -> {c}"),
                    proof: p,
                    expected_failure: k,
                });
            }
        }
    }
    out
}
