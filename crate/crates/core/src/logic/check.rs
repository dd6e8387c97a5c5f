//! Natural-deduction proof checking.
//!
//! Rules: conjunction elimination, conjunction introduction, modus ponens and
//! conditional proof. A hypothesis opens a subderivation that a later
//! conditional proof closes; closed lines can no longer be cited.

use serde::Serialize;

use super::formula::Formula;
use super::proof::{Justification, Proof};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepFailure {
    pub step: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub first_failure: Option<StepFailure>,
}

impl ValidityReport {
    fn ok() -> Self {
        ValidityReport { valid: true, first_failure: None }
    }

    fn fail(step: usize, reason: impl Into<String>) -> Self {
        ValidityReport { valid: false, first_failure: Some(StepFailure { step, reason: reason.into() }) }
    }
}

/// Scope of a checked line: the chain of hypotheses open when it was written.
struct Line<'a> {
    judgment: &'a Formula,
    scope: Vec<usize>,
}

fn is_subsequence(needle: &[&Formula], hay: &[&Formula]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

pub fn check_proof(proof: &Proof) -> ValidityReport {
    let mut lines: Vec<Line> = Vec::with_capacity(proof.steps.len());
    let mut open: Vec<usize> = Vec::new();

    for (pos, step) in proof.steps.iter().enumerate() {
        let k = step.index;
        if k != pos + 1 {
            return ValidityReport::fail(k, format!("line numbered {k}, expected {}", pos + 1));
        }
        // Every cited line must precede `k` and still be in scope.
        for r in step.justification.refs() {
            if r == 0 || r >= k {
                return ValidityReport::fail(k, format!("reference {r} is not an earlier line"));
            }
            let cited = &lines[r - 1];
            let in_scope = cited.scope.len() <= open.len() && cited.scope[..] == open[..cited.scope.len()];
            if !in_scope {
                return ValidityReport::fail(k, format!("reference {r} cites a discharged line"));
            }
        }
        let get = |r: usize| lines[r - 1].judgment;

        match &step.justification {
            Justification::Precondition => {
                if !proof.preconditions.contains(&step.judgment) {
                    return ValidityReport::fail(k, "judgment is not a stated precondition");
                }
            }
            Justification::Hypothesis => {
                open.push(k);
            }
            Justification::ConjElim(refs) => {
                let [r] = refs.as_slice() else {
                    return ValidityReport::fail(k, "conj-elim cites exactly one line");
                };
                let source = get(*r);
                if !matches!(source, Formula::Conj(..)) {
                    return ValidityReport::fail(k, format!("line {r} is not a conjunction"));
                }
                let whole = source.conjuncts();
                let part = step.judgment.conjuncts();
                if part.len() >= whole.len() || !is_subsequence(&part, &whole) {
                    return ValidityReport::fail(k, format!("judgment is not a conjunct of line {r}"));
                }
            }
            Justification::ConjIntro(refs) => {
                if refs.len() < 2 {
                    return ValidityReport::fail(k, "conj-intro cites at least two lines");
                }
                let built = Formula::conj_all(refs.iter().map(|r| get(*r).clone()));
                if built.as_ref() != Some(&step.judgment) {
                    return ValidityReport::fail(k, "judgment is not the conjunction of the cited lines");
                }
            }
            Justification::Mp(refs) => {
                let [ri, ra] = refs.as_slice() else {
                    return ValidityReport::fail(k, "mp cites an implication and its antecedent");
                };
                let Formula::Impl(ante, cons) = get(*ri) else {
                    return ValidityReport::fail(k, format!("line {ri} is not an implication"));
                };
                if **ante != *get(*ra) {
                    return ValidityReport::fail(k, format!("line {ra} does not match the antecedent of line {ri}"));
                }
                if **cons != step.judgment {
                    return ValidityReport::fail(k, format!("judgment is not the consequent of line {ri}"));
                }
            }
            Justification::CondProof(i, j) => {
                if open.last() != Some(i) {
                    return ValidityReport::fail(k, format!("line {i} is not the innermost open hypothesis"));
                }
                if j < i {
                    return ValidityReport::fail(k, format!("line {j} precedes hypothesis {i}"));
                }
                let want = Formula::implies(get(*i).clone(), get(*j).clone());
                if want != step.judgment {
                    return ValidityReport::fail(k, format!("judgment is not line {i} -> line {j}"));
                }
                open.pop();
            }
        }
        // A hypothesis belongs to the subderivation it opens.
        lines.push(Line { judgment: &step.judgment, scope: open.clone() });
    }

    if let Some(&h) = open.first() {
        return ValidityReport::fail(h, "hypothesis is never discharged");
    }
    match proof.steps.last() {
        None => ValidityReport::fail(0, "empty proof"),
        Some(last) if last.judgment != proof.goal => ValidityReport::fail(last.index, "final line does not match the goal"),
        Some(_) => ValidityReport::ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::proof::ProofDocument;

    fn check(text: &str) -> ValidityReport {
        check_proof(&ProofDocument::parse(text).unwrap().proof)
    }

    #[test]
    fn single_modus_ponens() {
        let r = check("symbols: A B\nprecondition 1: A -> B\nprecondition 2: A\nstep 3: B ; mp 1 2\ngoal: B\n");
        assert_eq!(r, ValidityReport::ok());
    }

    #[test]
    fn conditional_proof_discharges() {
        let text = "\
symbols: A B C
precondition 1: A -> B
precondition 2: B -> C
step 3: A ; hypothesis
step 4: B ; mp 1 3
step 5: C ; mp 2 4
step 6: A -> C ; cond-proof 3 5
goal: A -> C
";
        assert!(check(text).valid);
    }

    #[test]
    fn citing_discharged_line_fails() {
        let text = "\
symbols: A B
precondition 1: A -> B
step 2: A ; hypothesis
step 3: B ; mp 1 2
step 4: A -> B ; cond-proof 2 3
step 5: B & B ; conj-intro 3 3
goal: B & B
";
        let r = check(text);
        assert!(!r.valid);
        let f = r.first_failure.unwrap();
        assert_eq!(f.step, 5);
        assert!(f.reason.contains("discharged"), "{}", f.reason);
    }

    #[test]
    fn undischarged_hypothesis_fails() {
        let text = "symbols: A\nstep 1: A ; hypothesis\ngoal: A\n";
        let r = check(text);
        assert_eq!(r.first_failure.unwrap().step, 1);
    }

    #[test]
    fn goal_mismatch_fails_at_last_line() {
        let text = "symbols: A B\nprecondition 1: A & B\nstep 2: A ; conj-elim 1\ngoal: B\n";
        let r = check(text);
        assert_eq!(r.first_failure.unwrap().step, 2);
    }

    #[test]
    fn conj_elim_takes_subconjunctions() {
        let text = "symbols: t u v\nprecondition 1: t & u & v\nstep 2: t & v ; conj-elim 1\ngoal: t & v\n";
        assert!(check(text).valid);
        let bad = "symbols: t u v\nprecondition 1: t & u & v\nstep 2: v & t ; conj-elim 1\ngoal: v & t\n";
        assert!(!check(bad).valid);
        let whole = "symbols: t u\nprecondition 1: t & u\nstep 2: t & u ; conj-elim 1\ngoal: t & u\n";
        assert!(!check(whole).valid);
    }

    #[test]
    fn conj_intro_is_left_nested_in_order() {
        let ok = "symbols: a b c\nprecondition 1: a\nprecondition 2: b\nprecondition 3: c\nstep 4: a & b & c ; conj-intro 1 2 3\ngoal: a & b & c\n";
        assert!(check(ok).valid);
        let right = "symbols: a b c\nprecondition 1: a\nprecondition 2: b\nprecondition 3: c\nstep 4: a & (b & c) ; conj-intro 1 2 3\ngoal: a & (b & c)\n";
        assert!(!check(right).valid);
    }

    #[test]
    fn forward_reference_fails() {
        let text = "symbols: A B\nprecondition 1: A -> B\nstep 2: B ; mp 1 3\nstep 3: A ; hypothesis\ngoal: B\n";
        assert_eq!(check(text).first_failure.unwrap().step, 2);
    }

    #[test]
    fn cond_proof_must_close_innermost() {
        let text = "\
symbols: A B
step 1: A ; hypothesis
step 2: B ; hypothesis
step 3: A -> A ; cond-proof 1 1
goal: A -> A
";
        assert_eq!(check(text).first_failure.unwrap().step, 3);
    }
}
