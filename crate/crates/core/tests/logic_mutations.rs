use osamtl::logic::mutation::{single_step_mutants, MutationKind};
use osamtl::logic::{check_proof, shipped_corpus, ProofDocument};

#[test]
fn every_single_line_mutant_is_rejected_at_its_line() {
    let mut total = 0;
    for (name, text) in shipped_corpus() {
        let doc = ProofDocument::parse(text).unwrap();
        let mutants = single_step_mutants(&doc.proof);
        let lines = doc.proof.steps.len();
        assert!(mutants.len() >= 2 * lines, "{name}: {} mutants for {lines} lines", mutants.len());
        for m in mutants {
            let report = check_proof(&m.proof);
            assert!(!report.valid, "{name}: accepted mutant {}", m.description);
            let failure = report.first_failure.unwrap();
            assert_eq!(
                failure.step, m.expected_failure,
                "{name}: mutant {} blamed line {} ({})",
                m.description, failure.step, failure.reason
            );
            total += 1;
        }
    }
    assert!(total >= 150, "only {total} mutants");
}

#[test]
fn every_kind_of_mutation_is_generated() {
    let (_, text) = shipped_corpus().next().unwrap();
    let doc = ProofDocument::parse(text).unwrap();
    let mutants = single_step_mutants(&doc.proof);
    for kind in [MutationKind::Rule, MutationKind::Reference, MutationKind::Judgment] {
        assert!(mutants.iter().any(|m| m.kind == kind), "{kind:?}");
    }
}

#[test]
fn checking_is_deterministic() {
    for (_, text) in shipped_corpus() {
        let doc = ProofDocument::parse(text).unwrap();
        for m in single_step_mutants(&doc.proof).into_iter().take(10) {
            assert_eq!(check_proof(&m.proof), check_proof(&m.proof));
        }
    }
}
