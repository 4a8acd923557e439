//! Relative states: conditional slices of the world ledger. A Bell-type
//! two-branch superposition conditioned on one shape collapses to the
//! matching outcome state; conditional expectations agree with direct
//! ratios over the joint ledger.
//!
//! Run with `cargo run --example relative_states`.

use dendroverse::dendrogram::Dendrogram;
use dendroverse::mwi::{relative_state, Condition, RelativeLabel, RoundOutcome, WorldLedger};
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn main() {
    let eta1 = Dendrogram::cherry(0, 1).canonicalize();
    let eta2 = Dendrogram::cherry(0, 1)
        .insert_leaf(&[], 1, 2)
        .unwrap()
        .canonicalize();
    let outcome = |i: usize| {
        vec![RoundOutcome {
            targets: vec![7],
            eigenvalue: Some(i),
        }]
    };

    // (φ_0 η_1 + φ_1 η_2) / √2
    let half = BigRational::new(1.into(), 2.into());
    let ledger = WorldLedger::from_branches(
        vec![
            (outcome(0), eta1.clone(), half.clone()),
            (outcome(1), eta2.clone(), half),
        ],
        1,
    )
    .unwrap();
    println!("Bell-type ledger:");
    for b in ledger.branches() {
        println!(
            "  amplitude {:.6} at {} with record {:?}",
            b.amplitude().0,
            b.theta,
            b.outcome_record[0].eigenvalue
        );
    }

    let rel = relative_state(&ledger, &Condition::Theta(eta1.clone())).unwrap();
    println!("\nrelative state conditioned on θ = {eta1}:");
    for (label, mass) in &rel.components {
        if let RelativeLabel::Record(rec) = label {
            println!(
                "  outcome {:?} with amplitude {}",
                rec[0].eigenvalue,
                mass.to_f64().unwrap().sqrt()
            );
        }
    }

    // conditioning on the recorded eigenvalue picks the θ side instead
    let rel = relative_state(
        &ledger,
        &Condition::Eigenvalue {
            target: 7,
            index: 1,
            round: None,
        },
    )
    .unwrap();
    println!("\nrelative state conditioned on eigenvalue 1 of target 7:");
    for (label, mass) in &rel.components {
        if let RelativeLabel::Theta(form) = label {
            println!(
                "  θ = {form} with amplitude {}",
                mass.to_f64().unwrap().sqrt()
            );
        }
    }

    // an unbalanced three-branch ledger: conditional expectation of the
    // eigenvalue over branches at η_1, against the direct ratio
    let ledger = WorldLedger::from_branches(
        vec![
            (
                outcome(0),
                eta1.clone(),
                BigRational::new(1.into(), 2.into()),
            ),
            (
                outcome(1),
                eta1.clone(),
                BigRational::new(3.into(), 8.into()),
            ),
            (outcome(2), eta2, BigRational::new(1.into(), 8.into())),
        ],
        1,
    )
    .unwrap();
    let rel = relative_state(&ledger, &Condition::Theta(eta1)).unwrap();
    let expectation = rel.expectation(|label| match label {
        RelativeLabel::Record(rec) => rec[0].eigenvalue.unwrap() as f64,
        RelativeLabel::Theta(_) => 0.0,
    });
    // direct: (0·1/2 + 1·3/8) / (1/2 + 3/8) = 3/7
    println!(
        "\nconditional expectation of the outcome index: {expectation:.6} (direct: {:.6})",
        3.0 / 7.0
    );
}
