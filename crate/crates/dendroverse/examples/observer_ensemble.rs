//! Observers measuring each other: a seeded ensemble runs three rounds,
//! fragmenting the initial θ-class and splitting the world ledger into
//! branches with exact squared amplitudes.
//!
//! Run with `cargo run --example observer_ensemble`.

use dendroverse::mwi::{
    chained_measure, init_ensemble, world_lines, Round, ThetaSelector, WorldLedger,
};
use num_traits::ToPrimitive;

fn main() {
    let mut ensemble = init_ensemble(8, 42).unwrap();
    println!("8 observers, objective codes:");
    for o in ensemble.observers() {
        println!(
            "  observer {}: code {} (value {})",
            o.id(),
            o.objective_code(),
            o.objective_value()
        );
    }

    let schedule = vec![
        Round {
            theta: ThetaSelector::Keyword("largest".into()),
            targets: vec![0],
        },
        Round {
            theta: ThetaSelector::Keyword("largest".into()),
            targets: vec![3],
        },
        Round {
            theta: ThetaSelector::Member { member: 5 },
            targets: vec![1, 6],
        },
    ];

    let form = ensemble.observers()[0].dendrogram().canonicalize();
    let mut ledger = WorldLedger::new(form);
    let reports = chained_measure(&mut ensemble, &schedule, &mut ledger).unwrap();

    for report in &reports {
        println!(
            "\nround {}: targets {:?}, {} eigenvalue(s), destinations:",
            report.round,
            report.targets,
            report.eigenvalues.len()
        );
        for dest in &report.destinations {
            println!(
                "  b = {} -> {} (members {:?})",
                dest.fraction, dest.form, dest.member_ids
            );
        }
    }

    println!("\nfinal θ-classes:");
    for class in ensemble.classes() {
        println!("  {} members {:?}", class.canonical_form, class.member_ids);
    }

    let worlds = world_lines(&ledger);
    println!(
        "\nledger: generation {}, {} worlds, Σ|amplitude|² = {}",
        ledger.generation(),
        worlds.len(),
        ledger.total_probability()
    );
    for w in worlds.iter().take(10) {
        let record: Vec<String> = w
            .outcome_record
            .iter()
            .map(|o| match o.eigenvalue {
                Some(i) => format!("t{:?}:e{i}", o.targets),
                None => format!("t{:?}:-", o.targets),
            })
            .collect();
        println!(
            "  p = {:<10.6} {} @ {}",
            w.probability.to_f64().unwrap(),
            record.join(" | "),
            w.theta
        );
    }
    if worlds.len() > 10 {
        println!("  ... and {} more", worlds.len() - 10);
    }
}
