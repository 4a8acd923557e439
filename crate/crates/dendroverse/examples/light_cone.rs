//! Causal structure on dendrogram shapes: timelike/spacelike verdicts
//! with restriction witnesses, and the future light cone of the basic
//! two-branch dendrogram (its level sizes are the Wedderburn–Etherington
//! counts of binary shapes).
//!
//! Run with `cargo run --example light_cone`.

use dendroverse::causal::{classify_ensemble, future_cone, is_timelike};
use dendroverse::dendrogram::Dendrogram;

fn main() {
    let cherry = Dendrogram::cherry(0, 1);
    let three = cherry.insert_leaf(&[], 1, 2).unwrap();
    let caterpillar = three.insert_leaf(&[], 1, 3).unwrap();
    let balanced = cherry
        .insert_leaf(&[0], 1, 2)
        .unwrap()
        .insert_leaf(&[1], 1, 3)
        .unwrap();

    println!("shapes:");
    for (name, d) in [
        ("cherry", &cherry),
        ("three-leaf", &three),
        ("caterpillar-4", &caterpillar),
        ("balanced-4", &balanced),
    ] {
        println!("  {name:>13}: {} = {}", d.to_text(), d.canonicalize());
    }

    println!("\npairwise verdicts:");
    for (na, a) in [("three-leaf", &three), ("caterpillar-4", &caterpillar)] {
        for (nb, b) in [("caterpillar-4", &caterpillar), ("balanced-4", &balanced)] {
            let v = is_timelike(a, b);
            print!("  {na} vs {nb}: {:?} ({:?})", v.relation, v.direction);
            match v.witness {
                Some(w) => println!(", witness leaves {w:?}"),
                None => println!(),
            }
        }
    }

    let cone = future_cone(&cherry, 6, 100_000);
    println!("\nfuture cone of the cherry, levels 0..=6:");
    for (s, level) in cone.levels.iter().enumerate() {
        println!("  after {s} insertions: {} shape(s)", level.len());
    }
    println!("  (1, 1, 2, 3, 6, 11, 23 — the binary shape counts)");

    let matrix = classify_ensemble(&[caterpillar, balanced, three]);
    println!(
        "\nensemble of 3: identical {} / timelike {} / spacelike {} pairs",
        matrix.identical_pairs, matrix.timelike_pairs, matrix.spacelike_pairs
    );
}
