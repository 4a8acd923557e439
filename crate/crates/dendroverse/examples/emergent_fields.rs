//! The emergence pipeline on the three-event set {1/2, 1/4, 3/4}:
//! difference pdf, differences energy, per-event momentum, phase field,
//! potentials, quantum potential, and the wave function ψ = √ρ·e^{iS}.
//!
//! Run with `cargo run --example emergent_fields`.

use dendroverse::emergence::{
    diff_pdf, differences_energy, emergent_fields, mean_momentum, pairwise_differences,
    EmergenceConfig, MomentumScope, PairConvention,
};
use dendroverse::padic::Dyadic;

fn main() {
    let events = vec![Dyadic::new(1, 1), Dyadic::new(1, 2), Dyadic::new(3, 2)];
    println!("events: {events:?}");

    let diffs = pairwise_differences(&events, PairConvention::Ordered).unwrap();
    println!("\n{} ordered pairwise differences:", diffs.len());
    for d in &diffs {
        println!("  q_{}{} = {}", d.i, d.k, d.q);
    }

    let pdf = diff_pdf(&diffs, PairConvention::Ordered);
    println!("\ndifference pdf (exact masses):");
    for (q, mass) in pdf.support().iter().zip(pdf.mass()) {
        println!("  ρ({q}) = {mass}");
    }

    println!("\ndifferences energy T = {}", differences_energy(&diffs));
    println!(
        "global momentum      = {}",
        mean_momentum(&diffs, MomentumScope::Global)
    );
    for j in 0..events.len() {
        println!(
            "momentum of event {j} = {}",
            mean_momentum(&diffs, MomentumScope::PerEvent(j))
        );
    }

    let cfg = EmergenceConfig {
        grid_depth: 4,
        ..Default::default()
    };
    let fields = emergent_fields(&events, &cfg).unwrap();
    println!(
        "\ngrid: {} cells of width {} on [-1,1]",
        fields.grid.cells(),
        fields.grid.h()
    );
    println!("  u_total = {}", fields.potentials.u_total);
    println!("  v_total = {}", fields.potentials.v_total);

    println!("\n  center    rho       S         U^Q       |psi|^2");
    for (c, x) in fields.grid.centers().enumerate() {
        let psi = fields.psi.values()[c];
        println!(
            "  {x:>7.4}  {:>8.4}  {:>8.5}  {:>8.3}  {:>8.4}",
            fields.rho.values()[c],
            fields.s.values()[c],
            fields.uq.values()[c],
            psi.norm_sqr(),
        );
    }
}
