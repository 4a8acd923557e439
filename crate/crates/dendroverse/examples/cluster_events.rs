//! Agglomerative clustering of numeric event rows into a 2-adically
//! labeled dendrogram, plus its canonical shape and descriptor.
//!
//! Run with `cargo run --example cluster_events`.

use dendroverse::causal::theta_descriptor;
use dendroverse::cluster::{
    agglomerate, load_events, DuplicatePolicy, Linkage, LinkageSpec, Metric,
};
use dendroverse::padic::monna_map;

fn main() {
    // five 1-D events: two tight pairs and an outlier
    let csv = "0.0\n1.0\n10.0\n11.0\n30.0\n";
    let events = load_events(csv.as_bytes(), false, DuplicatePolicy::Reject).unwrap();

    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        let spec = LinkageSpec {
            metric: Metric::Euclidean,
            linkage,
            tie_break: Default::default(),
        };
        let dendrogram = agglomerate(&events, spec).unwrap();
        println!("{linkage:?} linkage:");
        println!("  text form      {}", dendrogram.to_text());
        println!("  canonical form {}", dendrogram.canonicalize());
        let theta = theta_descriptor(&dendrogram);
        println!(
            "  descriptor     leaves={} max_depth={} mean_distance={:.4} depth_entropy={:.4}",
            theta.leaf_count, theta.max_depth, theta.mean_distance, theta.depth_entropy
        );
        println!("  leaf codes and Monna values:");
        for (label, code) in dendrogram.leaves() {
            println!("    event {label}: code {code} -> {}", monna_map(&code));
        }
    }
}
