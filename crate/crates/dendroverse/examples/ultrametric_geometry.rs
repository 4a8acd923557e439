//! 2-adic branch codes and their ultrametric geometry: the Monna map,
//! distances from shared root paths, balls, and isosceles triangles.
//!
//! Run with `cargo run --example ultrametric_geometry`.

use dendroverse::padic::{ball_membership, inverse_monna, monna_map, padic_distance, EdgeCode};
use num_rational::BigRational;

fn main() {
    let a = EdgeCode::parse("101").unwrap(); // a_0=1, a_1=0, a_2=1
    let b = EdgeCode::parse("11").unwrap();
    let c = EdgeCode::parse("0").unwrap();

    println!(
        "code {a}: integer value {}, Monna value {}",
        a.integer_value(),
        monna_map(&a)
    );
    println!(
        "code {b}: integer value {}, Monna value {}",
        b.integer_value(),
        monna_map(&b)
    );
    println!(
        "code {c}: integer value {}, Monna value {}",
        c.integer_value(),
        monna_map(&c)
    );

    // the Monna map inverts exactly at a fixed depth
    let back = inverse_monna(&monna_map(&a).to_rational(), a.depth()).unwrap();
    println!("inverse_monna(monna({a})) = {back}");

    // distances: a longer shared root path means a shorter distance
    println!("\ndistances:");
    for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
        println!("  |{x} - {y}|_2 = {}", padic_distance(x, y));
    }

    // every triangle is isosceles: the two largest sides agree
    let mut sides = [
        padic_distance(&a, &b),
        padic_distance(&a, &c),
        padic_distance(&b, &c),
    ];
    sides.sort();
    println!(
        "sorted triangle sides: {}, {}, {} (two largest equal: {})",
        sides[0],
        sides[1],
        sides[2],
        sides[1] == sides[2]
    );

    // balls: closed vs open membership
    let radius = BigRational::new(1.into(), 2.into());
    println!("\nballs around {a} with radius 1/2:");
    for candidate in [&a, &b, &c] {
        println!(
            "  {candidate}: closed {} open {}",
            ball_membership(&a, &radius, false, candidate),
            ball_membership(&a, &radius, true, candidate),
        );
    }
}
