//! Grid-refinement study of the step residuals on a manufactured smooth
//! solution: the density cos²(πx/2) satisfies the Hamilton–Jacobi step law
//! with a quadratic phase once the step difference Ṡ absorbs the
//! potentials, so the discrete residual is pure discretization error and
//! shrinks at second order.
//!
//! Run with `cargo run --example grid_refinement`.

use dendroverse::emergence::{hj_residual, EmergenceConfig, StepFields};
use dendroverse::grid::{Domain, Grid, GridField};
use std::f64::consts::PI;

fn main() {
    println!("depth        h   max |hj residual| (interior)   order");
    let mut previous: Option<f64> = None;
    for depth in 5..=10u32 {
        let grid = Grid::new(Domain::Symmetric, depth);
        let rho = GridField::from_fn(grid, |x| {
            let c = (PI / 2.0 * x).cos();
            c * c
        });
        let s_present = GridField::from_fn(grid, |x| 0.25 * x * x);
        // continuum law: -Ṡ = (S')² + U + U^Q with
        //   (S')² = x²/4,  U(x) = (x+1)/2 + sin(πx)/(2π),  U^Q = -π²/4
        let s_prev = GridField::from_fn(grid, |x| {
            let u = (x + 1.0) / 2.0 + (PI * x).sin() / (2.0 * PI);
            0.25 * x * x + (x * x / 4.0 + u - PI * PI / 4.0)
        });
        let prev = StepFields {
            s: s_prev,
            rho: rho.clone(),
        };
        let present = StepFields { s: s_present, rho };
        let cfg = EmergenceConfig {
            grid_depth: depth,
            ..Default::default()
        };
        let res = hj_residual(&prev, &present, &cfg).unwrap();
        let err = (1..grid.cells() - 1)
            .map(|c| res.values()[c].abs())
            .fold(0.0, f64::max);
        let order = previous
            .map(|p: f64| format!("{:.2}", (p / err).log2()))
            .unwrap_or_else(|| "-".into());
        println!("{depth:>5}  {:>9.6}  {err:>28.3e}  {order:>6}", grid.h());
        previous = Some(err);
    }
}
