//! Uniform dyadic grids over `[0,1]` or `[-1,1]` and sampled fields.
//!
//! A grid of depth `d` has `2^d` cells of width `h = width / 2^d`; field
//! values live at cell centers. Dyadic support points are binned exactly:
//! a point landing on an interior cell boundary belongs to the cell on its
//! left, so exact values never jitter between cells.

use crate::padic::Dyadic;
use std::ops::{Add, Mul, Sub};

/// The interval a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `[0, 1]` — event values.
    Unit,
    /// `[-1, 1]` — pairwise difference values.
    Symmetric,
}

impl Domain {
    pub fn lo(&self) -> f64 {
        match self {
            Domain::Unit => 0.0,
            Domain::Symmetric => -1.0,
        }
    }

    pub fn width(&self) -> f64 {
        match self {
            Domain::Unit => 1.0,
            Domain::Symmetric => 2.0,
        }
    }

    fn lo_dyadic(&self) -> Dyadic {
        match self {
            Domain::Unit => Dyadic::zero(),
            Domain::Symmetric => Dyadic::new(-1, 0),
        }
    }

    /// `(value - lo) / h` has exponent `depth - shift_excess`; scaling by
    /// `2^depth / width` is a pure shift for both domains.
    fn cell_shift(&self, depth: u32) -> u32 {
        match self {
            Domain::Unit => depth,
            Domain::Symmetric => depth - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub domain: Domain,
    pub depth: u32,
}

impl Grid {
    pub fn new(domain: Domain, depth: u32) -> Grid {
        assert!(depth >= 2, "grid depth must be at least 2");
        Grid { domain, depth }
    }

    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn h(&self) -> f64 {
        self.domain.width() / self.cells() as f64
    }

    pub fn center(&self, cell: usize) -> f64 {
        self.domain.lo() + (cell as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cells()).map(|c| self.center(c))
    }

    /// Exact cell index of a dyadic point, or `None` when it lies outside
    /// the domain. Points exactly on a boundary go to the left cell.
    pub fn cell_of(&self, value: &Dyadic) -> Option<usize> {
        let rel = value.sub(&self.domain.lo_dyadic());
        if rel.is_negative() {
            return None;
        }
        // t = rel * 2^shift = cell coordinate in units of h, exactly
        let t = Dyadic::new(rel.numer() << self.domain.cell_shift(self.depth), rel.exp());
        let cells = self.cells();
        if t.exp() == 0 {
            // on a boundary: left cell, except the left domain edge itself
            let n: usize = t.numer().try_into().ok()?;
            if n > cells {
                None
            } else if n == 0 {
                Some(0)
            } else {
                Some(n - 1)
            }
        } else {
            let floor: usize = (t.numer() >> t.exp()).try_into().ok()?;
            (floor < cells).then_some(floor)
        }
    }
}

/// A function sampled at the cell centers of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Copy> GridField<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> GridField<T> {
        assert_eq!(values.len(), grid.cells(), "one value per grid cell");
        GridField { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> T) -> GridField<T> {
        let values = grid.centers().map(f).collect();
        GridField { grid, values }
    }

    pub fn constant(grid: Grid, value: T) -> GridField<T> {
        GridField {
            grid,
            values: vec![value; grid.cells()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> GridField<U> {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(
        &self,
        other: &GridField<U>,
        f: impl Fn(T, U) -> V,
    ) -> GridField<V> {
        assert_eq!(self.grid, other.grid, "fields share a grid");
        GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// First derivative: central differences in the interior, one-sided at the
/// two boundary cells.
pub fn gradient<T>(f: &GridField<T>) -> GridField<T>
where
    T: Copy + Sub<Output = T> + Mul<f64, Output = T>,
{
    let v = f.values();
    let n = v.len();
    let h = f.grid().h();
    let mut out = Vec::with_capacity(n);
    out.push((v[1] - v[0]) * (1.0 / h));
    for c in 1..n - 1 {
        out.push((v[c + 1] - v[c - 1]) * (1.0 / (2.0 * h)));
    }
    out.push((v[n - 1] - v[n - 2]) * (1.0 / h));
    GridField::new(f.grid(), out)
}

/// Three-point second difference; the boundary cells reuse the stencil of
/// their nearest interior neighbour (one-sided).
pub fn laplacian<T>(f: &GridField<T>) -> GridField<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let v = f.values();
    let n = v.len();
    let inv_h2 = 1.0 / (f.grid().h() * f.grid().h());
    let stencil = |a: T, b: T, c: T| (a + c - b - b) * inv_h2;
    let mut out = Vec::with_capacity(n);
    out.push(stencil(v[0], v[1], v[2]));
    for c in 1..n - 1 {
        out.push(stencil(v[c - 1], v[c], v[c + 1]));
    }
    out.push(stencil(v[n - 3], v[n - 2], v[n - 1]));
    GridField::new(f.grid(), out)
}

/// Running integral from the left domain edge, evaluated at cell centers:
/// full cells to the left plus half of the current cell. Also returns the
/// total integral over the whole domain.
pub fn cumulative_midpoint(f: &GridField<f64>) -> (GridField<f64>, f64) {
    let h = f.grid().h();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(f.values().len());
    for &v in f.values() {
        out.push((acc + 0.5 * v) * h);
        acc += v;
    }
    (GridField::new(f.grid(), out), acc * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    #[test]
    fn binning_boundary_goes_left() {
        let g = Grid::new(Domain::Unit, 2); // cells [0,1/4), [1/4,1/2), ...
        assert_eq!(g.cell_of(&Dyadic::new(0, 0)), Some(0));
        assert_eq!(g.cell_of(&Dyadic::new(1, 2)), Some(0)); // 1/4 on boundary -> left
        assert_eq!(g.cell_of(&Dyadic::new(3, 3)), Some(1)); // 3/8 interior
        assert_eq!(g.cell_of(&Dyadic::new(1, 0)), Some(3)); // right edge -> last cell
        assert_eq!(g.cell_of(&Dyadic::new(5, 2)), None);
        assert_eq!(g.cell_of(&Dyadic::new(-1, 3)), None);
    }

    #[test]
    fn binning_symmetric_domain() {
        let g = Grid::new(Domain::Symmetric, 2); // h = 1/2
        assert_eq!(g.cell_of(&Dyadic::new(-1, 0)), Some(0));
        assert_eq!(g.cell_of(&Dyadic::new(-1, 1)), Some(0)); // -1/2 boundary -> left
        assert_eq!(g.cell_of(&Dyadic::zero()), Some(1));
        assert_eq!(g.cell_of(&Dyadic::new(3, 2)), Some(3));
        assert_eq!(g.cell_of(&Dyadic::new(1, 0)), Some(3));
    }

    #[test]
    fn gradient_exact_on_linear_field() {
        let g = Grid::new(Domain::Symmetric, 4);
        let f = GridField::from_fn(g, |x| 0.5 * x - 2.0);
        for &v in gradient(&f).values() {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_exact_on_quadratic_interior() {
        let g = Grid::new(Domain::Unit, 5);
        let f = GridField::from_fn(g, |x| 3.0 * x * x);
        for &v in laplacian(&f).values() {
            assert!((v - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulative_total_of_unit_density() {
        let g = Grid::new(Domain::Symmetric, 5);
        let f = GridField::constant(g, 0.5); // integrates to 1 over [-1,1]
        let (run, total) = cumulative_midpoint(&f);
        assert!((total - 1.0).abs() < 1e-15);
        let last = *run.values().last().unwrap();
        assert!((last - (1.0 - 0.25 * g.h())).abs() < 1e-15);
        assert!(run.values().windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn binning_matches_rational_oracle(
            numer in -4096i64..=4096,
            exp in 0u32..=12,
            depth in 2u32..=8,
            symmetric in any::<bool>(),
        ) {
            let domain = if symmetric { Domain::Symmetric } else { Domain::Unit };
            let g = Grid::new(domain, depth);
            let v = Dyadic::new(numer, exp);
            let vr = v.to_rational();
            let lo = BigRational::from_float(domain.lo()).unwrap();
            let hi = BigRational::from_float(domain.lo() + domain.width()).unwrap();
            let h = BigRational::from_float(g.h()).unwrap();
            let expected = if vr < lo || vr > hi {
                None
            } else {
                let t = (&vr - &lo) / &h;
                if t.is_integer() {
                    let n = t.to_integer().to_usize().unwrap();
                    Some(if n == 0 { 0 } else { n - 1 })
                } else {
                    Some(t.floor().to_integer().to_usize().unwrap())
                }
            };
            prop_assert_eq!(g.cell_of(&v), expected);
        }
    }
}
