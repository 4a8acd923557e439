//! Emergent field quantities of an event collection.
//!
//! Given the Monna values of a dendrogram's branches, the fundamental
//! object is the *difference pdf* ρ: the empirical distribution of all
//! pairwise differences on `[-1,1]`. From it we derive, on a uniform
//! dyadic grid:
//!
//! * the phase `S`, integrated from the momentum density `ρ(Q)·Q²`,
//! * classical potentials `v` (weighted slope energy) and `U` (running or
//!   total mass),
//! * the quantum potential `U^Q = (Δ²√ρ)/√ρ`,
//! * step residuals of the Hamilton–Jacobi form `-Ṡ = (∂S)² + U + U^Q`
//!   and of the continuity law (both the squared-flux and standard-flux
//!   readings),
//! * the wave function `ψ = √ρ·e^{iS}` and its Schrödinger-form residual,
//!   whose real/imaginary parts reproduce the two step residuals.
//!
//! Counting stays exact (big rationals); floating point enters only with
//! the grid fields. "Time" here is dendrogram updates, one step per
//! collected event, so `Ṡ` and `ρ̇` are plain differences between
//! consecutive states.

use crate::grid::{cumulative_midpoint, gradient, laplacian, Domain, Grid, GridField};
use crate::padic::Dyadic;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("need at least two events, found {found}")]
    TooFewEvents { found: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("a trajectory needs at least two steps")]
    TooFewSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConvention {
    /// All `m(m-1)` ordered pairs; makes ρ symmetric.
    #[default]
    Ordered,
    /// Each unordered pair once, as `event_i - event_k` for `i < k`.
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    /// `U(Q)` is the running integral of ρ up to `Q`.
    #[default]
    Cdf,
    /// `U` is the constant total mass.
    TotalMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// `∂S = ρ(Q)·Q²`, integrated left to right.
    #[default]
    IntegrateMomentum,
    /// `∂S = Re e^{iS}`, i.e. Euler integration of `S' = cos S`.
    UnitModulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityForm {
    /// `ρ̇ - ∂(ρ·∂S)²`, the squared-flux reading.
    LiteralSquared,
    /// `ρ̇ + ∂(ρ·∂S)`, the standard continuity law.
    #[default]
    StandardFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmergenceConfig {
    pub grid_depth: u32,
    pub z_v: f64,
    pub potential_mode: PotentialMode,
    pub phase_mode: PhaseMode,
    pub continuity_form: ContinuityForm,
    pub pair_convention: PairConvention,
}

impl Default for EmergenceConfig {
    fn default() -> Self {
        EmergenceConfig {
            grid_depth: 6,
            z_v: 1.0,
            potential_mode: PotentialMode::default(),
            phase_mode: PhaseMode::default(),
            continuity_form: ContinuityForm::default(),
            pair_convention: PairConvention::default(),
        }
    }
}

/// Default grid depth for input values of the given maximal binary
/// precision: two levels finer, so everything bins exactly.
pub fn leaf_depth_default(max_exponent: u32) -> u32 {
    (max_exponent + 2).max(2)
}

impl EmergenceConfig {
    /// Default grid depth for a set of branch codes: two levels finer than
    /// the deepest code, so every Monna value bins exactly.
    pub fn depth_for_codes(max_code_depth: u32) -> u32 {
        leaf_depth_default(max_code_depth)
    }

    pub fn difference_grid(&self) -> Grid {
        Grid::new(Domain::Symmetric, self.grid_depth)
    }
}

/// One pairwise difference `q_ik = event_i - event_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDifference {
    pub i: usize,
    pub k: usize,
    pub q: Dyadic,
}

/// All pairwise differences of the event values.
pub fn pairwise_differences(
    events: &[Dyadic],
    convention: PairConvention,
) -> Result<Vec<PairDifference>, FieldError> {
    if events.len() < 2 {
        return Err(FieldError::TooFewEvents {
            found: events.len(),
        });
    }
    let mut out = Vec::new();
    for i in 0..events.len() {
        for k in 0..events.len() {
            let keep = match convention {
                PairConvention::Ordered => i != k,
                PairConvention::Unordered => i < k,
            };
            if keep {
                out.push(PairDifference {
                    i,
                    k,
                    q: events[i].sub(&events[k]),
                });
            }
        }
    }
    Ok(out)
}

/// The empirical distribution of difference values: ascending dyadic
/// support, exact rational masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffPdf {
    support: Vec<Dyadic>,
    mass: Vec<BigRational>,
    pair_convention: PairConvention,
}

impl DiffPdf {
    /// Builds a distribution directly from values with equal weight each.
    /// The support may span `[0,1]` (event values) or `[-1,1]`.
    pub fn from_values(values: &[Dyadic], convention: PairConvention) -> DiffPdf {
        let mut counts: BTreeMap<Dyadic, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v.clone()).or_insert(0) += 1;
        }
        let total = BigRational::from_integer(values.len().into());
        let (support, mass) = counts
            .into_iter()
            .map(|(q, c)| (q, BigRational::from_integer(c.into()) / &total))
            .unzip();
        DiffPdf {
            support,
            mass,
            pair_convention: convention,
        }
    }

    pub fn support(&self) -> &[Dyadic] {
        &self.support
    }

    pub fn mass(&self) -> &[BigRational] {
        &self.mass
    }

    pub fn pair_convention(&self) -> PairConvention {
        self.pair_convention
    }

    pub fn mass_at(&self, q: &Dyadic) -> BigRational {
        self.support
            .iter()
            .position(|s| s == q)
            .map(|i| self.mass[i].clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn total_mass(&self) -> BigRational {
        self.mass.iter().sum()
    }

    /// `Σ_j ρ_j · Q_j²`, exact.
    pub fn second_moment(&self) -> BigRational {
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(q, m)| {
                let qr = q.to_rational();
                m * &qr * &qr
            })
            .sum()
    }

    /// Transfers the point masses onto a grid and divides by `h`, so the
    /// density integrates to the total mass.
    pub fn to_density(&self, grid: Grid) -> GridField<f64> {
        let mut cells = vec![BigRational::zero(); grid.cells()];
        for (q, m) in self.support.iter().zip(&self.mass) {
            let cell = grid
                .cell_of(q)
                .expect("support lies within the grid domain");
            cells[cell] += m;
        }
        let h = grid.h();
        GridField::new(
            grid,
            cells
                .into_iter()
                .map(|m| m.to_f64().unwrap_or(0.0) / h)
                .collect(),
        )
    }
}

pub fn diff_pdf(differences: &[PairDifference], convention: PairConvention) -> DiffPdf {
    let values: Vec<Dyadic> = differences.iter().map(|d| d.q.clone()).collect();
    DiffPdf::from_values(&values, convention)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumScope {
    /// Mean over every difference; identically zero for ordered pairs.
    Global,
    /// `(1/(m-1)) Σ_{k≠j} q_jk` for a fixed event `j`.
    PerEvent(usize),
}

/// The mean difference, the momentum analogue. Exact.
pub fn mean_momentum(differences: &[PairDifference], scope: MomentumScope) -> BigRational {
    match scope {
        MomentumScope::Global => {
            let sum: BigRational = differences.iter().map(|d| d.q.to_rational()).sum();
            sum / BigRational::from_integer(differences.len().into())
        }
        MomentumScope::PerEvent(j) => {
            let mut sum = BigRational::zero();
            let mut count = 0usize;
            for d in differences {
                if d.i == j {
                    sum += d.q.to_rational();
                    count += 1;
                } else if d.k == j && !differences.iter().any(|o| o.i == j && o.k == d.i) {
                    // unordered storage holds q_ij only; q_ji = -q_ij
                    sum -= d.q.to_rational();
                    count += 1;
                }
            }
            sum / BigRational::from_integer(count.into())
        }
    }
}

/// `(1/N) Σ (q_jk)²`, the kinetic-energy analogue; equals the second
/// moment of the difference pdf exactly.
pub fn differences_energy(differences: &[PairDifference]) -> BigRational {
    let sum: BigRational = differences
        .iter()
        .map(|d| {
            let q = d.q.to_rational();
            &q * &q
        })
        .sum();
    sum / BigRational::from_integer(differences.len().into())
}

/// The phase field `S` on the difference grid, `S(left edge) = 0`.
pub fn phase_field(differences: &[PairDifference], cfg: &EmergenceConfig) -> GridField<f64> {
    let grid = cfg.difference_grid();
    match cfg.phase_mode {
        PhaseMode::IntegrateMomentum => {
            let rho = diff_pdf(differences, cfg.pair_convention).to_density(grid);
            phase_from_density(&rho)
        }
        PhaseMode::UnitModulus => {
            let h = grid.h();
            let mut s = 0.5 * h; // half step from the edge, cos(0) = 1
            let mut out = Vec::with_capacity(grid.cells());
            out.push(s);
            for _ in 1..grid.cells() {
                s += h * s.cos();
                out.push(s);
            }
            GridField::new(grid, out)
        }
    }
}

/// `S = ∫ ρ(Q)·Q² dQ` accumulated left to right over a density field.
pub fn phase_from_density(rho: &GridField<f64>) -> GridField<f64> {
    cumulative_midpoint(&momentum_density(rho)).0
}

/// The momentum density `p(Q) = ρ(Q)·Q²`.
pub fn momentum_density(rho: &GridField<f64>) -> GridField<f64> {
    let grid = rho.grid();
    let values = rho
        .values()
        .iter()
        .zip(grid.centers())
        .map(|(&r, x)| r * x * x)
        .collect();
    GridField::new(grid, values)
}

/// The classical potentials of a density.
#[derive(Debug, Clone)]
pub struct ClassicalPotentials {
    /// `v(Q) = Z_V ∫ (∂ρ)²/ρ dQ`, running; integrand zero where ρ = 0.
    pub v: GridField<f64>,
    pub v_total: f64,
    /// `U(Q) = ∫ ρ dQ`: running integral in cdf mode, constant total mass
    /// otherwise.
    pub u: GridField<f64>,
    pub u_total: f64,
}

pub fn classical_potentials(rho: &GridField<f64>, cfg: &EmergenceConfig) -> ClassicalPotentials {
    let drho = gradient(rho);
    let integrand = rho.zip_map(&drho, |r, dr| if r > 0.0 { dr * dr / r } else { 0.0 });
    let (v_run, v_tot) = cumulative_midpoint(&integrand);
    let v = v_run.map(|x| cfg.z_v * x);
    let v_total = cfg.z_v * v_tot;

    let (u_run, u_tot) = cumulative_midpoint(rho);
    let (u, u_total) = match cfg.potential_mode {
        PotentialMode::Cdf => (u_run, u_tot),
        PotentialMode::TotalMass => (GridField::constant(rho.grid(), u_tot), u_tot),
    };
    ClassicalPotentials {
        v,
        v_total,
        u,
        u_total,
    }
}

/// The quantum potential `U^Q = (Δ²√ρ)/√ρ`, zero where ρ vanishes.
pub fn quantum_potential(rho: &GridField<f64>) -> GridField<f64> {
    let sqrt_rho = rho.map(f64::sqrt);
    let lap = laplacian(&sqrt_rho);
    sqrt_rho.zip_map(&lap, |s, l| if s > 0.0 { l / s } else { 0.0 })
}

/// One dendrogram state: the phase field and the density field.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFields {
    pub s: GridField<f64>,
    pub rho: GridField<f64>,
}

impl StepFields {
    fn check_grid(&self, other: &StepFields) -> Result<Grid, FieldError> {
        let g = self.s.grid();
        if other.s.grid() != g || self.rho.grid() != g || other.rho.grid() != g {
            return Err(FieldError::GridMismatch);
        }
        Ok(g)
    }
}

/// Discrete action over a trajectory of dendrogram updates: one summand
/// per step, `Σ Ṡρh + Σ (∂S)²ρh - v + U`, with the potentials of the
/// present density.
pub fn action(trajectory: &[StepFields], cfg: &EmergenceConfig) -> Result<f64, FieldError> {
    if trajectory.len() < 2 {
        return Err(FieldError::TooFewSteps);
    }
    let mut total = 0.0;
    for pair in trajectory.windows(2) {
        let (prev, present) = (&pair[0], &pair[1]);
        let g = prev.check_grid(present)?;
        let h = g.h();
        let sdot_term: f64 = present
            .s
            .values()
            .iter()
            .zip(prev.s.values())
            .zip(present.rho.values())
            .map(|((sn, sp), r)| (sn - sp) * r * h)
            .sum();
        let ds = gradient(&present.s);
        let kinetic: f64 = ds
            .values()
            .iter()
            .zip(present.rho.values())
            .map(|(d, r)| d * d * r * h)
            .sum();
        let pots = classical_potentials(&present.rho, cfg);
        total += sdot_term + kinetic - pots.v_total + pots.u_total;
    }
    Ok(total)
}

/// Residual of the Hamilton–Jacobi step law `-Ṡ = (∂S)² + U + U^Q`,
/// evaluated with present-step fields: `-Ṡ - (∂S)² - U - U^Q`.
pub fn hj_residual(
    prev: &StepFields,
    present: &StepFields,
    cfg: &EmergenceConfig,
) -> Result<GridField<f64>, FieldError> {
    let g = prev.check_grid(present)?;
    let ds = gradient(&present.s);
    let u = classical_potentials(&present.rho, cfg).u;
    let uq = quantum_potential(&present.rho);
    let mut out = Vec::with_capacity(g.cells());
    for c in 0..g.cells() {
        let sdot = present.s.values()[c] - prev.s.values()[c];
        let d = ds.values()[c];
        out.push(-sdot - d * d - u.values()[c] - uq.values()[c]);
    }
    Ok(GridField::new(g, out))
}

/// Residual of the probability conservation law, in the chosen form.
pub fn continuity_residual(
    prev: &StepFields,
    present: &StepFields,
    form: ContinuityForm,
) -> Result<GridField<f64>, FieldError> {
    let g = prev.check_grid(present)?;
    let ds = gradient(&present.s);
    let flux = present.rho.zip_map(&ds, |r, d| r * d);
    let spatial = match form {
        ContinuityForm::LiteralSquared => gradient(&flux.map(|j| j * j)),
        ContinuityForm::StandardFlux => gradient(&flux),
    };
    let mut out = Vec::with_capacity(g.cells());
    for c in 0..g.cells() {
        let rdot = present.rho.values()[c] - prev.rho.values()[c];
        out.push(match form {
            ContinuityForm::LiteralSquared => rdot - spatial.values()[c],
            ContinuityForm::StandardFlux => rdot + spatial.values()[c],
        });
    }
    Ok(GridField::new(g, out))
}

/// `ψ = √ρ · (cos S + i sin S)` pointwise.
pub fn wavefunction(
    rho: &GridField<f64>,
    s: &GridField<f64>,
) -> Result<GridField<Complex64>, FieldError> {
    if rho.grid() != s.grid() {
        return Err(FieldError::GridMismatch);
    }
    Ok(rho.zip_map(s, |r, phase| Complex64::from_polar(r.sqrt(), phase)))
}

/// Schrödinger-form step residual computed from the complex samples alone.
///
/// The real part reproduces [`hj_residual`] and the imaginary part the
/// standard-flux [`continuity_residual`], up to the `O(h²)` mismatch of
/// differentiating `ψ` instead of `(ρ, S)`. The potential field `u` is
/// shared with the Hamilton–Jacobi side.
pub fn schrodinger_residual(
    psi_prev: &GridField<Complex64>,
    psi_present: &GridField<Complex64>,
    u: &GridField<f64>,
) -> Result<GridField<Complex64>, FieldError> {
    let g = psi_present.grid();
    if psi_prev.grid() != g || u.grid() != g {
        return Err(FieldError::GridMismatch);
    }
    let rho = psi_present.map(|p| p.norm_sqr());
    let dpsi = gradient(psi_present);
    // momentum flux ρ·∂S read off the complex field
    let flux = psi_present.zip_map(&dpsi, |p, dp| (p.conj() * dp).im);
    let dflux = gradient(&flux);
    let lap = laplacian(psi_present);

    let mut out = Vec::with_capacity(g.cells());
    for c in 0..g.cells() {
        let r = rho.values()[c];
        let p_now = psi_present.values()[c];
        let p_prev = psi_prev.values()[c];
        let sdot = (p_now * p_prev.conj()).arg();
        let rdot = r - p_prev.norm_sqr();
        let (ds, uq) = if r > 0.0 {
            let ds = flux.values()[c] / r;
            (ds, (lap.values()[c] / p_now).re + ds * ds)
        } else {
            (0.0, 0.0)
        };
        let re = -sdot - ds * ds - u.values()[c] - uq;
        let im = rdot + dflux.values()[c];
        out.push(Complex64::new(re, im));
    }
    Ok(GridField::new(g, out))
}

/// The full single-state pipeline: difference pdf, density, phase,
/// potentials, quantum potential, wave function, and the exact scalars.
#[derive(Debug, Clone)]
pub struct EmergentFields {
    pub grid: Grid,
    pub pdf: DiffPdf,
    pub rho: GridField<f64>,
    pub s: GridField<f64>,
    pub potentials: ClassicalPotentials,
    pub uq: GridField<f64>,
    pub psi: GridField<Complex64>,
    /// Exact differences energy `T`.
    pub t_energy: BigRational,
    /// Exact global mean momentum.
    pub p_global: BigRational,
}

pub fn emergent_fields(
    events: &[Dyadic],
    cfg: &EmergenceConfig,
) -> Result<EmergentFields, FieldError> {
    let diffs = pairwise_differences(events, cfg.pair_convention)?;
    let pdf = diff_pdf(&diffs, cfg.pair_convention);
    let grid = cfg.difference_grid();
    let rho = pdf.to_density(grid);
    let s = phase_field(&diffs, cfg);
    let potentials = classical_potentials(&rho, cfg);
    let uq = quantum_potential(&rho);
    let psi = wavefunction(&rho, &s)?;
    Ok(EmergentFields {
        grid,
        pdf,
        rho,
        s,
        potentials,
        uq,
        psi,
        t_energy: differences_energy(&diffs),
        p_global: mean_momentum(&diffs, MomentumScope::Global),
    })
}

/// Restricts a field on `[-1,1]` to its `[0,1]` half, one depth coarser:
/// cell centers and spacing are unchanged, so values carry over directly.
pub fn restrict_to_unit(field: &GridField<f64>) -> GridField<f64> {
    let g = field.grid();
    assert_eq!(
        g.domain,
        Domain::Symmetric,
        "restriction starts from [-1,1]"
    );
    assert!(g.depth >= 3, "need at least 4 cells on the unit half");
    let half = g.cells() / 2;
    GridField::new(
        Grid::new(Domain::Unit, g.depth - 1),
        field.values()[half..].to_vec(),
    )
}
