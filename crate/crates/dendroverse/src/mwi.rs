//! An ensemble of observers measuring each other's fixed 2-adic codes.
//!
//! Every observer owns an immutable objective code and an evolving
//! subjective dendrogram, one leaf per collected event. Measuring a target
//! means incorporating the target's Monna value as a new leaf next to the
//! nearest already-collected value; the *recorded* outcome is the Monna
//! value of the leaf that ends up holding it, so observers with different
//! histories record different outcomes for the same target. Re-measuring
//! an already-collected value changes nothing.
//!
//! The [`WorldLedger`] tracks the resulting superposition: each measurement
//! round splits every branch sitting at a measured shape into one child per
//! (outcome, destination-shape) pair, with squared amplitudes
//! `a_i² · b_j` kept as exact rationals — outcome masses `a_i²` from the
//! empirical distribution of recorded values, shape fractions `b_j` from
//! the regrouping of the measuring class. Relative states are conditional
//! slices of that ledger, renormalized.

use crate::causal::{leaf_monna_values, theta_descriptor, ThetaDescriptor};
use crate::dendrogram::{CanonicalForm, Dendrogram, TreeError};
use crate::emergence::{
    emergent_fields, restrict_to_unit, wavefunction, DiffPdf, EmergenceConfig, FieldError,
    PairConvention,
};
use crate::grid::{Domain, Grid, GridField};
use crate::padic::{monna_map, Dyadic, EdgeCode};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("an ensemble needs at least two observers, got {found}")]
    TooFewObservers { found: usize },
    #[error("measured value {0} lies outside [0, 1]")]
    ValueOutOfRange(String),
    #[error("the measuring class has no members")]
    EmptyThetaClass,
    #[error("a measurement round needs at least one target")]
    EmptyTargets,
    #[error("no ledger branch satisfies the condition")]
    EmptyProjection,
    #[error("observer {0} does not exist")]
    UnknownObserver(usize),
    #[error("invalid observer state: {0}")]
    InvalidObserver(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// One observer: a fixed objective code plus the subjective record of
/// collected events. Leaf label `i` of the dendrogram holds event `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    id: usize,
    event_values: Vec<Dyadic>,
    dendrogram: Dendrogram,
    objective_code: EdgeCode,
    measurement_log: Vec<(usize, Dyadic)>,
}

impl Observer {
    /// Builds an observer from explicit state, validating the leaf/event
    /// correspondence.
    pub fn with_state(
        id: usize,
        event_values: Vec<Dyadic>,
        dendrogram: Dendrogram,
        objective_code: EdgeCode,
    ) -> Result<Observer, EnsembleError> {
        if dendrogram.leaf_count() != event_values.len() {
            return Err(EnsembleError::InvalidObserver(format!(
                "observer {id}: {} leaves vs {} event values",
                dendrogram.leaf_count(),
                event_values.len()
            )));
        }
        let mut labels = dendrogram.leaf_labels();
        labels.sort_unstable();
        if labels != (0..event_values.len()).collect::<Vec<_>>() {
            return Err(EnsembleError::InvalidObserver(format!(
                "observer {id}: leaf labels are not 0..{}",
                event_values.len()
            )));
        }
        for (i, v) in event_values.iter().enumerate() {
            if event_values[..i].contains(v) {
                return Err(EnsembleError::InvalidObserver(format!(
                    "observer {id}: duplicate event value {v}"
                )));
            }
        }
        Ok(Observer {
            id,
            event_values,
            dendrogram,
            objective_code,
            measurement_log: Vec::new(),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn event_values(&self) -> &[Dyadic] {
        &self.event_values
    }

    pub fn dendrogram(&self) -> &Dendrogram {
        &self.dendrogram
    }

    pub fn objective_code(&self) -> &EdgeCode {
        &self.objective_code
    }

    pub fn measurement_log(&self) -> &[(usize, Dyadic)] {
        &self.measurement_log
    }

    /// The observer's objective property as a value in `[0,1)`; constant
    /// for the observer's lifetime.
    pub fn objective_value(&self) -> Dyadic {
        monna_map(&self.objective_code)
    }

    /// Incorporates a measured value. A value already collected leaves the
    /// observer unchanged; a fresh one becomes a new leaf splitting the
    /// edge of the nearest collected value (ties to the lower value), on
    /// branch 0 if it sorts below its neighbour. The recorded outcome is
    /// the Monna value of the leaf holding the value afterwards.
    pub fn incorporate(&self, value: &Dyadic) -> Result<Incorporation, EnsembleError> {
        if value.is_negative() || *value > Dyadic::one() {
            return Err(EnsembleError::ValueOutOfRange(value.to_string()));
        }
        if let Some(label) = self.event_values.iter().position(|v| v == value) {
            let code = self
                .dendrogram
                .leaf_code(label)
                .expect("leaf labels mirror event indices");
            return Ok(Incorporation {
                observer: self.clone(),
                recorded: monna_map(&code),
                changed: false,
            });
        }

        let nearest = self
            .event_values
            .iter()
            .enumerate()
            .min_by_key(|(_, v)| (v.sub(value).abs(), (*v).clone()))
            .map(|(label, v)| (label, v.clone()))
            .expect("observers hold at least two events");
        let (nearest_label, nearest_value) = nearest;
        let attach = self
            .dendrogram
            .leaf_code(nearest_label)
            .expect("leaf labels mirror event indices");
        let new_digit = u8::from(*value >= nearest_value);
        let new_label = self.event_values.len();
        let dendrogram = self
            .dendrogram
            .insert_leaf(attach.digits(), new_digit, new_label)?;
        let recorded = monna_map(
            &dendrogram
                .leaf_code(new_label)
                .expect("freshly inserted leaf"),
        );
        let mut event_values = self.event_values.clone();
        event_values.push(value.clone());
        Ok(Incorporation {
            observer: Observer {
                id: self.id,
                event_values,
                dendrogram,
                objective_code: self.objective_code.clone(),
                measurement_log: self.measurement_log.clone(),
            },
            recorded,
            changed: true,
        })
    }
}

/// Result of incorporating one value.
#[derive(Debug, Clone)]
pub struct Incorporation {
    pub observer: Observer,
    /// Monna value of the leaf holding the measured value.
    pub recorded: Dyadic,
    pub changed: bool,
}

/// All observers sharing one dendrogram shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaClass {
    pub canonical_form: CanonicalForm,
    pub member_ids: BTreeSet<usize>,
    pub descriptor: ThetaDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    observers: Vec<Observer>,
}

impl Ensemble {
    pub fn from_observers(observers: Vec<Observer>) -> Result<Ensemble, EnsembleError> {
        if observers.len() < 2 {
            return Err(EnsembleError::TooFewObservers {
                found: observers.len(),
            });
        }
        for (i, o) in observers.iter().enumerate() {
            if o.id != i {
                return Err(EnsembleError::InvalidObserver(format!(
                    "observer ids must be contiguous from 0; position {i} holds id {}",
                    o.id
                )));
            }
            if observers[..i]
                .iter()
                .any(|p| p.objective_code == o.objective_code)
            {
                return Err(EnsembleError::InvalidObserver(format!(
                    "objective code {} assigned twice",
                    o.objective_code
                )));
            }
        }
        Ok(Ensemble { observers })
    }

    pub fn observers(&self) -> &[Observer] {
        &self.observers
    }

    pub fn get(&self, id: usize) -> Result<&Observer, EnsembleError> {
        self.observers
            .get(id)
            .ok_or(EnsembleError::UnknownObserver(id))
    }

    pub fn len(&self) -> usize {
        self.observers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observers.is_empty()
    }

    /// The current partition into shape classes, sorted by canonical form.
    pub fn classes(&self) -> Vec<ThetaClass> {
        let mut groups: BTreeMap<CanonicalForm, BTreeSet<usize>> = BTreeMap::new();
        for o in &self.observers {
            groups
                .entry(o.dendrogram.canonicalize())
                .or_default()
                .insert(o.id);
        }
        groups
            .into_iter()
            .map(|(canonical_form, member_ids)| {
                let representative = *member_ids.iter().next().expect("group is non-empty");
                ThetaClass {
                    canonical_form,
                    descriptor: theta_descriptor(&self.observers[representative].dendrogram),
                    member_ids,
                }
            })
            .collect()
    }

    /// Every observer's `(objective code, measurement log)` pair is unique;
    /// two observers on the same world line would be the same observer.
    pub fn world_lines_distinct(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.observers.iter().all(|o| {
            seen.insert((
                o.objective_code.digits().to_vec(),
                o.measurement_log
                    .iter()
                    .map(|(t, v)| (*t, v.to_string()))
                    .collect::<Vec<_>>(),
            ))
        })
    }
}

/// Seeds `n` observers, each holding the basic two-branch dendrogram over
/// two distinct event values, with pairwise-distinct objective codes of
/// depth `ceil(log2 n) + 1`.
pub fn init_ensemble(n: usize, seed: u64) -> Result<Ensemble, EnsembleError> {
    if n < 2 {
        return Err(EnsembleError::TooFewObservers { found: n });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let depth = (usize::BITS - (n - 1).leading_zeros()).max(1) + 1;
    let mut code_values: Vec<u64> = (0..(1u64 << depth)).collect();
    code_values.shuffle(&mut rng);

    let mut observers = Vec::with_capacity(n);
    for (id, &code_value) in code_values.iter().take(n).enumerate() {
        let digits: Vec<u8> = (0..depth).map(|j| ((code_value >> j) & 1) as u8).collect();
        let objective_code = EdgeCode::new(digits).expect("depth >= 1");
        let first = Dyadic::new(rng.gen_range(0..=(1i64 << 20)), 20);
        let second = loop {
            let v = Dyadic::new(rng.gen_range(0..=(1i64 << 20)), 20);
            if v != first {
                break v;
            }
        };
        observers.push(Observer {
            id,
            event_values: vec![first, second],
            dendrogram: Dendrogram::cherry(0, 1),
            objective_code,
            measurement_log: Vec::new(),
        });
    }
    Ensemble::from_observers(observers)
}

/// The hypothetical distribution of recorded values if every member of the
/// class measured the target now: `ρ_Bk(x, θ)` on `[0,1]`. Read-only.
pub fn objective_distribution(
    ensemble: &Ensemble,
    target: usize,
    member_ids: &BTreeSet<usize>,
) -> Result<DiffPdf, EnsembleError> {
    if member_ids.is_empty() {
        return Err(EnsembleError::EmptyThetaClass);
    }
    let value = ensemble.get(target)?.objective_value();
    let mut recorded = Vec::with_capacity(member_ids.len());
    for &id in member_ids {
        recorded.push(ensemble.get(id)?.incorporate(&value)?.recorded);
    }
    Ok(DiffPdf::from_values(&recorded, PairConvention::Ordered))
}

/// The objective wave function `ψ^{O} = √ρ_Bk · e^{iS}` pointwise over a
/// common `[0,1]` grid, so `|ψ|² = ρ_Bk`.
pub fn objective_wavefunction(
    rho_bk: &GridField<f64>,
    s_theta: &GridField<f64>,
) -> Result<GridField<Complex64>, FieldError> {
    wavefunction(rho_bk, s_theta)
}

/// The composed objective state of a target relative to a class: the
/// distribution of recorded values binned on `[0,1]`, the class's
/// subjective phase (from its lowest-id member, restricted to the unit
/// half of the difference grid), and their wave function.
#[derive(Debug, Clone)]
pub struct ObjectiveState {
    pub distribution: DiffPdf,
    pub rho: GridField<f64>,
    pub s: GridField<f64>,
    pub psi: GridField<Complex64>,
}

pub fn objective_state(
    ensemble: &Ensemble,
    target: usize,
    member_ids: &BTreeSet<usize>,
    cfg: &EmergenceConfig,
) -> Result<ObjectiveState, EnsembleError> {
    let distribution = objective_distribution(ensemble, target, member_ids)?;
    let unit_grid = Grid::new(Domain::Unit, cfg.grid_depth - 1);
    let rho = distribution.to_density(unit_grid);
    let representative = *member_ids.iter().next().expect("members checked non-empty");
    let events = leaf_monna_values(ensemble.get(representative)?.dendrogram());
    let subjective = emergent_fields(&events, cfg).map_err(|e| match e {
        FieldError::TooFewEvents { found } => {
            EnsembleError::InvalidObserver(format!("representative observer holds {found} events"))
        }
        other => EnsembleError::InvalidObserver(other.to_string()),
    })?;
    let s = restrict_to_unit(&subjective.s);
    let psi = objective_wavefunction(&rho, &s)
        .expect("density and phase share the unit grid by construction");
    Ok(ObjectiveState {
        distribution,
        rho,
        s,
        psi,
    })
}

/// One element of a measurement round's eigenbasis: a distinct tuple of
/// recorded values (ascending-target order) with its empirical mass `a_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenOutcome {
    pub values: Vec<Dyadic>,
    pub mass: BigRational,
    pub member_count: usize,
}

/// One destination class `θ_j` with its fraction `b_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationClass {
    pub form: CanonicalForm,
    pub fraction: BigRational,
    pub member_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub round: usize,
    pub targets: Vec<usize>,
    pub measured_forms: BTreeSet<CanonicalForm>,
    pub eigenvalues: Vec<EigenOutcome>,
    pub destinations: Vec<DestinationClass>,
}

/// One recorded entry of a branch's world line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub targets: Vec<usize>,
    /// Index into that round's eigenbasis; `None` when the branch's shape
    /// was not the one measured.
    pub eigenvalue: Option<usize>,
}

/// A superposition branch: exact squared amplitude, outcome history, and
/// the shape the subjective state sits at.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome_record: Vec<RoundOutcome>,
    pub theta: CanonicalForm,
    mass: BigRational,
}

impl Branch {
    /// `|amplitude|²`, exact.
    pub fn mass(&self) -> &BigRational {
        &self.mass
    }

    /// The (real, imaginary) amplitude for export; all ledger amplitudes
    /// are nonnegative reals.
    pub fn amplitude(&self) -> (f64, f64) {
        (self.mass.to_f64().unwrap_or(0.0).sqrt(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldLedger {
    branches: Vec<Branch>,
    generation: usize,
}

impl WorldLedger {
    /// A fresh ledger: one branch of full weight at the given shape.
    pub fn new(theta: CanonicalForm) -> WorldLedger {
        WorldLedger {
            branches: vec![Branch {
                outcome_record: Vec::new(),
                theta,
                mass: BigRational::one(),
            }],
            generation: 0,
        }
    }

    /// Builds a ledger from explicit `(record, theta, mass)` branches; the
    /// masses must sum to one exactly.
    pub fn from_branches(
        branches: Vec<(Vec<RoundOutcome>, CanonicalForm, BigRational)>,
        generation: usize,
    ) -> Result<WorldLedger, EnsembleError> {
        let total: BigRational = branches.iter().map(|(_, _, m)| m.clone()).sum();
        if total != BigRational::one() {
            return Err(EnsembleError::InvalidObserver(format!(
                "branch masses sum to {total}, not 1"
            )));
        }
        let mut branches: Vec<Branch> = branches
            .into_iter()
            .map(|(outcome_record, theta, mass)| Branch {
                outcome_record,
                theta,
                mass,
            })
            .collect();
        branches.sort_by(|a, b| (&a.outcome_record, &a.theta).cmp(&(&b.outcome_record, &b.theta)));
        Ok(WorldLedger {
            branches,
            generation,
        })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// `Σ |amplitude|²`, exact; one by construction.
    pub fn total_probability(&self) -> BigRational {
        self.branches.iter().map(|b| b.mass.clone()).sum()
    }
}

/// Applies one measurement round: every listed member incorporates every
/// target's objective value (targets in ascending id order), members are
/// regrouped into destination classes, and each ledger branch at a
/// measured shape splits over all (outcome, destination) pairs with
/// squared amplitude multiplied by `a_i² · b_j`.
pub fn measure(
    ensemble: &mut Ensemble,
    member_ids: &BTreeSet<usize>,
    targets: &BTreeSet<usize>,
    ledger: &mut WorldLedger,
) -> Result<MeasureReport, EnsembleError> {
    if member_ids.is_empty() {
        return Err(EnsembleError::EmptyThetaClass);
    }
    if targets.is_empty() {
        return Err(EnsembleError::EmptyTargets);
    }
    let target_values: Vec<(usize, Dyadic)> = targets
        .iter()
        .map(|&t| Ok((t, ensemble.get(t)?.objective_value())))
        .collect::<Result<_, EnsembleError>>()?;
    for &id in member_ids {
        ensemble.get(id)?;
    }

    let measured_forms: BTreeSet<CanonicalForm> = member_ids
        .iter()
        .map(|&id| ensemble.observers[id].dendrogram.canonicalize())
        .collect();

    // Incorporate and collect each member's outcome tuple.
    let mut outcome_groups: BTreeMap<Vec<Dyadic>, usize> = BTreeMap::new();
    let mut member_outcomes: BTreeMap<usize, Vec<Dyadic>> = BTreeMap::new();
    for &id in member_ids {
        let mut tuple = Vec::with_capacity(target_values.len());
        for (t, value) in &target_values {
            let inc = ensemble.observers[id].incorporate(value)?;
            ensemble.observers[id] = inc.observer;
            ensemble.observers[id]
                .measurement_log
                .push((*t, inc.recorded.clone()));
            tuple.push(inc.recorded);
        }
        *outcome_groups.entry(tuple.clone()).or_insert(0) += 1;
        member_outcomes.insert(id, tuple);
    }

    let class_size = BigRational::from_integer(member_ids.len().into());
    let eigenvalues: Vec<EigenOutcome> = outcome_groups
        .into_iter()
        .map(|(values, count)| EigenOutcome {
            values,
            mass: BigRational::from_integer(count.into()) / &class_size,
            member_count: count,
        })
        .collect();

    let mut destination_groups: BTreeMap<CanonicalForm, BTreeSet<usize>> = BTreeMap::new();
    for &id in member_ids {
        destination_groups
            .entry(ensemble.observers[id].dendrogram.canonicalize())
            .or_default()
            .insert(id);
    }
    let destinations: Vec<DestinationClass> = destination_groups
        .into_iter()
        .map(|(form, ids)| DestinationClass {
            fraction: BigRational::from_integer(ids.len().into()) / &class_size,
            form,
            member_ids: ids,
        })
        .collect();

    // Split the ledger.
    let round_targets: Vec<usize> = targets.iter().copied().collect();
    let mut next: Vec<Branch> = Vec::new();
    for branch in &ledger.branches {
        if measured_forms.contains(&branch.theta) {
            for (i, eigen) in eigenvalues.iter().enumerate() {
                for dest in &destinations {
                    let mut record = branch.outcome_record.clone();
                    record.push(RoundOutcome {
                        targets: round_targets.clone(),
                        eigenvalue: Some(i),
                    });
                    next.push(Branch {
                        outcome_record: record,
                        theta: dest.form.clone(),
                        mass: &branch.mass * &eigen.mass * &dest.fraction,
                    });
                }
            }
        } else {
            let mut record = branch.outcome_record.clone();
            record.push(RoundOutcome {
                targets: round_targets.clone(),
                eigenvalue: None,
            });
            next.push(Branch {
                outcome_record: record,
                theta: branch.theta.clone(),
                mass: branch.mass.clone(),
            });
        }
    }
    next.sort_by(|a, b| (&a.outcome_record, &a.theta).cmp(&(&b.outcome_record, &b.theta)));
    ledger.branches = next;
    ledger.generation += 1;

    Ok(MeasureReport {
        round: ledger.generation,
        targets: round_targets,
        measured_forms,
        eigenvalues,
        destinations,
    })
}

/// Which class (or region of classes) measures in a scheduled round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSelector {
    /// The class containing this observer.
    Member { member: usize },
    /// The union of the classes containing these observers.
    Region { members: Vec<usize> },
    /// `"largest"`: the class with the most members (ties to the smallest
    /// canonical form).
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub theta: ThetaSelector,
    pub targets: Vec<usize>,
}

pub fn resolve_selector(
    ensemble: &Ensemble,
    selector: &ThetaSelector,
) -> Result<BTreeSet<usize>, EnsembleError> {
    let classes = ensemble.classes();
    let class_of = |id: usize| -> Result<&ThetaClass, EnsembleError> {
        ensemble.get(id)?;
        classes
            .iter()
            .find(|c| c.member_ids.contains(&id))
            .ok_or(EnsembleError::UnknownObserver(id))
    };
    match selector {
        ThetaSelector::Member { member } => Ok(class_of(*member)?.member_ids.clone()),
        ThetaSelector::Region { members } => {
            let mut union = BTreeSet::new();
            for &id in members {
                union.extend(class_of(id)?.member_ids.iter().copied());
            }
            if union.is_empty() {
                return Err(EnsembleError::EmptyThetaClass);
            }
            Ok(union)
        }
        ThetaSelector::Keyword(word) if word == "largest" => classes
            .iter()
            .max_by_key(|c| {
                (
                    c.member_ids.len(),
                    std::cmp::Reverse(c.canonical_form.clone()),
                )
            })
            .map(|c| c.member_ids.clone())
            .ok_or(EnsembleError::EmptyThetaClass),
        ThetaSelector::Keyword(other) => Err(EnsembleError::Schedule(format!(
            "unknown selector keyword `{other}`"
        ))),
    }
}

/// Applies a schedule of rounds in order; the ledger's generation counts
/// the rounds applied.
pub fn chained_measure(
    ensemble: &mut Ensemble,
    schedule: &[Round],
    ledger: &mut WorldLedger,
) -> Result<Vec<MeasureReport>, EnsembleError> {
    let mut reports = Vec::with_capacity(schedule.len());
    for round in schedule {
        let members = resolve_selector(ensemble, &round.theta)?;
        let targets: BTreeSet<usize> = round.targets.iter().copied().collect();
        reports.push(measure(ensemble, &members, &targets, ledger)?);
    }
    Ok(reports)
}

/// A condition to slice the ledger on.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// Branches sitting at this shape.
    Theta(CanonicalForm),
    /// Branches whose round involving `target` recorded eigenvalue
    /// `index`; `round` picks the round explicitly (0-based), default the
    /// last one that measured the target.
    Eigenvalue {
        target: usize,
        index: usize,
        round: Option<usize>,
    },
}

/// A label of the factor complementary to the conditioned one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelativeLabel {
    /// Outcome history (conditioning was on θ).
    Record(Vec<RoundOutcome>),
    /// Shape (conditioning was on an outcome).
    Theta(CanonicalForm),
}

/// The normalized conditional state over the complementary factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeState {
    /// Components with exact conditional masses summing to one.
    pub components: Vec<(RelativeLabel, BigRational)>,
    /// The total probability mass the condition selected, `Z²`.
    pub selected_mass: BigRational,
}

impl RelativeState {
    pub fn amplitude_of(&self, label: &RelativeLabel) -> f64 {
        self.components
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, m)| m.to_f64().unwrap_or(0.0).sqrt())
            .unwrap_or(0.0)
    }

    /// Conditional expectation of a diagonal observable on the
    /// complementary factor.
    pub fn expectation(&self, observable: impl Fn(&RelativeLabel) -> f64) -> f64 {
        self.components
            .iter()
            .map(|(l, m)| observable(l) * m.to_f64().unwrap_or(0.0))
            .sum()
    }
}

pub fn relative_state(
    ledger: &WorldLedger,
    condition: &Condition,
) -> Result<RelativeState, EnsembleError> {
    let round_for = |target: usize, round: &Option<usize>| -> Result<usize, EnsembleError> {
        match round {
            Some(r) => Ok(*r),
            None => (0..ledger.generation)
                .rev()
                .find(|&r| {
                    ledger
                        .branches
                        .first()
                        .map(|b| b.outcome_record[r].targets.contains(&target))
                        .unwrap_or(false)
                })
                .ok_or(EnsembleError::Schedule(format!(
                    "no round measured target {target}"
                ))),
        }
    };

    let matches = |branch: &Branch| -> Result<bool, EnsembleError> {
        Ok(match condition {
            Condition::Theta(form) => &branch.theta == form,
            Condition::Eigenvalue {
                target,
                index,
                round,
            } => {
                let r = round_for(*target, round)?;
                branch
                    .outcome_record
                    .get(r)
                    .is_some_and(|o| o.eigenvalue == Some(*index))
            }
        })
    };

    let mut selected_mass = BigRational::zero();
    let mut grouped: BTreeMap<RelativeLabel, BigRational> = BTreeMap::new();
    for branch in &ledger.branches {
        if !matches(branch)? {
            continue;
        }
        selected_mass += &branch.mass;
        let label = match condition {
            Condition::Theta(_) => RelativeLabel::Record(branch.outcome_record.clone()),
            Condition::Eigenvalue { .. } => RelativeLabel::Theta(branch.theta.clone()),
        };
        *grouped.entry(label).or_insert_with(BigRational::zero) += &branch.mass;
    }
    if selected_mass.is_zero() {
        return Err(EnsembleError::EmptyProjection);
    }
    let components = grouped
        .into_iter()
        .map(|(label, mass)| (label, mass / &selected_mass))
        .collect();
    Ok(RelativeState {
        components,
        selected_mass,
    })
}

/// One world: a branch's outcome history with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldLine {
    pub outcome_record: Vec<RoundOutcome>,
    pub theta: CanonicalForm,
    pub probability: BigRational,
}

/// All branches as world lines, lexicographically ordered by outcome
/// record; probabilities sum to one exactly.
pub fn world_lines(ledger: &WorldLedger) -> Vec<WorldLine> {
    ledger
        .branches
        .iter()
        .map(|b| WorldLine {
            outcome_record: b.outcome_record.clone(),
            theta: b.theta.clone(),
            probability: b.mass.clone(),
        })
        .collect()
}

#[cfg(test)]
impl CanonicalForm {
    fn from_test_str(s: &str) -> CanonicalForm {
        serde_json::from_str(&format!("\"{s}\"")).expect("canonical form literal")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dy(n: i64, e: u32) -> Dyadic {
        Dyadic::new(n, e)
    }

    fn code(digits: &[u8]) -> EdgeCode {
        EdgeCode::new(digits.to_vec()).unwrap()
    }

    /// Three observers holding 5/8 at leaf 1, one observer that will
    /// insert it at code [1,0], and the measured target with objective
    /// value 5/8. One eigenvalue (recorded 1/2), destinations 3/4 vs 1/4.
    pub(crate) fn split_fixture() -> (Ensemble, BTreeSet<usize>, usize) {
        let v = dy(5, 3); // 5/8
        let mut observers = Vec::new();
        for id in 0..3usize {
            observers.push(
                Observer::with_state(
                    id,
                    vec![dy(1 + 2 * id as i64, 4), v.clone()],
                    Dendrogram::cherry(0, 1),
                    code(&[(id & 1) as u8, ((id >> 1) & 1) as u8, 1, 0, 0]),
                )
                .unwrap(),
            );
        }
        // nearest to 5/8 is 3/4 and 5/8 < 3/4: new leaf lands at [1,0]
        observers.push(
            Observer::with_state(
                3,
                vec![dy(1, 3), dy(3, 2)],
                Dendrogram::cherry(0, 1),
                code(&[1, 1, 0, 0, 0]),
            )
            .unwrap(),
        );
        // the target: objective value 5/8, its tree a different shape so it
        // sits outside the measured class
        observers.push(
            Observer::with_state(
                4,
                vec![dy(1, 4), dy(3, 3), dy(7, 3)],
                Dendrogram::cherry(0, 1).insert_leaf(&[], 1, 2).unwrap(),
                code(&[1, 0, 1]),
            )
            .unwrap(),
        );
        // a second possible target with objective value 1/8
        observers.push(
            Observer::with_state(
                5,
                vec![dy(5, 4), dy(11, 4), dy(15, 4)],
                Dendrogram::cherry(0, 1).insert_leaf(&[], 1, 2).unwrap(),
                code(&[0, 0, 1]),
            )
            .unwrap(),
        );
        let ensemble = Ensemble::from_observers(observers).unwrap();
        let members: BTreeSet<usize> = [0, 1, 2, 3].into_iter().collect();
        (ensemble, members, 4)
    }

    #[test]
    fn init_gives_single_class_and_distinct_codes() {
        for n in [2usize, 5, 10] {
            let e = init_ensemble(n, 42).unwrap();
            assert_eq!(e.len(), n);
            assert_eq!(e.classes().len(), 1);
            let codes: BTreeSet<_> = e
                .observers()
                .iter()
                .map(|o| o.objective_code().digits().to_vec())
                .collect();
            assert_eq!(codes.len(), n);
            let expected_depth = (usize::BITS - (n - 1).leading_zeros()).max(1) + 1;
            assert!(e
                .observers()
                .iter()
                .all(|o| o.objective_code().depth() == expected_depth));
        }
        assert!(matches!(
            init_ensemble(1, 0),
            Err(EnsembleError::TooFewObservers { found: 1 })
        ));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        assert_eq!(init_ensemble(6, 7).unwrap(), init_ensemble(6, 7).unwrap());
        assert_ne!(init_ensemble(6, 7).unwrap(), init_ensemble(6, 8).unwrap());
    }

    #[test]
    fn objective_value_is_monna_of_code() {
        let o = Observer::with_state(
            0,
            vec![dy(1, 4), dy(3, 4)],
            Dendrogram::cherry(0, 1),
            code(&[1]),
        )
        .unwrap();
        assert_eq!(o.objective_value(), dy(1, 1));
        assert_eq!(o.objective_value(), o.objective_value());
    }

    #[test]
    fn incorporate_repeat_is_identity() {
        let o = Observer::with_state(
            0,
            vec![dy(1, 4), dy(3, 4)],
            Dendrogram::cherry(0, 1),
            code(&[1]),
        )
        .unwrap();
        let first = o.incorporate(&dy(1, 1)).unwrap();
        assert!(first.changed);
        assert_eq!(first.observer.dendrogram().leaf_count(), 3);
        let second = first.observer.incorporate(&dy(1, 1)).unwrap();
        assert!(!second.changed);
        assert_eq!(second.observer, first.observer);
        assert_eq!(second.recorded, first.recorded);
    }

    #[test]
    fn incorporate_fresh_value_gives_unique_three_leaf_shape() {
        let o = Observer::with_state(
            0,
            vec![dy(1, 4), dy(3, 4)],
            Dendrogram::cherry(0, 1),
            code(&[1]),
        )
        .unwrap();
        let inc = o.incorporate(&dy(1, 2)).unwrap();
        assert_eq!(inc.observer.dendrogram().leaf_count(), 3);
        assert_eq!(
            inc.observer.dendrogram().canonicalize(),
            Dendrogram::cherry(0, 1)
                .insert_leaf(&[], 1, 2)
                .unwrap()
                .canonicalize()
        );
        assert!(o.incorporate(&dy(-1, 2)).is_err());
        assert!(o.incorporate(&dy(3, 1)).is_err());
    }

    #[test]
    fn same_value_recorded_differently_by_different_observers() {
        // nearest neighbours sit at different depths, so the fresh leaf's
        // code (and its Monna value) differs between the observers
        let a = Observer::with_state(
            0,
            vec![dy(1, 2), dy(3, 2)],
            Dendrogram::cherry(0, 1),
            code(&[0]),
        )
        .unwrap();
        let b_tree = Dendrogram::cherry(0, 1).insert_leaf(&[1], 1, 2).unwrap();
        let b = Observer::with_state(
            1,
            vec![dy(3, 2), dy(9, 5), dy(7, 3)], // 3/4, 9/32, 7/8
            b_tree,
            code(&[1]),
        )
        .unwrap();
        let v = dy(5, 4); // 5/16
        let ra = a.incorporate(&v).unwrap().recorded;
        let rb = b.incorporate(&v).unwrap().recorded;
        // a attaches beside 1/4 at depth 1; b beside 9/32 at depth 2
        assert_eq!(ra, dy(1, 2));
        assert_eq!(rb, dy(5, 3));
        assert_ne!(ra, rb);
    }

    #[test]
    fn objective_distribution_masses() {
        let (ensemble, members, target) = split_fixture();
        let pdf = objective_distribution(&ensemble, target, &members).unwrap();
        // all four members record 1/2: the three repeats read leaf [1],
        // the fresh insertion lands at [1,0]
        assert_eq!(pdf.support(), &[dy(1, 1)]);
        assert_eq!(pdf.total_mass(), BigRational::one());
        // read-only: the ensemble still has its original shapes
        assert_eq!(ensemble.classes().len(), 2);
    }

    #[test]
    fn objective_distribution_split_masses() {
        // four members recording {a, a, a, b} give masses {3/4, 1/4}:
        // observer 0 records 1/4 for the value 1/8, the rest record 0
        let (ensemble, members, _) = split_fixture();
        let pdf = objective_distribution(&ensemble, 5, &members).unwrap();
        assert_eq!(
            pdf.mass_at(&Dyadic::zero()),
            BigRational::new(3.into(), 4.into())
        );
        assert_eq!(pdf.mass_at(&dy(1, 2)), BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn objective_wavefunction_identities() {
        let (ensemble, members, target) = split_fixture();
        let cfg = EmergenceConfig {
            grid_depth: 5,
            ..Default::default()
        };
        let state = objective_state(&ensemble, target, &members, &cfg).unwrap();
        // every member records 1/2: a point mass puts ψ on a single cell
        let support: Vec<usize> = state
            .psi
            .values()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.norm_sqr() > 0.0)
            .map(|(c, _)| c)
            .collect();
        assert_eq!(support.len(), 1);
        // |ψ|² = ρ_Bk pointwise
        for (p, r) in state.psi.values().iter().zip(state.rho.values()) {
            assert!((p.norm_sqr() - r).abs() <= 1e-12 * r.max(1.0));
        }
        // zero phase makes ψ real
        let zero = GridField::constant(state.rho.grid(), 0.0);
        let real_psi = objective_wavefunction(&state.rho, &zero).unwrap();
        assert!(real_psi.values().iter().all(|p| p.im == 0.0));
        // grids must agree
        let wrong = GridField::constant(Grid::new(Domain::Unit, 6), 0.0);
        assert_eq!(
            objective_wavefunction(&state.rho, &wrong),
            Err(FieldError::GridMismatch)
        );
    }

    #[test]
    fn measure_four_observer_split() {
        let (mut ensemble, members, target) = split_fixture();
        let initial_form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(initial_form.clone());
        let report = measure(
            &mut ensemble,
            &members,
            &[target].into_iter().collect(),
            &mut ledger,
        )
        .unwrap();

        // single eigenvalue of mass 1: every member records 1/2
        assert_eq!(report.eigenvalues.len(), 1);
        assert_eq!(report.eigenvalues[0].values, vec![dy(1, 1)]);
        assert_eq!(report.eigenvalues[0].mass, BigRational::one());

        // fractions 3/4 (unchanged cherry) and 1/4 (three-leaf)
        let fractions: BTreeSet<String> = report
            .destinations
            .iter()
            .map(|d| d.fraction.to_string())
            .collect();
        assert_eq!(fractions, ["1/4".to_string(), "3/4".to_string()].into());
        let b_sum: BigRational = report.destinations.iter().map(|d| d.fraction.clone()).sum();
        assert_eq!(b_sum, BigRational::one());

        assert_eq!(ledger.branches().len(), 2);
        assert_eq!(ledger.total_probability(), BigRational::one());
        let masses: BTreeSet<String> = ledger
            .branches()
            .iter()
            .map(|b| b.mass().to_string())
            .collect();
        assert_eq!(masses, ["1/4".to_string(), "3/4".to_string()].into());

        // θ-class consistency after the round
        for class in ensemble.classes() {
            for &id in &class.member_ids {
                assert_eq!(
                    ensemble.observers()[id].dendrogram().canonicalize(),
                    class.canonical_form
                );
            }
        }
    }

    #[test]
    fn measure_rejects_empty_inputs() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        assert_eq!(
            measure(
                &mut ensemble,
                &BTreeSet::new(),
                &[target].into(),
                &mut ledger
            ),
            Err(EnsembleError::EmptyThetaClass)
        );
        assert_eq!(
            measure(&mut ensemble, &members, &BTreeSet::new(), &mut ledger),
            Err(EnsembleError::EmptyTargets)
        );
    }

    #[test]
    fn chained_empty_schedule_is_identity() {
        let mut ensemble = init_ensemble(4, 3).unwrap();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        let before = ledger.clone();
        chained_measure(&mut ensemble, &[], &mut ledger).unwrap();
        assert_eq!(ledger, before);
        assert_eq!(world_lines(&ledger).len(), 1);
        assert_eq!(world_lines(&ledger)[0].probability, BigRational::one());
    }

    #[test]
    fn repeat_round_is_identity_on_dendrograms() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        let targets: BTreeSet<usize> = [target].into();
        measure(&mut ensemble, &members, &targets, &mut ledger).unwrap();
        let trees_before: Vec<Dendrogram> = ensemble
            .observers()
            .iter()
            .map(|o| o.dendrogram().clone())
            .collect();
        // the same observers measure the same target again; every value is
        // already collected, so nothing moves
        measure(&mut ensemble, &members, &targets, &mut ledger).unwrap();
        let trees_after: Vec<Dendrogram> = ensemble
            .observers()
            .iter()
            .map(|o| o.dendrogram().clone())
            .collect();
        assert_eq!(trees_before, trees_after);
        assert_eq!(ledger.total_probability(), BigRational::one());
    }

    #[test]
    fn two_round_masses_multiply() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        measure(&mut ensemble, &members, &[target].into(), &mut ledger).unwrap();
        // second round: the cherry class (three members) measures observer 3
        let cherry_members =
            resolve_selector(&ensemble, &ThetaSelector::Member { member: 0 }).unwrap();
        assert_eq!(cherry_members.len(), 3);
        measure(&mut ensemble, &cherry_members, &[3].into(), &mut ledger).unwrap();
        assert_eq!(ledger.generation(), 2);
        assert_eq!(ledger.total_probability(), BigRational::one());
        // every branch mass is a product of the per-round rational factors
        for b in ledger.branches() {
            assert_eq!(b.outcome_record.len(), 2);
            assert!(b.mass() > &BigRational::zero());
        }
        assert!(ensemble.world_lines_distinct());
    }

    #[test]
    fn relative_state_bell_pair() {
        let phi = |i: usize| {
            vec![RoundOutcome {
                targets: vec![7],
                eigenvalue: Some(i),
            }]
        };
        let eta1 = CanonicalForm::from_test_str("(**)");
        let eta2 = CanonicalForm::from_test_str("((**)*)");
        let half = BigRational::new(1.into(), 2.into());
        let ledger = WorldLedger::from_branches(
            vec![(phi(0), eta1.clone(), half.clone()), (phi(1), eta2, half)],
            1,
        )
        .unwrap();
        let rel = relative_state(&ledger, &Condition::Theta(eta1)).unwrap();
        assert_eq!(rel.components.len(), 1);
        assert_eq!(rel.components[0].0, RelativeLabel::Record(phi(0)));
        assert_eq!(rel.components[0].1, BigRational::one());
        assert_eq!(rel.amplitude_of(&RelativeLabel::Record(phi(0))), 1.0);
    }

    #[test]
    fn relative_state_full_match_is_marginal_copy() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        measure(&mut ensemble, &members, &[target].into(), &mut ledger).unwrap();
        // the single eigenvalue 0 matches every branch: Z² = 1
        let rel = relative_state(
            &ledger,
            &Condition::Eigenvalue {
                target,
                index: 0,
                round: None,
            },
        )
        .unwrap();
        assert_eq!(rel.selected_mass, BigRational::one());
        let total: BigRational = rel.components.iter().map(|(_, m)| m.clone()).sum();
        assert_eq!(total, BigRational::one());
        assert_eq!(rel.components.len(), 2);
    }

    #[test]
    fn relative_state_empty_projection() {
        let (ensemble, _, _) = split_fixture();
        let ledger = WorldLedger::new(ensemble.observers()[0].dendrogram().canonicalize());
        let missing = CanonicalForm::from_test_str("(((**)*)*)");
        assert_eq!(
            relative_state(&ledger, &Condition::Theta(missing)),
            Err(EnsembleError::EmptyProjection)
        );
    }

    #[test]
    fn relative_state_matches_bruteforce_conditional_expectation() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        measure(&mut ensemble, &members, &[target].into(), &mut ledger).unwrap();
        let cherry = resolve_selector(&ensemble, &ThetaSelector::Member { member: 0 }).unwrap();
        measure(&mut ensemble, &cherry, &[3].into(), &mut ledger).unwrap();

        let forms: BTreeSet<CanonicalForm> =
            ledger.branches().iter().map(|b| b.theta.clone()).collect();
        for form in forms {
            let rel = relative_state(&ledger, &Condition::Theta(form.clone())).unwrap();
            // observable: number of real outcomes in the record
            let observable = |label: &RelativeLabel| match label {
                RelativeLabel::Record(rec) => {
                    rec.iter().filter(|o| o.eigenvalue.is_some()).count() as f64
                }
                RelativeLabel::Theta(_) => 0.0,
            };
            let got = rel.expectation(observable);
            // brute force over the joint ledger
            let (mut num, mut den) = (0.0, 0.0);
            for b in ledger.branches() {
                if b.theta == form {
                    let a = b
                        .outcome_record
                        .iter()
                        .filter(|o| o.eigenvalue.is_some())
                        .count() as f64;
                    let m = b.mass().to_f64().unwrap();
                    num += m * a;
                    den += m;
                }
            }
            assert!((got - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn world_lines_probabilities_sum_to_one() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        measure(&mut ensemble, &members, &[target].into(), &mut ledger).unwrap();
        let worlds = world_lines(&ledger);
        assert_eq!(worlds.len(), 2);
        let total: BigRational = worlds.iter().map(|w| w.probability.clone()).sum();
        assert_eq!(total, BigRational::one());
        let probs: BTreeSet<String> = worlds.iter().map(|w| w.probability.to_string()).collect();
        assert_eq!(probs, ["1/4".to_string(), "3/4".to_string()].into());
    }

    #[test]
    fn largest_selector_and_bad_keyword() {
        let (mut ensemble, members, target) = split_fixture();
        let form = ensemble.observers()[0].dendrogram().canonicalize();
        let mut ledger = WorldLedger::new(form);
        measure(&mut ensemble, &members, &[target].into(), &mut ledger).unwrap();
        let largest =
            resolve_selector(&ensemble, &ThetaSelector::Keyword("largest".into())).unwrap();
        assert_eq!(largest.len(), 3);
        assert!(matches!(
            resolve_selector(&ensemble, &ThetaSelector::Keyword("biggest".into())),
            Err(EnsembleError::Schedule(_))
        ));
    }
}
