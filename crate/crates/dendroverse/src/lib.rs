//! Dendroverse: 2-adic dendrogram representations of event data and the
//! structures that emerge from them.
//!
//! The toolkit covers four layers:
//!
//! * [`padic`] / [`dendrogram`] — exact branch codes, the Monna map, the
//!   2-adic ultrametric, and canonical unordered tree shapes with leaf
//!   insertion and restriction.
//! * [`cluster`] — deterministic agglomerative clustering turning numeric
//!   event records into labeled dendrograms.
//! * [`emergence`] — the difference pdf of a dendrogram's Monna values and
//!   the fields derived from it: phase, classical and quantum potentials,
//!   action, Hamilton–Jacobi and continuity residuals, and the wave
//!   function `ψ = √ρ · e^{iS}`.
//! * [`causal`] / [`mwi`] — timelike/spacelike classification of dendrogram
//!   pairs, dendrogram light cones, and an ensemble of observers
//!   measuring each other with full branching-ledger bookkeeping.
//!
//! The `examples/` directory holds one runnable walkthrough per capability;
//! the `dendroverse` binary wires the same operations into reproducible
//! file-based pipelines.

pub mod causal;
pub mod cli;
pub mod cluster;
pub mod dendrogram;
pub mod emergence;
pub mod grid;
pub mod mwi;
pub mod padic;

pub use dendrogram::{CanonicalForm, Dendrogram, LeafId};
pub use grid::{Domain, Grid, GridField};
pub use padic::{Dyadic, EdgeCode};
