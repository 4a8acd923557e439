//! File-based pipelines behind the `dendroverse` binary.
//!
//! Every command is a pure function of its config and input files:
//! outputs are written atomically (temp file, then rename), carry a
//! manifest block (tool version, config echo, sha256 of each input), and
//! are byte-identical across runs. Exit codes: 0 success, 2 input error,
//! 3 internal invariant violation.

use crate::causal::{
    classify_ensemble, future_cone, recluster_transitions, theta_descriptor, CausalVerdict,
    LightCone, ThetaDescriptor,
};
use crate::cluster::{agglomerate, load_events, DuplicatePolicy, Linkage, LinkageSpec, Metric};
use crate::dendrogram::Dendrogram;
use crate::emergence::{
    action, continuity_residual, emergent_fields, hj_residual, leaf_depth_default, ContinuityForm,
    EmergenceConfig, PhaseMode, PotentialMode, StepFields,
};
use crate::mwi::{
    chained_measure, init_ensemble, world_lines, Ensemble, Observer, Round, WorldLedger,
};
use crate::padic::{Dyadic, EdgeCode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

macro_rules! input_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_error_from!(
    std::io::Error,
    serde_json::Error,
    crate::cluster::IngestError,
    crate::dendrogram::TreeError,
    crate::emergence::FieldError,
    crate::mwi::EnsembleError,
    crate::padic::PadicError
);

#[derive(Debug, Parser)]
#[command(
    name = "dendroverse",
    version,
    about = "2-adic dendrograms, their emergent fields, causal structure, and observer ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Cluster a numeric CSV into a 2-adically labeled dendrogram.
    Cluster(ClusterArgs),
    /// Compute the emergent fields of a dendrogram (or raw event values).
    Emerge(EmergeArgs),
    /// Enumerate the future light cone of a dendrogram.
    Cone(ConeArgs),
    /// Classify dendrogram pairs as identical/timelike/spacelike.
    Classify(ClassifyArgs),
    /// Run an observer ensemble through a measurement schedule.
    Simulate(SimulateArgs),
    /// Cluster the same data under two linkage specs and diff the results.
    CompareLinkage(CompareLinkageArgs),
    /// Check prefix re-clustering transitions against the insertion model.
    Recluster(ReclusterArgs),
    /// Execute a subcommand described by a JSON config file.
    Run(RunArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RunArgs {
    /// JSON file with a `command` field plus that subcommand's options.
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Manhattan => Metric::Manhattan,
            MetricArg::Chebyshev => Metric::Chebyshev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkageArg {
    Single,
    Complete,
    Average,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Linkage {
        match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityArg {
    LiteralSquared,
    StandardFlux,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialArg {
    Cdf,
    TotalMass,
}

impl From<PotentialArg> for PotentialMode {
    fn from(p: PotentialArg) -> PotentialMode {
        match p {
            PotentialArg::Cdf => PotentialMode::Cdf,
            PotentialArg::TotalMass => PotentialMode::TotalMass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseArg {
    IntegrateMomentum,
    UnitModulus,
}

impl From<PhaseArg> for PhaseMode {
    fn from(p: PhaseArg) -> PhaseMode {
        match p {
            PhaseArg::IntegrateMomentum => PhaseMode::IntegrateMomentum,
            PhaseArg::UnitModulus => PhaseMode::UnitModulus,
        }
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ClusterArgs {
    /// CSV file: one row per event, numeric cells.
    pub input: PathBuf,
    /// Treat the first line as a header.
    #[arg(long)]
    #[serde(default)]
    pub has_header: bool,
    /// Deterministically jitter duplicate rows instead of rejecting them.
    #[arg(long)]
    #[serde(default)]
    pub jitter_duplicates: bool,
    #[arg(long, value_enum, default_value = "euclidean")]
    #[serde(default = "defaults::euclidean")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "average")]
    #[serde(default = "defaults::average")]
    pub linkage: LinkageArg,
    /// Output JSON path.
    #[arg(long, short, default_value = "dendrogram.json")]
    #[serde(default = "defaults::dendrogram_json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct EmergeArgs {
    /// Dendrogram JSON (`{"leaves": [...]}`, or a `cluster` output), or an
    /// events file `{"events": ["1/4", "1/2", ...]}` of dyadic values.
    pub input: PathBuf,
    /// Previous-step input of the same kind, for the step derivatives;
    /// defaults to a stationary step.
    #[arg(long)]
    #[serde(default)]
    pub prev: Option<PathBuf>,
    /// Grid depth (2^depth cells); default: deepest input value + 2.
    #[arg(long)]
    #[serde(default)]
    pub depth: Option<u32>,
    /// Constant in front of the classical potential v.
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "defaults::one")]
    pub z_v: f64,
    #[arg(long, value_enum, default_value = "cdf")]
    #[serde(default = "defaults::cdf")]
    pub potential_mode: PotentialArg,
    #[arg(long, value_enum, default_value = "integrate-momentum")]
    #[serde(default = "defaults::integrate_momentum")]
    pub phase_mode: PhaseArg,
    #[arg(long, value_enum, default_value = "both")]
    #[serde(default = "defaults::both")]
    pub continuity_form: ContinuityArg,
    /// Diagnostic mode: replace the binned density with the uniform one
    /// (the quantum potential then vanishes identically).
    #[arg(long)]
    #[serde(default)]
    pub uniform_rho: bool,
    /// Output directory for the field CSVs and summary JSON.
    #[arg(long, short, default_value = "emergence")]
    #[serde(default = "defaults::emergence_dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ConeArgs {
    /// Dendrogram JSON file.
    pub input: PathBuf,
    /// Insertion steps to expand.
    #[arg(long, default_value_t = 3)]
    #[serde(default = "defaults::three")]
    pub steps: usize,
    /// Maximum number of shapes to keep before truncating.
    #[arg(long, default_value_t = 10_000)]
    #[serde(default = "defaults::ten_thousand")]
    pub cap: usize,
    #[arg(long, short, default_value = "cone.json")]
    #[serde(default = "defaults::cone_json")]
    pub output: PathBuf,
    /// Also write a DOT graph of the cone.
    #[arg(long)]
    #[serde(default)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    /// Two or more dendrogram JSON files.
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, short, default_value = "classify.json")]
    #[serde(default = "defaults::classify_json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of observers (ignored with --init).
    #[arg(long, default_value_t = 8)]
    #[serde(default = "defaults::eight")]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Schedule JSON: `{"rounds": [{"theta": ..., "targets": [...]}]}`.
    #[arg(long)]
    pub schedule: PathBuf,
    /// Explicit initial ensemble JSON instead of a seeded one.
    #[arg(long)]
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[arg(long, short, default_value = "simulation")]
    #[serde(default = "defaults::simulation_dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CompareLinkageArgs {
    pub input: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub has_header: bool,
    #[arg(long)]
    #[serde(default)]
    pub jitter_duplicates: bool,
    #[arg(long, value_enum, default_value = "euclidean")]
    #[serde(default = "defaults::euclidean")]
    pub metric_a: MetricArg,
    #[arg(long, value_enum, default_value = "average")]
    #[serde(default = "defaults::average")]
    pub linkage_a: LinkageArg,
    #[arg(long, value_enum, default_value = "euclidean")]
    #[serde(default = "defaults::euclidean")]
    pub metric_b: MetricArg,
    #[arg(long, value_enum, default_value = "single")]
    #[serde(default = "defaults::single")]
    pub linkage_b: LinkageArg,
    #[arg(long, short, default_value = "compare.json")]
    #[serde(default = "defaults::compare_json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ReclusterArgs {
    pub input: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub has_header: bool,
    #[arg(long)]
    #[serde(default)]
    pub jitter_duplicates: bool,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "average")]
    pub linkage: LinkageArg,
    #[arg(long, short, default_value = "recluster.json")]
    #[serde(default = "defaults::recluster_json")]
    pub output: PathBuf,
}

/// Serde-side defaults mirroring the clap ones above.
mod defaults {
    use super::{ContinuityArg, LinkageArg, MetricArg, PhaseArg, PotentialArg};
    use std::path::PathBuf;

    pub fn euclidean() -> MetricArg {
        MetricArg::Euclidean
    }
    pub fn average() -> LinkageArg {
        LinkageArg::Average
    }
    pub fn single() -> LinkageArg {
        LinkageArg::Single
    }
    pub fn cdf() -> PotentialArg {
        PotentialArg::Cdf
    }
    pub fn integrate_momentum() -> PhaseArg {
        PhaseArg::IntegrateMomentum
    }
    pub fn both() -> ContinuityArg {
        ContinuityArg::Both
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn three() -> usize {
        3
    }
    pub fn eight() -> usize {
        8
    }
    pub fn ten_thousand() -> usize {
        10_000
    }
    pub fn dendrogram_json() -> PathBuf {
        "dendrogram.json".into()
    }
    pub fn cone_json() -> PathBuf {
        "cone.json".into()
    }
    pub fn classify_json() -> PathBuf {
        "classify.json".into()
    }
    pub fn compare_json() -> PathBuf {
        "compare.json".into()
    }
    pub fn recluster_json() -> PathBuf {
        "recluster.json".into()
    }
    pub fn emergence_dir() -> PathBuf {
        "emergence".into()
    }
    pub fn simulation_dir() -> PathBuf {
        "simulation".into()
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    run_command(cli.command)
}

fn run_command(command: Command) -> Result<(), CliError> {
    match command {
        Command::Cluster(args) => run_cluster(&args),
        Command::Emerge(args) => run_emerge(&args),
        Command::Cone(args) => run_cone(&args),
        Command::Classify(args) => run_classify(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::CompareLinkage(args) => run_compare_linkage(&args),
        Command::Recluster(args) => run_recluster(&args),
        Command::Run(args) => {
            let bytes = read_file(&args.config)?;
            run_command(serde_json::from_slice(&bytes)?)
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").expect("writing to a String");
    }
    s
}

fn manifest(config: Value, inputs: &[(&Path, &[u8])]) -> Value {
    let hashes: BTreeMap<String, String> = inputs
        .iter()
        .map(|(p, bytes)| (p.display().to_string(), sha256_hex(bytes)))
        .collect();
    json!({
        "tool": "dendroverse",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "input_sha256": hashes,
    })
}

/// Writes through a temp file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn descriptor_json(t: &ThetaDescriptor) -> Value {
    json!({
        "leaf_count": t.leaf_count,
        "max_depth": t.max_depth,
        "mean_distance": t.mean_distance,
        "depth_entropy": t.depth_entropy,
    })
}

fn linkage_spec(metric: MetricArg, linkage: LinkageArg) -> LinkageSpec {
    LinkageSpec {
        metric: metric.into(),
        linkage: linkage.into(),
        tie_break: Default::default(),
    }
}

fn duplicate_policy(jitter: bool) -> DuplicatePolicy {
    if jitter {
        DuplicatePolicy::Jitter
    } else {
        DuplicatePolicy::Reject
    }
}

fn run_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.input)?;
    let events = load_events(
        bytes.as_slice(),
        args.has_header,
        duplicate_policy(args.jitter_duplicates),
    )?;
    let dendrogram = agglomerate(&events, linkage_spec(args.metric, args.linkage))?;
    let out = json!({
        "manifest": manifest(serde_json::to_value(args)?, &[(args.input.as_path(), &bytes)]),
        "dendrogram": serde_json::to_value(&dendrogram)?,
        "text": dendrogram.to_text(),
        "canonical_form": dendrogram.canonicalize(),
        "theta": descriptor_json(&theta_descriptor(&dendrogram)),
    });
    write_json(&args.output, &out)
}

/// Event values read from an input file: either a dendrogram (leaf Monna
/// values) or a raw `{"events": [...]}` list.
fn load_event_values(bytes: &[u8]) -> Result<Vec<Dyadic>, CliError> {
    let value: Value = serde_json::from_slice(bytes)?;
    if let Some(events) = value.get("events") {
        let strings: Vec<String> = serde_json::from_value(events.clone())?;
        let parsed: Result<Vec<Dyadic>, _> = strings.iter().map(|s| Dyadic::parse(s)).collect();
        return Ok(parsed?);
    }
    let tree_value = value.get("dendrogram").unwrap_or(&value);
    let dendrogram: Dendrogram = serde_json::from_value(tree_value.clone())?;
    Ok(crate::causal::leaf_monna_values(&dendrogram))
}

fn load_dendrogram(path: &Path) -> Result<(Dendrogram, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let value: Value = serde_json::from_slice(&bytes)?;
    let tree_value = value.get("dendrogram").unwrap_or(&value);
    let dendrogram: Dendrogram = serde_json::from_value(tree_value.clone())?;
    Ok((dendrogram, bytes))
}

fn field_csv(values: &[(f64, f64, f64)]) -> Vec<u8> {
    let mut out = String::from("cell_center,value_real,value_imag\n");
    for (x, re, im) in values {
        writeln!(out, "{x},{re},{im}").expect("writing to a String");
    }
    out.into_bytes()
}

fn real_field_csv(field: &crate::grid::GridField<f64>) -> Vec<u8> {
    let rows: Vec<(f64, f64, f64)> = field
        .grid()
        .centers()
        .zip(field.values())
        .map(|(x, &v)| (x, v, 0.0))
        .collect();
    field_csv(&rows)
}

fn complex_field_csv(field: &crate::grid::GridField<Complex64>) -> Vec<u8> {
    let rows: Vec<(f64, f64, f64)> = field
        .grid()
        .centers()
        .zip(field.values())
        .map(|(x, &v)| (x, v.re, v.im))
        .collect();
    field_csv(&rows)
}

fn max_abs(field: &crate::grid::GridField<f64>) -> f64 {
    field.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Swaps the binned density for the uniform normalized one and rederives
/// every downstream field from it; the exact event scalars stay.
fn uniform_density_fields(
    fields: crate::emergence::EmergentFields,
    cfg: &EmergenceConfig,
) -> Result<crate::emergence::EmergentFields, CliError> {
    let grid = fields.grid;
    let rho = crate::grid::GridField::constant(grid, 1.0 / grid.domain.width());
    let s = crate::emergence::phase_from_density(&rho);
    let potentials = crate::emergence::classical_potentials(&rho, cfg);
    let uq = crate::emergence::quantum_potential(&rho);
    let psi = crate::emergence::wavefunction(&rho, &s)?;
    Ok(crate::emergence::EmergentFields {
        rho,
        s,
        potentials,
        uq,
        psi,
        ..fields
    })
}

fn run_emerge(args: &EmergeArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.input)?;
    let events = load_event_values(&bytes)?;
    let max_exp = events.iter().map(Dyadic::exp).max().unwrap_or(0);
    let depth = args.depth.unwrap_or_else(|| leaf_depth_default(max_exp));
    let cfg = EmergenceConfig {
        grid_depth: depth,
        z_v: args.z_v,
        potential_mode: args.potential_mode.into(),
        phase_mode: args.phase_mode.into(),
        continuity_form: ContinuityForm::StandardFlux,
        pair_convention: Default::default(),
    };
    let mut fields = emergent_fields(&events, &cfg)?;
    if args.uniform_rho {
        fields = uniform_density_fields(fields, &cfg)?;
    }

    let mut input_list: Vec<(&Path, &[u8])> = vec![(args.input.as_path(), &bytes)];
    let prev_bytes;
    let prev_fields = match &args.prev {
        Some(path) => {
            prev_bytes = read_file(path)?;
            let prev_events = load_event_values(&prev_bytes)?;
            input_list.push((path.as_path(), &prev_bytes));
            let prev = emergent_fields(&prev_events, &cfg)?;
            if args.uniform_rho {
                uniform_density_fields(prev, &cfg)?
            } else {
                prev
            }
        }
        None => fields.clone(),
    };

    let present = StepFields {
        s: fields.s.clone(),
        rho: fields.rho.clone(),
    };
    let prev = StepFields {
        s: prev_fields.s.clone(),
        rho: prev_fields.rho.clone(),
    };
    let hj = hj_residual(&prev, &present, &cfg)?;
    let cont_literal = continuity_residual(&prev, &present, ContinuityForm::LiteralSquared)?;
    let cont_standard = continuity_residual(&prev, &present, ContinuityForm::StandardFlux)?;
    let step_action = action(&[prev.clone(), present.clone()], &cfg)?;

    fs::create_dir_all(&args.out_dir)?;
    write_atomic(&args.out_dir.join("rho.csv"), &real_field_csv(&fields.rho))?;
    write_atomic(&args.out_dir.join("phase.csv"), &real_field_csv(&fields.s))?;
    write_atomic(
        &args.out_dir.join("potential_v.csv"),
        &real_field_csv(&fields.potentials.v),
    )?;
    write_atomic(
        &args.out_dir.join("potential_u.csv"),
        &real_field_csv(&fields.potentials.u),
    )?;
    write_atomic(
        &args.out_dir.join("quantum_potential.csv"),
        &real_field_csv(&fields.uq),
    )?;
    write_atomic(
        &args.out_dir.join("psi.csv"),
        &complex_field_csv(&fields.psi),
    )?;

    // residual table, one column per requested continuity form
    let mut res = String::from("cell_center,hj");
    let forms: &[(&str, &crate::grid::GridField<f64>)] = match args.continuity_form {
        ContinuityArg::LiteralSquared => &[("continuity_literal_squared", &cont_literal)],
        ContinuityArg::StandardFlux => &[("continuity_standard_flux", &cont_standard)],
        ContinuityArg::Both => &[
            ("continuity_literal_squared", &cont_literal),
            ("continuity_standard_flux", &cont_standard),
        ],
    };
    for (name, _) in forms {
        write!(res, ",{name}").expect("writing to a String");
    }
    res.push('\n');
    for (c, x) in fields.grid.centers().enumerate() {
        write!(res, "{x},{}", hj.values()[c]).expect("writing to a String");
        for (_, field) in forms {
            write!(res, ",{}", field.values()[c]).expect("writing to a String");
        }
        res.push('\n');
    }
    write_atomic(&args.out_dir.join("residuals.csv"), res.as_bytes())?;

    let summary = json!({
        "manifest": manifest(serde_json::to_value(args)?, &input_list),
        "grid_depth": depth,
        "events": events.iter().map(Dyadic::to_string).collect::<Vec<_>>(),
        "t_energy": fields.t_energy.to_f64(),
        "t_energy_exact": fields.t_energy.to_string(),
        "p_global": fields.p_global.to_f64(),
        "action": step_action,
        "v_total": fields.potentials.v_total,
        "u_total": fields.potentials.u_total,
        "max_abs_hj_residual": max_abs(&hj),
        "max_abs_continuity_residual": {
            "literal_squared": max_abs(&cont_literal),
            "standard_flux": max_abs(&cont_standard),
        },
    });
    write_json(&args.out_dir.join("summary.json"), &summary)
}

fn run_cone(args: &ConeArgs) -> Result<(), CliError> {
    let (dendrogram, bytes) = load_dendrogram(&args.input)?;
    let cone = future_cone(&dendrogram, args.steps, args.cap);
    let levels: Vec<Vec<String>> = cone
        .levels
        .iter()
        .map(|level| level.iter().map(|f| f.to_string()).collect())
        .collect();
    let out = json!({
        "manifest": manifest(serde_json::to_value(args)?, &[(args.input.as_path(), &bytes)]),
        "root_form": dendrogram.canonicalize(),
        "steps": args.steps,
        "levels": levels,
        "total_shapes": cone.shape_count(),
        "truncated": cone.truncated,
    });
    write_json(&args.output, &out)?;
    if let Some(dot_path) = &args.dot {
        write_atomic(dot_path, dot_graph(&cone).as_bytes())?;
    }
    Ok(())
}

fn dot_graph(cone: &LightCone) -> String {
    let mut ids: BTreeMap<&crate::dendrogram::CanonicalForm, String> = BTreeMap::new();
    let mut out = String::from("digraph cone {\n  rankdir=TB;\n");
    for (level, forms) in cone.levels.iter().enumerate() {
        for form in forms {
            let id = format!("n{}", ids.len());
            writeln!(out, "  {id} [label=\"{form}\"];").expect("writing to a String");
            ids.insert(form, id);
        }
        let _ = level;
    }
    for (from, to) in &cone.edges {
        if let (Some(a), Some(b)) = (ids.get(from), ids.get(to)) {
            writeln!(out, "  {a} -> {b};").expect("writing to a String");
        }
    }
    out.push_str("}\n");
    out
}

fn run_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let mut dendrograms = Vec::new();
    let mut byte_list = Vec::new();
    for path in &args.inputs {
        let (d, bytes) = load_dendrogram(path)?;
        dendrograms.push(d);
        byte_list.push(bytes);
    }
    let inputs: Vec<(&Path, &[u8])> = args
        .inputs
        .iter()
        .zip(&byte_list)
        .map(|(p, b)| (p.as_path(), b.as_slice()))
        .collect();
    let matrix = classify_ensemble(&dendrograms);
    let verdict_json = |v: &CausalVerdict| -> Value {
        json!({
            "relation": v.relation,
            "direction": v.direction,
            "witness": v.witness,
        })
    };
    let out = json!({
        "manifest": manifest(serde_json::to_value(args)?, &inputs),
        "files": args.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "forms": dendrograms.iter().map(|d| d.canonicalize()).collect::<Vec<_>>(),
        "relations": matrix
            .verdicts
            .iter()
            .map(|row| row.iter().map(verdict_json).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "descriptors": matrix.descriptors.iter().map(descriptor_json).collect::<Vec<_>>(),
        "pairs": {
            "identical": matrix.identical_pairs,
            "timelike": matrix.timelike_pairs,
            "spacelike": matrix.spacelike_pairs,
        },
        "fractions": {
            "identical": matrix.fraction(crate::causal::Relation::Identical),
            "timelike": matrix.fraction(crate::causal::Relation::Timelike),
            "spacelike": matrix.fraction(crate::causal::Relation::Spacelike),
        },
    });
    write_json(&args.output, &out)
}

#[derive(Debug, Deserialize)]
struct ScheduleFile {
    rounds: Vec<Round>,
}

#[derive(Debug, Deserialize)]
struct InitObserver {
    event_values: Vec<String>,
    leaves: Vec<String>,
    objective_code: String,
}

#[derive(Debug, Deserialize)]
struct InitFile {
    observers: Vec<InitObserver>,
}

fn build_init_ensemble(file: &InitFile) -> Result<Ensemble, CliError> {
    let mut observers = Vec::with_capacity(file.observers.len());
    for (id, spec) in file.observers.iter().enumerate() {
        let values: Result<Vec<Dyadic>, _> =
            spec.event_values.iter().map(|s| Dyadic::parse(s)).collect();
        let dendrogram = Dendrogram::from_leaf_strings(&spec.leaves)?;
        let code = EdgeCode::parse(&spec.objective_code)?;
        observers.push(Observer::with_state(id, values?, dendrogram, code)?);
    }
    Ok(Ensemble::from_observers(observers)?)
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let schedule_bytes = read_file(&args.schedule)?;
    let schedule: ScheduleFile = serde_json::from_slice(&schedule_bytes)?;
    let mut input_list: Vec<(&Path, &[u8])> = vec![(args.schedule.as_path(), &schedule_bytes)];

    let init_bytes;
    let mut ensemble = match &args.init {
        Some(path) => {
            init_bytes = read_file(path)?;
            input_list.push((path.as_path(), &init_bytes));
            let file: InitFile = serde_json::from_slice(&init_bytes)?;
            build_init_ensemble(&file)?
        }
        None => init_ensemble(args.n, args.seed)?,
    };

    let initial_form = ensemble.observers()[0].dendrogram().canonicalize();
    let mut ledger = WorldLedger::new(initial_form);
    let reports = chained_measure(&mut ensemble, &schedule.rounds, &mut ledger)?;

    let total = ledger.total_probability();
    if total != num_rational::BigRational::from_integer(1.into()) {
        return Err(CliError::Internal(format!(
            "ledger probability drifted to {total}"
        )));
    }

    let manifest_json = manifest(serde_json::to_value(args)?, &input_list);

    let branches: Vec<Value> = ledger
        .branches()
        .iter()
        .map(|b| {
            let (re, im) = b.amplitude();
            json!({
                "amplitude": {"re": re, "im": im},
                "probability": b.mass().to_f64(),
                "probability_exact": b.mass().to_string(),
                "theta": b.theta,
                "outcome_record": b.outcome_record,
            })
        })
        .collect();
    let ledger_json = json!({
        "manifest": manifest_json,
        "generation": ledger.generation(),
        "total_probability": ledger.total_probability().to_string(),
        "branches": branches,
    });
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("ledger.json"), &ledger_json)?;

    // world-line table
    let mut csv = String::from("probability,probability_exact,theta,record\n");
    for world in world_lines(&ledger) {
        let record: Vec<String> = world
            .outcome_record
            .iter()
            .map(|o| {
                let targets: Vec<String> = o.targets.iter().map(usize::to_string).collect();
                match o.eigenvalue {
                    Some(i) => format!("t{}:e{i}", targets.join("+")),
                    None => format!("t{}:-", targets.join("+")),
                }
            })
            .collect();
        writeln!(
            csv,
            "{},{},\"{}\",{}",
            world.probability.to_f64().unwrap_or(0.0),
            world.probability,
            world.theta,
            record.join("|")
        )
        .expect("writing to a String");
    }
    write_atomic(&args.out_dir.join("worlds.csv"), csv.as_bytes())?;

    // θ-class history
    let rounds_json: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "round": r.round,
                "targets": r.targets,
                "measured_forms": r.measured_forms,
                "eigenvalues": r.eigenvalues.iter().map(|e| json!({
                    "values": e.values.iter().map(Dyadic::to_string).collect::<Vec<_>>(),
                    "mass": e.mass.to_string(),
                    "members": e.member_count,
                })).collect::<Vec<_>>(),
                "destinations": r.destinations.iter().map(|d| json!({
                    "form": d.form,
                    "fraction": d.fraction.to_string(),
                    "members": d.member_ids,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let classes_json: Vec<Value> = ensemble
        .classes()
        .iter()
        .map(|c| {
            json!({
                "form": c.canonical_form,
                "members": c.member_ids,
                "descriptor": descriptor_json(&c.descriptor),
            })
        })
        .collect();
    let history = json!({
        "manifest": manifest_json,
        "rounds": rounds_json,
        "final_classes": classes_json,
        "world_lines_distinct": ensemble.world_lines_distinct(),
    });
    write_json(&args.out_dir.join("classes.json"), &history)
}

fn run_compare_linkage(args: &CompareLinkageArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.input)?;
    let events = load_events(
        bytes.as_slice(),
        args.has_header,
        duplicate_policy(args.jitter_duplicates),
    )?;

    struct LinkageSummary {
        json: Value,
        dendrogram: Dendrogram,
        descriptor: ThetaDescriptor,
        t_energy: num_rational::BigRational,
    }

    fn summarize(
        events: &[crate::cluster::EventRecord],
        metric: MetricArg,
        linkage: LinkageArg,
    ) -> Result<LinkageSummary, CliError> {
        let d = agglomerate(events, linkage_spec(metric, linkage))?;
        let values = crate::causal::leaf_monna_values(&d);
        let max_exp = values.iter().map(Dyadic::exp).max().unwrap_or(0);
        let cfg = EmergenceConfig {
            grid_depth: leaf_depth_default(max_exp),
            ..Default::default()
        };
        let fields = emergent_fields(&values, &cfg)?;
        let descriptor = theta_descriptor(&d);
        let json = json!({
            "metric": metric,
            "linkage": linkage,
            "canonical_form": d.canonicalize(),
            "text": d.to_text(),
            "theta": descriptor_json(&descriptor),
            "t_energy": fields.t_energy.to_f64(),
            "t_energy_exact": fields.t_energy.to_string(),
            "u_total": fields.potentials.u_total,
            "v_total": fields.potentials.v_total,
        });
        Ok(LinkageSummary {
            json,
            dendrogram: d,
            descriptor,
            t_energy: fields.t_energy,
        })
    }

    let a = summarize(&events, args.metric_a, args.linkage_a)?;
    let b = summarize(&events, args.metric_b, args.linkage_b)?;
    let delta = a.t_energy.clone() - b.t_energy.clone();
    let out = json!({
        "manifest": manifest(serde_json::to_value(args)?, &[(args.input.as_path(), &bytes)]),
        "a": a.json,
        "b": b.json,
        "differences": {
            "same_canonical_form": a.dendrogram.canonicalize() == b.dendrogram.canonicalize(),
            "t_energy_delta": delta.to_f64(),
            "t_energy_delta_exact": delta.to_string(),
            "descriptor_delta": [
                a.descriptor.leaf_count as f64 - b.descriptor.leaf_count as f64,
                a.descriptor.max_depth as f64 - b.descriptor.max_depth as f64,
                a.descriptor.mean_distance - b.descriptor.mean_distance,
                a.descriptor.depth_entropy - b.descriptor.depth_entropy,
            ],
        },
    });
    write_json(&args.output, &out)
}

fn run_recluster(args: &ReclusterArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.input)?;
    let events = load_events(
        bytes.as_slice(),
        args.has_header,
        duplicate_policy(args.jitter_duplicates),
    )?;
    let steps = recluster_transitions(&events, linkage_spec(args.metric, args.linkage))?;
    let disagreements = steps
        .iter()
        .filter(|s| !s.agrees_with_insertion_model)
        .count();
    let out = json!({
        "manifest": manifest(serde_json::to_value(args)?, &[(args.input.as_path(), &bytes)]),
        "steps": steps,
        "disagreements": disagreements,
    });
    write_json(&args.output, &out)
}
