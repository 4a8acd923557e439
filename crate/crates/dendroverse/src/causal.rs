//! Causal structure on the space of dendrogram shapes.
//!
//! A dendrogram D1 precedes D2 when an observer holding D1 can reach D2 by
//! collecting further events, i.e. by single-leaf insertions. Insertion and
//! leaf restriction are exact inverses, so reachability is decided here by
//! checking whether D1's shape is a restriction of D2's — a polynomial tree
//! embedding instead of a search over insertion sequences. Pairs of equal
//! size with different shapes admit no transition at all and are spacelike.
//!
//! The future light cone of a shape is enumerated level by level: the
//! shapes reachable after exactly `s` insertions, deduplicated by canonical
//! form. Each shape also gets a four-coordinate descriptor (a reporting
//! aid, not an identity: canonical forms are the identity).

use crate::cluster::{agglomerate, EventRecord, IngestError, LinkageSpec};
use crate::dendrogram::{CanonicalForm, Dendrogram, LeafId, Node};
use crate::padic::{monna_map, padic_distance};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Identical,
    Timelike,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The first dendrogram precedes the second.
    Forward,
    /// The second dendrogram precedes the first.
    Backward,
    #[serde(rename = "n/a")]
    NotApplicable,
}

/// Outcome of comparing two dendrograms. A timelike verdict carries a
/// witness: leaves of the larger dendrogram whose restriction reproduces
/// the smaller one's shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CausalVerdict {
    pub relation: Relation,
    pub direction: Direction,
    pub witness: Option<Vec<LeafId>>,
}

struct Shape<'a> {
    nodes: Vec<&'a Node>,
    child: Vec<Option<(usize, usize)>>,
    first_leaf: Vec<LeafId>,
}

impl<'a> Shape<'a> {
    fn build(root: &'a Node) -> Shape<'a> {
        let mut shape = Shape {
            nodes: Vec::new(),
            child: Vec::new(),
            first_leaf: Vec::new(),
        };
        shape.walk(root);
        shape
    }

    fn walk(&mut self, node: &'a Node) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.child.push(None);
        self.first_leaf.push(0);
        match node {
            Node::Leaf(l) => self.first_leaf[id] = *l,
            Node::Branch(a, b) => {
                let ca = self.walk(a);
                let cb = self.walk(b);
                self.child[id] = Some((ca, cb));
                self.first_leaf[id] = self.first_leaf[ca];
            }
        }
        id
    }

    fn is_leaf(&self, id: usize) -> bool {
        self.child[id].is_none()
    }
}

/// Memoized check that shape `s` (rooted at `si`) is a leaf restriction of
/// shape `t` (rooted at `ti`).
fn embeds(s: &Shape, si: usize, t: &Shape, ti: usize, memo: &mut [Option<bool>]) -> bool {
    let key = si * t.nodes.len() + ti;
    if let Some(v) = memo[key] {
        return v;
    }
    let result = if s.is_leaf(si) {
        true
    } else {
        match t.child[ti] {
            None => false,
            Some((t0, t1)) => {
                let (s0, s1) = s.child[si].expect("si is a branch");
                embeds(s, si, t, t0, memo)
                    || embeds(s, si, t, t1, memo)
                    || (embeds(s, s0, t, t0, memo) && embeds(s, s1, t, t1, memo))
                    || (embeds(s, s0, t, t1, memo) && embeds(s, s1, t, t0, memo))
            }
        }
    };
    memo[key] = Some(result);
    result
}

/// Reconstructs one witness leaf set; case order fixed for determinism.
fn witness_leaves(
    s: &Shape,
    si: usize,
    t: &Shape,
    ti: usize,
    memo: &mut [Option<bool>],
    out: &mut Vec<LeafId>,
) {
    debug_assert!(embeds(s, si, t, ti, memo));
    if s.is_leaf(si) {
        out.push(t.first_leaf[ti]);
        return;
    }
    let (t0, t1) = t.child[ti].expect("embedding of a branch needs a branch");
    let (s0, s1) = s.child[si].expect("si is a branch");
    if embeds(s, si, t, t0, memo) {
        witness_leaves(s, si, t, t0, memo, out);
    } else if embeds(s, si, t, t1, memo) {
        witness_leaves(s, si, t, t1, memo, out);
    } else if embeds(s, s0, t, t0, memo) && embeds(s, s1, t, t1, memo) {
        witness_leaves(s, s0, t, t0, memo, out);
        witness_leaves(s, s1, t, t1, memo, out);
    } else {
        witness_leaves(s, s0, t, t1, memo, out);
        witness_leaves(s, s1, t, t0, memo, out);
    }
}

/// Classifies an ordered pair of dendrograms.
///
/// Equal canonical forms are `identical`; a smaller dendrogram whose shape
/// survives as a restriction of the larger one is `timelike` (forward when
/// `d1` is the smaller side); everything else is `spacelike`.
pub fn is_timelike(d1: &Dendrogram, d2: &Dendrogram) -> CausalVerdict {
    let (e1, e2) = (d1.leaf_count(), d2.leaf_count());
    if e1 == e2 {
        let relation = if d1.canonicalize() == d2.canonicalize() {
            Relation::Identical
        } else {
            Relation::Spacelike
        };
        return CausalVerdict {
            relation,
            direction: Direction::NotApplicable,
            witness: None,
        };
    }
    let (small, large, direction) = if e1 < e2 {
        (d1, d2, Direction::Forward)
    } else {
        (d2, d1, Direction::Backward)
    };
    let s = Shape::build(small.root());
    let t = Shape::build(large.root());
    let mut memo = vec![None; s.nodes.len() * t.nodes.len()];
    if embeds(&s, 0, &t, 0, &mut memo) {
        let mut witness = Vec::with_capacity(small.leaf_count());
        witness_leaves(&s, 0, &t, 0, &mut memo, &mut witness);
        witness.sort_unstable();
        CausalVerdict {
            relation: Relation::Timelike,
            direction,
            witness: Some(witness),
        }
    } else {
        CausalVerdict {
            relation: Relation::Spacelike,
            direction: Direction::NotApplicable,
            witness: None,
        }
    }
}

/// A future light cone truncated at a step horizon: `levels[s]` holds the
/// canonical shapes reachable by exactly `s` single-leaf insertions, and
/// `edges` the single-insertion transitions discovered between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LightCone {
    pub levels: Vec<BTreeSet<CanonicalForm>>,
    pub edges: BTreeSet<(CanonicalForm, CanonicalForm)>,
    pub truncated: bool,
}

impl LightCone {
    pub fn frontier(&self, step: usize) -> &BTreeSet<CanonicalForm> {
        &self.levels[step]
    }

    /// The cone as a set: every shape reachable within the horizon.
    pub fn all_shapes(&self) -> BTreeSet<CanonicalForm> {
        self.levels.iter().flatten().cloned().collect()
    }

    pub fn shape_count(&self) -> usize {
        self.levels.iter().map(BTreeSet::len).sum()
    }
}

/// Enumerates the future cone of `d` by breadth-first insertion, up to
/// `steps` insertions, keeping at most `cap` shapes in total.
pub fn future_cone(d: &Dendrogram, steps: usize, cap: usize) -> LightCone {
    let mut levels: Vec<BTreeSet<CanonicalForm>> = Vec::with_capacity(steps + 1);
    let mut edges: BTreeSet<(CanonicalForm, CanonicalForm)> = BTreeSet::new();
    let mut frontier: BTreeMap<CanonicalForm, Dendrogram> =
        [(d.canonicalize(), d.clone())].into_iter().collect();
    let mut total = 0usize;
    let mut truncated = false;

    'expand: for _ in 0..=steps {
        let mut level = BTreeSet::new();
        for form in frontier.keys() {
            if total + level.len() >= cap {
                truncated = true;
                levels.push(level);
                break 'expand;
            }
            level.insert(form.clone());
        }
        total += level.len();
        levels.push(level);
        if levels.len() > steps {
            break;
        }
        let mut next: BTreeMap<CanonicalForm, Dendrogram> = BTreeMap::new();
        for (form, rep) in &frontier {
            let label = rep.leaf_labels().into_iter().max().unwrap_or(0) + 1;
            for path in rep.node_paths() {
                let grown = rep
                    .insert_leaf(&path, 1, label)
                    .expect("paths come from the tree itself");
                let grown_form = grown.canonicalize();
                edges.insert((form.clone(), grown_form.clone()));
                next.entry(grown_form).or_insert(grown);
            }
        }
        frontier = next;
    }
    LightCone {
        levels,
        edges,
        truncated,
    }
}

/// Four reporting coordinates of a dendrogram shape. Dendrograms with equal
/// canonical form get bit-identical descriptors; distinct shapes may
/// collide, so this is metadata, not an identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaDescriptor {
    pub leaf_count: u32,
    pub max_depth: u32,
    /// Mean 2-adic distance over unordered leaf pairs, in (0, 1].
    pub mean_distance: f64,
    /// Shannon entropy (bits) of the leaf-depth distribution.
    pub depth_entropy: f64,
}

impl ThetaDescriptor {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.leaf_count as f64,
            self.max_depth as f64,
            self.mean_distance,
            self.depth_entropy,
        ]
    }
}

pub fn theta_descriptor(d: &Dendrogram) -> ThetaDescriptor {
    let leaves = d.leaves();
    let n = leaves.len();

    let mut sum = BigRational::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            sum += padic_distance(&leaves[i].1, &leaves[j].1).to_rational();
        }
    }
    let pairs = BigRational::from_integer((n * (n - 1) / 2).into());
    let mean_distance = (sum / pairs).to_f64().unwrap_or(f64::NAN);

    let mut depth_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, code) in &leaves {
        *depth_counts.entry(code.depth()).or_insert(0) += 1;
    }
    let depth_entropy = depth_counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);

    ThetaDescriptor {
        leaf_count: n as u32,
        max_depth: depth_counts.keys().max().copied().unwrap_or(0),
        mean_distance,
        depth_entropy,
    }
}

/// Pairwise verdicts plus summary fractions over unordered pairs.
#[derive(Debug, Clone, Serialize)]
pub struct CausalMatrix {
    pub verdicts: Vec<Vec<CausalVerdict>>,
    pub descriptors: Vec<ThetaDescriptor>,
    pub identical_pairs: usize,
    pub timelike_pairs: usize,
    pub spacelike_pairs: usize,
}

impl CausalMatrix {
    pub fn fraction(&self, relation: Relation) -> f64 {
        let total = self.identical_pairs + self.timelike_pairs + self.spacelike_pairs;
        if total == 0 {
            return 0.0;
        }
        let count = match relation {
            Relation::Identical => self.identical_pairs,
            Relation::Timelike => self.timelike_pairs,
            Relation::Spacelike => self.spacelike_pairs,
        };
        count as f64 / total as f64
    }
}

pub fn classify_ensemble(dendrograms: &[Dendrogram]) -> CausalMatrix {
    let n = dendrograms.len();
    let verdicts: Vec<Vec<CausalVerdict>> = dendrograms
        .iter()
        .map(|a| dendrograms.iter().map(|b| is_timelike(a, b)).collect())
        .collect();
    let mut counts = [0usize; 3];
    for i in 0..n {
        for j in (i + 1)..n {
            counts[match verdicts[i][j].relation {
                Relation::Identical => 0,
                Relation::Timelike => 1,
                Relation::Spacelike => 2,
            }] += 1;
        }
    }
    CausalMatrix {
        verdicts,
        descriptors: dendrograms.iter().map(theta_descriptor).collect(),
        identical_pairs: counts[0],
        timelike_pairs: counts[1],
        spacelike_pairs: counts[2],
    }
}

/// All distinct shapes with the given number of leaves, as representative
/// dendrograms sorted by canonical form. (Their counts follow the
/// Wedderburn–Etherington sequence: 1, 1, 2, 3, 6, 11, 23, ...)
pub fn all_shapes(leaves: usize) -> Vec<Dendrogram> {
    fn path_sets(n: usize) -> Vec<Vec<Vec<u8>>> {
        if n == 1 {
            return vec![vec![vec![]]];
        }
        let mut out = Vec::new();
        for left in 1..n {
            for ls in path_sets(left) {
                for rs in path_sets(n - left) {
                    let mut paths: Vec<Vec<u8>> = Vec::with_capacity(n);
                    for p in &ls {
                        paths.push([vec![0u8], p.clone()].concat());
                    }
                    for p in &rs {
                        paths.push([vec![1u8], p.clone()].concat());
                    }
                    out.push(paths);
                }
            }
        }
        out
    }

    assert!(leaves >= 2, "a dendrogram has at least two leaves");
    let mut by_form: BTreeMap<CanonicalForm, Dendrogram> = BTreeMap::new();
    for paths in path_sets(leaves) {
        let strings: Vec<String> = paths
            .iter()
            .map(|p| p.iter().map(|d| char::from(b'0' + d)).collect())
            .collect();
        let d = Dendrogram::from_leaf_strings(&strings).expect("constructed full binary tree");
        by_form.entry(d.canonicalize()).or_insert(d);
    }
    by_form.into_values().collect()
}

/// Re-clustering transition check: clusters every prefix of the event
/// list and classifies consecutive prefix dendrograms. Under the
/// leaf-insertion update model every such step would be forward timelike;
/// re-clustering is free to disagree, and the report says where.
#[derive(Debug, Clone, Serialize)]
pub struct ReclusterStep {
    pub from_events: usize,
    pub to_events: usize,
    pub relation: Relation,
    pub agrees_with_insertion_model: bool,
}

pub fn recluster_transitions(
    events: &[EventRecord],
    spec: LinkageSpec,
) -> Result<Vec<ReclusterStep>, IngestError> {
    if events.len() < 3 {
        return Ok(Vec::new());
    }
    let mut steps = Vec::new();
    let mut prev = agglomerate(&events[..2], spec)?;
    for m in 3..=events.len() {
        let next = agglomerate(&events[..m], spec)?;
        let verdict = is_timelike(&prev, &next);
        steps.push(ReclusterStep {
            from_events: m - 1,
            to_events: m,
            relation: verdict.relation,
            agrees_with_insertion_model: verdict.relation == Relation::Timelike
                && verdict.direction == Direction::Forward,
        });
        prev = next;
    }
    Ok(steps)
}

/// Monna values of the dendrogram's leaves in label order; the event set
/// feeding the emergence pipeline.
pub fn leaf_monna_values(d: &Dendrogram) -> Vec<crate::padic::Dyadic> {
    let mut leaves = d.leaves();
    leaves.sort_by_key(|(l, _)| *l);
    leaves.iter().map(|(_, c)| monna_map(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cherry() -> Dendrogram {
        Dendrogram::cherry(0, 1)
    }

    fn three_leaf() -> Dendrogram {
        cherry().insert_leaf(&[], 1, 2).unwrap()
    }

    fn caterpillar4() -> Dendrogram {
        three_leaf().insert_leaf(&[], 1, 3).unwrap()
    }

    fn balanced4() -> Dendrogram {
        cherry()
            .insert_leaf(&[0], 1, 2)
            .unwrap()
            .insert_leaf(&[1], 1, 3)
            .unwrap()
    }

    #[test]
    fn cherry_precedes_everything() {
        for target in [three_leaf(), caterpillar4(), balanced4()] {
            let v = is_timelike(&cherry(), &target);
            assert_eq!(v.relation, Relation::Timelike);
            assert_eq!(v.direction, Direction::Forward);
            let witness: BTreeSet<LeafId> = v.witness.unwrap().into_iter().collect();
            assert_eq!(witness.len(), 2);
            assert_eq!(
                target.restrict(&witness).unwrap().canonicalize(),
                cherry().canonicalize()
            );
        }
    }

    #[test]
    fn equal_size_distinct_shapes_are_spacelike() {
        let v = is_timelike(&caterpillar4(), &balanced4());
        assert_eq!(v.relation, Relation::Spacelike);
        assert_eq!(v.direction, Direction::NotApplicable);
        assert!(v.witness.is_none());
    }

    #[test]
    fn equal_shapes_are_identical() {
        let v = is_timelike(&balanced4(), &balanced4());
        assert_eq!(v.relation, Relation::Identical);
    }

    #[test]
    fn three_leaf_reaches_balanced_with_witness() {
        let v = is_timelike(&three_leaf(), &balanced4());
        assert_eq!(v.relation, Relation::Timelike);
        let witness: BTreeSet<LeafId> = v.witness.unwrap().into_iter().collect();
        assert_eq!(
            balanced4().restrict(&witness).unwrap().canonicalize(),
            three_leaf().canonicalize()
        );
    }

    #[test]
    fn backward_direction_when_first_is_larger() {
        let v = is_timelike(&balanced4(), &three_leaf());
        assert_eq!(v.relation, Relation::Timelike);
        assert_eq!(v.direction, Direction::Backward);
    }

    #[test]
    fn cone_step_zero_is_the_shape_itself() {
        let cone = future_cone(&three_leaf(), 0, 1000);
        assert_eq!(cone.levels.len(), 1);
        assert_eq!(
            cone.frontier(0).iter().collect::<Vec<_>>(),
            vec![&three_leaf().canonicalize()]
        );
        assert!(!cone.truncated);
    }

    #[test]
    fn cone_of_cherry_one_step_is_single_shape() {
        let cone = future_cone(&cherry(), 1, 1000);
        assert_eq!(cone.frontier(1).len(), 1);
    }

    #[test]
    fn cone_of_three_leaf_one_step_is_two_shapes() {
        let cone = future_cone(&three_leaf(), 1, 1000);
        let expect: BTreeSet<CanonicalForm> =
            [caterpillar4().canonicalize(), balanced4().canonicalize()]
                .into_iter()
                .collect();
        assert_eq!(cone.frontier(1), &expect);
    }

    #[test]
    fn cone_grows_monotonically() {
        let d = three_leaf();
        for s in 0..4usize {
            let smaller = future_cone(&d, s, 100_000).all_shapes();
            let larger = future_cone(&d, s + 1, 100_000).all_shapes();
            assert!(smaller.is_subset(&larger));
        }
    }

    #[test]
    fn cone_cap_sets_truncation_flag() {
        let cone = future_cone(&cherry(), 4, 3);
        assert!(cone.truncated);
        assert!(cone.shape_count() <= 3);
        let full = future_cone(&cherry(), 4, 1000);
        assert!(!full.truncated);
    }

    #[test]
    fn cone_levels_count_distinct_shapes() {
        // Wedderburn-Etherington: shapes with s+2 leaves
        let cone = future_cone(&cherry(), 5, 100_000);
        let counts: Vec<usize> = cone.levels.iter().map(BTreeSet::len).collect();
        assert_eq!(counts, vec![1, 1, 2, 3, 6, 11]);
        for (s, level) in cone.levels.iter().enumerate() {
            let enumerated: BTreeSet<CanonicalForm> = all_shapes(s + 2)
                .iter()
                .map(Dendrogram::canonicalize)
                .collect();
            assert_eq!(level, &enumerated);
        }
    }

    #[test]
    fn descriptor_of_cherry() {
        let t = theta_descriptor(&cherry());
        assert_eq!(t.leaf_count, 2);
        assert_eq!(t.max_depth, 1);
        assert_eq!(t.mean_distance, 1.0);
        assert_eq!(t.depth_entropy, 0.0);
    }

    #[test]
    fn descriptor_of_balanced_four() {
        let t = theta_descriptor(&balanced4());
        assert_eq!(t.leaf_count, 4);
        assert_eq!(t.max_depth, 2);
        assert_eq!(t.depth_entropy, 0.0);
    }

    #[test]
    fn descriptor_of_caterpillar_four() {
        let t = theta_descriptor(&caterpillar4());
        assert_eq!(t.max_depth, 3);
        // depths {1, 2, 3, 3}: H = 1/4·2 + 1/4·2 + 1/2·1 = 1.5 bits
        assert!((t.depth_entropy - 1.5).abs() < 1e-15);
        assert!(t.depth_entropy > 0.0);
    }

    #[test]
    fn descriptors_agree_on_shape_equal_trees() {
        let t = caterpillar4();
        let mut s = t.clone();
        for path in t.node_paths() {
            if s.swapped(&path).is_ok() {
                s = s.swapped(&path).unwrap();
            }
        }
        assert_ne!(s, t);
        assert_eq!(theta_descriptor(&s), theta_descriptor(&t));
    }

    #[test]
    fn classify_matrix_examples() {
        let same = classify_ensemble(&[balanced4(), balanced4()]);
        assert_eq!(same.identical_pairs, 1);

        let pair = classify_ensemble(&[cherry(), three_leaf()]);
        assert_eq!(pair.timelike_pairs, 1);

        let mixed = classify_ensemble(&[caterpillar4(), balanced4(), three_leaf()]);
        assert_eq!(mixed.timelike_pairs, 2);
        assert_eq!(mixed.spacelike_pairs, 1);
        assert_eq!(mixed.verdicts[0][1].relation, Relation::Spacelike);
        assert_eq!(mixed.verdicts[2][0].relation, Relation::Timelike);
        assert!((mixed.fraction(Relation::Spacelike) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shape_enumeration_counts() {
        let we = [1usize, 1, 2, 3, 6, 11, 23];
        for (i, &count) in we.iter().enumerate() {
            assert_eq!(all_shapes(i + 2).len(), count, "n = {}", i + 2);
        }
    }

    #[test]
    fn transitivity_on_small_shapes() {
        let shapes: Vec<Dendrogram> = (2..=5).flat_map(all_shapes).collect();
        for a in &shapes {
            for b in &shapes {
                for c in &shapes {
                    let ab = is_timelike(a, b);
                    let bc = is_timelike(b, c);
                    if ab.relation == Relation::Timelike
                        && ab.direction == Direction::Forward
                        && bc.relation == Relation::Timelike
                        && bc.direction == Direction::Forward
                    {
                        let ac = is_timelike(a, c);
                        assert_eq!(ac.relation, Relation::Timelike);
                        assert_eq!(ac.direction, Direction::Forward);
                    }
                }
            }
        }
    }

    #[test]
    fn recluster_check_on_line_data() {
        let events: Vec<EventRecord> = [0.0, 1.0, 10.0, 11.0, 30.0]
            .iter()
            .enumerate()
            .map(|(id, &v)| EventRecord {
                id,
                features: vec![v],
            })
            .collect();
        let steps = recluster_transitions(&events, LinkageSpec::default()).unwrap();
        assert_eq!(steps.len(), 3);
        // growing a prefix of well-separated 1-D points re-clusters
        // consistently with leaf insertion
        assert!(steps.iter().all(|s| s.agrees_with_insertion_model));
    }
}
