//! Agglomerative hierarchical clustering of event records into a labeled
//! binary merge tree.
//!
//! The merge order is fully deterministic: at each step the pair of
//! clusters at minimal linkage distance merges, and exact ties go to the
//! pair whose sorted member-index union is lexicographically smallest.
//! Branch digits then follow the 2-adic labeling rule (the subtree holding
//! the smallest event index takes branch 0), so the same data always yields
//! the same codes.

use crate::dendrogram::Dendrogram;
use serde::{Deserialize, Serialize};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("parse error at row {row}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<usize>,
        message: String,
    },
    #[error("rows {first_row} and {duplicate_row} carry identical feature vectors")]
    DuplicateEvent {
        first_row: usize,
        duplicate_row: usize,
    },
    #[error("clustering needs at least two events, found {found}")]
    TooFewEvents { found: usize },
}

/// One observed event: an ordinal index plus a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub id: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

/// Deterministic rule applied when two candidate merges are at exactly the
/// same linkage distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    SmallestMemberIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkageSpec {
    pub metric: Metric,
    pub linkage: Linkage,
    #[serde(default)]
    pub tie_break: TieBreak,
}

/// What to do with rows whose feature vectors coincide exactly. Identical
/// events are indistinguishable and therefore not two events; by default
/// they are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Reject,
    /// Add `2^-30 * row_index` to the first feature of the later row.
    Jitter,
}

pub fn point_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::Chebyshev => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    }
}

/// Reads numeric CSV rows into event records, in file order.
pub fn load_events(
    source: impl Read,
    has_headers: bool,
    duplicates: DuplicatePolicy,
) -> Result<Vec<EventRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header_offset = usize::from(has_headers);
    let mut records: Vec<EventRecord> = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let file_row = idx + 1 + header_offset;
        let row = row.map_err(|e| IngestError::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(file_row),
            column: None,
            message: match e.kind() {
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => {
                    format!("expected {expected_len} columns, found {len}")
                }
                _ => e.to_string(),
            },
        })?;
        let mut features = Vec::with_capacity(row.len());
        for (col, cell) in row.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| IngestError::Parse {
                row: file_row,
                column: Some(col + 1),
                message: format!("`{cell}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(IngestError::Parse {
                    row: file_row,
                    column: Some(col + 1),
                    message: format!("`{cell}` is not finite"),
                });
            }
            features.push(value);
        }
        records.push(EventRecord { id: idx, features });
    }

    if records.is_empty() {
        return Err(IngestError::Parse {
            row: 0,
            column: None,
            message: "file contains no event rows".to_string(),
        });
    }

    // Identical rows are one event, not two; resolve per policy.
    for i in 0..records.len() {
        let mut attempts = 0;
        while let Some(j) = (0..i).find(|&j| records[j].features == records[i].features) {
            match duplicates {
                DuplicatePolicy::Reject => {
                    return Err(IngestError::DuplicateEvent {
                        first_row: j + 1 + header_offset,
                        duplicate_row: i + 1 + header_offset,
                    })
                }
                DuplicatePolicy::Jitter => {
                    records[i].features[0] += (i as f64) * 2f64.powi(-30);
                    attempts += 1;
                    if attempts > 64 {
                        return Err(IngestError::DuplicateEvent {
                            first_row: j + 1 + header_offset,
                            duplicate_row: i + 1 + header_offset,
                        });
                    }
                }
            }
        }
    }
    Ok(records)
}

#[derive(Clone)]
enum MergeNode {
    Leaf(usize),
    Join(Box<MergeNode>, Box<MergeNode>),
}

impl MergeNode {
    /// Assigns root-first digit paths with the 2-adic rule: the child
    /// holding the smallest event index takes digit 0.
    fn assign_paths(&self, path: &mut Vec<u8>, out: &mut Vec<(usize, Vec<u8>)>) -> usize {
        match self {
            MergeNode::Leaf(id) => {
                out.push((*id, path.clone()));
                *id
            }
            MergeNode::Join(a, b) => {
                let (a_min, b_min) = (a.min_leaf(), b.min_leaf());
                let (zero, one) = if a_min <= b_min { (a, b) } else { (b, a) };
                path.push(0);
                let m0 = zero.assign_paths(path, out);
                path.pop();
                path.push(1);
                let m1 = one.assign_paths(path, out);
                path.pop();
                m0.min(m1)
            }
        }
    }

    fn min_leaf(&self) -> usize {
        match self {
            MergeNode::Leaf(id) => *id,
            MergeNode::Join(a, b) => a.min_leaf().min(b.min_leaf()),
        }
    }
}

struct Cluster {
    members: Vec<usize>, // sorted event ids
    node: MergeNode,
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Builds the agglomerative merge tree for the events under the given
/// linkage specification and returns it as a 2-adically labeled dendrogram
/// (leaf labels are event ids).
pub fn agglomerate(events: &[EventRecord], spec: LinkageSpec) -> Result<Dendrogram, IngestError> {
    let n = events.len();
    if n < 2 {
        return Err(IngestError::TooFewEvents { found: n });
    }

    let point =
        |i: usize, j: usize| point_distance(spec.metric, &events[i].features, &events[j].features);

    let mut clusters: Vec<Option<Cluster>> = events
        .iter()
        .map(|e| {
            Some(Cluster {
                members: vec![e.id],
                node: MergeNode::Leaf(e.id),
            })
        })
        .collect();
    // dist[i][j] for i < j, by cluster slot
    let mut dist = vec![vec![0.0f64; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate().skip(i + 1) {
            *cell = point(i, j);
        }
    }
    let mut sizes = vec![1usize; n];

    for _ in 0..(n - 1) {
        let mut best: Option<(usize, usize, f64, Vec<usize>)> = None;
        for i in 0..n {
            let Some(ci) = clusters[i].as_ref() else {
                continue;
            };
            for j in (i + 1)..n {
                let Some(cj) = clusters[j].as_ref() else {
                    continue;
                };
                let d = dist[i][j];
                let better = match &best {
                    None => true,
                    Some((_, _, bd, bu)) => {
                        d < *bd
                            || (d == *bd && {
                                let TieBreak::SmallestMemberIndex = spec.tie_break;
                                union_sorted(&ci.members, &cj.members) < *bu
                            })
                    }
                };
                if better {
                    best = Some((i, j, d, union_sorted(&ci.members, &cj.members)));
                }
            }
        }
        let (i, j, _, members) = best.expect("at least two active clusters");
        let cj = clusters[j].take().expect("selected cluster is active");
        let ci = clusters[i].take().expect("selected cluster is active");
        // Lance-Williams update against every other active cluster.
        for k in 0..n {
            if clusters[k].is_none() {
                continue;
            }
            let (dik, djk) = (dist[i.min(k)][i.max(k)], dist[j.min(k)][j.max(k)]);
            let merged = match spec.linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => {
                    let (si, sj) = (sizes[i] as f64, sizes[j] as f64);
                    (si * dik + sj * djk) / (si + sj)
                }
            };
            dist[i.min(k)][i.max(k)] = merged;
        }
        sizes[i] += sizes[j];
        clusters[i] = Some(Cluster {
            members,
            node: MergeNode::Join(Box::new(ci.node), Box::new(cj.node)),
        });
    }

    let root = clusters
        .into_iter()
        .flatten()
        .next()
        .expect("one cluster remains")
        .node;
    let mut paths = Vec::with_capacity(n);
    root.assign_paths(&mut Vec::new(), &mut paths);
    paths.sort_by_key(|(id, _)| *id);
    let strings: Vec<String> = paths
        .iter()
        .map(|(_, p)| p.iter().map(|d| char::from(b'0' + d)).collect())
        .collect();
    Ok(Dendrogram::from_leaf_strings(&strings).expect("merge tree is a full binary tree"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn events_1d(values: &[f64]) -> Vec<EventRecord> {
        values
            .iter()
            .enumerate()
            .map(|(id, &v)| EventRecord {
                id,
                features: vec![v],
            })
            .collect()
    }

    fn spec(linkage: Linkage) -> LinkageSpec {
        LinkageSpec {
            metric: Metric::Euclidean,
            linkage,
            tie_break: TieBreak::SmallestMemberIndex,
        }
    }

    #[test]
    fn load_minimal_two_rows() {
        let recs = load_events("1.0\n2.0".as_bytes(), false, DuplicatePolicy::Reject).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].features, vec![1.0]);
        assert_eq!(recs[1].id, 1);
    }

    #[test]
    fn load_rejects_empty_file() {
        let err = load_events("".as_bytes(), false, DuplicatePolicy::Reject).unwrap_err();
        assert!(matches!(err, IngestError::Parse { .. }));
    }

    #[test]
    fn load_reports_ragged_row() {
        let err = load_events("1,2\n3\n".as_bytes(), false, DuplicatePolicy::Reject).unwrap_err();
        match err {
            IngestError::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_reports_bad_cell_with_column() {
        let err =
            load_events("1,2\n3,oops\n".as_bytes(), false, DuplicatePolicy::Reject).unwrap_err();
        assert_eq!(
            err,
            IngestError::Parse {
                row: 2,
                column: Some(2),
                message: "`oops` is not a number".to_string()
            }
        );
    }

    #[test]
    fn load_rejects_non_finite() {
        assert!(load_events("1\ninf\n".as_bytes(), false, DuplicatePolicy::Reject).is_err());
    }

    #[test]
    fn load_header_flag_skips_first_line() {
        let recs =
            load_events("x,y\n1,2\n3,4\n".as_bytes(), true, DuplicatePolicy::Reject).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].features, vec![1.0, 2.0]);
    }

    #[test]
    fn duplicates_rejected_or_jittered() {
        let input = "1,2\n1,2\n";
        let err = load_events(input.as_bytes(), false, DuplicatePolicy::Reject).unwrap_err();
        assert_eq!(
            err,
            IngestError::DuplicateEvent {
                first_row: 1,
                duplicate_row: 2
            }
        );
        let recs = load_events(input.as_bytes(), false, DuplicatePolicy::Jitter).unwrap();
        assert_ne!(recs[0].features, recs[1].features);
        assert_eq!(recs[1].features[0], 1.0 + 2f64.powi(-30));
    }

    #[test]
    fn agglomerate_two_events() {
        let d = agglomerate(&events_1d(&[0.0, 5.0]), spec(Linkage::Single)).unwrap();
        assert_eq!(d.to_text(), "(0,1)");
    }

    #[test]
    fn agglomerate_rejects_single_event() {
        assert_eq!(
            agglomerate(&events_1d(&[1.0]), spec(Linkage::Single)).unwrap_err(),
            IngestError::TooFewEvents { found: 1 }
        );
    }

    #[test]
    fn close_pair_merges_first() {
        let d = agglomerate(&events_1d(&[0.0, 1.0, 10.0]), spec(Linkage::Single)).unwrap();
        // shape ((0,1),10): events 0 and 1 share the deeper prefix
        assert_eq!(d.leaf_strings(), vec!["00", "01", "1"]);
    }

    #[test]
    fn two_close_pairs_give_balanced_shape() {
        let d = agglomerate(&events_1d(&[0.0, 1.0, 10.0, 11.0]), spec(Linkage::Single)).unwrap();
        assert_eq!(d.leaf_strings(), vec!["00", "01", "10", "11"]);
    }

    #[test]
    fn labeling_rule_and_idempotence() {
        let d = agglomerate(&events_1d(&[7.0, 6.5, 0.0]), spec(Linkage::Single)).unwrap();
        // events 0 and 1 merge first; the pair contains event 0, so it takes branch 0
        assert_eq!(d.leaf_strings(), vec!["00", "01", "1"]);
        assert_eq!(d.relabel_2adic(), d);
    }

    /// Brute-force single linkage: repeatedly merge the globally closest
    /// pair, recomputing cross-cluster minima from raw points each step.
    fn oracle_single(events: &[EventRecord]) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = (0..events.len()).map(|i| vec![i]).collect();
        let mut merges = Vec::new();
        while groups.len() > 1 {
            let mut best: Option<(usize, usize, f64, Vec<usize>)> = None;
            for i in 0..groups.len() {
                for j in (i + 1)..groups.len() {
                    let d = groups[i]
                        .iter()
                        .flat_map(|&a| groups[j].iter().map(move |&b| (a, b)))
                        .map(|(a, b)| {
                            point_distance(
                                Metric::Euclidean,
                                &events[a].features,
                                &events[b].features,
                            )
                        })
                        .fold(f64::INFINITY, f64::min);
                    let mut u = [groups[i].clone(), groups[j].clone()].concat();
                    u.sort_unstable();
                    let better = match &best {
                        None => true,
                        Some((_, _, bd, bu)) => d < *bd || (d == *bd && u < *bu),
                    };
                    if better {
                        best = Some((i, j, d, u));
                    }
                }
            }
            let (i, j, _, u) = best.unwrap();
            merges.push(u.clone());
            groups[i] = u;
            groups.remove(j);
        }
        merges
    }

    /// Reads the merge sequence back off a dendrogram: the member sets of
    /// its internal nodes, ordered by set size then content.
    fn merge_sets(d: &Dendrogram) -> Vec<Vec<usize>> {
        let leaves = d.leaves();
        let mut sets: Vec<Vec<usize>> = d
            .node_paths()
            .into_iter()
            .map(|p| {
                let mut s: Vec<usize> = leaves
                    .iter()
                    .filter(|(_, code)| code.digits().starts_with(&p))
                    .map(|(l, _)| *l)
                    .collect();
                s.sort_unstable();
                s
            })
            .filter(|s| s.len() > 1)
            .collect();
        sets.sort();
        sets
    }

    proptest! {
        #[test]
        fn single_linkage_matches_bruteforce_oracle(
            values in proptest::collection::vec(-50i32..50, 2..=6)
        ) {
            let events = events_1d(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
            // identical rows are not two events
            prop_assume!((0..events.len())
                .all(|i| (0..i).all(|j| events[i].features != events[j].features)));
            let d = agglomerate(&events, spec(Linkage::Single)).unwrap();
            let mut got = merge_sets(&d);
            got.sort();
            let mut want = oracle_single(&events);
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn shape_invariant_under_row_permutation(
            raw in proptest::collection::hash_set(0u32..1_000_000, 3..=7),
            seed in any::<u64>(),
            linkage in prop_oneof![Just(Linkage::Single), Just(Linkage::Complete), Just(Linkage::Average)],
        ) {
            let values: Vec<f64> = raw.iter().map(|&v| (v as f64) * 0.001 + (v as f64).sin() * 1e-4).collect();
            let events = events_1d(&values);
            // require all pairwise point distances distinct
            let mut ds: Vec<f64> = (0..events.len())
                .flat_map(|i| ((i + 1)..events.len()).map(move |j| (i, j)))
                .map(|(i, j)| (values[i] - values[j]).abs())
                .collect();
            ds.sort_by(f64::total_cmp);
            prop_assume!(ds.windows(2).all(|w| w[0] != w[1]));

            let base = agglomerate(&events, spec(linkage)).unwrap().canonicalize();

            // deterministic permutation from the seed
            let mut order: Vec<usize> = (0..values.len()).collect();
            let mut state = seed;
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (state >> 33) as usize % (i + 1));
            }
            let permuted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let again = agglomerate(&events_1d(&permuted), spec(linkage)).unwrap().canonicalize();
            prop_assert_eq!(base, again);
        }
    }
}
