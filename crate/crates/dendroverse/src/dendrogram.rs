//! Finite rooted binary event trees and their canonical (unordered) shapes.
//!
//! Every internal node has exactly two children, ordered by branch digit:
//! child 0 first, child 1 second. A leaf's [`EdgeCode`] is its root-to-leaf
//! digit path, so leaf codes are pairwise distinct by construction. Leaves
//! carry small integer labels tying them back to the events they represent.
//!
//! Shape identity deliberately forgets the 0/1 labels: clustering tools may
//! draw the same relational structure with children flipped, so two trees
//! are "the same dendrogram" when a sequence of child swaps maps one onto
//! the other. [`CanonicalForm`] is the stable string witness of that class.

use crate::padic::EdgeCode;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

pub type LeafId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("attach point `{0}` does not name a node of the dendrogram")]
    InvalidAttachPoint(String),
    #[error("a dendrogram needs at least two leaves")]
    TooFewLeaves,
    #[error("leaf {0} is not present in the dendrogram")]
    UnknownLeaf(LeafId),
    #[error("leaf label {0} used twice")]
    DuplicateLeafLabel(LeafId),
    #[error("invalid dendrogram text: {0}")]
    ParseError(String),
    #[error("leaf path strings do not describe a full binary tree: {0}")]
    InvalidLeafSet(String),
}

#[derive(Clone, PartialEq, Eq)]
pub(crate) enum Node {
    Leaf(LeafId),
    Branch(Box<Node>, Box<Node>),
}

impl Node {
    fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Branch(a, b) => a.leaf_count() + b.leaf_count(),
        }
    }

    fn collect_leaves(&self, path: &mut Vec<u8>, out: &mut Vec<(LeafId, EdgeCode)>) {
        match self {
            Node::Leaf(label) => {
                let code = EdgeCode::new(path.clone()).expect("leaf path is non-empty and binary");
                out.push((*label, code));
            }
            Node::Branch(a, b) => {
                path.push(0);
                a.collect_leaves(path, out);
                path.pop();
                path.push(1);
                b.collect_leaves(path, out);
                path.pop();
            }
        }
    }

    fn canonical_string(&self) -> String {
        match self {
            Node::Leaf(_) => "*".to_string(),
            Node::Branch(a, b) => {
                let (x, y) = (a.canonical_string(), b.canonical_string());
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                format!("({lo}{hi})")
            }
        }
    }

    fn at_path(&self, path: &[u8]) -> Option<&Node> {
        match path.split_first() {
            None => Some(self),
            Some((&d, rest)) => match self {
                Node::Leaf(_) => None,
                Node::Branch(a, b) => (if d == 0 { a } else { b }).at_path(rest),
            },
        }
    }
}

/// Canonical encoding of an unordered binary tree shape, obtained by
/// recursively sorting child encodings. Equal iff the trees differ only by
/// child-order swaps.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalForm({})", self.0)
    }
}

/// A finite rooted strictly-binary tree with labeled leaves.
#[derive(Clone, PartialEq, Eq)]
pub struct Dendrogram {
    root: Node,
}

impl Dendrogram {
    /// The unique two-leaf dendrogram, labels on branch 0 and branch 1.
    pub fn cherry(label0: LeafId, label1: LeafId) -> Dendrogram {
        Dendrogram {
            root: Node::Branch(Box::new(Node::Leaf(label0)), Box::new(Node::Leaf(label1))),
        }
    }

    pub(crate) fn root(&self) -> &Node {
        &self.root
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Leaves in digit order (branch 0 subtree first), with their codes.
    pub fn leaves(&self) -> Vec<(LeafId, EdgeCode)> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut Vec::new(), &mut out);
        out
    }

    pub fn leaf_labels(&self) -> Vec<LeafId> {
        self.leaves().into_iter().map(|(l, _)| l).collect()
    }

    pub fn leaf_code(&self, label: LeafId) -> Option<EdgeCode> {
        self.leaves()
            .into_iter()
            .find(|(l, _)| *l == label)
            .map(|(_, c)| c)
    }

    pub fn canonicalize(&self) -> CanonicalForm {
        CanonicalForm(self.root.canonical_string())
    }

    /// Paths of every node, in pre-order. Each path names the edge coming
    /// into that node; the empty path is the edge above the root, so
    /// inserting there grows the tree upward.
    pub fn node_paths(&self) -> Vec<Vec<u8>> {
        fn walk(node: &Node, path: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            out.push(path.clone());
            if let Node::Branch(a, b) = node {
                path.push(0);
                walk(a, path, out);
                path.pop();
                path.push(1);
                walk(b, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Splits the edge above the node at `attach` with a new internal node;
    /// the new leaf takes branch `new_digit` there, the old subtree the
    /// other branch. Existing leaves keep their relational order.
    pub fn insert_leaf(
        &self,
        attach: &[u8],
        new_digit: u8,
        new_label: LeafId,
    ) -> Result<Dendrogram, TreeError> {
        let path_str = || attach.iter().map(|d| d.to_string()).collect::<String>();
        if new_digit > 1 {
            return Err(TreeError::InvalidAttachPoint(format!(
                "branch digit must be 0 or 1, got {new_digit}"
            )));
        }
        if self.leaf_labels().contains(&new_label) {
            return Err(TreeError::DuplicateLeafLabel(new_label));
        }
        if self.root.at_path(attach).is_none() {
            return Err(TreeError::InvalidAttachPoint(path_str()));
        }

        fn rebuild(node: &Node, attach: &[u8], new_digit: u8, new_label: LeafId) -> Node {
            match attach.split_first() {
                None => {
                    let leaf = Box::new(Node::Leaf(new_label));
                    let old = Box::new(node.clone());
                    if new_digit == 0 {
                        Node::Branch(leaf, old)
                    } else {
                        Node::Branch(old, leaf)
                    }
                }
                Some((&d, rest)) => match node {
                    Node::Leaf(_) => unreachable!("path validated above"),
                    Node::Branch(a, b) => {
                        if d == 0 {
                            Node::Branch(
                                Box::new(rebuild(a, rest, new_digit, new_label)),
                                b.clone(),
                            )
                        } else {
                            Node::Branch(
                                a.clone(),
                                Box::new(rebuild(b, rest, new_digit, new_label)),
                            )
                        }
                    }
                },
            }
        }

        Ok(Dendrogram {
            root: rebuild(&self.root, attach, new_digit, new_label),
        })
    }

    /// Keeps only the given leaves, contracting the internal nodes left
    /// with a single child.
    pub fn restrict(&self, keep: &BTreeSet<LeafId>) -> Result<Dendrogram, TreeError> {
        if keep.len() < 2 {
            return Err(TreeError::TooFewLeaves);
        }
        let labels: BTreeSet<LeafId> = self.leaf_labels().into_iter().collect();
        if let Some(&missing) = keep.difference(&labels).next() {
            return Err(TreeError::UnknownLeaf(missing));
        }

        fn prune(node: &Node, keep: &BTreeSet<LeafId>) -> Option<Node> {
            match node {
                Node::Leaf(l) => keep.contains(l).then(|| node.clone()),
                Node::Branch(a, b) => match (prune(a, keep), prune(b, keep)) {
                    (Some(x), Some(y)) => Some(Node::Branch(Box::new(x), Box::new(y))),
                    (Some(x), None) | (None, Some(x)) => Some(x),
                    (None, None) => None,
                },
            }
        }

        Ok(Dendrogram {
            root: prune(&self.root, keep).expect("keep is non-empty"),
        })
    }

    /// Swaps the two children of the internal node at `path`.
    pub fn swapped(&self, path: &[u8]) -> Result<Dendrogram, TreeError> {
        let path_str = || path.iter().map(|d| d.to_string()).collect::<String>();
        match self.root.at_path(path) {
            Some(Node::Branch(..)) => {}
            _ => return Err(TreeError::InvalidAttachPoint(path_str())),
        }

        fn rebuild(node: &Node, path: &[u8]) -> Node {
            match path.split_first() {
                None => match node {
                    Node::Branch(a, b) => Node::Branch(b.clone(), a.clone()),
                    Node::Leaf(_) => unreachable!("path validated above"),
                },
                Some((&d, rest)) => match node {
                    Node::Leaf(_) => unreachable!("path validated above"),
                    Node::Branch(a, b) => {
                        if d == 0 {
                            Node::Branch(Box::new(rebuild(a, rest)), b.clone())
                        } else {
                            Node::Branch(a.clone(), Box::new(rebuild(b, rest)))
                        }
                    }
                },
            }
        }

        Ok(Dendrogram {
            root: rebuild(&self.root, path),
        })
    }

    /// Reorders children so that at every internal node the subtree holding
    /// the smallest leaf label takes branch 0. Idempotent; this is the
    /// deterministic 2-adic labeling rule for clustering output.
    pub fn relabel_2adic(&self) -> Dendrogram {
        fn order(node: &Node) -> (Node, LeafId) {
            match node {
                Node::Leaf(l) => (node.clone(), *l),
                Node::Branch(a, b) => {
                    let (na, ma) = order(a);
                    let (nb, mb) = order(b);
                    if ma <= mb {
                        (Node::Branch(Box::new(na), Box::new(nb)), ma)
                    } else {
                        (Node::Branch(Box::new(nb), Box::new(na)), mb)
                    }
                }
            }
        }
        Dendrogram {
            root: order(&self.root).0,
        }
    }

    /// Newline-free nested-parenthesis text, e.g. `((00,01),1)`: leaf
    /// tokens are root-first digit paths, children written in digit order.
    pub fn to_text(&self) -> String {
        fn write(node: &Node, path: &mut Vec<u8>, out: &mut String) {
            match node {
                Node::Leaf(_) => {
                    for d in path.iter() {
                        out.push(if *d == 0 { '0' } else { '1' });
                    }
                }
                Node::Branch(a, b) => {
                    out.push('(');
                    path.push(0);
                    write(a, path, out);
                    path.pop();
                    out.push(',');
                    path.push(1);
                    write(b, path, out);
                    path.pop();
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        write(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Parses the nested-parenthesis form. Leaf tokens must equal their
    /// positional digit paths; labels are assigned in order of appearance.
    pub fn from_text(text: &str) -> Result<Dendrogram, TreeError> {
        let bytes = text.trim().as_bytes();
        let err = |msg: &str| TreeError::ParseError(msg.to_string());

        struct P<'a> {
            bytes: &'a [u8],
            pos: usize,
            next_label: LeafId,
        }
        impl P<'_> {
            fn parse_node(&mut self, path: &mut Vec<u8>) -> Result<Node, TreeError> {
                let err = |msg: String| TreeError::ParseError(msg);
                match self.bytes.get(self.pos) {
                    Some(b'(') => {
                        self.pos += 1;
                        path.push(0);
                        let a = self.parse_node(path)?;
                        path.pop();
                        if self.bytes.get(self.pos) != Some(&b',') {
                            return Err(err(format!("expected `,` at byte {}", self.pos)));
                        }
                        self.pos += 1;
                        path.push(1);
                        let b = self.parse_node(path)?;
                        path.pop();
                        if self.bytes.get(self.pos) != Some(&b')') {
                            return Err(err(format!("expected `)` at byte {}", self.pos)));
                        }
                        self.pos += 1;
                        Ok(Node::Branch(Box::new(a), Box::new(b)))
                    }
                    Some(b'0') | Some(b'1') => {
                        let start = self.pos;
                        while matches!(self.bytes.get(self.pos), Some(b'0') | Some(b'1')) {
                            self.pos += 1;
                        }
                        let token: Vec<u8> = self.bytes[start..self.pos]
                            .iter()
                            .map(|b| b - b'0')
                            .collect();
                        if token != *path {
                            return Err(err(format!(
                                "leaf token at byte {start} does not match its position"
                            )));
                        }
                        let label = self.next_label;
                        self.next_label += 1;
                        Ok(Node::Leaf(label))
                    }
                    _ => Err(err(format!("unexpected input at byte {}", self.pos))),
                }
            }
        }

        let mut p = P {
            bytes,
            pos: 0,
            next_label: 0,
        };
        let root = p.parse_node(&mut Vec::new())?;
        if p.pos != bytes.len() {
            return Err(err("trailing input after dendrogram"));
        }
        match root {
            Node::Leaf(_) => Err(TreeError::TooFewLeaves),
            root => Ok(Dendrogram { root }),
        }
    }

    /// Leaf path strings in label order (index `i` holds leaf `i`), the
    /// JSON wire form.
    pub fn leaf_strings(&self) -> Vec<String> {
        let mut leaves = self.leaves();
        leaves.sort_by_key(|(l, _)| *l);
        leaves.into_iter().map(|(_, c)| c.to_string()).collect()
    }

    /// Rebuilds a dendrogram from leaf path strings; array index becomes
    /// the leaf label. The paths must be exactly the leaf set of a full
    /// binary tree.
    pub fn from_leaf_strings<S: AsRef<str>>(paths: &[S]) -> Result<Dendrogram, TreeError> {
        if paths.len() < 2 {
            return Err(TreeError::TooFewLeaves);
        }

        // Recursive split: every path must be non-empty, and each side of
        // the split must itself be a valid subtree.
        fn build(mut items: Vec<(Vec<u8>, LeafId)>) -> Result<Node, TreeError> {
            if items.len() == 1 {
                let (path, label) = items.pop().expect("len checked");
                return if path.is_empty() {
                    Ok(Node::Leaf(label))
                } else {
                    Err(TreeError::InvalidLeafSet(format!(
                        "leaf {label} has a strict-prefix conflict"
                    )))
                };
            }
            let mut zero = Vec::new();
            let mut one = Vec::new();
            for (path, label) in items {
                match path.split_first() {
                    None => {
                        return Err(TreeError::InvalidLeafSet(format!(
                            "path of leaf {label} is a prefix of another leaf"
                        )))
                    }
                    Some((&0, rest)) => zero.push((rest.to_vec(), label)),
                    Some((_, rest)) => one.push((rest.to_vec(), label)),
                }
            }
            if zero.is_empty() || one.is_empty() {
                return Err(TreeError::InvalidLeafSet(
                    "an internal node has only one child".to_string(),
                ));
            }
            Ok(Node::Branch(Box::new(build(zero)?), Box::new(build(one)?)))
        }

        let mut items = Vec::with_capacity(paths.len());
        let mut seen = BTreeSet::new();
        for (label, s) in paths.iter().enumerate() {
            let code = EdgeCode::parse(s.as_ref())
                .map_err(|e| TreeError::InvalidLeafSet(e.to_string()))?;
            if !seen.insert(code.digits().to_vec()) {
                return Err(TreeError::InvalidLeafSet(format!(
                    "duplicate leaf path `{code}`"
                )));
            }
            items.push((code.digits().to_vec(), label));
        }
        Ok(Dendrogram {
            root: build(items)?,
        })
    }
}

impl fmt::Debug for Dendrogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dendrogram({})", self.to_text())
    }
}

impl Serialize for Dendrogram {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            leaves: Vec<String>,
        }
        Wire {
            leaves: self.leaf_strings(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dendrogram {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            leaves: Vec<String>,
        }
        let wire = Wire::deserialize(deserializer)?;
        Dendrogram::from_leaf_strings(&wire.leaves).map_err(D::Error::custom)
    }
}
