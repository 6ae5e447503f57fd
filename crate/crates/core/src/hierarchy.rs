//! Node sets, summation-constraint matrices and the orthogonal projector.
//!
//! A hierarchy is a set of time series tied together by summation
//! equations: each aggregate equals the sum of its children. The
//! constraint matrix `K` carries one row per equation (-1 on the
//! aggregate, +1 on each child) so that a panel vector `y` respects
//! every equation iff `K y = 0`. Reconciliation replaces a forecast by
//! its orthogonal projection onto `Ker(K)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;

use crate::cluster::Clustering;
use crate::error::{Error, Result};

/// Condition-number threshold above which `(K K^T)^{-1}` falls back to a
/// pseudo-inverse. Crossed hierarchies carry linearly dependent rows.
const COND_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(id: impl Into<String>) -> Self {
        TreeNode {
            id: id.into(),
            children: Vec::new(),
        }
    }

    pub fn internal(id: impl Into<String>, children: Vec<TreeNode>) -> Self {
        TreeNode {
            id: id.into(),
            children,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum HierarchyKind {
    /// A single root summing `N` leaves.
    TwoLevel { root: String, leaves: Vec<String> },
    /// An arbitrary tree; one constraint per internal node.
    MultiLevel { tree: TreeNode },
    /// Two partitions of the same total, sharing only the root.
    TwoPartitions {
        root: String,
        partition_a: Vec<String>,
        partition_b: Vec<String>,
    },
    /// Two crossed partitions: intermediates from both, leaves are the
    /// nonempty pairwise intersections.
    Crossed {
        root: String,
        partition_a: Vec<String>,
        partition_b: Vec<String>,
        /// Nonempty (a, b) intersections, each a leaf.
        leaf_pairs: Vec<(String, String)>,
        /// Intersections known to be empty; they must not appear in
        /// `leaf_pairs`.
        #[serde(default)]
        empty_pairs: Vec<(String, String)>,
    },
}

/// A validated hierarchy with its canonical, deterministic node order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub kind: HierarchyKind,
    pub node_order: Vec<String>,
}

/// Identifier of the leaf node at the intersection of clusters `a` and `b`.
pub fn crossed_leaf_id(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

impl HierarchySpec {
    pub fn two_level(root: impl Into<String>, leaves: Vec<String>) -> Result<Self> {
        let root = root.into();
        if leaves.is_empty() {
            return Err(Error::EmptyPartition("leaves".into()));
        }
        let mut order = vec![root.clone()];
        order.extend(leaves.iter().cloned());
        check_unique(&order)?;
        Ok(HierarchySpec {
            kind: HierarchyKind::TwoLevel { root, leaves },
            node_order: order,
        })
    }

    /// Level-order traversal fixes the node order: root, then each level
    /// left to right.
    pub fn multi_level(tree: TreeNode) -> Result<Self> {
        let mut order = Vec::new();
        let mut frontier = vec![&tree];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for node in frontier {
                order.push(node.id.clone());
                next.extend(node.children.iter());
            }
            frontier = next;
        }
        check_unique(&order)?;
        Ok(HierarchySpec {
            kind: HierarchyKind::MultiLevel { tree },
            node_order: order,
        })
    }

    pub fn two_partitions(
        root: impl Into<String>,
        partition_a: Vec<String>,
        partition_b: Vec<String>,
    ) -> Result<Self> {
        let root = root.into();
        if partition_a.is_empty() {
            return Err(Error::EmptyPartition("A".into()));
        }
        if partition_b.is_empty() {
            return Err(Error::EmptyPartition("B".into()));
        }
        let mut order = vec![root.clone()];
        order.extend(partition_a.iter().cloned());
        order.extend(partition_b.iter().cloned());
        check_unique(&order)?;
        Ok(HierarchySpec {
            kind: HierarchyKind::TwoPartitions {
                root,
                partition_a,
                partition_b,
            },
            node_order: order,
        })
    }

    /// Crossed hierarchy: root, partition A, partition B, then the
    /// retained leaf pairs in lexicographic (A, B) order.
    pub fn crossed(
        root: impl Into<String>,
        partition_a: Vec<String>,
        partition_b: Vec<String>,
        leaf_pairs: Vec<(String, String)>,
        empty_pairs: Vec<(String, String)>,
    ) -> Result<Self> {
        let root = root.into();
        if partition_a.is_empty() {
            return Err(Error::EmptyPartition("A".into()));
        }
        if partition_b.is_empty() {
            return Err(Error::EmptyPartition("B".into()));
        }
        let empty: HashSet<&(String, String)> = empty_pairs.iter().collect();
        for pair in &leaf_pairs {
            if empty.contains(pair) {
                return Err(Error::UnprunedEmptyLeaf(pair.0.clone(), pair.1.clone()));
            }
            if !partition_a.contains(&pair.0) {
                return Err(Error::UnknownNode(pair.0.clone()));
            }
            if !partition_b.contains(&pair.1) {
                return Err(Error::UnknownNode(pair.1.clone()));
            }
        }
        // Lexicographic in (position in A, position in B).
        let pos_a = |id: &str| partition_a.iter().position(|x| x == id).unwrap();
        let pos_b = |id: &str| partition_b.iter().position(|x| x == id).unwrap();
        let mut sorted_pairs = leaf_pairs;
        sorted_pairs.sort_by_key(|(a, b)| (pos_a(a), pos_b(b)));

        let mut order = vec![root.clone()];
        order.extend(partition_a.iter().cloned());
        order.extend(partition_b.iter().cloned());
        order.extend(sorted_pairs.iter().map(|(a, b)| crossed_leaf_id(a, b)));
        check_unique(&order)?;
        Ok(HierarchySpec {
            kind: HierarchyKind::Crossed {
                root,
                partition_a,
                partition_b,
                leaf_pairs: sorted_pairs,
                empty_pairs,
            },
            node_order: order,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_order.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_order.iter().position(|n| n == id)
    }

    pub fn root(&self) -> &str {
        &self.node_order[0]
    }

    /// Leaf nodes (the set the paper calls Γ₀).
    pub fn leaves(&self) -> Vec<String> {
        match &self.kind {
            HierarchyKind::TwoLevel { leaves, .. } => leaves.clone(),
            HierarchyKind::MultiLevel { tree } => {
                let mut out = Vec::new();
                collect_leaves(tree, &mut out);
                out
            }
            HierarchyKind::TwoPartitions { partition_a, .. } => partition_a.clone(),
            HierarchyKind::Crossed { leaf_pairs, .. } => leaf_pairs
                .iter()
                .map(|(a, b)| crossed_leaf_id(a, b))
                .collect(),
        }
    }
}

fn collect_leaves(node: &TreeNode, out: &mut Vec<String>) {
    if node.children.is_empty() {
        out.push(node.id.clone());
    } else {
        for c in &node.children {
            collect_leaves(c, out);
        }
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateNode(id.clone()));
        }
    }
    Ok(())
}

/// The matrix `K`: one row per summation equation, entries in {-1, 0, +1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub matrix: DMatrix<f64>,
}

impl ConstraintMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `K` with no rows: every vector is consistent.
    pub fn unconstrained(n_nodes: usize) -> Self {
        ConstraintMatrix {
            matrix: DMatrix::zeros(0, n_nodes),
        }
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.rows().to_le_bytes());
        h.update(self.cols().to_le_bytes());
        for v in self.matrix.iter() {
            h.update(v.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Build `K` from a hierarchy spec, one row per aggregate node.
pub fn build_constraint_matrix(spec: &HierarchySpec) -> Result<ConstraintMatrix> {
    let n = spec.n_nodes();
    let idx = |id: &str| -> Result<usize> {
        spec.node_index(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut push_row = |agg: usize, children: &[usize]| {
        let mut row = vec![0.0; n];
        row[agg] = -1.0;
        for &c in children {
            row[c] = 1.0;
        }
        rows.push(row);
    };

    match &spec.kind {
        HierarchyKind::TwoLevel { root, leaves } => {
            let children: Vec<usize> = leaves.iter().map(|l| idx(l)).collect::<Result<_>>()?;
            push_row(idx(root)?, &children);
        }
        HierarchyKind::MultiLevel { tree } => {
            // Rows follow the node order (level order) of the aggregates.
            let mut frontier = vec![tree];
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for node in frontier {
                    if !node.children.is_empty() {
                        let children: Vec<usize> = node
                            .children
                            .iter()
                            .map(|c| idx(&c.id))
                            .collect::<Result<_>>()?;
                        push_row(idx(&node.id)?, &children);
                        next.extend(node.children.iter());
                    }
                }
                frontier = next;
            }
        }
        HierarchyKind::TwoPartitions {
            root,
            partition_a,
            partition_b,
        } => {
            let r = idx(root)?;
            let a: Vec<usize> = partition_a.iter().map(|x| idx(x)).collect::<Result<_>>()?;
            let b: Vec<usize> = partition_b.iter().map(|x| idx(x)).collect::<Result<_>>()?;
            push_row(r, &a);
            push_row(r, &b);
        }
        HierarchyKind::Crossed {
            root,
            partition_a,
            partition_b,
            leaf_pairs,
            ..
        } => {
            let r = idx(root)?;
            let a: Vec<usize> = partition_a.iter().map(|x| idx(x)).collect::<Result<_>>()?;
            let b: Vec<usize> = partition_b.iter().map(|x| idx(x)).collect::<Result<_>>()?;
            // (1) root over partition A.
            push_row(r, &a);
            // (2i) each A cluster over its retained leaves.
            for ai in partition_a {
                let children: Vec<usize> = leaf_pairs
                    .iter()
                    .filter(|(x, _)| x == ai)
                    .map(|(x, y)| idx(&crossed_leaf_id(x, y)))
                    .collect::<Result<_>>()?;
                push_row(idx(ai)?, &children);
            }
            // (3) root over partition B.
            push_row(r, &b);
            // (4j) each B cluster over its retained leaves.
            for bj in partition_b {
                let children: Vec<usize> = leaf_pairs
                    .iter()
                    .filter(|(_, y)| y == bj)
                    .map(|(x, y)| idx(&crossed_leaf_id(x, y)))
                    .collect::<Result<_>>()?;
                push_row(idx(bj)?, &children);
            }
        }
    }

    let m = rows.len();
    let mut matrix = DMatrix::zeros(m, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    Ok(ConstraintMatrix { matrix })
}

/// The orthogonal projector onto `Ker(K)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projector {
    pub matrix: DMatrix<f64>,
    /// Digest of the constraint matrix this projector was built from.
    pub source_hash: String,
}

/// Π = I − K^T (K K^T)^{-1} K, with a pseudo-inverse fallback when the
/// constraint Gram is rank-deficient.
pub fn build_projector(k: &ConstraintMatrix) -> Result<Projector> {
    let n = k.cols();
    let hash = k.digest();
    if k.rows() == 0 {
        return Ok(Projector {
            matrix: DMatrix::identity(n, n),
            source_hash: hash,
        });
    }
    let gram = &k.matrix * k.matrix.transpose();
    let eig = gram.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    // Negated comparison on purpose: a NaN eigenvalue must also bail out.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lambda_max > 0.0) {
        return Err(Error::SingularConstraintGram);
    }
    // Invert retained eigenvalues; drop directions below the condition
    // threshold (redundant constraint rows).
    let cutoff = lambda_max / COND_THRESHOLD;
    let inv_diag = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| if l > cutoff { 1.0 / l } else { 0.0 }),
    );
    let gram_inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    let pi = DMatrix::identity(n, n) - k.matrix.transpose() * gram_inv * &k.matrix;
    Ok(Projector {
        matrix: pi,
        source_hash: hash,
    })
}

/// Apply the projector to a node-indexed vector.
pub fn project(p: &Projector, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != p.matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: p.matrix.ncols(),
            got: v.len(),
        });
    }
    Ok(&p.matrix * v)
}

/// Build the crossed node set from two household partitions.
///
/// Γ = {root} ∪ clusters of A ∪ clusters of B ∪ nonempty intersections;
/// empty intersections are pruned from the leaf list.
pub fn enumerate_crossed_nodes(
    partition_a: &Clustering,
    partition_b: &Clustering,
    prefix_a: &str,
    prefix_b: &str,
) -> Result<HierarchySpec> {
    let set_a: HashSet<&String> = partition_a.assignment.keys().collect();
    let set_b: HashSet<&String> = partition_b.assignment.keys().collect();
    if set_a != set_b {
        return Err(Error::DisjointHouseholdSets);
    }
    let names_a: Vec<String> = (1..=partition_a.k).map(|i| format!("{prefix_a}{i}")).collect();
    let names_b: Vec<String> = (1..=partition_b.k).map(|i| format!("{prefix_b}{i}")).collect();

    let mut nonempty = HashSet::new();
    for (hh, &ca) in &partition_a.assignment {
        let cb = partition_b.assignment[hh];
        nonempty.insert((ca, cb));
    }
    let mut leaf_pairs = Vec::new();
    let mut empty_pairs = Vec::new();
    for (i, na) in names_a.iter().enumerate() {
        for (j, nb) in names_b.iter().enumerate() {
            let pair = (na.clone(), nb.clone());
            if nonempty.contains(&(i + 1, j + 1)) {
                leaf_pairs.push(pair);
            } else {
                empty_pairs.push(pair);
            }
        }
    }
    HierarchySpec::crossed("TOTAL", names_a, names_b, leaf_pairs, empty_pairs)
}

/// JSON document carrying a hierarchy spec together with its constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyDocument {
    #[serde(flatten)]
    pub kind: HierarchyKind,
    pub nodes: Vec<String>,
    pub constraints: Vec<Vec<f64>>,
}

impl HierarchyDocument {
    pub fn from_spec(spec: &HierarchySpec) -> Result<Self> {
        let k = build_constraint_matrix(spec)?;
        let constraints = (0..k.rows())
            .map(|i| k.matrix.row(i).iter().cloned().collect())
            .collect();
        Ok(HierarchyDocument {
            kind: spec.kind.clone(),
            nodes: spec.node_order.clone(),
            constraints,
        })
    }

    pub fn to_spec(&self) -> HierarchySpec {
        HierarchySpec {
            kind: self.kind.clone(),
            node_order: self.nodes.clone(),
        }
    }
}
