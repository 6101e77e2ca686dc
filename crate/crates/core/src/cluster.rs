// SPDX-License-Identifier: MIT OR Apache-2.0

//! Agglomerative hierarchies over ordered observations.
//!
//! Two builders produce a [`Dendrogram`]:
//!
//! - [`constrained_complete_link`] only ever merges clusters that are
//!   adjacent on the timeline, using the complete-link (maximum cross
//!   distance) criterion on Euclidean distances. Every node of the result
//!   spans a contiguous run of observations.
//! - [`median_linkage`] is the unconstrained Gower median method on
//!   squared Euclidean distances.
//!
//! Internal node ids follow merge order: leaves are `0..n`, the `k`-th
//! merge creates node `n + k` and the root is `2n - 2`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Execution, Result};

/// Internal node of a dendrogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Inclusive leaf interval, present when the leaf set is contiguous.
    pub span: Option<[usize; 2]>,
}

/// Binary ranked rooted tree over an ordered set of leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    leaf_labels: Vec<String>,
    nodes: Vec<Node>,
    parent: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DendrogramJson {
    n_leaves: usize,
    leaves: Vec<String>,
    nodes: Vec<Node>,
    root: usize,
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

impl Dendrogram {
    /// Builds a tree from merges `(left, right, height)` in merge order.
    /// Children may be leaves or earlier merges, each used exactly once.
    pub fn from_merges(leaf_labels: Vec<String>, merges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = leaf_labels.len();
        if n < 2 {
            return Err(Error::invalid("a dendrogram needs at least 2 leaves"));
        }
        if merges.len() != n - 1 {
            return Err(Error::invalid(format!(
                "{} leaves need {} merges, got {}",
                n,
                n - 1,
                merges.len()
            )));
        }
        let total = 2 * n - 1;
        let mut parent = vec![usize::MAX; total];
        let mut heights = vec![0.0; total];
        // inclusive min/max leaf and leaf count, for span bookkeeping
        let mut extent: Vec<(usize, usize, usize)> = (0..n).map(|i| (i, i, 1)).collect();
        let mut nodes = Vec::with_capacity(n - 1);
        for (k, &(left, right, height)) in merges.iter().enumerate() {
            let id = n + k;
            for child in [left, right] {
                if child >= id {
                    return Err(Error::invalid(format!(
                        "merge {k} references node {child} not yet created"
                    )));
                }
                if parent[child] != usize::MAX {
                    return Err(Error::invalid(format!("node {child} merged twice")));
                }
                parent[child] = id;
            }
            if left == right {
                return Err(Error::invalid(format!(
                    "merge {k} joins node {left} with itself"
                )));
            }
            if !height.is_finite() || height < 0.0 {
                return Err(Error::invalid(format!(
                    "merge {k} has invalid height {height}"
                )));
            }
            if height < heights[left] || height < heights[right] {
                return Err(Error::invalid(format!(
                    "merge {k} at height {height} is below a child height"
                )));
            }
            heights[id] = height;
            let (a, b) = (extent[left], extent[right]);
            let ext = (a.0.min(b.0), a.1.max(b.1), a.2 + b.2);
            extent.push(ext);
            let span = (ext.1 - ext.0 + 1 == ext.2).then_some([ext.0, ext.1]);
            nodes.push(Node {
                id,
                left,
                right,
                height,
                span,
            });
        }
        Ok(Dendrogram {
            leaf_labels,
            nodes,
            parent,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_leaves() {
            return Err(Error::invalid(format!(
                "{} labels for a tree with {} leaves",
                labels.len(),
                self.n_leaves()
            )));
        }
        self.leaf_labels = labels;
        Ok(self)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_labels.len()
    }

    pub fn leaf_labels(&self) -> &[String] {
        &self.leaf_labels
    }

    /// Internal nodes in merge order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id < self.n_leaves()
    }

    /// Internal node by id. Panics on a leaf id.
    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id - self.n_leaves()]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent.get(id).copied().filter(|&p| p != usize::MAX)
    }

    pub fn height(&self, id: usize) -> f64 {
        if self.is_leaf(id) {
            0.0
        } else {
            self.node(id).height
        }
    }

    /// Merge heights in merge order.
    pub fn heights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.height).collect()
    }

    /// Whether every node spans a contiguous run of leaves.
    pub fn is_sequence_constrained(&self) -> bool {
        self.nodes.iter().all(|n| n.span.is_some())
    }

    /// Leaf ids under every node, indexed by node id, each sorted.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for node in &self.nodes {
            let mut m = members[node.left].clone();
            m.extend_from_slice(&members[node.right]);
            m.sort_unstable();
            members.push(m);
        }
        members
    }

    /// Leaves in left-to-right drawing order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_leaves());
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            if self.is_leaf(id) {
                order.push(id);
            } else {
                let node = self.node(id);
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        order
    }

    pub fn to_json(&self) -> String {
        let doc = DendrogramJson {
            n_leaves: self.n_leaves(),
            leaves: self.leaf_labels.clone(),
            nodes: self.nodes.clone(),
            root: self.root(),
        };
        serde_json::to_string_pretty(&doc).expect("dendrogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DendrogramJson =
            serde_json::from_str(text).map_err(|e| Error::data(format!("dendrogram JSON: {e}")))?;
        if doc.n_leaves != doc.leaves.len() {
            return Err(Error::data(
                "dendrogram JSON: n_leaves does not match leaves",
            ));
        }
        for (k, node) in doc.nodes.iter().enumerate() {
            if node.id != doc.n_leaves + k {
                return Err(Error::data(format!(
                    "dendrogram JSON: node {k} has id {}, expected {}",
                    node.id,
                    doc.n_leaves + k
                )));
            }
        }
        let merges: Vec<_> = doc
            .nodes
            .iter()
            .map(|n| (n.left, n.right, n.height))
            .collect();
        let tree = Self::from_merges(doc.leaves, &merges)?;
        if doc.root != tree.root() {
            return Err(Error::data("dendrogram JSON: root is not the last merge"));
        }
        Ok(tree)
    }

    /// Newick string with branch lengths `parent height - child height`.
    pub fn to_newick(&self) -> String {
        fn quote(label: &str) -> String {
            let special = |c: char| "()[]':;,".contains(c) || c.is_whitespace();
            if label.is_empty() || label.chars().any(special) {
                format!("'{}'", label.replace('\'', "''"))
            } else {
                label.to_owned()
            }
        }
        fn write(tree: &Dendrogram, id: usize, out: &mut String) {
            if tree.is_leaf(id) {
                out.push_str(&quote(&tree.leaf_labels[id]));
            } else {
                let node = tree.node(id);
                out.push('(');
                write(tree, node.left, out);
                let _ = write!(out, ":{}", node.height - tree.height(node.left));
                out.push(',');
                write(tree, node.right, out);
                let _ = write!(out, ":{}", node.height - tree.height(node.right));
                out.push(')');
            }
        }
        let mut out = String::new();
        write(self, self.root(), &mut out);
        out.push_str(";\n");
        out
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "clustering needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::invalid(format!(
            "point {i} has dimension {}, expected {dim}",
            points[i].len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite coordinates"));
    }
    Ok(dim)
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise distance matrix, `sq` selecting squared Euclidean distance.
pub fn distance_matrix(points: &[Vec<f64>], squared: bool, exec: Execution) -> Vec<Vec<f64>> {
    let n = points.len();
    exec.map_range(n, |i| {
        (0..n)
            .map(|j| {
                let d = sq_euclidean(&points[i], &points[j]);
                if squared {
                    d
                } else {
                    d.sqrt()
                }
            })
            .collect()
    })
}

/// Sequence-constrained complete-link agglomeration on Euclidean distance.
///
/// Only adjacent clusters are merge candidates. The closest adjacent pair
/// is merged at each step, the leftmost pair winning ties.
pub fn constrained_complete_link(points: &[Vec<f64>], exec: Execution) -> Result<Dendrogram> {
    check_points(points)?;
    let n = points.len();
    // Active clusters are contiguous intervals; slot = first leaf index.
    let mut dist = distance_matrix(points, false, exec);
    let mut active: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut best = 0;
        for p in 1..active.len() - 1 {
            if dist[active[p]][active[p + 1]] < dist[active[best]][active[best + 1]] {
                best = p;
            }
        }
        let (a, b) = (active[best], active[best + 1]);
        merges.push((node_of[a], node_of[b], dist[a][b]));
        active.remove(best + 1);
        for &x in &active {
            if x != a {
                let d = dist[a][x].max(dist[b][x]);
                dist[a][x] = d;
                dist[x][a] = d;
            }
        }
        node_of[a] = n + k;
    }
    Dendrogram::from_merges(default_labels(n), &merges)
}

/// Unconstrained median (Gower) agglomeration on squared Euclidean
/// distances, `d(k, i+j) = d(k,i)/2 + d(k,j)/2 - d(i,j)/4`.
///
/// The globally closest pair is merged, ties going to the pair with the
/// smallest node ids. Children are ordered singleton first, then by
/// creation order. Merge heights are the squared merge distances, raised
/// where needed to the larger child height because the median method can
/// produce reversals.
pub fn median_linkage(points: &[Vec<f64>], exec: Execution) -> Result<Dendrogram> {
    check_points(points)?;
    let n = points.len();
    let mut dist = distance_matrix(points, true, exec);
    // slot -> current node id; a merge keeps the lower slot.
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut heights = vec![0.0; 2 * n - 1];
    let mut merges = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &s) in active.iter().enumerate() {
            for &t in &active[ai + 1..] {
                let (lo, hi) = {
                    let (x, y) = (node_of[s], node_of[t]);
                    (x.min(y), x.max(y))
                };
                let d = dist[s][t];
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d, lo, hi, s, t));
                }
            }
        }
        let (d, _, _, s, t) = best.expect("at least two active clusters");
        let (i, j) = (node_of[s], node_of[t]);
        let singleton_first = |c: usize| (c >= n, c);
        let (left, right) = if singleton_first(i) <= singleton_first(j) {
            (i, j)
        } else {
            (j, i)
        };
        let id = n + k;
        let height = d.max(heights[i]).max(heights[j]);
        if height > d {
            log::debug!("median linkage reversal at merge {k}: {d} raised to {height}");
        }
        heights[id] = height;
        merges.push((left, right, height));

        let (keep, gone) = (s.min(t), s.max(t));
        active.retain(|&x| x != gone);
        for &x in &active {
            if x != keep {
                let nd = 0.5 * dist[s][x] + 0.5 * dist[t][x] - 0.25 * d;
                dist[keep][x] = nd;
                dist[x][keep] = nd;
            }
        }
        node_of[keep] = id;
    }
    Dendrogram::from_merges(default_labels(n), &merges)
}

/// Ultrametric read off the tree: entry `(i, j)` is the height of the
/// lowest common ancestor of leaves `i` and `j`.
pub fn cophenetic_matrix(tree: &Dendrogram) -> DMatrix<f64> {
    let n = tree.n_leaves();
    let members = tree.members();
    let mut m = DMatrix::zeros(n, n);
    for node in tree.nodes() {
        for &a in &members[node.left] {
            for &b in &members[node.right] {
                m[(a, b)] = node.height;
                m[(b, a)] = node.height;
            }
        }
    }
    m
}

/// First triplet `(i, j, k)` with `d(i,k) > max(d(i,j), d(j,k))`, or a
/// symmetry / zero-diagonal failure reported as `(i, i, j)`.
pub fn find_ultrametric_violation(m: &DMatrix<f64>) -> Option<(usize, usize, usize)> {
    let n = m.nrows();
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return Some((i, i, i));
        }
        for j in 0..n {
            if m[(i, j)] != m[(j, i)] {
                return Some((i, i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if m[(i, k)] > m[(i, j)].max(m[(j, k)]) {
                    return Some((i, j, k));
                }
            }
        }
    }
    None
}

/// Inclusive, 0-based run of consecutive leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Ordered contiguous segments covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    segments: Vec<Segment>,
}

impl Partition {
    pub fn new(n: usize, segments: Vec<Segment>) -> Result<Self> {
        let mut next = 0;
        for s in &segments {
            if s.start != next || s.end < s.start {
                return Err(Error::invalid(format!(
                    "segments must tile 1..{n} in order; bad segment {}..{}",
                    s.start + 1,
                    s.end + 1
                )));
            }
            next = s.end + 1;
        }
        if next != n || n == 0 {
            return Err(Error::invalid(format!("segments do not cover 1..{n}")));
        }
        Ok(Partition { segments })
    }

    /// Partition from 0-based segment lengths.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut segments = Vec::with_capacity(lengths.len());
        for &len in lengths {
            if len == 0 {
                return Err(Error::invalid("zero-length segment"));
            }
            segments.push(Segment {
                start,
                end: start + len - 1,
            });
            start += len;
        }
        Self::new(start, segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_points(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end + 1)
    }
}

/// Removes the `k - 1` highest merges (later merges first among equal
/// heights) from a sequence-constrained tree.
pub fn cut(tree: &Dendrogram, k: usize) -> Result<Partition> {
    let n = tree.n_leaves();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cluster count {k} outside 1..={n}")));
    }
    if !tree.is_sequence_constrained() {
        return Err(Error::invalid("cut needs a sequence-constrained tree"));
    }
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|&a, &b| {
        tree.nodes[b]
            .height
            .total_cmp(&tree.nodes[a].height)
            .then(b.cmp(&a))
    });
    let mut removed = vec![false; 2 * n - 1];
    for &m in order.iter().take(k - 1) {
        removed[n + m] = true;
    }
    let mut segments = Vec::with_capacity(k);
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        if removed[id] {
            let node = tree.node(id);
            stack.push(node.left);
            stack.push(node.right);
        } else if tree.is_leaf(id) {
            segments.push(Segment { start: id, end: id });
        } else {
            let [start, end] = tree.node(id).span.expect("constrained");
            segments.push(Segment { start, end });
        }
    }
    segments.sort_by_key(|s| s.start);
    Partition::new(n, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    /// Recomputes every adjacent complete-link distance from scratch.
    fn brute_constrained(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
        let n = points.len();
        let d = |a: usize, b: usize| sq_euclidean(&points[a], &points[b]).sqrt();
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
        let mut merges = Vec::new();
        for k in 0..n - 1 {
            let link = |p: usize| {
                let mut m = 0.0f64;
                for &a in &clusters[p].1 {
                    for &b in &clusters[p + 1].1 {
                        m = m.max(d(a, b));
                    }
                }
                m
            };
            let mut best = (link(0), 0);
            for p in 1..clusters.len() - 1 {
                let l = link(p);
                if l < best.0 {
                    best = (l, p);
                }
            }
            let (h, p) = best;
            let right = clusters.remove(p + 1);
            merges.push((clusters[p].0, right.0, h));
            clusters[p].0 = n + k;
            clusters[p].1.extend(right.1);
        }
        merges
    }

    fn merges_of(t: &Dendrogram) -> Vec<(usize, usize, f64)> {
        t.nodes()
            .iter()
            .map(|n| (n.left, n.right, n.height))
            .collect()
    }

    #[test]
    fn left_nested_fixture() {
        let t =
            constrained_complete_link(&pts(&[0.0, 1.0, 3.0, 7.0]), Execution::Sequential).unwrap();
        assert_eq!(merges_of(&t), vec![(0, 1, 1.0), (4, 2, 3.0), (5, 3, 7.0)]);
        let c = cophenetic_matrix(&t);
        assert_eq!(c[(0, 1)], 1.0);
        assert_eq!(c[(0, 2)], 3.0);
        assert_eq!(c[(1, 2)], 3.0);
        for i in 0..3 {
            assert_eq!(c[(i, 3)], 7.0);
        }
    }

    #[test]
    fn adjacency_constraint_applies() {
        let t = constrained_complete_link(&pts(&[0.0, 5.0, 1.0]), Execution::Sequential).unwrap();
        assert_eq!(t.nodes()[0].left, 1);
        assert_eq!(t.nodes()[0].right, 2);
        assert_eq!(t.nodes()[0].height, 4.0);
    }

    #[test]
    fn two_points() {
        let p = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let t = constrained_complete_link(&p, Execution::Sequential).unwrap();
        assert_eq!(t.heights(), vec![5.0]);
        let c = cophenetic_matrix(&t);
        assert_eq!(c[(0, 1)], 5.0);
        assert_eq!(
            median_linkage(&p, Execution::Sequential).unwrap().heights(),
            vec![25.0]
        );
    }

    #[test]
    fn builder_errors() {
        assert!(constrained_complete_link(&pts(&[1.0]), Execution::Sequential).is_err());
        let ragged = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(constrained_complete_link(&ragged, Execution::Sequential).is_err());
        assert!(median_linkage(&pts(&[1.0]), Execution::Sequential).is_err());
    }

    #[test]
    fn median_update_fixture() {
        let t = median_linkage(&pts(&[0.0, 1.0, 10.0]), Execution::Sequential).unwrap();
        assert_eq!(merges_of(&t), vec![(0, 1, 1.0), (2, 3, 90.25)]);
    }

    #[test]
    fn fig0_style_ultrametric() {
        // x joins the pair {y, z} at 3.5; y and z merge at 1.0
        let labels = vec!["x".to_string(), "y".into(), "z".into()];
        let t = Dendrogram::from_merges(labels, &[(1, 2, 1.0), (0, 3, 3.5)]).unwrap();
        let c = cophenetic_matrix(&t);
        assert_eq!(c[(0, 2)], 3.5);
        assert_eq!(c[(0, 1)], 3.5);
        assert_eq!(c[(1, 2)], 1.0);
        assert!(find_ultrametric_violation(&c).is_none());
    }

    #[test]
    fn from_merges_validation() {
        let l = default_labels(3);
        assert!(Dendrogram::from_merges(l.clone(), &[(0, 1, 1.0)]).is_err());
        assert!(Dendrogram::from_merges(l.clone(), &[(0, 1, 2.0), (3, 2, 1.0)]).is_err());
        assert!(Dendrogram::from_merges(l.clone(), &[(0, 1, 1.0), (0, 2, 2.0)]).is_err());
        assert!(Dendrogram::from_merges(l.clone(), &[(0, 4, 1.0), (3, 2, 2.0)]).is_err());
        let t = Dendrogram::from_merges(l, &[(0, 2, 1.0), (3, 1, 2.0)]).unwrap();
        assert!(!t.is_sequence_constrained());
        assert_eq!(t.nodes()[0].span, None);
        assert_eq!(t.nodes()[1].span, Some([0, 2]));
        assert!(cut(&t, 2).is_err());
    }

    #[test]
    fn json_round_trip_and_newick() {
        let t = constrained_complete_link(&pts(&[0.0, 1.0, 3.0, 7.0]), Execution::Sequential)
            .unwrap()
            .with_labels(vec!["a".into(), "b".into(), "c d".into(), "e".into()])
            .unwrap();
        let back = Dendrogram::from_json(&t.to_json()).unwrap();
        assert_eq!(t, back);
        assert_eq!(t.to_newick(), "(((a:1,b:1):2,'c d':3):4,e:7);\n");
    }

    #[test]
    fn cuts() {
        let t =
            constrained_complete_link(&pts(&[0.0, 1.0, 3.0, 7.0]), Execution::Sequential).unwrap();
        let one = cut(&t, 1).unwrap();
        assert_eq!(one.segments(), &[Segment { start: 0, end: 3 }]);
        let all = cut(&t, 4).unwrap();
        assert_eq!(all.segments().len(), 4);
        let two = cut(&t, 2).unwrap();
        assert_eq!(two, Partition::from_lengths(&[3, 1]).unwrap());
        assert!(cut(&t, 0).is_err());
        assert!(cut(&t, 5).is_err());
    }

    #[test]
    fn fifteen_years_three_regimes() {
        let mut values = vec![];
        for i in 0..8 {
            values.push(10.0 + 0.1 * i as f64);
        }
        for i in 0..4 {
            values.push(20.0 + 0.1 * i as f64);
        }
        for i in 0..3 {
            values.push(40.0 + 0.1 * i as f64);
        }
        let t = constrained_complete_link(&pts(&values), Execution::Sequential).unwrap();
        assert_eq!(
            cut(&t, 3).unwrap(),
            Partition::from_lengths(&[8, 4, 3]).unwrap()
        );
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![Segment { start: 0, end: 1 }]).is_err());
        assert!(Partition::new(
            3,
            vec![Segment { start: 0, end: 1 }, Segment { start: 1, end: 2 }]
        )
        .is_err());
        assert!(Partition::from_lengths(&[2, 0]).is_err());
    }

    proptest! {
        #[test]
        fn constrained_matches_brute_force(
            values in prop::collection::vec(0u8..4, 2..=8),
        ) {
            let p = pts(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let t = constrained_complete_link(&p, Execution::Sequential).unwrap();
            prop_assert_eq!(merges_of(&t), brute_constrained(&p));
            prop_assert!(t.is_sequence_constrained());
            prop_assert!(find_ultrametric_violation(&cophenetic_matrix(&t)).is_none());
        }

        #[test]
        fn constrained_2d_matches_brute_force(
            p in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..=8),
        ) {
            let t = constrained_complete_link(&p, Execution::Parallel).unwrap();
            prop_assert_eq!(merges_of(&t), brute_constrained(&p));
        }

        #[test]
        fn dimension_permutation_keeps_topology(
            p in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..=10),
        ) {
            let swapped: Vec<Vec<f64>> = p.iter().map(|v| vec![v[2], v[0], v[1]]).collect();
            let a = constrained_complete_link(&p, Execution::Sequential).unwrap();
            let b = constrained_complete_link(&swapped, Execution::Sequential).unwrap();
            for (x, y) in a.nodes().iter().zip(b.nodes()) {
                prop_assert_eq!((x.left, x.right), (y.left, y.right));
                prop_assert!((x.height - y.height).abs() <= 1e-12 * x.height.max(1.0));
            }
        }

        #[test]
        fn median_tree_is_valid(
            p in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..=12),
        ) {
            let t = median_linkage(&p, Execution::Sequential).unwrap();
            prop_assert_eq!(t.nodes().len(), p.len() - 1);
            prop_assert!(find_ultrametric_violation(&cophenetic_matrix(&t)).is_none());
            let mut order = t.leaf_order();
            order.sort_unstable();
            prop_assert_eq!(order, (0..p.len()).collect::<Vec<_>>());
        }
    }
}
