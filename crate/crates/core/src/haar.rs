// SPDX-License-Identifier: MIT OR Apache-2.0

//! Haar wavelet transform on a dendrogram.
//!
//! Walking the tree bottom-up, each internal node `q` with child smooths
//! `a` (left) and `b` (right) gets the smooth `(a + b) / 2` and the detail
//! `d_q = (a - b) / 2`. The inverse reads the tree from the root: the left
//! child is `parent + d_q`, the right child `parent - d_q`.
//!
//! Details are stored in merge order, so `details[k]` belongs to node
//! `n + k`; for 8 leaves `details[6]` is the root detail.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::cluster::Dendrogram;
use crate::{Error, Result};

/// Which details survive thresholding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ThresholdPolicy {
    /// Largest magnitudes anywhere in the tree.
    #[default]
    Magnitude,
    /// Largest magnitudes, but a detail is kept only if every ancestor's
    /// detail is kept, so the fit is constant on every zeroed subtree.
    SubtreeClosed,
}

impl ThresholdPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdPolicy::Magnitude => "magnitude",
            ThresholdPolicy::SubtreeClosed => "subtree-closed",
        }
    }
}

impl std::str::FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(ThresholdPolicy::Magnitude),
            "subtree-closed" => Ok(ThresholdPolicy::SubtreeClosed),
            other => Err(Error::invalid(format!(
                "unknown policy '{other}', expected magnitude or subtree-closed"
            ))),
        }
    }
}

/// Sign convention written into artifacts alongside decompositions.
pub const SIGN_CONVENTION: &str =
    "left child = parent smooth + detail; right child = parent smooth - detail";

#[derive(Clone, Debug, PartialEq)]
pub struct HaarDecomposition<'t> {
    pub tree: &'t Dendrogram,
    pub smooth_root: Vec<f64>,
    /// One detail vector per internal node, in merge order.
    pub details: Vec<Vec<f64>>,
}

impl HaarDecomposition<'_> {
    pub fn dim(&self) -> usize {
        self.smooth_root.len()
    }

    /// Detail attached to internal node `id`.
    pub fn detail_of(&self, id: usize) -> &[f64] {
        &self.details[id - self.tree.n_leaves()]
    }

    /// Euclidean norm of each detail (absolute value when univariate).
    pub fn magnitudes(&self) -> Vec<f64> {
        self.details
            .iter()
            .map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Zeroes every detail whose mask entry is false.
    pub fn masked(&self, kept: &[bool]) -> Result<Self> {
        if kept.len() != self.details.len() {
            return Err(Error::invalid(format!(
                "mask has {} entries for {} details",
                kept.len(),
                self.details.len()
            )));
        }
        let details = self
            .details
            .iter()
            .zip(kept)
            .map(|(d, &k)| if k { d.clone() } else { vec![0.0; d.len()] })
            .collect();
        Ok(HaarDecomposition {
            tree: self.tree,
            smooth_root: self.smooth_root.clone(),
            details,
        })
    }

    /// Table layout: one row per dimension, then the root smooth and the
    /// details from the last merge down to the first.
    pub fn to_csv(&self, dim_names: &[String]) -> Result<String> {
        if dim_names.len() != self.dim() {
            return Err(Error::invalid(format!(
                "{} dimension names for {} dimensions",
                dim_names.len(),
                self.dim()
            )));
        }
        let m = self.details.len();
        let mut out = format!("dimension,s{m}");
        for k in (1..=m).rev() {
            let _ = write!(out, ",d{k}");
        }
        out.push('\n');
        for (c, name) in dim_names.iter().enumerate() {
            out.push_str(name);
            let _ = write!(out, ",{}", self.smooth_root[c]);
            for d in self.details.iter().rev() {
                let _ = write!(out, ",{}", d[c]);
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Bottom-up half-sum / half-difference transform. Row `i` of `leaf_data`
/// is the vector at leaf `i`.
pub fn forward<'t>(
    tree: &'t Dendrogram,
    leaf_data: &DMatrix<f64>,
) -> Result<HaarDecomposition<'t>> {
    let n = tree.n_leaves();
    if leaf_data.nrows() != n {
        return Err(Error::invalid(format!(
            "leaf data has {} rows, tree has {} leaves",
            leaf_data.nrows(),
            n
        )));
    }
    let m = leaf_data.ncols();
    let mut smooth: Vec<Vec<f64>> = leaf_data
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut details = Vec::with_capacity(n - 1);
    for node in tree.nodes() {
        let (a, b) = (&smooth[node.left], &smooth[node.right]);
        let s: Vec<f64> = (0..m).map(|c| (a[c] + b[c]) / 2.0).collect();
        let d: Vec<f64> = (0..m).map(|c| (a[c] - b[c]) / 2.0).collect();
        details.push(d);
        smooth.push(s);
    }
    Ok(HaarDecomposition {
        tree,
        smooth_root: smooth.pop().expect("root smooth"),
        details,
    })
}

/// Univariate convenience wrapper around [`forward`].
pub fn forward_signal<'t>(tree: &'t Dendrogram, values: &[f64]) -> Result<HaarDecomposition<'t>> {
    forward(tree, &DMatrix::from_column_slice(values.len(), 1, values))
}

/// Reconstructs leaf vectors by summing signed details down each path.
pub fn inverse(dec: &HaarDecomposition<'_>) -> DMatrix<f64> {
    let tree = dec.tree;
    let n = tree.n_leaves();
    let m = dec.dim();
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); 2 * n - 1];
    value[tree.root()] = dec.smooth_root.clone();
    for node in tree.nodes().iter().rev() {
        let parent = std::mem::take(&mut value[node.id]);
        let d = dec.detail_of(node.id);
        value[node.left] = (0..m).map(|c| parent[c] + d[c]).collect();
        value[node.right] = (0..m).map(|c| parent[c] - d[c]).collect();
    }
    DMatrix::from_fn(n, m, |i, c| value[i][c])
}

/// Which details (merge order) survive thresholding at `keep`.
pub fn kept_details(
    dec: &HaarDecomposition<'_>,
    keep: usize,
    policy: ThresholdPolicy,
) -> Result<Vec<bool>> {
    let count = dec.details.len();
    if keep > count {
        return Err(Error::invalid(format!("keep = {keep} outside 0..={count}")));
    }
    let mag = dec.magnitudes();
    // larger magnitude first, later merge first on ties
    let before = |a: usize, b: usize| mag[b].total_cmp(&mag[a]).then(b.cmp(&a));
    let mut kept = vec![false; count];
    match policy {
        ThresholdPolicy::Magnitude => {
            let mut order: Vec<usize> = (0..count).collect();
            order.sort_by(|&a, &b| before(a, b));
            for &k in order.iter().take(keep) {
                kept[k] = true;
            }
        }
        ThresholdPolicy::SubtreeClosed => {
            let n = dec.tree.n_leaves();
            let mut frontier = vec![count - 1];
            for _ in 0..keep {
                let (pos, &best) = frontier
                    .iter()
                    .enumerate()
                    .min_by(|(_, &a), (_, &b)| before(a, b))
                    .expect("frontier holds every child of a kept node");
                frontier.swap_remove(pos);
                kept[best] = true;
                let node = &dec.tree.nodes()[best];
                for child in [node.left, node.right] {
                    if child >= n {
                        frontier.push(child - n);
                    }
                }
            }
        }
    }
    Ok(kept)
}

/// Zeroes all but `keep` details chosen by `policy`.
pub fn threshold<'t>(
    dec: &HaarDecomposition<'t>,
    keep: usize,
    policy: ThresholdPolicy,
) -> Result<HaarDecomposition<'t>> {
    let kept = kept_details(dec, keep, policy)?;
    dec.masked(&kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{constrained_complete_link, median_linkage};
    use crate::Execution;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn balanced4() -> Dendrogram {
        Dendrogram::from_merges(labels(4), &[(0, 1, 1.0), (2, 3, 1.0), (4, 5, 2.0)]).unwrap()
    }

    fn column(m: &DMatrix<f64>) -> Vec<f64> {
        m.column(0).iter().copied().collect()
    }

    #[test]
    fn identical_children() {
        let t = Dendrogram::from_merges(labels(2), &[(0, 1, 0.0)]).unwrap();
        let data = DMatrix::from_row_slice(2, 2, &[1.5, -2.0, 1.5, -2.0]);
        let dec = forward(&t, &data).unwrap();
        assert_eq!(dec.smooth_root, vec![1.5, -2.0]);
        assert_eq!(dec.details, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn half_sum_half_difference() {
        let t = Dendrogram::from_merges(labels(2), &[(0, 1, 1.0)]).unwrap();
        let dec = forward_signal(&t, &[1.0, 3.0]).unwrap();
        assert_eq!(dec.smooth_root, vec![2.0]);
        assert_eq!(dec.details, vec![vec![-1.0]]);
        assert_eq!(column(&inverse(&dec)), vec![1.0, 3.0]);
    }

    #[test]
    fn balanced_path_sums() {
        let t = balanced4();
        let dec = forward_signal(&t, &[1.0, 3.0, 5.0, 9.0]).unwrap();
        assert_eq!(dec.smooth_root, vec![4.5]);
        assert_eq!(dec.details, vec![vec![-1.0], vec![-2.0], vec![-2.5]]);
        assert_eq!(column(&inverse(&dec)), vec![1.0, 3.0, 5.0, 9.0]);

        let all_zero = dec.masked(&[false; 3]).unwrap();
        assert_eq!(column(&inverse(&all_zero)), vec![4.5; 4]);

        let one = threshold(&dec, 1, ThresholdPolicy::Magnitude).unwrap();
        assert_eq!(column(&inverse(&one)), vec![2.0, 2.0, 7.0, 7.0]);
        let full = threshold(&dec, 3, ThresholdPolicy::Magnitude).unwrap();
        assert_eq!(column(&inverse(&full)), vec![1.0, 3.0, 5.0, 9.0]);
        assert!(threshold(&dec, 4, ThresholdPolicy::Magnitude).is_err());
    }

    #[test]
    fn row_count_mismatch() {
        let t = balanced4();
        assert!(forward(&t, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn subtree_closed_needs_kept_ancestors() {
        // left-nested tree where the deepest detail is the largest
        let t = Dendrogram::from_merges(labels(3), &[(0, 1, 1.0), (3, 2, 2.0)]).unwrap();
        let dec = forward_signal(&t, &[0.0, 100.0, 50.0]).unwrap();
        // details: d(node3) = -50, d(root) = (50 - 50)/2 = 0
        let mag = kept_details(&dec, 1, ThresholdPolicy::Magnitude).unwrap();
        assert_eq!(mag, vec![true, false]);
        let closed = kept_details(&dec, 1, ThresholdPolicy::SubtreeClosed).unwrap();
        assert_eq!(closed, vec![false, true]);
    }

    #[test]
    fn magnitude_ties_prefer_later_merges() {
        let t = balanced4();
        let dec = forward_signal(&t, &[0.0, 2.0, 0.0, 2.0]).unwrap();
        // both lower details have magnitude 1, root detail 0
        let kept = kept_details(&dec, 1, ThresholdPolicy::Magnitude).unwrap();
        assert_eq!(kept, vec![false, true, false]);
    }

    #[test]
    fn csv_layout() {
        let t = balanced4();
        let dec = forward_signal(&t, &[1.0, 3.0, 5.0, 9.0]).unwrap();
        let csv = dec.to_csv(&["v".to_string()]).unwrap();
        assert_eq!(csv, "dimension,s3,d3,d2,d1\nv,4.5,-2.5,-2,-1\n");
    }

    #[test]
    fn iris_first_eight() {
        let rows = [
            [5.1, 3.5, 1.4, 0.2],
            [4.9, 3.0, 1.4, 0.2],
            [4.7, 3.2, 1.3, 0.2],
            [4.6, 3.1, 1.5, 0.2],
            [5.0, 3.6, 1.4, 0.2],
            [5.4, 3.9, 1.7, 0.4],
            [4.6, 3.4, 1.4, 0.3],
            [5.0, 3.4, 1.5, 0.2],
        ];
        let points: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let t = median_linkage(&points, Execution::Sequential).unwrap();
        let data = DMatrix::from_fn(8, 4, |i, j| rows[i][j]);
        let dec = forward(&t, &data).unwrap();
        let expected_d = [
            [0.05, -0.05, 0.0, 0.0],
            [-0.025, -0.075, 0.05, 0.0],
            [0.05, 0.05, -0.10, 0.0],
            [-0.025, 0.125, 0.0, 0.05],
            [0.1375, -0.1375, 0.0, -0.025],
            [0.13125, 0.16875, 0.025, -0.0125],
            [0.253125, 0.296875, 0.1375, 0.09375],
        ];
        for (got, want) in dec.details.iter().zip(&expected_d) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
            }
        }
        let s7 = [5.146875, 3.603125, 1.5625, 0.30625];
        for (g, w) in dec.smooth_root.iter().zip(&s7) {
            assert!((g - w).abs() < 1e-9);
        }
        let back = inverse(&dec);
        assert!((back - data).abs().max() < 1e-12);
    }

    fn tree_and_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (2usize..=16).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip_identity((points, signal) in tree_and_data()) {
            for tree in [
                constrained_complete_link(&points, Execution::Sequential).unwrap(),
                median_linkage(&points, Execution::Sequential).unwrap(),
            ] {
                let dec = forward_signal(&tree, &signal).unwrap();
                let back = inverse(&dec);
                for (a, b) in back.iter().zip(&signal) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn zeroing_one_detail_is_local((points, signal) in tree_and_data(), pick in 0usize..64) {
            let tree = constrained_complete_link(&points, Execution::Sequential).unwrap();
            let dec = forward_signal(&tree, &signal).unwrap();
            let k = pick % dec.details.len();
            let mut mask = vec![true; dec.details.len()];
            mask[k] = false;
            let base = inverse(&dec);
            let changed = inverse(&dec.masked(&mask).unwrap());
            let node = &tree.nodes()[k];
            let members = tree.members();
            let d = dec.details[k][0];
            for i in 0..tree.n_leaves() {
                let expected = if members[node.left].contains(&i) {
                    -d
                } else if members[node.right].contains(&i) {
                    d
                } else {
                    0.0
                };
                prop_assert!((changed[(i, 0)] - base[(i, 0)] - expected).abs() < 1e-9);
            }
        }

        #[test]
        fn subtree_closed_fit_is_constant_on_zeroed_subtrees(
            (points, signal) in tree_and_data(),
            keep_seed in 0usize..64,
        ) {
            let tree = constrained_complete_link(&points, Execution::Sequential).unwrap();
            let dec = forward_signal(&tree, &signal).unwrap();
            let keep = keep_seed % (dec.details.len() + 1);
            let kept = kept_details(&dec, keep, ThresholdPolicy::SubtreeClosed).unwrap();
            prop_assert_eq!(kept.iter().filter(|&&k| k).count(), keep);
            let fit = inverse(&dec.masked(&kept).unwrap());
            let n = tree.n_leaves();
            let members = tree.members();
            for (k, node) in tree.nodes().iter().enumerate() {
                let parent_kept = tree.parent(node.id).is_none_or(|p| kept[p - n]);
                if !kept[k] && parent_kept {
                    let leaves = &members[node.id];
                    let v = fit[(leaves[0], 0)];
                    for &l in leaves {
                        prop_assert!((fit[(l, 0)] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
