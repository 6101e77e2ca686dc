// SPDX-License-Identifier: MIT OR Apache-2.0

//! Wavelet regression of external signals on a hierarchy.
//!
//! A signal aligned with the leaves is pushed through the tree's Haar
//! transform, all but the strongest details are zeroed and the inverse
//! transform gives a fit that is constant within clusters. Fits are scored
//! by mean squared error over the `n` points and summarized by their
//! breakpoints, the positions where the fitted value changes.

use std::fmt::Write as _;

use crate::cluster::{Dendrogram, Partition};
use crate::haar::{self, ThresholdPolicy};
use crate::ingest::ExternalSignal;
use crate::{Error, Execution, Result};

/// Fitted values closer than this are treated as the same level.
pub const BREAK_TOLERANCE: f64 = 1e-9;

/// Maximal run of equal fitted values, 0-based inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitSegment {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseFit {
    pub fitted: Vec<f64>,
    pub segments: Vec<FitSegment>,
    pub mse: f64,
    /// Retained detail count; `None` for baseline fits.
    pub kept: Option<usize>,
}

impl PiecewiseFit {
    fn new(original: &[f64], fitted: Vec<f64>, kept: Option<usize>) -> Self {
        let mse = mse(original, &fitted);
        let segments = runs(&fitted);
        PiecewiseFit {
            fitted,
            segments,
            mse,
            kept,
        }
    }

    /// Fit CSV: `label,original,fitted`.
    pub fn to_csv(&self, signal: &ExternalSignal) -> String {
        let mut out = String::from("label,original,fitted\n");
        for ((label, s), f) in signal
            .labels()
            .iter()
            .zip(signal.values())
            .zip(&self.fitted)
        {
            let _ = writeln!(out, "{label},{s},{f}");
        }
        out
    }
}

pub fn mse(original: &[f64], fitted: &[f64]) -> f64 {
    let n = original.len();
    if n == 0 {
        return 0.0;
    }
    original
        .iter()
        .zip(fitted)
        .map(|(s, f)| (f - s) * (f - s))
        .sum::<f64>()
        / n as f64
}

fn runs(fitted: &[f64]) -> Vec<FitSegment> {
    let mut segments: Vec<FitSegment> = Vec::new();
    for (i, &v) in fitted.iter().enumerate() {
        match segments.last_mut() {
            Some(seg) if (fitted[i - 1] - v).abs() <= BREAK_TOLERANCE => seg.end = i,
            _ => segments.push(FitSegment {
                start: i,
                end: i,
                value: v,
            }),
        }
    }
    segments
}

fn check_alignment(tree: &Dendrogram, signal: &ExternalSignal) -> Result<()> {
    if signal.len() != tree.n_leaves() {
        return Err(Error::data(format!(
            "signal has {} values, tree has {} leaves",
            signal.len(),
            tree.n_leaves()
        )));
    }
    if let Some((a, b)) = signal
        .labels()
        .iter()
        .zip(tree.leaf_labels())
        .find(|(a, b)| a != b)
    {
        return Err(Error::data(format!(
            "signal label '{a}' does not match tree leaf '{b}'"
        )));
    }
    Ok(())
}

fn fit_with_mask(
    dec: &haar::HaarDecomposition<'_>,
    signal: &ExternalSignal,
    kept: &[bool],
    keep: usize,
) -> Result<PiecewiseFit> {
    // With nothing zeroed the inverse is the identity; skip it so the
    // fit reproduces the input bit for bit.
    let fitted = if kept.iter().all(|&k| k) {
        signal.values().to_vec()
    } else {
        let rec = haar::inverse(&dec.masked(kept)?);
        rec.column(0).iter().copied().collect()
    };
    Ok(PiecewiseFit::new(signal.values(), fitted, Some(keep)))
}

/// Transform, threshold to `keep` details and reconstruct.
pub fn fold_and_regress(
    tree: &Dendrogram,
    signal: &ExternalSignal,
    keep: usize,
    policy: ThresholdPolicy,
) -> Result<PiecewiseFit> {
    check_alignment(tree, signal)?;
    let dec = haar::forward_signal(tree, signal.values())?;
    let kept = haar::kept_details(&dec, keep, policy)?;
    fit_with_mask(&dec, signal, &kept, keep)
}

/// Fit with an explicit set of retained details (merge order).
pub fn fold_with_kept(
    tree: &Dendrogram,
    signal: &ExternalSignal,
    kept: &[bool],
) -> Result<PiecewiseFit> {
    check_alignment(tree, signal)?;
    let dec = haar::forward_signal(tree, signal.values())?;
    let keep = kept.iter().filter(|&&k| k).count();
    fit_with_mask(&dec, signal, kept, keep)
}

/// Segment means over a fixed partition.
pub fn baseline_fit(partition: &Partition, signal: &ExternalSignal) -> Result<PiecewiseFit> {
    if partition.n_points() != signal.len() {
        return Err(Error::data(format!(
            "partition covers {} points, signal has {}",
            partition.n_points(),
            signal.len()
        )));
    }
    let values = signal.values();
    let mut fitted = vec![0.0; values.len()];
    for seg in partition.segments() {
        let slice = &values[seg.start..=seg.end];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        fitted[seg.start..=seg.end].fill(mean);
    }
    Ok(PiecewiseFit::new(values, fitted, None))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub keep: usize,
    pub mse: f64,
    pub fit: PiecewiseFit,
}

/// Fits for every `keep` from 0 to `n - 1`.
pub fn mse_sweep(
    tree: &Dendrogram,
    signal: &ExternalSignal,
    policy: ThresholdPolicy,
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    check_alignment(tree, signal)?;
    let dec = haar::forward_signal(tree, signal.values())?;
    let count = dec.details.len();
    exec.map_range(count + 1, |keep| {
        let kept = haar::kept_details(&dec, keep, policy)?;
        let fit = fit_with_mask(&dec, signal, &kept, keep)?;
        Ok(SweepPoint {
            keep,
            mse: fit.mse,
            fit,
        })
    })
    .into_iter()
    .collect()
}

/// Sweep CSV: `keep,mse`.
pub fn sweep_csv(sweep: &[SweepPoint]) -> String {
    let mut out = String::from("keep,mse\n");
    for p in sweep {
        let _ = writeln!(out, "{},{}", p.keep, p.mse);
    }
    out
}

/// Regresses several signals on one tree; results keep input order.
pub fn regress_many(
    tree: &Dendrogram,
    signals: &[ExternalSignal],
    keep: usize,
    policy: ThresholdPolicy,
    exec: Execution,
) -> Vec<Result<PiecewiseFit>> {
    exec.map_range(signals.len(), |i| {
        fold_and_regress(tree, &signals[i], keep, policy)
    })
}

/// [`mse_sweep`] for several signals sharing one tree. Each signal is
/// swept sequentially; the signals themselves are spread by `exec`.
pub fn sweep_many(
    tree: &Dendrogram,
    signals: &[ExternalSignal],
    policy: ThresholdPolicy,
    exec: Execution,
) -> Vec<Result<Vec<SweepPoint>>> {
    exec.map_range(signals.len(), |i| {
        mse_sweep(tree, &signals[i], policy, Execution::Sequential)
    })
}

/// 1-based positions `i` with a change between points `i` and `i + 1`.
pub fn extract_breakpoints(fit: &PiecewiseFit) -> Vec<usize> {
    fit.fitted
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > BREAK_TOLERANCE)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Segment listing such as `1 -- 8, 9 -- 12, 13 -- 15`.
pub fn format_segments(n: usize, breakpoints: &[usize]) -> String {
    let mut parts = Vec::with_capacity(breakpoints.len() + 1);
    let mut start = 1;
    for &b in breakpoints.iter().chain(std::iter::once(&n)) {
        parts.push(format!("{start} -- {b}"));
        start = b + 1;
    }
    parts.join(", ")
}

/// Text table with one `name | segments` row per fit.
pub fn breakpoint_table(rows: &[(String, &PiecewiseFit)]) -> String {
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, fit) in rows {
        let bps = extract_breakpoints(fit);
        let _ = writeln!(
            out,
            "{name:<width$} | {}",
            format_segments(fit.fitted.len(), &bps)
        );
    }
    out
}
