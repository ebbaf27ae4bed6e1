//! Confidence statements read off the DP by-products: disjoint intervals
//! that localize every change-point of every minimal-jump feasible fit,
//! and a per-sample band containing all their graphs.
//!
//! With `prefix_jumps` from stage 1, `R_k` is the last prefix coverable
//! with at most `k - 1` jumps, so every feasible fit places its k-th jump
//! at or before boundary `R_k + 1`; `L_k` is the smallest start keeping
//! `[., R_k]` feasible. Between consecutive intervals every feasible fit
//! is constant, which yields the band's gap pieces; inside an interval the
//! band takes the union of the two windows that flank the uncertain jump.

use crate::expfam::ExpFamily;
use crate::segdp::{self, FitConfig, QuantileFit, SegmentDomain, StepFit};
use crate::{Error, Result};

/// Inclusive range of 0-based boundary indices containing one jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpInterval {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub k_hat: usize,
    /// One interval per fitted jump, pairwise disjoint, sorted.
    pub jump_intervals: Vec<JumpInterval>,
    /// Per-sample `(lower, upper)` in mean-parameter space (data space for
    /// quantile fits). Infinite endpoints mean unbounded.
    pub band: Vec<(f64, f64)>,
    pub q: f64,
    /// Significance level behind `q`, when it came from a null table.
    pub alpha: Option<f64>,
}

/// Jump intervals of a fitted step function (no data access needed).
pub fn fit_jump_intervals(fit: &StepFit) -> Vec<JumpInterval> {
    intervals_core(&fit.prefix_jumps, &fit.r_min)
}

fn intervals_core(prefix_jumps: &[usize], r_min: &[usize]) -> Vec<JumpInterval> {
    let k_hat = *prefix_jumps.last().expect("nonempty prefix table");
    let mut out = Vec::with_capacity(k_hat);
    let mut prev_right = 0usize;
    for k in 1..=k_hat {
        // Last prefix coverable with at most k-1 jumps (prefix_jumps is
        // non-decreasing with unit increments).
        let r_k = prefix_jumps.partition_point(|&j| j <= k - 1) - 1;
        let right = r_k + 1;
        let a_min = r_min[r_k];
        // Disjointness clip: a minimal fit's k-th jump provably lands
        // beyond the (k-1)-th interval.
        let left = (a_min + 1).max(prev_right + 1);
        debug_assert!(left <= right);
        out.push(JumpInterval { left, right });
        prev_right = right;
    }
    out
}

/// Intersection of feasible value sets over every scanned sub-interval of
/// `[a, b]`.
fn window_bounds<D: SegmentDomain>(dom: &mut D, a: usize, b: usize) -> (f64, f64) {
    segdp::stretch_scan(dom, a, b).col[0]
}

/// Raw-band assembly in the domain's value space. Between intervals every
/// feasible fit is constant on the gap, so one window bound covers it;
/// inside interval k, sample i sits in segment k (bounded through
/// `[L_k, i]`) or segment k+1 (through `[i, R_k]`), and the band takes the
/// union. Empty window bounds are `(+inf, -inf)` and drop out of the
/// min/max automatically; at least one side is always nonempty.
fn assemble_band<D: SegmentDomain>(dom: &mut D, n: usize, ivs: &[JumpInterval]) -> Vec<(f64, f64)> {
    let k_hat = ivs.len();
    let mut band = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    for k in 0..=k_hat {
        // Gap after interval k (before interval k+1): samples on which
        // every feasible fit is inside its segment k+1.
        let a = if k == 0 { 0 } else { ivs[k - 1].right };
        let b = if k == k_hat {
            Some(n - 1)
        } else {
            ivs[k].left.checked_sub(2)
        };
        if let Some(b) = b {
            if a <= b {
                let iv = window_bounds(dom, a, b);
                debug_assert!(!dom.is_empty(iv.0, iv.1));
                for slot in band.iter_mut().take(b + 1).skip(a) {
                    *slot = iv;
                }
            }
        }
    }
    for iv in ivs {
        let (a, b) = (iv.left - 1, iv.right - 1);
        let scan = segdp::stretch_scan(dom, a, b);
        for i in a..=b {
            let row = scan.row[i - a]; // bounds over [a, i]
            let col = scan.col[i - a]; // bounds over [i, b]
            let merged = (row.0.min(col.0), row.1.max(col.1));
            debug_assert!(!dom.is_empty(merged.0, merged.1));
            band[i] = merged;
        }
    }
    band
}

fn mean_space(family: &ExpFamily, raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let (mlo, mhi) = family.mean_domain();
    raw.into_iter()
        .map(|(lo, hi)| {
            let l = if lo == f64::NEG_INFINITY {
                mlo
            } else {
                family.mean(lo)
            };
            let h = if hi == f64::INFINITY {
                mhi
            } else {
                family.mean(hi)
            };
            (l, h)
        })
        .collect()
}

/// Confidence region of a step fit: jump intervals plus a mean-space band.
/// `cfg` must be the configuration the fit was produced with.
pub fn confidence_region(
    y: &[f64],
    cfg: &FitConfig,
    fit: &StepFit,
    alpha: Option<f64>,
) -> Result<ConfidenceRegion> {
    let n = y.len();
    if fit.step.n() != n {
        return Err(Error::InvalidInput(format!(
            "fit covers {} samples but the series has {n}",
            fit.step.n()
        )));
    }
    let ivs = intervals_core(&fit.prefix_jumps, &fit.r_min);
    let mut dom = segdp::domain_for(y, cfg, fit)?;
    let raw = assemble_band(&mut dom, n, &ivs);
    let band = if matches!(cfg.family, ExpFamily::GaussMean { .. }) {
        raw // the Gaussian domain already works in mean space
    } else {
        mean_space(&cfg.family, raw)
    };
    debug_assert!(fit
        .step
        .boundaries()
        .iter()
        .skip(1)
        .zip(&ivs)
        .all(|(&b, iv)| iv.left <= b && b <= iv.right));
    Ok(ConfidenceRegion {
        k_hat: fit.k_hat,
        jump_intervals: ivs,
        band,
        q: fit.q_used,
        alpha,
    })
}

/// Confidence region of a quantile fit; the band lives in data space and
/// its upper endpoints are exclusive (half-open value sets).
pub fn quantile_confidence_region(
    y: &[f64],
    fit: &QuantileFit,
    alpha: Option<f64>,
) -> Result<ConfidenceRegion> {
    let n = y.len();
    if fit.n != n {
        return Err(Error::InvalidInput(format!(
            "fit covers {} samples but the series has {n}",
            fit.n
        )));
    }
    let ivs = intervals_core(&fit.prefix_jumps, &fit.r_min);
    let mut dom = segdp::quantile_domain_for(y, fit)?;
    let band = assemble_band(&mut dom, n, &ivs);
    Ok(ConfidenceRegion {
        k_hat: fit.k_hat,
        jump_intervals: ivs,
        band,
        q: fit.q_used,
        alpha,
    })
}
