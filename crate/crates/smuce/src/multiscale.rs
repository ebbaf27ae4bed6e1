//! Step-function candidates, scale penalties, and the multiscale statistic.
//!
//! The statistic scans every sub-interval on which a candidate step function
//! is constant, computes the local likelihood-ratio statistic `T = len *
//! J(mean, theta)` there, and aggregates over scales after a per-length
//! calibration. Large values mean some interval contradicts the candidate.

use crate::expfam::ExpFamily;
use crate::{Error, Result};

/// Per-length calibration applied to the local statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// `sqrt(2 T) - sqrt(2 log(e n / len))`; the default, with a
    /// nondegenerate limit distribution.
    SqrtCalibrated,
    /// `(T - 2 log(n / len)) / log log(e^e n / len)`.
    LogLogCalibrated,
    /// Raw maximum of `T` over qualifying intervals.
    Uncalibrated,
}

impl PenaltyMode {
    /// Stable token used in cache headers, file names, and the CLI.
    pub fn token(&self) -> &'static str {
        match self {
            PenaltyMode::SqrtCalibrated => "sqrt",
            PenaltyMode::LogLogCalibrated => "loglog",
            PenaltyMode::Uncalibrated => "uncalibrated",
        }
    }

    pub fn from_token(s: &str) -> Result<PenaltyMode> {
        match s {
            "sqrt" => Ok(PenaltyMode::SqrtCalibrated),
            "loglog" => Ok(PenaltyMode::LogLogCalibrated),
            "uncalibrated" => Ok(PenaltyMode::Uncalibrated),
            _ => Err(Error::InvalidInput(format!("unknown penalty mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Calibration terms for one interval length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyTerm {
    /// Subtracted from `sqrt(2 T)`.
    Sqrt(f64),
    /// `T` is shifted by `offset` and divided by `divisor`.
    LogLog { offset: f64, divisor: f64 },
    Uncalibrated,
}

/// Scale penalty for intervals of length `len` out of `n` observations.
pub fn penalty(len: usize, n: usize, mode: PenaltyMode) -> PenaltyTerm {
    match mode {
        PenaltyMode::SqrtCalibrated => PenaltyTerm::Sqrt(sqrt_penalty(len, n)),
        PenaltyMode::LogLogCalibrated => {
            let ratio = n as f64 / len as f64;
            PenaltyTerm::LogLog {
                offset: 2.0 * ratio.ln(),
                // log log(e^e n / len) = log(e + log(n / len)).
                divisor: (std::f64::consts::E + ratio.ln()).ln(),
            }
        }
        PenaltyMode::Uncalibrated => PenaltyTerm::Uncalibrated,
    }
}

/// `sqrt(2 log(e n / len))`, the default calibration term.
pub fn sqrt_penalty(len: usize, n: usize) -> f64 {
    (2.0 * (1.0 + (n as f64 / len as f64).ln())).sqrt()
}

/// Calibrated value of a local statistic `t` on an interval of length `len`.
pub(crate) fn calibrate(t: f64, len: usize, n: usize, mode: PenaltyMode) -> f64 {
    match mode {
        PenaltyMode::SqrtCalibrated => (2.0 * t).sqrt() - sqrt_penalty(len, n),
        PenaltyMode::LogLogCalibrated => {
            let ratio = n as f64 / len as f64;
            (t - 2.0 * ratio.ln()) / (std::f64::consts::E + ratio.ln()).ln()
        }
        PenaltyMode::Uncalibrated => t,
    }
}

/// Shortest interval length the statistic scans: `ceil(min_scale * n)`,
/// at least 1.
pub fn min_len(min_scale: f64, n: usize) -> Result<usize> {
    if !(min_scale.is_finite() && min_scale > 0.0 && min_scale <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "min_scale must lie in (0, 1], got {min_scale}"
        )));
    }
    Ok(((min_scale * n as f64).ceil() as usize).max(1))
}

/// Right-continuous step function on `0..n`, stored as segment starts and
/// per-segment natural-parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    n: usize,
    /// Strictly increasing segment starts; always begins with 0.
    boundaries: Vec<usize>,
    /// One natural-parameter value per segment. Values on the boundary of
    /// the natural domain (for example a Poisson segment whose samples are
    /// all zero) are stored as infinities.
    values: Vec<f64>,
}

impl StepFunction {
    /// Validating constructor: boundaries strictly increasing starting at 0
    /// and below `n`, values non-NaN, adjacent values distinct.
    pub fn new(n: usize, boundaries: Vec<usize>, values: Vec<f64>) -> Result<StepFunction> {
        let f = StepFunction::new_unchecked(n, boundaries, values)?;
        for w in f.values.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(
                    "adjacent segments carry equal values; merge them".into(),
                ));
            }
        }
        Ok(f)
    }

    /// Constructor without the adjacent-distinctness check, for callers
    /// that build refinements or test candidates.
    pub fn new_unchecked(n: usize, boundaries: Vec<usize>, values: Vec<f64>) -> Result<StepFunction> {
        if n == 0 {
            return Err(Error::InvalidInput("step function needs n >= 1".into()));
        }
        if boundaries.first() != Some(&0) {
            return Err(Error::InvalidInput("first boundary must be 0".into()));
        }
        if boundaries.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} boundaries vs {} values",
                boundaries.len(),
                values.len()
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) || *boundaries.last().unwrap() >= n {
            return Err(Error::InvalidInput(
                "boundaries must increase strictly and stay below n".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("segment values must not be NaN".into()));
        }
        Ok(StepFunction {
            n,
            boundaries,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of jumps (segments minus one).
    pub fn jumps(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Segment starts, beginning with 0.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Natural-parameter values, one per segment.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Half-open sample ranges `(start, end)` of each segment.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.boundaries.len()).map(move |k| {
            let start = self.boundaries[k];
            let end = if k + 1 < self.boundaries.len() {
                self.boundaries[k + 1]
            } else {
                self.n
            };
            (start, end, self.values[k])
        })
    }

    /// Value at sample index `i`.
    pub fn value_at(&self, i: usize) -> f64 {
        let k = match self.boundaries.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        self.values[k]
    }
}

fn validate_series(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "series value at index {i} is not finite"
        )));
    }
    Ok(())
}

/// Multiscale statistic of `candidate` on data `y`: the maximum calibrated
/// local statistic over all intervals of length at least `ceil(min_scale*n)`
/// on which the candidate is constant. Returns negative infinity when no
/// interval qualifies.
pub fn multiscale_stat(
    y: &[f64],
    family: &ExpFamily,
    candidate: &StepFunction,
    min_scale: f64,
    mode: PenaltyMode,
) -> Result<f64> {
    validate_series(y)?;
    let n = y.len();
    if candidate.n() != n {
        return Err(Error::InvalidInput(format!(
            "candidate is defined on {} samples but the series has {n}",
            candidate.n()
        )));
    }
    let (mlo, mhi) = family.mean_domain();
    if y.iter().any(|&v| v < mlo || v > mhi) {
        return Err(Error::InvalidInput(
            "series leaves the family's mean domain".into(),
        ));
    }
    let ml = min_len(min_scale, n)?;

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in y {
        prefix.push(prefix.last().unwrap() + v);
    }

    let mut best = f64::NEG_INFINITY;
    for (start, end, theta) in candidate.segments() {
        for i in start..end {
            for j in (i + ml - 1)..end {
                let len = j - i + 1;
                let mean = (prefix[j + 1] - prefix[i]) / len as f64;
                let t = len as f64 * family.divergence(mean, theta);
                let val = calibrate(t, len, n, mode);
                if val > best {
                    best = val;
                }
            }
        }
    }
    Ok(best)
}

/// Scale of a partial sum of `count` consecutive observations under a
/// Gaussian moving-average dependence of order one with innovation standard
/// deviation `sigma` and coefficient `ma_beta`:
/// `sigma^2 (count (1 + beta^2) + (count - 1) beta)`.
pub fn ma1_local_scale(count: usize, sigma: f64, ma_beta: f64) -> f64 {
    let c = count as f64;
    sigma * sigma * (c * (1.0 + ma_beta * ma_beta) + (c - 1.0) * ma_beta)
}

/// Multiscale statistic for Gaussian mean regression with MA(1) errors,
/// square-root calibration only: the local statistic replaces `len` by the
/// dependence-adjusted partial-sum variance.
pub fn multiscale_stat_ma1(
    y: &[f64],
    sigma: f64,
    ma_beta: f64,
    candidate: &StepFunction,
    min_scale: f64,
) -> Result<f64> {
    validate_series(y)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    if !(ma_beta.is_finite() && ma_beta.abs() < 1.0) {
        return Err(Error::InvalidInput(format!(
            "ma_beta must lie in (-1, 1), got {ma_beta}"
        )));
    }
    let n = y.len();
    if candidate.n() != n {
        return Err(Error::InvalidInput(format!(
            "candidate is defined on {} samples but the series has {n}",
            candidate.n()
        )));
    }
    let ml = min_len(min_scale, n)?;

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in y {
        prefix.push(prefix.last().unwrap() + v);
    }
    let scale: Vec<f64> = (0..=n).map(|len| ma1_local_scale(len, sigma, ma_beta)).collect();

    let mut best = f64::NEG_INFINITY;
    for (start, end, theta) in candidate.segments() {
        let mu = sigma * sigma * theta;
        for i in start..end {
            for j in (i + ml - 1)..end {
                let len = j - i + 1;
                let dev = (prefix[j + 1] - prefix[i]) - len as f64 * mu;
                let val = dev.abs() / scale[len].sqrt() - sqrt_penalty(len, n);
                if val > best {
                    best = val;
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::ExpFamily;

    fn gauss() -> ExpFamily {
        ExpFamily::GaussMean { sigma: 1.0 }
    }

    #[test]
    fn penalty_examples() {
        // Full-length interval: sqrt(2 log e) = sqrt 2.
        assert!((sqrt_penalty(8, 8) - 2.0f64.sqrt()).abs() < 1e-15);
        // len = n / e makes the penalty exactly 2.
        let n = 27183;
        let len = 10000;
        assert!((sqrt_penalty(len, n) - 2.0).abs() < 1e-4);
        match penalty(8, 8, PenaltyMode::LogLogCalibrated) {
            PenaltyTerm::LogLog { offset, divisor } => {
                assert!(offset.abs() < 1e-15);
                assert!((divisor - 1.0).abs() < 1e-15);
            }
            _ => panic!("wrong penalty term"),
        }
        assert_eq!(penalty(3, 8, PenaltyMode::Uncalibrated), PenaltyTerm::Uncalibrated);
    }

    #[test]
    fn min_len_rounding() {
        assert_eq!(min_len(1.0 / 7.0, 7).unwrap(), 1);
        assert_eq!(min_len(0.15, 7).unwrap(), 2); // ceil(1.05)
        assert_eq!(min_len(1.0, 7).unwrap(), 7);
        assert!(min_len(0.0, 7).is_err());
        assert!(min_len(1.1, 7).is_err());
    }

    #[test]
    fn step_function_validation() {
        assert!(StepFunction::new(5, vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(StepFunction::new(5, vec![1, 2], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(5, vec![0, 2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(StepFunction::new(5, vec![0, 5], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(5, vec![0, 2], vec![1.0]).is_err());
        assert!(StepFunction::new(5, vec![0, 2], vec![1.0, 1.0]).is_err());
        assert!(StepFunction::new_unchecked(5, vec![0, 2], vec![1.0, 1.0]).is_ok());
        assert!(StepFunction::new(5, vec![0], vec![f64::NAN]).is_err());

        let f = StepFunction::new(6, vec![0, 2, 5], vec![1.0, -1.0, 3.0]).unwrap();
        assert_eq!(f.jumps(), 2);
        assert_eq!(f.value_at(0), 1.0);
        assert_eq!(f.value_at(1), 1.0);
        assert_eq!(f.value_at(2), -1.0);
        assert_eq!(f.value_at(4), -1.0);
        assert_eq!(f.value_at(5), 3.0);
        let segs: Vec<_> = f.segments().collect();
        assert_eq!(segs, vec![(0, 2, 1.0), (2, 5, -1.0), (5, 6, 3.0)]);
    }

    #[test]
    fn constant_candidate_on_constant_data() {
        // Every local statistic is zero, so the maximum is attained at the
        // cheapest scale: the full interval, value -sqrt 2.
        for n in [1, 4, 7] {
            let y = vec![2.5; n];
            let cand = StepFunction::new(n, vec![0], vec![2.5]).unwrap();
            let s = multiscale_stat(&y, &gauss(), &cand, 1.0 / n as f64, PenaltyMode::SqrtCalibrated)
                .unwrap();
            assert!((s + 2.0f64.sqrt()).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn matches_direct_enumeration() {
        // Independent oracle: enumerate all intervals with explicit
        // formulas, no shared code path.
        let y = [0.0, 0.0, 4.0, 4.0];
        let f = gauss();
        let cand = StepFunction::new_unchecked(4, vec![0], vec![0.0]).unwrap();
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..4 {
            for j in i..4 {
                let len = (j - i + 1) as f64;
                let mean: f64 = y[i..=j].iter().sum::<f64>() / len;
                let t = len * mean * mean / 2.0;
                let pen = (2.0 * (std::f64::consts::E * 4.0 / len).ln()).sqrt();
                oracle = oracle.max((2.0 * t).sqrt() - pen);
            }
        }
        let s = multiscale_stat(&y, &f, &cand, 0.25, PenaltyMode::SqrtCalibrated).unwrap();
        assert!((s - oracle).abs() < 1e-12);
        // The maximizer is the interval {2, 3}: |sum| / sqrt(len) = 8 /
        // sqrt 2 = sqrt 32, penalty sqrt(2 log 2e).
        let analytic = 32.0f64.sqrt() - (2.0 * (2.0 * std::f64::consts::E).ln()).sqrt();
        assert!((s - analytic).abs() < 1e-12);
    }

    #[test]
    fn respects_candidate_segments() {
        // A perfect two-segment candidate scores far below a constant one.
        let y = [0.0, 0.0, 4.0, 4.0];
        let f = gauss();
        let good = StepFunction::new(4, vec![0, 2], vec![0.0, 4.0]).unwrap();
        let bad = StepFunction::new_unchecked(4, vec![0], vec![2.0]).unwrap();
        let sg = multiscale_stat(&y, &f, &good, 0.25, PenaltyMode::SqrtCalibrated).unwrap();
        let sb = multiscale_stat(&y, &f, &bad, 0.25, PenaltyMode::SqrtCalibrated).unwrap();
        assert!(sg < 0.0);
        assert!(sb > sg + 2.0);
    }

    #[test]
    fn min_scale_restricts_intervals() {
        // Raising min_scale can only drop intervals, so the statistic is
        // non-increasing in min_scale.
        let y = [0.3, -0.2, 1.9, 2.2, -0.7, 0.4, 0.1, -1.3];
        let f = gauss();
        let cand = StepFunction::new_unchecked(8, vec![0], vec![0.2]).unwrap();
        let mut last = f64::INFINITY;
        for ml in 1..=8 {
            let s = multiscale_stat(&y, &f, &cand, ml as f64 / 8.0, PenaltyMode::SqrtCalibrated)
                .unwrap();
            assert!(s <= last + 1e-12);
            last = s;
        }
    }

    #[test]
    fn no_qualifying_interval_is_minus_infinity() {
        // min_scale = 1 with a two-segment candidate: no constancy interval
        // reaches length n.
        let y = [0.0, 0.0, 4.0, 4.0];
        let cand = StepFunction::new(4, vec![0, 2], vec![0.0, 4.0]).unwrap();
        let s = multiscale_stat(&y, &gauss(), &cand, 1.0, PenaltyMode::SqrtCalibrated).unwrap();
        assert_eq!(s, f64::NEG_INFINITY);
    }

    #[test]
    fn shift_invariance_gauss_mean() {
        let y = [0.4, -1.1, 0.9, 2.3, 0.0, -0.5];
        let f = gauss();
        let cand = StepFunction::new(6, vec![0, 3], vec![0.1, 1.0]).unwrap();
        let s1 = multiscale_stat(&y, &f, &cand, 1.0 / 6.0, PenaltyMode::SqrtCalibrated).unwrap();
        let c = 3.7;
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let cand2 = StepFunction::new(6, vec![0, 3], vec![0.1 + c, 1.0 + c]).unwrap();
        let s2 = multiscale_stat(&ys, &f, &cand2, 1.0 / 6.0, PenaltyMode::SqrtCalibrated).unwrap();
        assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn refinement_never_decreases_loglog_or_sqrt() {
        // Splitting a segment while keeping values only removes intervals
        // from the scan, so the statistic cannot increase.
        let y = [1.2, 0.8, 1.5, 0.2, 0.9, 1.1, 0.4, 0.6];
        let f = gauss();
        for mode in [
            PenaltyMode::SqrtCalibrated,
            PenaltyMode::LogLogCalibrated,
            PenaltyMode::Uncalibrated,
        ] {
            let coarse = StepFunction::new_unchecked(8, vec![0], vec![0.8]).unwrap();
            let fine = StepFunction::new_unchecked(8, vec![0, 4], vec![0.8, 0.8]).unwrap();
            let sc = multiscale_stat(&y, &f, &coarse, 1.0 / 8.0, mode).unwrap();
            let sf = multiscale_stat(&y, &f, &fine, 1.0 / 8.0, mode).unwrap();
            assert!(sf <= sc + 1e-12);
        }
    }

    #[test]
    fn ma1_scale_examples() {
        assert!((ma1_local_scale(1, 1.0, 0.3) - 1.09).abs() < 1e-12);
        assert!((ma1_local_scale(5, 1.0, 0.0) - 5.0).abs() < 1e-12);
        assert!((ma1_local_scale(3, 2.0, 0.3) - 15.48).abs() < 1e-12);
        // Positivity across the invertibility range.
        for count in 1..6 {
            for beta in [-0.99, -0.5, 0.0, 0.7, 0.99] {
                assert!(ma1_local_scale(count, 1.3, beta) > 0.0);
            }
        }
    }

    #[test]
    fn ma1_beta_zero_matches_standard() {
        let y = [0.4, -1.1, 0.9, 2.3, 0.0, -0.5, 1.7];
        let f = gauss();
        let cand = StepFunction::new(7, vec![0, 3], vec![0.1, 1.0]).unwrap();
        let s1 = multiscale_stat(&y, &f, &cand, 1.0 / 7.0, PenaltyMode::SqrtCalibrated).unwrap();
        let s2 = multiscale_stat_ma1(&y, 1.0, 0.0, &cand, 1.0 / 7.0).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ma1_rejects_bad_coefficient() {
        let y = [0.0, 1.0, 2.0];
        let cand = StepFunction::new(3, vec![0], vec![0.0]).unwrap();
        assert!(multiscale_stat_ma1(&y, 1.0, 1.0, &cand, 1.0 / 3.0).is_err());
        assert!(multiscale_stat_ma1(&y, 0.0, 0.3, &cand, 1.0 / 3.0).is_err());
    }

    #[test]
    fn rejects_domain_violations() {
        let cand = StepFunction::new(3, vec![0], vec![0.0]).unwrap();
        let r = multiscale_stat(
            &[1.0, -2.0, 0.5],
            &ExpFamily::Poisson,
            &cand,
            1.0 / 3.0,
            PenaltyMode::SqrtCalibrated,
        );
        assert!(r.is_err());
        let r = multiscale_stat(
            &[1.0, f64::NAN, 0.5],
            &gauss(),
            &cand,
            1.0 / 3.0,
            PenaltyMode::SqrtCalibrated,
        );
        assert!(r.is_err());
    }
}
