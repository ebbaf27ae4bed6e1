//! One-parameter exponential families in natural form.
//!
//! Densities are `f_theta(x) = exp(theta * x - psi(theta))` relative to a
//! fixed base measure. Everything the segmentation machinery needs reduces
//! to the cumulant `psi`, its derivatives, the convex conjugate `phi`, and
//! the pointwise divergence `J(x, theta) = phi(x) - (theta * x -
//! psi(theta))`, which is the per-observation log likelihood ratio between
//! the maximum-likelihood fit at `x` and the parameter `theta`.

use crate::{Error, Result};

/// Supported one-parameter exponential families.
///
/// `GaussVariance` models centered Gaussian data observed through the
/// squares `z = y^2`; its natural parameter is `theta = -1/(2 sigma^2) < 0`
/// and its mean parameter is the variance `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpFamily {
    /// Gaussian mean with known standard deviation; `theta = mu / sigma^2`.
    GaussMean { sigma: f64 },
    /// Variance of a centered Gaussian via squared observations.
    GaussVariance,
    /// Poisson counts; `theta = log(mu)`.
    Poisson,
    /// Bernoulli; `theta = log(p / (1 - p))`.
    Bernoulli,
}

/// Closed interval of natural-parameter values; `lower > upper` encodes the
/// empty set. Endpoints may be infinite when the constraint is one-sided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ValueInterval {
    pub const EMPTY: ValueInterval = ValueInterval {
        lower: f64::INFINITY,
        upper: f64::NEG_INFINITY,
    };
    pub const FULL: ValueInterval = ValueInterval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn intersect(&self, other: &ValueInterval) -> ValueInterval {
        ValueInterval {
            lower: self.lower.max(other.lower),
            upper: self.upper.min(other.upper),
        }
    }
}

/// Arguments of the local likelihood-ratio statistic on one interval.
#[derive(Debug, Clone, Copy)]
pub struct LocalStatInput {
    /// Sample mean of the observations on the interval.
    pub sample_mean: f64,
    /// Number of observations on the interval.
    pub count: usize,
    /// Natural parameter under test.
    pub theta0: f64,
}

// Sublevel endpoints are accepted once their divergence matches the
// threshold this tightly (relative). A width test alone would not do:
// near a finite domain endpoint (variance regression as theta -> 0) the
// root can sit at ~1e-14 where any absolute-plus-relative width looks
// converged while the divergence is still visibly off.
const ROOT_RESIDUAL_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;
// Bracket expansion halves the gap to a finite domain endpoint, so steep
// thresholds need many doublings; iterations are single J evaluations.
const EXPAND_MAX_ITER: usize = 20_000;

impl ExpFamily {
    pub fn gauss_mean(sigma: f64) -> Result<ExpFamily> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma must be a positive finite number, got {sigma}"
            )));
        }
        Ok(ExpFamily::GaussMean { sigma })
    }

    /// Open natural-parameter domain.
    pub fn theta_domain(&self) -> (f64, f64) {
        match self {
            ExpFamily::GaussVariance => (f64::NEG_INFINITY, 0.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Closure of the mean domain; sample means always land here.
    pub fn mean_domain(&self) -> (f64, f64) {
        match self {
            ExpFamily::GaussMean { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ExpFamily::GaussVariance | ExpFamily::Poisson => (0.0, f64::INFINITY),
            ExpFamily::Bernoulli => (0.0, 1.0),
        }
    }

    /// Cumulant (log partition) function `psi(theta)`.
    pub fn cumulant(&self, theta: f64) -> f64 {
        match self {
            ExpFamily::GaussMean { sigma } => 0.5 * sigma * sigma * theta * theta,
            ExpFamily::GaussVariance => -0.5 * (-2.0 * theta).ln(),
            ExpFamily::Poisson => theta.exp(),
            // log(1 + e^theta), evaluated without overflow.
            ExpFamily::Bernoulli => {
                if theta > 0.0 {
                    theta + (-theta).exp().ln_1p()
                } else {
                    theta.exp().ln_1p()
                }
            }
        }
    }

    /// Mean function `m(theta) = psi'(theta)`; strictly increasing.
    pub fn mean(&self, theta: f64) -> f64 {
        match self {
            ExpFamily::GaussMean { sigma } => sigma * sigma * theta,
            ExpFamily::GaussVariance => -0.5 / theta,
            ExpFamily::Poisson => theta.exp(),
            ExpFamily::Bernoulli => {
                if theta >= 0.0 {
                    1.0 / (1.0 + (-theta).exp())
                } else {
                    let e = theta.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Variance function `v(theta) = psi''(theta) > 0`.
    pub fn variance(&self, theta: f64) -> f64 {
        match self {
            ExpFamily::GaussMean { sigma } => sigma * sigma,
            ExpFamily::GaussVariance => 0.5 / (theta * theta),
            ExpFamily::Poisson => theta.exp(),
            ExpFamily::Bernoulli => {
                let p = self.mean(theta);
                p * (1.0 - p)
            }
        }
    }

    /// Inverse mean function. Boundary means map to the infinite endpoints
    /// of the natural domain (for example a Poisson mean of zero gives
    /// negative infinity). Errors outside the closed mean domain.
    pub fn mean_inverse(&self, mean: f64) -> Result<f64> {
        let (lo, hi) = self.mean_domain();
        if !(mean >= lo && mean <= hi) {
            return Err(Error::InvalidInput(format!(
                "mean {mean} outside the mean domain [{lo}, {hi}]"
            )));
        }
        Ok(match self {
            ExpFamily::GaussMean { sigma } => mean / (sigma * sigma),
            ExpFamily::GaussVariance => {
                if mean == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -0.5 / mean
                }
            }
            ExpFamily::Poisson => {
                if mean == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    mean.ln()
                }
            }
            ExpFamily::Bernoulli => {
                if mean == 0.0 {
                    f64::NEG_INFINITY
                } else if mean == 1.0 {
                    f64::INFINITY
                } else {
                    (mean / (1.0 - mean)).ln()
                }
            }
        })
    }

    /// Convex conjugate `phi(x) = sup_theta (theta * x - psi(theta))`.
    ///
    /// Boundary conventions follow the limits of the defining supremum:
    /// `phi(0) = 0` for Poisson, `phi(0) = phi(1) = 0` for Bernoulli, and
    /// `phi(0) = +inf` for the variance family (squared data of exactly
    /// zero carries unbounded evidence against every positive variance).
    pub fn conjugate(&self, x: f64) -> f64 {
        match self {
            ExpFamily::GaussMean { sigma } => 0.5 * x * x / (sigma * sigma),
            ExpFamily::GaussVariance => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    -0.5 - 0.5 * x.ln()
                }
            }
            ExpFamily::Poisson => xlogx(x) - x,
            ExpFamily::Bernoulli => xlogx(x) + xlogx(1.0 - x),
        }
    }

    /// Pointwise divergence `J(x, theta) = phi(x) - (theta * x -
    /// psi(theta)) >= 0`, zero exactly when `m(theta) = x`. Computed from
    /// per-family closed forms for numerical stability.
    pub fn divergence(&self, x: f64, theta: f64) -> f64 {
        match self {
            ExpFamily::GaussMean { sigma } => {
                let d = x - sigma * sigma * theta;
                0.5 * d * d / (sigma * sigma)
            }
            ExpFamily::GaussVariance => {
                if x == 0.0 {
                    return f64::INFINITY;
                }
                // u = x / m(theta); J = (u - ln u - 1) / 2.
                let u = -2.0 * theta * x;
                0.5 * (u - u.ln() - 1.0)
            }
            ExpFamily::Poisson => {
                let mu = theta.exp();
                if x == 0.0 {
                    mu
                } else {
                    x * (x.ln() - theta) + mu - x
                }
            }
            ExpFamily::Bernoulli => {
                // Degenerate candidates (all-zero / all-one segments) sit at
                // the boundary of the natural parameter space.
                if theta == f64::NEG_INFINITY {
                    return if x == 0.0 { 0.0 } else { f64::INFINITY };
                }
                if theta == f64::INFINITY {
                    return if x == 1.0 { 0.0 } else { f64::INFINITY };
                }
                // x ln(x/p) + (1-x) ln((1-x)/(1-p)) in the natural form
                // x*ln x + (1-x)*ln(1-x) - theta*x + psi(theta).
                xlogx(x) + xlogx(1.0 - x) - theta * x + self.cumulant(theta)
            }
        }
    }

    /// Kullback-Leibler divergence between family members,
    /// `D(theta || theta2) = psi(theta2) - psi(theta) - (theta2 - theta) *
    /// m(theta)`.
    pub fn kl_divergence(&self, theta: f64, theta2: f64) -> f64 {
        self.cumulant(theta2) - self.cumulant(theta) - (theta2 - theta) * self.mean(theta)
    }

    /// Local likelihood-ratio statistic `T = count * J(sample_mean,
    /// theta0)` for one interval.
    pub fn local_stat(&self, input: &LocalStatInput) -> Result<f64> {
        if input.count == 0 {
            return Err(Error::InvalidInput("local statistic needs count >= 1".into()));
        }
        let (lo, hi) = self.mean_domain();
        if !(input.sample_mean >= lo && input.sample_mean <= hi) {
            return Err(Error::InvalidInput(format!(
                "sample mean {} outside the mean domain [{lo}, {hi}]",
                input.sample_mean
            )));
        }
        Ok(input.count as f64 * self.divergence(input.sample_mean, input.theta0))
    }

    /// Sublevel set `{ theta : J(sample_mean, theta) <= threshold }` as a
    /// natural-parameter interval. `J` is convex in `theta` with a unique
    /// minimum of zero at `m^{-1}(sample_mean)`, so the set is an interval;
    /// it is one-sided when the sample mean sits on the mean-domain
    /// boundary, and empty when no parameter reaches the threshold (for
    /// example variance data with sample mean zero).
    pub fn feasible_interval(
        &self,
        sample_mean: f64,
        count: usize,
        threshold: f64,
    ) -> Result<ValueInterval> {
        if count == 0 {
            return Err(Error::InvalidInput("feasible interval needs count >= 1".into()));
        }
        let (mlo, mhi) = self.mean_domain();
        if !(sample_mean >= mlo && sample_mean <= mhi) {
            return Err(Error::InvalidInput(format!(
                "sample mean {sample_mean} outside the mean domain [{mlo}, {mhi}]"
            )));
        }
        if !threshold.is_finite() && threshold > 0.0 {
            return Ok(ValueInterval::FULL);
        }
        if threshold.is_nan() || threshold < 0.0 {
            return Ok(ValueInterval::EMPTY);
        }

        // Known closed form: |x - sigma^2 theta| <= sigma sqrt(2 t).
        if let ExpFamily::GaussMean { sigma } = self {
            let hw = (2.0 * threshold).sqrt() * sigma;
            return Ok(ValueInterval {
                lower: (sample_mean - hw) / (sigma * sigma),
                upper: (sample_mean + hw) / (sigma * sigma),
            });
        }

        let (dlo, dhi) = self.theta_domain();
        match self {
            ExpFamily::GaussVariance if sample_mean == 0.0 => Ok(ValueInterval::EMPTY),
            ExpFamily::Poisson if sample_mean == 0.0 => {
                // J(0, theta) = e^theta <= t  <=>  theta <= ln t.
                if threshold == 0.0 {
                    Ok(ValueInterval::EMPTY)
                } else {
                    Ok(ValueInterval {
                        lower: f64::NEG_INFINITY,
                        upper: threshold.ln(),
                    })
                }
            }
            ExpFamily::Bernoulli if sample_mean == 0.0 => {
                // J(0, theta) = ln(1 + e^theta) <= t  <=>  theta <= ln(e^t - 1).
                if threshold == 0.0 {
                    Ok(ValueInterval::EMPTY)
                } else {
                    Ok(ValueInterval {
                        lower: f64::NEG_INFINITY,
                        upper: threshold.exp_m1().ln(),
                    })
                }
            }
            ExpFamily::Bernoulli if sample_mean == 1.0 => {
                // Mirror image of the zero-mean case.
                if threshold == 0.0 {
                    Ok(ValueInterval::EMPTY)
                } else {
                    Ok(ValueInterval {
                        lower: -threshold.exp_m1().ln(),
                        upper: f64::INFINITY,
                    })
                }
            }
            _ => {
                let center = self.mean_inverse(sample_mean)?;
                if threshold == 0.0 {
                    return Ok(ValueInterval {
                        lower: center,
                        upper: center,
                    });
                }
                let lower = self.solve_sublevel(sample_mean, threshold, center, dlo);
                let upper = self.solve_sublevel(sample_mean, threshold, center, dhi);
                Ok(ValueInterval { lower, upper })
            }
        }
    }

    /// Root of `J(x, .) = threshold` between `center` (where `J = 0`) and
    /// the domain endpoint `limit`: bracket expansion, then Newton kept
    /// inside the bracket (J is convex in theta, so Newton from the
    /// infeasible end converges monotonically; bisection is the fallback).
    fn solve_sublevel(&self, x: f64, threshold: f64, center: f64, limit: f64) -> f64 {
        // First probe at the Gaussian-approximation halfwidth, which lands
        // near the root; J tends to +inf at both domain endpoints (for
        // interior x), so the expansion terminates.
        let v = self.variance(center);
        let mut step = if v.is_finite() && v > 0.0 {
            (2.0 * threshold / v).sqrt()
        } else {
            1.0
        };
        if !(step.is_finite() && step > 0.0) {
            step = 1.0;
        }
        let mut inner = center;
        let mut outer;
        let mut iter = 0;
        loop {
            outer = if limit.is_infinite() {
                center + limit.signum() * step
            } else {
                // Never probe past a finite endpoint.
                let probe = center + (limit - center).signum() * step;
                if (probe - center).abs() >= (limit - center).abs() {
                    0.5 * (inner + limit)
                } else {
                    probe
                }
            };
            if self.divergence(x, outer) > threshold {
                break;
            }
            inner = outer;
            step *= 2.0;
            iter += 1;
            if iter > EXPAND_MAX_ITER {
                return limit;
            }
        }

        // inner is feasible (J <= t), outer is not; Newton from the
        // infeasible end, clipped into the shrinking bracket.
        let mut root = outer;
        for _ in 0..ROOT_MAX_ITER {
            let g = self.divergence(x, root) - threshold;
            if g <= 0.0 {
                inner = root;
            } else {
                outer = root;
            }
            if g.abs() <= ROOT_RESIDUAL_TOL * (1.0 + threshold) {
                break;
            }
            // Adjacent floats: no tighter residual is attainable.
            if (outer - inner).abs() <= f64::EPSILON * inner.abs().min(outer.abs()) {
                break;
            }
            let d = self.mean(root) - x;
            let mut next = if d != 0.0 { root - g / d } else { f64::NAN };
            let (blo, bhi) = if inner <= outer {
                (inner, outer)
            } else {
                (outer, inner)
            };
            if !(next.is_finite() && next > blo && next < bhi) {
                next = 0.5 * (inner + outer);
            }
            if next == root {
                break;
            }
            root = next;
        }
        root
    }
}

/// `x ln x` extended continuously by zero at `x = 0`.
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
