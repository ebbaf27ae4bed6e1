//! Series input, fit documents, and plot-ready band export.
//!
//! The on-disk formats are deliberately plain: single-column CSV for data,
//! JSON for fit documents, CSV again for the band export. Non-finite
//! numbers never appear in JSON; unbounded band endpoints and infinite
//! natural parameters are encoded as absent fields.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceRegion;
use crate::expfam::ExpFamily;
use crate::segdp::{QuantileFit, StepFit};
use crate::{Error, Result};

/// Reads a series from a single-column CSV file: one number per line,
/// optional `value` header, LF or CRLF endings.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_series(&text, &path.display().to_string())
}

/// [`read_series`] on in-memory text; `origin` names the source in errors.
pub fn parse_series(text: &str, origin: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let cell = raw.trim();
        if idx == 0 && cell.eq_ignore_ascii_case("value") {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg,
        };
        if cell.is_empty() {
            return Err(parse_err("empty line".to_string()));
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| parse_err(format!("expected a number, got {cell:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(format!("non-finite value {cell:?}")));
        }
        out.push(v);
    }
    if out.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "series needs at least 2 observations, got {}",
            out.len()
        )));
    }
    Ok(out)
}

/// Stable name of a family in documents and on the command line.
pub fn family_label(family: &ExpFamily) -> &'static str {
    match family {
        ExpFamily::GaussMean { .. } => "gauss-mean",
        ExpFamily::GaussVariance => "gauss-variance",
        ExpFamily::Poisson => "poisson",
        ExpFamily::Bernoulli => "bernoulli",
    }
}

/// One fitted segment, samples `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: usize,
    /// One past the last sample of the segment.
    pub end: usize,
    /// Fitted value in mean-parameter space (data space for quantile fits).
    pub value_mean: f64,
    /// Fitted natural parameter; absent when it sits at an infinite domain
    /// endpoint (boundary segments) and for quantile fits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value_theta: Option<f64>,
}

/// Inclusive range of 0-based boundary indices containing one jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub left: usize,
    pub right: usize,
}

/// Simultaneous band at one sample; absent endpoints mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub upper: Option<f64>,
}

/// Complete serialized result of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub tool: String,
    pub version: String,
    pub n: usize,
    pub family: String,
    /// Noise standard deviation (gauss-mean only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    /// Moving-average noise coefficient, when one was used.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ma_beta: Option<f64>,
    /// Quantile level (quantile fits only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quantile_level: Option<f64>,
    pub q: f64,
    /// Significance level behind `q`, when it was derived from one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    /// Human-readable origin of `q` (explicit value, table quantile, or
    /// automatic choice), including table seeds where applicable.
    pub provenance: String,
    pub k_hat: usize,
    pub achieved_stat: f64,
    pub segments: Vec<SegmentRecord>,
    pub jump_intervals: Vec<IntervalRecord>,
    pub band: Vec<BandRecord>,
}

fn interval_records(region: &ConfidenceRegion) -> Vec<IntervalRecord> {
    region
        .jump_intervals
        .iter()
        .map(|iv| IntervalRecord {
            left: iv.left,
            right: iv.right,
        })
        .collect()
}

fn band_records(region: &ConfidenceRegion) -> Vec<BandRecord> {
    region
        .band
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| BandRecord {
            index: i,
            lower: lo.is_finite().then_some(lo),
            upper: hi.is_finite().then_some(hi),
        })
        .collect()
}

impl FitDocument {
    /// Assembles a document from an exponential-family fit and its region.
    pub fn from_step_fit(
        family: &ExpFamily,
        ma_beta: Option<f64>,
        fit: &StepFit,
        region: &ConfidenceRegion,
        alpha: Option<f64>,
        provenance: String,
    ) -> FitDocument {
        let n = fit.step.n();
        let bounds = fit.step.boundaries();
        let segments = (0..bounds.len())
            .map(|k| {
                let theta = fit.step.values()[k];
                SegmentRecord {
                    start: bounds[k],
                    end: if k + 1 < bounds.len() {
                        bounds[k + 1]
                    } else {
                        n
                    },
                    value_mean: fit.values_mean[k],
                    value_theta: theta.is_finite().then_some(theta),
                }
            })
            .collect();
        FitDocument {
            tool: "smuce".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            n,
            family: family_label(family).to_string(),
            sigma: match family {
                ExpFamily::GaussMean { sigma } => Some(*sigma),
                _ => None,
            },
            ma_beta,
            quantile_level: None,
            q: fit.q_used,
            alpha,
            provenance,
            k_hat: fit.k_hat,
            achieved_stat: fit.achieved_stat,
            segments,
            jump_intervals: interval_records(region),
            band: band_records(region),
        }
    }

    /// Assembles a document from a quantile fit; values live in data space.
    pub fn from_quantile_fit(
        fit: &QuantileFit,
        region: &ConfidenceRegion,
        alpha: Option<f64>,
        provenance: String,
    ) -> FitDocument {
        let segments = (0..fit.boundaries.len())
            .map(|k| SegmentRecord {
                start: fit.boundaries[k],
                end: if k + 1 < fit.boundaries.len() {
                    fit.boundaries[k + 1]
                } else {
                    fit.n
                },
                value_mean: fit.values[k],
                value_theta: None,
            })
            .collect();
        FitDocument {
            tool: "smuce".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            n: fit.n,
            family: "quantile".to_string(),
            sigma: None,
            ma_beta: None,
            quantile_level: Some(fit.beta),
            q: fit.q_used,
            alpha,
            provenance,
            k_hat: fit.k_hat,
            achieved_stat: fit.achieved_stat,
            segments,
            jump_intervals: interval_records(region),
            band: band_records(region),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Io(format!("serializing fit document: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<FitDocument> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn read_from(path: &Path) -> Result<FitDocument> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        FitDocument::from_json(&text, &path.display().to_string())
    }

    /// Fitted mean-space value at sample `i`.
    pub fn fitted_mean(&self, i: usize) -> f64 {
        for seg in &self.segments {
            if i < seg.end {
                return seg.value_mean;
            }
        }
        f64::NAN
    }
}

fn csv_cell(v: Option<f64>) -> String {
    // Unbounded endpoints become empty cells, which plot as gaps.
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Writes the plot-ready export of a fit: columns `index, y, fit_mean,
/// band_lower, band_upper, jump_interval_flag`, one row per sample.
/// `jump_interval_flag` is 1 on samples a jump interval covers: the
/// interval of boundary indices `[l, r]` flags samples `l-1 ..= r-1`.
pub fn write_band_csv<W: Write>(doc: &FitDocument, y: &[f64], mut w: W) -> Result<()> {
    if y.len() != doc.n {
        return Err(Error::InvalidInput(format!(
            "fit document covers {} samples but the series has {}",
            doc.n,
            y.len()
        )));
    }
    if doc.band.len() != doc.n || doc.band.iter().enumerate().any(|(i, b)| b.index != i) {
        return Err(Error::InvalidInput(
            "fit document band is malformed".to_string(),
        ));
    }
    let io_err = |e: std::io::Error| Error::Io(format!("writing band export: {e}"));
    writeln!(w, "index,y,fit_mean,band_lower,band_upper,jump_interval_flag").map_err(io_err)?;
    for (i, &yi) in y.iter().enumerate() {
        let flagged = doc
            .jump_intervals
            .iter()
            .any(|iv| iv.left <= i + 1 && i + 1 <= iv.right);
        writeln!(
            w,
            "{i},{yi},{},{},{},{}",
            doc.fitted_mean(i),
            csv_cell(doc.band[i].lower),
            csv_cell(doc.band[i].upper),
            u8::from(flagged)
        )
        .map_err(io_err)?;
    }
    Ok(())
}
