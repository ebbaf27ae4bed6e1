//! Monte Carlo simulation of the null distribution of the multiscale
//! statistic, with quantile lookup and a plain-text cache format.
//!
//! Under the hypothesis of no change, the statistic of the true constant is
//! (asymptotically, and for Gaussian mean regression exactly) distributed
//! like the statistic of n independent standard normals against the
//! constant zero. Tables of that distribution convert significance levels
//! into thresholds.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::expfam::ExpFamily;
use crate::multiscale::{calibrate, min_len, PenaltyMode};
use crate::sampling;
use crate::{Error, Result};

/// Guard against accidental huge simulations: the sweep costs O(n^2) per
/// replicate, so n^2 * reps is the work unit bounded here.
const BUDGET: f64 = 1e11;

/// Simulation request. `family` switches from the default Gaussian driver
/// to exact finite-sample simulation of a specific family member.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Shortest scanned scale as a fraction of n; the table is only valid
    /// for fits using the same value.
    pub min_scale: f64,
    pub mode: PenaltyMode,
    /// Permit simulations beyond the built-in compute budget.
    pub force_budget: bool,
    /// Simulate observations from this family member instead of the
    /// Gaussian upper bound and evaluate its own local statistics.
    pub family: Option<(ExpFamily, f64)>,
}

impl SimOptions {
    pub fn new(n: usize, reps: usize, seed: u64) -> SimOptions {
        SimOptions {
            n,
            reps,
            seed,
            min_scale: 1.0 / n as f64,
            mode: PenaltyMode::SqrtCalibrated,
            force_budget: false,
            family: None,
        }
    }
}

/// Sorted Monte Carlo samples of the null statistic plus the metadata that
/// reproduces them.
#[derive(Debug, Clone)]
pub struct NullTable {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub min_scale: f64,
    pub mode: PenaltyMode,
    samples: Vec<f64>,
}

/// One replicate: the calibrated statistic of a fresh null series against
/// the true constant. Replicate r draws from stream r of the seeded
/// generator, so results do not depend on evaluation order.
fn replicate_stat(opts: &SimOptions, rep: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(rep);
    let n = opts.n;
    let ml = min_len(opts.min_scale, n)?;

    match &opts.family {
        None => {
            // Gaussian driver at mean zero: T = (sum)^2 / (2 len), so the
            // sqrt calibration is |sum|/sqrt(len) - penalty.
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            for _ in 0..n {
                let z = sampling::std_normal(&mut rng);
                prefix.push(prefix.last().unwrap() + z);
            }
            let mut best = f64::NEG_INFINITY;
            for i in 0..n {
                for j in (i + ml - 1)..n {
                    let len = j - i + 1;
                    let s = prefix[j + 1] - prefix[i];
                    let t = 0.5 * s * s / len as f64;
                    let val = calibrate(t, len, n, opts.mode);
                    if val > best {
                        best = val;
                    }
                }
            }
            Ok(best)
        }
        Some((family, theta0)) => {
            let y = draw_series(family, *theta0, n, &mut rng)?;
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            for &v in &y {
                prefix.push(prefix.last().unwrap() + v);
            }
            let mut best = f64::NEG_INFINITY;
            for i in 0..n {
                for j in (i + ml - 1)..n {
                    let len = j - i + 1;
                    let mean = (prefix[j + 1] - prefix[i]) / len as f64;
                    let t = len as f64 * family.divergence(mean, *theta0);
                    let val = calibrate(t, len, n, opts.mode);
                    if val > best {
                        best = val;
                    }
                }
            }
            Ok(best)
        }
    }
}

/// Draw `n` observations from the family member at natural parameter
/// `theta` (for the variance family this draws the squared observations).
pub(crate) fn draw_series(
    family: &ExpFamily,
    theta: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut y = Vec::with_capacity(n);
    match family {
        ExpFamily::GaussMean { sigma } => {
            let mu = sigma * sigma * theta;
            for _ in 0..n {
                y.push(mu + sigma * sampling::std_normal(rng));
            }
        }
        ExpFamily::GaussVariance => {
            if !(theta < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "variance family needs theta < 0, got {theta}"
                )));
            }
            let sd = (-0.5 / theta).sqrt();
            for _ in 0..n {
                let v = sd * sampling::std_normal(rng);
                y.push(v * v);
            }
        }
        ExpFamily::Poisson => {
            let mu = theta.exp();
            for _ in 0..n {
                y.push(sampling::poisson(rng, mu)? as f64);
            }
        }
        ExpFamily::Bernoulli => {
            let p = family.mean(theta);
            for _ in 0..n {
                y.push(if sampling::bernoulli(rng, p) { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(y)
}

/// Simulate the null distribution. Deterministic in (n, reps, seed,
/// min_scale, mode, family) regardless of thread count.
pub fn simulate_null(opts: &SimOptions) -> Result<NullTable> {
    if opts.n < 2 {
        return Err(Error::InvalidInput(format!("simulation needs n >= 2, got {}", opts.n)));
    }
    if opts.reps < 1 {
        return Err(Error::InvalidInput("simulation needs reps >= 1".into()));
    }
    let work = (opts.n as f64) * (opts.n as f64) * opts.reps as f64;
    if work > BUDGET && !opts.force_budget {
        return Err(Error::Budget(format!(
            "n^2 * reps = {work:.3e} exceeds {BUDGET:.0e}; pass the override to proceed"
        )));
    }
    min_len(opts.min_scale, opts.n)?;

    let mut samples = (0..opts.reps as u64)
        .into_par_iter()
        .map(|rep| replicate_stat(opts, rep))
        .collect::<Result<Vec<f64>>>()?;
    samples.sort_by(f64::total_cmp);
    Ok(NullTable {
        n: opts.n,
        reps: opts.reps,
        seed: opts.seed,
        min_scale: opts.min_scale,
        mode: opts.mode,
        samples,
    })
}

impl NullTable {
    /// Rebuild a table from already-sorted samples; used by the cache
    /// reader and by tests that inject synthetic tables.
    pub fn from_sorted_samples(
        n: usize,
        reps: usize,
        seed: u64,
        min_scale: f64,
        mode: PenaltyMode,
        samples: Vec<f64>,
    ) -> Result<NullTable> {
        if samples.len() != reps || reps == 0 {
            return Err(Error::InvalidInput(format!(
                "expected {reps} samples, got {}",
                samples.len()
            )));
        }
        if samples.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidInput("samples must be sorted ascending".into()));
        }
        Ok(NullTable {
            n,
            reps,
            seed,
            min_scale,
            mode,
            samples,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Order statistic at rank ceil(level * reps) (1-based, lower tie).
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "quantile level must lie in (0, 1), got {level}"
            )));
        }
        let rank = ((level * self.reps as f64).ceil() as usize).max(1);
        Ok(self.samples[rank - 1])
    }

    /// Fraction of samples at or above `q`.
    pub fn survival(&self, q: f64) -> f64 {
        let below = self.samples.partition_point(|s| *s < q);
        (self.reps - below) as f64 / self.reps as f64
    }

    /// Canonical cache file name for this table's metadata.
    pub fn cache_file_name(&self) -> String {
        format!(
            "smuce-null-n{}-r{}-s{}-c{}-m{}.txt",
            self.n, self.reps, self.seed, self.min_scale, self.mode
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Io(format!("writing null table: {e}"));
        writeln!(
            w,
            "smuce-null v1,n={},reps={},seed={},min_scale={},mode={}",
            self.n, self.reps, self.seed, self.min_scale, self.mode
        )
        .map_err(io_err)?;
        for s in &self.samples {
            writeln!(w, "{s}").map_err(io_err)?;
        }
        Ok(())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut buf = std::io::BufWriter::new(f);
        self.write(&mut buf)?;
        buf.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read<R: BufRead>(r: R, origin: &str) -> Result<NullTable> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?;
        let header = header.map_err(|e| Error::Io(format!("{origin}: {e}")))?;
        let rest = header
            .strip_prefix("smuce-null v1,")
            .ok_or_else(|| parse_err(1, "missing `smuce-null v1` header".into()))?;
        let mut n = None;
        let mut reps = None;
        let mut seed = None;
        let mut min_scale = None;
        let mut mode = None;
        for part in rest.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| parse_err(1, format!("malformed header field {part:?}")))?;
            let bad = |e: String| parse_err(1, format!("field {key}: {e}"));
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "reps" => reps = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "min_scale" => {
                    min_scale = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                }
                "mode" => mode = Some(PenaltyMode::from_token(value).map_err(|e| bad(e.to_string()))?),
                _ => return Err(parse_err(1, format!("unknown header field {key:?}"))),
            }
        }
        let missing = |k: &str| parse_err(1, format!("header lacks {k}"));
        let n = n.ok_or_else(|| missing("n"))?;
        let reps = reps.ok_or_else(|| missing("reps"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let min_scale = min_scale.ok_or_else(|| missing("min_scale"))?;
        let mode = mode.ok_or_else(|| missing("mode"))?;

        let mut samples = Vec::with_capacity(reps);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::Io(format!("{origin}: {e}")))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|e: std::num::ParseFloatError| parse_err(idx + 1, e.to_string()))?;
            samples.push(v);
        }
        if samples.len() != reps {
            return Err(parse_err(0, format!("expected {reps} samples, found {}", samples.len())));
        }
        NullTable::from_sorted_samples(n, reps, seed, min_scale, mode, samples)
    }

    pub fn read_from(path: &Path) -> Result<NullTable> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        NullTable::read(std::io::BufReader::new(f), &path.display().to_string())
    }
}

/// Cache directory resolution: explicit argument, else the `SMUCE_CACHE_DIR`
/// environment variable, else no caching.
pub fn cache_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os("SMUCE_CACHE_DIR").map(PathBuf::from),
    }
}

/// Fetch a table from the cache or simulate and store it. Cached tables
/// must match the requested metadata exactly; family-specific simulations
/// are never cached (their metadata is not part of the file format).
pub fn load_or_simulate(dir: Option<&Path>, opts: &SimOptions) -> Result<NullTable> {
    if opts.family.is_some() {
        return simulate_null(opts);
    }
    let Some(dir) = cache_dir(dir) else {
        return simulate_null(opts);
    };
    let probe = NullTable {
        n: opts.n,
        reps: opts.reps,
        seed: opts.seed,
        min_scale: opts.min_scale,
        mode: opts.mode,
        samples: Vec::new(),
    };
    let path = dir.join(probe.cache_file_name());
    if path.exists() {
        let table = NullTable::read_from(&path)?;
        if table.n == opts.n
            && table.reps == opts.reps
            && table.seed == opts.seed
            && table.min_scale == opts.min_scale
            && table.mode == opts.mode
        {
            return Ok(table);
        }
        return Err(Error::Io(format!(
            "{}: cached table metadata disagrees with its file name",
            path.display()
        )));
    }
    let table = simulate_null(opts)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    table.write_to(&path)?;
    Ok(table)
}
