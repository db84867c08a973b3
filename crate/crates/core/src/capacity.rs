//! Analytic insertion-capacity model and its Monte Carlo check.
//!
//! With a zero-mean Gaussian stream of deviation σ, a carrier is eligible
//! with probability `P = erf(T / (σ√2))`. Counting payload bits against
//! carried bits gives the expected number of data carriers
//!
//! ```text
//! x  = P·L / (1 + q·n/16),   q ≈ P²
//! C_r = n·x / L
//! R_p = L·(1 - C_r/16)
//! r   = 2·x / L
//! ```
//!
//! The `q ≈ P²` approximation is only claimed for `n` in `8..=16`; the
//! model carries a flag for it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::keystream::KeySpec;
use crate::rdh::{embed_values, EmbedParams};
use crate::scene::SceneImage;
use crate::sensing::OperatorDescriptor;

/// `P = erf(T / (σ√2))`, the Gaussian mass inside `[-T, T]`.
pub fn eligibility_probability(threshold: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    Ok(statrs::function::erf::erf(threshold / (sigma * std::f64::consts::SQRT_2)))
}

fn check_levels(levels: u32) -> Result<()> {
    if (1..=16).contains(&levels) {
        Ok(())
    } else {
        Err(Error::BadLevels(levels))
    }
}

fn denominator(p: f64, levels: u32) -> f64 {
    1.0 + p * p * f64::from(levels) / 16.0
}

/// Expected number of data-carrying measurements.
pub fn carrier_count(total: usize, p: f64, levels: u32) -> f64 {
    p * total as f64 / denominator(p, levels)
}

/// Embedded bits per original measurement.
pub fn relative_capacity(p: f64, levels: u32) -> f64 {
    p * f64::from(levels) / denominator(p, levels)
}

/// Largest threshold keeping `2^15 + bn_max·T + bn_max` inside 16 bits of
/// headroom, i.e. `floor((2^15 - 1) / bn_max) - 1`, or 0 if none is safe.
pub fn t_max(levels: u32) -> u32 {
    assert!((1..=16).contains(&levels), "levels must be 1..=16");
    let bn_max = (1u32 << levels) - 1;
    (32767 / bn_max).saturating_sub(1)
}

/// Expected count of measurements left after payloads are removed.
pub fn remaining_measurements(total: f64, c_r: f64) -> f64 {
    total * (1.0 - c_r / 16.0)
}

/// Marked-to-original volume ratio with 32-bit marked values.
pub fn compression_rate(levels: u32, p: f64) -> f64 {
    2.0 * p / denominator(p, levels)
}

/// Unbiased sample standard deviation.
pub fn sample_sigma(values: &[i16]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityModel {
    pub total: usize,
    pub sigma: f64,
    pub threshold: f64,
    pub levels: u32,
    pub p: f64,
    pub q: f64,
    pub carriers: f64,
    pub capacity_bits: f64,
    pub c_r: f64,
    pub remaining: f64,
    pub rate: f64,
    pub t_max: u32,
    /// `q ≈ P²` is only trusted for 8 ≤ n ≤ 16.
    pub approximation_valid: bool,
}

impl CapacityModel {
    pub fn new(total: usize, sigma: f64, threshold: f64, levels: u32) -> Result<Self> {
        check_levels(levels)?;
        let p = eligibility_probability(threshold, sigma)?;
        Ok(Self::from_probability(total, sigma, threshold, levels, p))
    }

    /// Every carrier eligible.
    pub fn loose(total: usize, levels: u32) -> Result<Self> {
        check_levels(levels)?;
        Ok(Self::from_probability(total, f64::NAN, f64::INFINITY, levels, 1.0))
    }

    fn from_probability(total: usize, sigma: f64, threshold: f64, levels: u32, p: f64) -> Self {
        let carriers = carrier_count(total, p, levels);
        let c_r = relative_capacity(p, levels);
        Self {
            total,
            sigma,
            threshold,
            levels,
            p,
            q: p * p,
            carriers,
            capacity_bits: carriers * f64::from(levels),
            c_r,
            remaining: remaining_measurements(total as f64, c_r),
            rate: compression_rate(levels, p),
            t_max: t_max(levels),
            approximation_valid: (8..=16).contains(&levels),
        }
    }

    pub fn carriers_floor(&self) -> u64 {
        self.carriers.floor() as u64
    }

    pub fn row(&self) -> CapacityRow {
        CapacityRow {
            n: self.levels,
            threshold: self.threshold,
            p: self.p,
            x: self.carriers,
            c_r: self.c_r,
            r_p: self.remaining,
            r: self.rate,
        }
    }
}

/// One line of the capacity CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityRow {
    pub n: u32,
    #[serde(rename = "T")]
    pub threshold: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub x: f64,
    #[serde(rename = "C_r")]
    pub c_r: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    pub r: f64,
}

pub fn write_capacity_csv<W: std::io::Write>(rows: &[CapacityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error of a per-trial statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std_err = if samples.len() > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_err }
    }
}

/// Counted statistics from repeated embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalCapacity {
    pub trials: usize,
    pub carriers: Estimate,
    pub c_r: Estimate,
    pub remaining: Estimate,
    pub rate: Estimate,
}

#[derive(Debug, Clone, Copy)]
struct TrialCounts {
    carriers: f64,
    c_r: f64,
    remaining: f64,
    rate: f64,
}

fn counts(total: usize, levels: u32, expanded: usize, transmitted: usize) -> TrialCounts {
    let l = total as f64;
    TrialCounts {
        carriers: expanded as f64,
        c_r: expanded as f64 * f64::from(levels) / l,
        remaining: transmitted as f64,
        // 4 bytes per marked value over 2 bytes per original value
        rate: 4.0 * transmitted as f64 / (2.0 * l),
    }
}

fn summarise(trials: &[TrialCounts]) -> EmpiricalCapacity {
    let pick = |f: fn(&TrialCounts) -> f64| {
        Estimate::from_samples(&trials.iter().map(f).collect::<Vec<_>>())
    };
    EmpiricalCapacity {
        trials: trials.len(),
        carriers: pick(|t| t.carriers),
        c_r: pick(|t| t.c_r),
        remaining: pick(|t| t.remaining),
        rate: pick(|t| t.rate),
    }
}

/// Acquires `image` with `trials` operator seeds (`seed`, `seed + 1`, ...),
/// embeds each stream and averages the counts.
pub fn monte_carlo_capacity(
    descriptor: &OperatorDescriptor,
    image: &SceneImage,
    params: &EmbedParams,
    key: &KeySpec,
    trials: usize,
) -> Result<EmpiricalCapacity> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let results = crate::par::map_range(trials, |t| -> Result<TrialCounts> {
        let seed = descriptor.seed.wrapping_add(t as u64);
        let op = OperatorDescriptor { seed, ..*descriptor }.build()?;
        let stream = op.project(image)?;
        let marked = crate::rdh::embed_stream(&stream, params, key.clone().with_stream(seed).stream())?;
        Ok(counts(stream.len(), params.levels, marked.stats.expanded, marked.values.len()))
    });
    let trials: Vec<TrialCounts> = results.into_iter().collect::<Result<_>>()?;
    Ok(summarise(&trials))
}

/// Same statistics on synthetic zero-mean Gaussian streams (rounded to
/// integers), independent of any scene.
pub fn simulate_gaussian_capacity(
    total: usize,
    sigma: f64,
    params: &EmbedParams,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalCapacity> {
    if trials == 0 || total == 0 {
        return Err(Error::InvalidParameter("need at least one trial and one value".into()));
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("sigma {sigma}: {e}")))?;
    let results = crate::par::map_range(trials, |t| -> Result<TrialCounts> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let ys: Vec<i16> = (0..total)
            .map(|_| normal.sample(&mut rng).round().clamp(-32768.0, 32767.0) as i16)
            .collect();
        let key = crate::keystream::ConstantKey::new(t as u16);
        let marked = embed_values(ys, params, key)?;
        Ok(counts(total, params.levels, marked.stats.expanded, marked.values.len()))
    });
    let trials: Vec<TrialCounts> = results.into_iter().collect::<Result<_>>()?;
    Ok(summarise(&trials))
}
