//! Image-quality scoring, the bit-stripping attack and experiment sweeps.
//!
//! Every reconstruction that gets scored goes through [`render`]: FISTA
//! without the box constraint, then a min-max stretch to `[0, 1]`. The
//! stretch matters for two reasons. Hadamard rows other than row 0 never see
//! the scene mean, so the absolute level of any reconstruction is arbitrary,
//! and an unauthorized view solved from raw marked values comes out scaled
//! by about `2^n`. Stretching every image the same way, the reference
//! included, makes PSNR compare structure.

mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

pub use stats::{median, ranks, spearman, Spearman, EXACT_SPEARMAN_MAX};

use crate::capacity::{eligibility_probability, relative_capacity, sample_sigma};
use crate::error::{Error, Result};
use crate::keystream::{KeySource, KeySpec};
use crate::rdh::{embed_stream, expand_or_shift, extract_stream, EmbedParams, MarkedStream};
use crate::recon::{reconstruct, FistaOptions};
use crate::scene::SceneImage;
use crate::sensing::{MeasurementStream, OperatorDescriptor, SensingOperator};

/// Reported when the images are identical.
pub const PSNR_CAP: f64 = 120.0;

/// `10·log10(1 / MSE)` for images with unit peak.
pub fn psnr(reference: &SceneImage, test: &SceneImage) -> Result<f64> {
    if (reference.width(), reference.height()) != (test.width(), test.height()) {
        return Err(Error::SizeMismatch {
            expected: reference.len(),
            actual: test.len(),
        });
    }
    psnr_values(reference.pixels(), test.pixels())
}

pub fn psnr_values(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::SizeMismatch {
            expected: reference.len(),
            actual: test.len(),
        });
    }
    let mse = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Min-max stretch to `[0, 1]`; a flat input maps to zeros.
pub fn normalize_range(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Drops the low `n` bits of every marked value: `floor(D / 2^n)`.
pub fn eca_attack(marked: &MarkedStream, levels: u32) -> Vec<i32> {
    marked.values.iter().map(|&d| d >> levels).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    /// Every position marked, nothing removed, full operator.
    MarkedFull,
    /// Carriers left unmodified, reduced operator.
    TruncatedClean,
    /// What an unauthorized receiver reconstructs.
    MarkedTruncated,
    /// Unauthorized reconstruction after stripping the chunk bits.
    PostEca,
    /// Authorized extraction followed by a full reconstruction.
    AuthorizedReference,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::MarkedFull,
        Variant::TruncatedClean,
        Variant::MarkedTruncated,
        Variant::PostEca,
        Variant::AuthorizedReference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MarkedFull => "marked_full",
            Variant::TruncatedClean => "truncated_clean",
            Variant::MarkedTruncated => "marked_truncated",
            Variant::PostEca => "post_eca",
            Variant::AuthorizedReference => "authorized",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the regularization weight is chosen when none is given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaPolicy {
    /// Fixed per patch from its original stream and full operator, then
    /// reused for every view of that patch, as one solver configuration
    /// would be.
    #[default]
    Reference,
    /// Recomputed from each solved stream (scale covariant).
    PerStream,
}

/// Solver settings used for every scored reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub fista: FistaOptions,
    pub normalize: bool,
    pub lambda: LambdaPolicy,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            fista: FistaOptions {
                box_constraint: false,
                ..FistaOptions::default()
            },
            normalize: true,
            lambda: LambdaPolicy::Reference,
        }
    }
}

/// `0.01·‖Φᵀy‖∞`, the default weight for a stream.
pub fn default_lambda(op: &SensingOperator, measurements: &[f64]) -> Result<f64> {
    let aty = op.adjoint(measurements)?;
    Ok(crate::recon::DEFAULT_LAMBDA_FRACTION * aty.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Reconstructs and (optionally) stretches to `[0, 1]`.
pub fn render(
    op: &SensingOperator,
    measurements: &[f64],
    width: usize,
    height: usize,
    settings: &EvalSettings,
) -> Result<Vec<f64>> {
    let r = reconstruct(op, measurements, width, height, settings.fista)?;
    Ok(if settings.normalize {
        normalize_range(&r.x)
    } else {
        r.x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    })
}

fn to_f64<T: Copy + Into<f64>>(v: &[T]) -> Vec<f64> {
    v.iter().map(|&x| x.into()).collect()
}

/// Eligibility threshold policy for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Loose,
    Fixed(u32),
}

impl Threshold {
    pub fn params(self, levels: u32, order: usize) -> Result<EmbedParams> {
        match self {
            Threshold::Loose => EmbedParams::loose(levels, order),
            Threshold::Fixed(t) => EmbedParams::new(levels, t),
        }
    }
}

/// One acquired patch with its reference reconstruction.
pub struct PatchContext {
    pub width: usize,
    pub height: usize,
    pub operator: SensingOperator,
    pub stream: MeasurementStream,
    pub reference: Vec<f64>,
    /// Solver settings with the weight resolved for this patch.
    pub settings: EvalSettings,
}

impl PatchContext {
    pub fn new(image: &SceneImage, descriptor: &OperatorDescriptor, settings: &EvalSettings) -> Result<Self> {
        let operator = descriptor.build()?;
        let stream = operator.project(image)?;
        let mut settings = *settings;
        if settings.fista.lambda.is_none() && settings.lambda == LambdaPolicy::Reference {
            settings.fista.lambda = Some(default_lambda(&operator, &stream.as_f64())?);
        }
        let reference = render(&operator, &stream.as_f64(), image.width(), image.height(), &settings)?;
        Ok(Self {
            width: image.width(),
            height: image.height(),
            operator,
            stream,
            reference,
            settings,
        })
    }

    fn score(&self, op: &SensingOperator, measurements: &[f64]) -> Result<f64> {
        let img = render(op, measurements, self.width, self.height, &self.settings)?;
        psnr_values(&self.reference, &img)
    }

    fn key_stream(&self, key: &KeySpec) -> crate::keystream::Keystream {
        key.clone().with_stream(self.stream.descriptor.seed).stream()
    }

    /// Embeds with `params` (`None` means no embedding) and scores the
    /// requested variants against the reference.
    pub fn evaluate(&self, params: Option<&EmbedParams>, key: &KeySpec, variants: &[Variant]) -> Result<PatchScores> {
        let Some(params) = params else {
            let mut psnr = BTreeMap::new();
            for &v in variants {
                psnr.insert(v, self.score(&self.operator, &self.stream.as_f64())?);
            }
            return Ok(PatchScores {
                psnr,
                marked: None,
            });
        };
        let marked = embed_stream(&self.stream, params, self.key_stream(key))?;
        let reduced = self.operator.reduce(&marked.location_map)?;
        let carriers = marked.carrier_positions();
        let mut psnr = BTreeMap::new();
        for &v in variants {
            let score = match v {
                Variant::MarkedTruncated => self.score(&reduced, &to_f64(&marked.values))?,
                Variant::PostEca => {
                    self.score(&reduced, &to_f64(&eca_attack(&marked, params.levels)))?
                }
                Variant::TruncatedClean => {
                    let clean: Vec<f64> = carriers.iter().map(|&i| f64::from(self.stream.values[i])).collect();
                    self.score(&reduced, &clean)?
                }
                Variant::MarkedFull => {
                    let full = self.mark_everything(&marked, params, key)?;
                    self.score(&self.operator, &full)?
                }
                Variant::AuthorizedReference => {
                    let ex = extract_stream(&marked, params, self.key_stream(key))?;
                    self.score(&self.operator, &to_f64(&ex.values))?
                }
            };
            psnr.insert(v, score);
        }
        Ok(PatchScores {
            psnr,
            marked: Some(MarkedSummary::of(&marked)),
        })
    }

    // Keeps the real marked carriers and also marks the payload positions,
    // with chunks drawn from an independent keystream.
    fn mark_everything(&self, marked: &MarkedStream, params: &EmbedParams, key: &KeySpec) -> Result<Vec<f64>> {
        let mut chunks = key.clone().with_stream(!self.stream.descriptor.seed).stream();
        let mut out = vec![0.0; self.stream.len()];
        let mut carried = marked.values.iter();
        let mut map = marked.location_map.iter().peekable();
        let t = i64::from(params.threshold);
        for (i, o) in out.iter_mut().enumerate() {
            if map.peek() == Some(&&i) {
                map.next();
                let d = i64::from(self.stream.values[i]) - i64::from(params.predictor_offset);
                let bn = (-t..=t).contains(&d).then(|| chunks.next_bits(params.levels) as u32);
                *o = expand_or_shift(d, bn, params.levels, params.threshold)? as f64;
            } else {
                *o = f64::from(*carried.next().expect("counts match"));
            }
        }
        Ok(out)
    }
}

/// Counts kept from one embedding for the rate columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedSummary {
    pub total: usize,
    pub payloads: usize,
    pub expanded: usize,
    pub tail_bits: u32,
}

impl MarkedSummary {
    fn of(m: &MarkedStream) -> Self {
        Self {
            total: m.source_len,
            payloads: m.location_map.len(),
            expanded: m.stats.expanded,
            tail_bits: m.tail_bits,
        }
    }

    /// Value bytes of the marked stream over those of the original.
    pub fn rate(&self) -> f64 {
        (4 * (self.total - self.payloads)) as f64 / (2 * self.total) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub psnr: BTreeMap<Variant, f64>,
    pub marked: Option<MarkedSummary>,
}

/// PSNRs of one variant across patches.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: Variant,
    pub levels: u32,
    pub threshold: Option<u32>,
    pub l_percent: f64,
    pub psnr_db: Vec<f64>,
    pub median: f64,
}

/// Scores truncated-clean, marked-full and marked-truncated on one image.
pub fn distortion_breakdown(
    image: &SceneImage,
    descriptor: &OperatorDescriptor,
    params: Option<&EmbedParams>,
    key: &KeySpec,
    settings: &EvalSettings,
) -> Result<Vec<EvalReport>> {
    let ctx = PatchContext::new(image, descriptor, settings)?;
    let variants = [Variant::TruncatedClean, Variant::MarkedFull, Variant::MarkedTruncated];
    let scores = ctx.evaluate(params, key, &variants)?;
    let l_percent = 100.0 * descriptor.rows as f64 / descriptor.order as f64;
    Ok(variants
        .iter()
        .map(|&v| {
            let p = scores.psnr[&v];
            EvalReport {
                variant: v,
                levels: params.map_or(0, |p| p.levels),
                threshold: params.map(|p| p.threshold),
                l_percent,
                psnr_db: vec![p],
                median: p,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Operator for patch `k` uses seed `descriptor.seed + k`.
    pub descriptor: OperatorDescriptor,
    /// Insertion levels; 0 stands for "no embedding".
    pub levels: Vec<u32>,
    pub threshold: Threshold,
    pub key: KeySpec,
    pub variants: Vec<Variant>,
    pub settings: EvalSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub patch: usize,
    pub levels: u32,
    pub scores: PatchScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub threshold: Threshold,
    pub l_percent: f64,
    /// Pooled standard deviation of the original streams.
    pub sigma: f64,
}

/// Runs every `(patch, n)` pair; output sorted by `(n, patch)`.
pub fn run_sweep(images: &[SceneImage], config: &SweepConfig) -> Result<SweepResult> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("no images to sweep".into()));
    }
    let contexts = crate::par::map_range(images.len(), |k| {
        let descriptor = OperatorDescriptor {
            seed: config.descriptor.seed.wrapping_add(k as u64),
            ..config.descriptor
        };
        PatchContext::new(&images[k], &descriptor, &config.settings)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(u32, usize)> = config
        .levels
        .iter()
        .flat_map(|&n| (0..images.len()).map(move |k| (n, k)))
        .collect();
    let cells = crate::par::map(&jobs, |&(n, k)| -> Result<SweepCell> {
        let ctx = &contexts[k];
        let params = if n == 0 {
            None
        } else {
            Some(config.threshold.params(n, ctx.operator.order())?)
        };
        let scores = ctx.evaluate(params.as_ref(), &config.key, &config.variants)?;
        Ok(SweepCell {
            patch: k,
            levels: n,
            scores,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<i16> = contexts.iter().flat_map(|c| c.stream.values.iter().copied()).collect();
    Ok(SweepResult {
        cells,
        threshold: config.threshold,
        l_percent: 100.0 * config.descriptor.rows as f64 / config.descriptor.order as f64,
        sigma: sample_sigma(&pooled).unwrap_or(f64::NAN),
    })
}

impl SweepResult {
    pub fn levels(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.cells.iter().map(|c| c.levels).collect();
        v.dedup();
        v
    }

    /// Per-patch PSNRs of `variant` at `levels`, in patch order.
    pub fn psnr(&self, levels: u32, variant: Variant) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.levels == levels)
            .filter_map(|c| c.scores.psnr.get(&variant).copied())
            .collect()
    }

    pub fn median_psnr(&self, levels: u32, variant: Variant) -> Result<f64> {
        median(&self.psnr(levels, variant))
    }

    pub fn report(&self, levels: u32, variant: Variant) -> Result<EvalReport> {
        let psnr_db = self.psnr(levels, variant);
        Ok(EvalReport {
            variant,
            levels,
            threshold: match self.threshold {
                Threshold::Loose => None,
                Threshold::Fixed(t) => Some(t),
            },
            l_percent: self.l_percent,
            median: median(&psnr_db)?,
            psnr_db,
        })
    }

    fn eligibility(&self) -> f64 {
        match self.threshold {
            Threshold::Loose => 1.0,
            Threshold::Fixed(t) => eligibility_probability(f64::from(t), self.sigma).unwrap_or(1.0),
        }
    }

    /// Rate-distortion rows from the unauthorized view.
    pub fn rd_rows(&self) -> Result<Vec<RdRow>> {
        let p = self.eligibility();
        self.levels()
            .into_iter()
            .filter(|&n| n > 0)
            .map(|n| {
                let rates: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.levels == n)
                    .filter_map(|c| c.scores.marked.map(|m| m.rate()))
                    .collect();
                Ok(RdRow {
                    n,
                    c_r: relative_capacity(p, n),
                    r: rates.iter().sum::<f64>() / rates.len() as f64,
                    psnr_median: self.median_psnr(n, Variant::MarkedTruncated)?,
                })
            })
            .collect()
    }

    pub fn breakdown_rows(&self) -> Result<Vec<BreakdownRow>> {
        let mut rows = Vec::new();
        for n in self.levels() {
            let mut present: Vec<Variant> = self
                .cells
                .iter()
                .filter(|c| c.levels == n)
                .flat_map(|c| c.scores.psnr.keys().copied())
                .collect();
            present.sort();
            present.dedup();
            for v in present {
                rows.push(BreakdownRow {
                    n,
                    variant: v.name(),
                    psnr_median: self.median_psnr(n, v)?,
                });
            }
        }
        Ok(rows)
    }

    pub fn eca_rows(&self) -> Result<Vec<EcaRow>> {
        self.levels()
            .into_iter()
            .filter(|&n| n > 0)
            .map(|n| {
                Ok(EcaRow {
                    n,
                    psnr_before: self.median_psnr(n, Variant::MarkedTruncated)?,
                    psnr_after: self.median_psnr(n, Variant::PostEca)?,
                })
            })
            .collect()
    }
}

/// Unauthorized-view PSNR against insertion levels.
pub fn rate_distortion_sweep(
    images: &[SceneImage],
    descriptor: &OperatorDescriptor,
    levels: &[u32],
    threshold: Threshold,
    key: &KeySpec,
    settings: &EvalSettings,
) -> Result<Vec<RdRow>> {
    let config = SweepConfig {
        descriptor: *descriptor,
        levels: levels.to_vec(),
        threshold,
        key: key.clone(),
        variants: vec![Variant::MarkedTruncated],
        settings: *settings,
    };
    run_sweep(images, &config)?.rd_rows()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdRow {
    pub n: u32,
    #[serde(rename = "C_r")]
    pub c_r: f64,
    pub r: f64,
    pub psnr_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub n: u32,
    pub variant: &'static str,
    pub psnr_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EcaRow {
    pub n: u32,
    pub psnr_before: f64,
    pub psnr_after: f64,
}

pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
