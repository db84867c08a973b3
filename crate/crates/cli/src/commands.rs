use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use spc_rdh::capacity::{compression_rate, relative_capacity, write_capacity_csv, CapacityModel};
use spc_rdh::eval::{
    eca_attack, normalize_range, run_sweep, write_csv, EvalSettings, SweepConfig, Threshold, Variant,
};
use spc_rdh::format::StreamFile;
use spc_rdh::recon::{reconstruct, write_trace_csv, FistaOptions};
use spc_rdh::scene::dims_for_order;
use spc_rdh::synthetic::synthetic_patches;
use spc_rdh::{
    embed_stream, extract_stream, EmbedParams, KeySpec, MatrixKind, OperatorDescriptor, SceneImage,
    SensingOperator,
};

use crate::args::{
    AcquireArgs, AnalyzeArgs, Command, Curve, EmbedArgs, ExtractArgs, Matrix, Mode, ReconstructArgs,
    ThresholdArg,
};
use crate::pgm::{read_pgm, write_pgm};
use crate::Outcome;

/// Key used by `analyze` when no key file is given.
pub const ANALYSIS_KEY: &[u8] = b"spc-rdh analysis key";

pub fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Acquire(a) => acquire(&a).map(|_| Outcome::Exact),
        Command::Embed(a) => embed(&a).map(|_| Outcome::Exact),
        Command::Extract(a) => extract(&a),
        Command::Reconstruct(a) => reconstruct_cmd(&a).map(|_| Outcome::Exact),
        Command::Analyze(a) => analyze(&a).map(|_| Outcome::Exact),
    }
}

fn matrix_kind(m: Matrix) -> MatrixKind {
    match m {
        Matrix::Hadamard => MatrixKind::ScrambledHadamard,
        Matrix::Smatrix => MatrixKind::ScrambledSMatrix,
    }
}

/// `round(rate·S/100)`, capped at the `S − 1` usable rows.
pub fn row_count(rate: f64, order: usize) -> Result<usize> {
    ensure!(rate > 0.0 && rate <= 100.0, "rate {rate} outside (0, 100]");
    let rows = (rate * order as f64 / 100.0).round() as usize;
    Ok(rows.clamp(1, order - 1))
}

pub fn read_stream(path: &Path) -> Result<StreamFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    StreamFile::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_stream(path: &Path, file: &StreamFile) -> Result<()> {
    fs::write(path, file.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn read_key(path: &Path) -> Result<KeySpec> {
    let bytes = fs::read(path).with_context(|| format!("reading key {}", path.display()))?;
    Ok(KeySpec::new(&bytes)?)
}

/// The key cursor for a stream: one keystream per operator seed.
fn stream_key(key: &KeySpec, file: &StreamFile) -> spc_rdh::Keystream {
    key.clone().with_stream(file.header.seed).stream()
}

fn params_for(levels: u32, threshold: ThresholdArg, order: usize, offset: i32) -> Result<EmbedParams> {
    let p = match threshold {
        ThresholdArg::Loose => EmbedParams::loose(levels, order)?,
        ThresholdArg::Value(t) => EmbedParams::new(levels, t)?,
    };
    Ok(p.with_predictor_offset(offset))
}

/// Path of tile `k`: `dir/stem_kkkk.ext`.
pub fn tile_path(out: &Path, k: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("stream");
    let name = match out.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}_{k:04}.{ext}"),
        None => format!("{stem}_{k:04}"),
    };
    out.with_file_name(name)
}

/// Row-major `size`×`size` tiles; partial tiles at the right and bottom
/// edges are dropped.
pub fn tiles(img: &SceneImage, size: usize) -> Result<Vec<SceneImage>> {
    ensure!(size >= 2 && size.is_power_of_two(), "patch size {size} is not a power of two");
    let mut out = Vec::new();
    for y in (0..=img.height().saturating_sub(size)).step_by(size) {
        for x in (0..=img.width().saturating_sub(size)).step_by(size) {
            if x + size <= img.width() && y + size <= img.height() {
                out.push(img.tile(x, y, size)?);
            }
        }
    }
    ensure!(!out.is_empty(), "image smaller than one {size}x{size} patch");
    Ok(out)
}

fn acquire_one(img: &SceneImage, kind: MatrixKind, rate: f64, seed: u64) -> Result<StreamFile> {
    let order = img.len();
    let desc = OperatorDescriptor {
        kind,
        order,
        rows: row_count(rate, order)?,
        seed,
    };
    let stream = desc.build()?.project(img)?;
    Ok(StreamFile::from_original(&stream)?)
}

fn acquire(a: &AcquireArgs) -> Result<()> {
    let img = read_pgm(&a.image)?;
    let kind = matrix_kind(a.matrix);
    match a.patch {
        None => {
            let img = if img.len().is_power_of_two() { img } else { img.center_crop_pow2() };
            ensure!(img.len() >= 2, "image too small to acquire");
            write_stream(&a.out, &acquire_one(&img, kind, a.rate, a.seed)?)
        }
        Some(size) => {
            let patches = tiles(&img, size)?;
            let files: Vec<Result<StreamFile>> = spc_rdh::par::map_range(patches.len(), |k| {
                acquire_one(&patches[k], kind, a.rate, a.seed.wrapping_add(k as u64))
            });
            for (k, f) in files.into_iter().enumerate() {
                write_stream(&tile_path(&a.out, k), &f?)?;
            }
            Ok(())
        }
    }
}

/// Counted embedding figures for one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedReport {
    /// Expanded carriers.
    pub carriers: usize,
    /// Embedded bits per original measurement.
    pub c_r: f64,
    /// Marked value bytes over original value bytes.
    pub rate: f64,
}

pub fn embed_file(original: &StreamFile, params: &EmbedParams, key: &KeySpec) -> Result<(StreamFile, EmbedReport)> {
    let stream = original.original_stream()?;
    let marked = embed_stream(&stream, params, stream_key(key, original))?;
    let file = StreamFile::from_marked(&marked, stream.descriptor, &stream.values)?;
    let report = EmbedReport {
        carriers: marked.stats.expanded,
        c_r: marked.stats.expanded as f64 * f64::from(params.levels) / stream.len() as f64,
        rate: file.value_bytes() as f64 / original.value_bytes() as f64,
    };
    Ok((file, report))
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let original = read_stream(&a.input)?;
    let key = read_key(&a.key)?;
    let params = params_for(a.levels, a.threshold, original.header.order as usize, a.offset)?
        .allowing_overflow(a.allow_overflow);
    let (file, report) = embed_file(&original, &params, &key)?;
    write_stream(&a.out, &file)?;
    println!("x={} C_r={:.4} r={:.4}", report.carriers, report.c_r, report.rate);
    Ok(())
}

/// Recovers and checks the original stream; `true` when exact.
pub fn extract_file(marked: &StreamFile, key: &KeySpec, threshold: ThresholdArg, offset: i32) -> Result<(StreamFile, bool)> {
    let ms = marked.marked_stream()?;
    let params = params_for(ms.levels, threshold, marked.header.order as usize, offset)?;
    let ex = extract_stream(&ms, &params, stream_key(key, marked))?;
    marked.verify(&ex.values, ex.truncated)?;
    let stream = spc_rdh::MeasurementStream {
        values: ex.values,
        descriptor: marked.descriptor(),
    };
    Ok((StreamFile::from_original(&stream)?, ex.truncated.is_none()))
}

fn extract(a: &ExtractArgs) -> Result<Outcome> {
    let marked = read_stream(&a.input)?;
    let key = read_key(&a.key)?;
    let (file, exact) = extract_file(&marked, &key, a.threshold, a.offset)?;
    write_stream(&a.out, &file)?;
    if exact {
        Ok(Outcome::Exact)
    } else {
        eprintln!("warning: final payload measurement recovered only partly");
        Ok(Outcome::Truncated)
    }
}

/// Operator and real measurements to solve for in a given mode.
pub fn solve_inputs(
    file: &StreamFile,
    mode: Mode,
    key: Option<&KeySpec>,
    threshold: ThresholdArg,
    offset: i32,
    levels: Option<u32>,
) -> Result<(SensingOperator, Vec<f64>)> {
    let op = file.descriptor().build()?;
    if !file.is_marked() {
        ensure!(mode == Mode::Authorized, "{mode:?} reconstruction needs a marked stream");
        let s = file.original_stream()?;
        return Ok((op, s.as_f64()));
    }
    let ms = file.marked_stream()?;
    match mode {
        Mode::Authorized => {
            let key = key.context("authorized reconstruction of a marked stream needs --key")?;
            let (orig, _) = extract_file(file, key, threshold, offset)?;
            Ok((op, orig.original_stream()?.as_f64()))
        }
        Mode::Unauthorized => {
            let reduced = op.reduce(&ms.location_map)?;
            Ok((reduced, ms.values.iter().map(|&v| f64::from(v)).collect()))
        }
        Mode::Eca => {
            let reduced = op.reduce(&ms.location_map)?;
            let n = levels.unwrap_or(ms.levels);
            Ok((reduced, eca_attack(&ms, n).iter().map(|&v| f64::from(v)).collect()))
        }
    }
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<()> {
    let file = read_stream(&a.input)?;
    let key = a.key.as_deref().map(read_key).transpose()?;
    let (op, y) = solve_inputs(&file, a.mode, key.as_ref(), a.threshold, a.offset, a.levels)?;
    let (w, h) = dims_for_order(op.order());
    let options = FistaOptions {
        lambda: a.lambda,
        max_iters: a.iters,
        box_constraint: false,
        ..FistaOptions::default()
    };
    let result = reconstruct(&op, &y, w, h, options)?;
    if let Some(trace) = &a.trace {
        let f = fs::File::create(trace).with_context(|| format!("creating {}", trace.display()))?;
        write_trace_csv(&result.trace, f)?;
    }
    let img = SceneImage::from_clamped(w, h, &normalize_range(&result.x))?;
    write_pgm(&a.out, &img)
}

#[derive(Debug, Serialize)]
struct RateRow {
    n: u32,
    #[serde(rename = "P")]
    p: f64,
    r: f64,
}

#[derive(Debug, Serialize)]
struct RemainingRow {
    n: u32,
    l_percent: f64,
    r_p_percent: f64,
}

fn csv_out(dir: &Path, name: &str) -> Result<fs::File> {
    let path = dir.join(name);
    fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
}

fn analytic_models(a: &AnalyzeArgs) -> Result<Vec<CapacityModel>> {
    (a.min_levels..=a.max_levels)
        .map(|n| match a.threshold {
            ThresholdArg::Loose => Ok(CapacityModel::loose(a.total, n)?),
            ThresholdArg::Value(t) => {
                let sigma = a.sigma.context("a numeric --threshold needs --sigma for analytic curves")?;
                Ok(CapacityModel::new(a.total, sigma, f64::from(t), n)?)
            }
        })
        .collect()
}

fn analysis_patches(a: &AnalyzeArgs) -> Result<Vec<SceneImage>> {
    match &a.image {
        Some(path) => tiles(&read_pgm(path)?, a.patch),
        None => Ok(synthetic_patches(a.patches, a.patch, a.seed)),
    }
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    ensure!(a.min_levels >= 1 && a.min_levels <= a.max_levels && a.max_levels <= 16, "levels must satisfy 1 <= min <= max <= 16");
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut curves = a.curves.clone();
    curves.sort_by_key(|c| *c as u8);
    curves.dedup();

    if curves.iter().any(|c| matches!(c, Curve::Capacity | Curve::Rate | Curve::Remaining)) {
        let models = analytic_models(a)?;
        for c in &curves {
            match c {
                Curve::Capacity => {
                    let rows: Vec<_> = models.iter().map(CapacityModel::row).collect();
                    write_capacity_csv(&rows, csv_out(&a.out_dir, "capacity.csv")?)?;
                }
                Curve::Rate => {
                    let rows: Vec<_> = models
                        .iter()
                        .map(|m| RateRow {
                            n: m.levels,
                            p: m.p,
                            r: compression_rate(m.levels, m.p),
                        })
                        .collect();
                    write_csv(&rows, csv_out(&a.out_dir, "rate.csv")?)?;
                }
                Curve::Remaining => {
                    let mut rows = Vec::new();
                    for l_percent in [20.0, 30.0, 40.0] {
                        for m in &models {
                            rows.push(RemainingRow {
                                n: m.levels,
                                l_percent,
                                r_p_percent: l_percent * (1.0 - relative_capacity(m.p, m.levels) / 16.0),
                            });
                        }
                    }
                    write_csv(&rows, csv_out(&a.out_dir, "remaining.csv")?)?;
                }
                _ => {}
            }
        }
    }

    let experimental: Vec<Curve> = curves
        .iter()
        .copied()
        .filter(|c| matches!(c, Curve::Rd | Curve::Breakdown | Curve::Eca))
        .collect();
    if experimental.is_empty() {
        return Ok(());
    }
    let images = analysis_patches(a)?;
    let order = images[0].len();
    let mut variants = vec![Variant::MarkedTruncated];
    if experimental.contains(&Curve::Eca) {
        variants.push(Variant::PostEca);
    }
    if experimental.contains(&Curve::Breakdown) {
        variants = Variant::ALL.to_vec();
    }
    let key = match &a.key {
        Some(p) => read_key(p)?,
        None => KeySpec::new(ANALYSIS_KEY)?,
    };
    let mut settings = EvalSettings::default();
    settings.fista.max_iters = a.iters;
    let config = SweepConfig {
        descriptor: OperatorDescriptor {
            kind: MatrixKind::ScrambledHadamard,
            order,
            rows: row_count(a.rate, order)?,
            seed: a.seed,
        },
        levels: (a.min_levels..=a.max_levels).collect(),
        threshold: match a.threshold {
            ThresholdArg::Loose => Threshold::Loose,
            ThresholdArg::Value(t) => Threshold::Fixed(t),
        },
        key,
        variants,
        settings,
    };
    let result = run_sweep(&images, &config)?;
    for c in experimental {
        match c {
            Curve::Rd => write_csv(&result.rd_rows()?, csv_out(&a.out_dir, "rd_curve.csv")?)?,
            Curve::Breakdown => write_csv(&result.breakdown_rows()?, csv_out(&a.out_dir, "breakdown.csv")?)?,
            Curve::Eca => write_csv(&result.eca_rows()?, csv_out(&a.out_dir, "eca.csv")?)?,
            _ => bail!("unexpected curve {c:?}"),
        }
    }
    Ok(())
}
