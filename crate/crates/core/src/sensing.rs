//! Scrambled Hadamard and S-matrix sensing operators.
//!
//! Both operators are row subsets of the order-`S` Sylvester Hadamard matrix
//! `H[r][c] = (-1)^popcount(r & c)` with their columns shuffled by a seeded
//! Fisher–Yates permutation:
//!
//! * `ScrambledHadamard` keeps rows `1..=L` (the all-ones row 0 is never
//!   used) and all `S` columns, entries in `{-1, +1}`.
//! * `ScrambledSMatrix` drops row 0 *and* column 0 of `H`, maps `-1 -> 0`
//!   and keeps rows `1..=L` over the remaining `S - 1` columns. It senses the
//!   first `S - 1` pixels of the scene; the last pixel is not observed.
//!
//! Projections are computed with exact integer arithmetic: pixels are
//! quantised to 32 fractional bits, pushed through the fast Walsh–Hadamard
//! transform in `i64`, and the result is rounded half away from zero. The
//! dense oracle uses the same fixed-point input, so both paths agree bit for
//! bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fwht::fwht;
use crate::scene::SceneImage;

const FRAC_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixKind {
    ScrambledHadamard,
    ScrambledSMatrix,
}

impl MatrixKind {
    pub fn code(self) -> u8 {
        match self {
            MatrixKind::ScrambledHadamard => 0,
            MatrixKind::ScrambledSMatrix => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MatrixKind::ScrambledHadamard),
            1 => Some(MatrixKind::ScrambledSMatrix),
            _ => None,
        }
    }
}

/// The public parameters that rebuild an operator: `(kind, S, L, seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub kind: MatrixKind,
    pub order: usize,
    pub rows: usize,
    pub seed: u64,
}

impl OperatorDescriptor {
    pub fn build(&self) -> Result<SensingOperator> {
        build_operator(self.kind, self.order, self.rows, self.seed)
    }
}

/// SplitMix64, the column-shuffle generator.
///
/// `state += 0x9E3779B97F4A7C15`, then the output is the state passed
/// through `xor-shift 30, times 0xBF58476D1CE4E5B9, xor-shift 27,
/// times 0x94D049BB133111EB, xor-shift 31`. This update is part of the stream
/// file contract: a receiver must rebuild the same permutation from the seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform index in `0..bound` by 128-bit multiply-high.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }
}

/// Fisher–Yates shuffle of `0..len` driven by [`SplitMix64`]: for `i` from
/// `len - 1` down to 1, swap `i` with `next_below(i + 1)`.
pub fn seeded_permutation(len: usize, seed: u64) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..len as u32).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..len).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Signed integer measurements from one acquisition, each within `i16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementStream {
    pub values: Vec<i16>,
    pub descriptor: OperatorDescriptor,
}

impl MeasurementStream {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    kind: MatrixKind,
    order: usize,
    seed: Option<u64>,
    full_rows: usize,
    /// Hadamard column index for each sensed scene pixel.
    column_map: Vec<u32>,
    /// Hadamard row index for each retained row, in measurement order.
    hadamard_rows: Vec<u32>,
}

/// Builds a seeded operator with rows `1..=rows` of the scrambled matrix.
pub fn build_operator(kind: MatrixKind, order: usize, rows: usize, seed: u64) -> Result<SensingOperator> {
    SensingOperator::build(kind, order, rows, Some(seed))
}

impl SensingOperator {
    /// Same construction without the column shuffle (identity permutation).
    pub fn unscrambled(kind: MatrixKind, order: usize, rows: usize) -> Result<Self> {
        Self::build(kind, order, rows, None)
    }

    fn build(kind: MatrixKind, order: usize, rows: usize, seed: Option<u64>) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() || order > u32::MAX as usize {
            return Err(Error::NotPowerOfTwo(order));
        }
        if rows == 0 || rows > order - 1 {
            return Err(Error::RowCountOutOfRange {
                rows,
                max: order - 1,
            });
        }
        let cols = match kind {
            MatrixKind::ScrambledHadamard => order,
            MatrixKind::ScrambledSMatrix => order - 1,
        };
        let perm = match seed {
            Some(s) => seeded_permutation(cols, s),
            None => (0..cols as u32).collect(),
        };
        let column_map = match kind {
            MatrixKind::ScrambledHadamard => perm,
            MatrixKind::ScrambledSMatrix => perm.into_iter().map(|c| c + 1).collect(),
        };
        Ok(Self {
            kind,
            order,
            seed,
            full_rows: rows,
            column_map,
            hadamard_rows: (1..=rows as u32).collect(),
        })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Scene pixel count `S`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of rows currently retained (after any reduction).
    pub fn row_count(&self) -> usize {
        self.hadamard_rows.len()
    }

    /// Number of matrix columns: `S` for Hadamard, `S - 1` for the S-matrix.
    pub fn column_count(&self) -> usize {
        self.column_map.len()
    }

    pub fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            kind: self.kind,
            order: self.order,
            rows: self.full_rows,
            seed: self.seed.unwrap_or(0),
        }
    }

    /// Matrix entry of retained row `row` at column `col`.
    pub fn entry(&self, row: usize, col: usize) -> i64 {
        let h = self.hadamard_rows[row];
        let c = self.column_map[col];
        let plus = (h & c).count_ones().is_multiple_of(2);
        match (self.kind, plus) {
            (MatrixKind::ScrambledHadamard, true) => 1,
            (MatrixKind::ScrambledHadamard, false) => -1,
            (MatrixKind::ScrambledSMatrix, true) => 1,
            (MatrixKind::ScrambledSMatrix, false) => 0,
        }
    }

    /// Dense `row_count × column_count` matrix.
    pub fn dense(&self) -> Vec<Vec<i64>> {
        (0..self.row_count())
            .map(|r| (0..self.column_count()).map(|c| self.entry(r, c)).collect())
            .collect()
    }

    fn check_scene(&self, len: usize) -> Result<()> {
        if len != self.order {
            return Err(Error::SizeMismatch {
                expected: self.order,
                actual: len,
            });
        }
        Ok(())
    }

    fn quantise(&self, x: &[f64]) -> Vec<i64> {
        let scale = (1u64 << FRAC_BITS) as f64;
        x[..self.column_count()]
            .iter()
            .map(|&v| (v * scale).round() as i64)
            .collect()
    }

    fn finish_measurement(&self, fixed: i64) -> i16 {
        let v = round_fixed(fixed);
        v.clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16
    }

    fn stream(&self, values: Vec<i16>) -> MeasurementStream {
        MeasurementStream {
            values,
            descriptor: self.descriptor(),
        }
    }

    /// Fast projection `y = round(Φx)`.
    pub fn project(&self, img: &SceneImage) -> Result<MeasurementStream> {
        self.check_scene(img.len())?;
        let q = self.quantise(img.pixels());
        let mut z = vec![0i64; self.order];
        for (&c, &v) in self.column_map.iter().zip(&q) {
            z[c as usize] = v;
        }
        fwht(&mut z);
        let total: i64 = q.iter().sum();
        let values = self
            .hadamard_rows
            .iter()
            .map(|&h| {
                let t = z[h as usize];
                let fixed = match self.kind {
                    MatrixKind::ScrambledHadamard => t,
                    // (1 + H) / 2 rows; the sum is always even
                    MatrixKind::ScrambledSMatrix => (total + t) / 2,
                };
                self.finish_measurement(fixed)
            })
            .collect();
        Ok(self.stream(values))
    }

    /// Row-by-row dot products; reference semantics for [`project`](Self::project).
    pub fn project_dense(&self, img: &SceneImage) -> Result<MeasurementStream> {
        self.check_scene(img.len())?;
        let q = self.quantise(img.pixels());
        let values = (0..self.row_count())
            .map(|r| {
                let fixed: i64 = q.iter().enumerate().map(|(c, &v)| self.entry(r, c) * v).sum();
                self.finish_measurement(fixed)
            })
            .collect();
        Ok(self.stream(values))
    }

    /// Unrounded `Φx` in floating point, used by the reconstruction solver.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_scene(x.len())?;
        let mut z = vec![0.0f64; self.order];
        let sensed = &x[..self.column_count()];
        for (&c, &v) in self.column_map.iter().zip(sensed) {
            z[c as usize] = v;
        }
        fwht(&mut z);
        Ok(match self.kind {
            MatrixKind::ScrambledHadamard => self.hadamard_rows.iter().map(|&h| z[h as usize]).collect(),
            MatrixKind::ScrambledSMatrix => {
                let total: f64 = sensed.iter().sum();
                self.hadamard_rows
                    .iter()
                    .map(|&h| 0.5 * (total + z[h as usize]))
                    .collect()
            }
        })
    }

    /// Dense floating-point `Φx`.
    pub fn apply_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_scene(x.len())?;
        Ok((0..self.row_count())
            .map(|r| {
                // fold from +0.0: `Sum` starts at -0.0, which the fast path never yields
                (0..self.column_count())
                    .map(|c| self.entry(r, c) as f64 * x[c])
                    .fold(0.0, |acc, v| acc + v)
            })
            .collect())
    }

    /// Fast adjoint `Φᵀy`, returned as a scene-length vector.
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.row_count() {
            return Err(Error::SizeMismatch {
                expected: self.row_count(),
                actual: y.len(),
            });
        }
        let mut z = vec![0.0f64; self.order];
        for (&h, &v) in self.hadamard_rows.iter().zip(y) {
            z[h as usize] = v;
        }
        fwht(&mut z);
        let mut out = vec![0.0f64; self.order];
        match self.kind {
            MatrixKind::ScrambledHadamard => {
                for (o, &c) in out.iter_mut().zip(&self.column_map) {
                    *o = z[c as usize];
                }
            }
            MatrixKind::ScrambledSMatrix => {
                let total: f64 = y.iter().sum();
                for (o, &c) in out.iter_mut().zip(&self.column_map) {
                    *o = 0.5 * (total + z[c as usize]);
                }
            }
        }
        Ok(out)
    }

    /// Dense adjoint oracle.
    pub fn adjoint_dense(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.row_count() {
            return Err(Error::SizeMismatch {
                expected: self.row_count(),
                actual: y.len(),
            });
        }
        let mut out = vec![0.0f64; self.order];
        for (c, o) in out.iter_mut().enumerate().take(self.column_count()) {
            *o = (0..self.row_count())
                .map(|r| self.entry(r, c) as f64 * y[r])
                .fold(0.0, |acc, v| acc + v);
        }
        Ok(out)
    }

    /// Drops the rows listed in `location_map` (strictly increasing indexes
    /// into the current rows), keeping the rest in order.
    pub fn reduce(&self, location_map: &[usize]) -> Result<Self> {
        validate_location_map(location_map, self.row_count())?;
        let mut drop = location_map.iter().peekable();
        let mut hadamard_rows = Vec::with_capacity(self.row_count() - location_map.len());
        for (i, &h) in self.hadamard_rows.iter().enumerate() {
            if drop.peek() == Some(&&i) {
                drop.next();
            } else {
                hadamard_rows.push(h);
            }
        }
        Ok(Self {
            hadamard_rows,
            ..self.clone()
        })
    }
}

/// `Φᵀ` applied to an integer stream.
pub fn adjoint_apply(op: &SensingOperator, stream: &MeasurementStream) -> Result<Vec<f64>> {
    op.adjoint(&stream.as_f64())
}

/// Free-function form of [`SensingOperator::reduce`].
pub fn reduce_operator(op: &SensingOperator, location_map: &[usize]) -> Result<SensingOperator> {
    op.reduce(location_map)
}

/// Theoretical measurement range `(-S/2, S/2)` of a scrambled Hadamard
/// projection of a scene in `[0, 1]`.
pub fn measurement_bounds(order: usize) -> Result<(i64, i64)> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(order));
    }
    let half = (order / 2) as i64;
    Ok((-half, half))
}

pub(crate) fn validate_location_map(map: &[usize], rows: usize) -> Result<()> {
    let mut prev: Option<usize> = None;
    for &i in map {
        if i >= rows || prev.is_some_and(|p| i <= p) {
            return Err(Error::BadLocationMap { index: i, rows });
        }
        prev = Some(i);
    }
    Ok(())
}

fn round_fixed(v: i64) -> i64 {
    let half = 1i64 << (FRAC_BITS - 1);
    let mag = (v.abs() + half) >> FRAC_BITS;
    if v < 0 {
        -mag
    } else {
        mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(values: &[f64]) -> SceneImage {
        let n = values.len();
        SceneImage::new(n, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn smallest_hadamard_block() {
        let op = SensingOperator::unscrambled(MatrixKind::ScrambledHadamard, 2, 1).unwrap();
        assert_eq!(op.dense(), vec![vec![1, -1]]);
    }

    #[test]
    fn hadamard_order_four_drops_first_row() {
        let op = SensingOperator::unscrambled(MatrixKind::ScrambledHadamard, 4, 3).unwrap();
        assert_eq!(
            op.dense(),
            vec![vec![1, -1, 1, -1], vec![1, 1, -1, -1], vec![1, -1, -1, 1]]
        );
    }

    #[test]
    fn smatrix_order_four() {
        let op = SensingOperator::unscrambled(MatrixKind::ScrambledSMatrix, 4, 3).unwrap();
        let d = op.dense();
        assert_eq!(d.len(), 3);
        for row in &d {
            assert_eq!(row.len(), 3);
            assert!(row.iter().all(|&e| e == 0 || e == 1));
            // one +1 survives per row once column 0 is gone
            assert_eq!(row.iter().sum::<i64>(), 1);
        }
        // H4 without row/column 0: [-1 1 -1; 1 -1 -1; -1 -1 1]
        assert_eq!(d, vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            build_operator(MatrixKind::ScrambledHadamard, 12, 3, 1),
            Err(Error::NotPowerOfTwo(12))
        ));
        assert!(build_operator(MatrixKind::ScrambledHadamard, 1, 1, 1).is_err());
        assert!(build_operator(MatrixKind::ScrambledHadamard, 8, 0, 1).is_err());
        assert!(build_operator(MatrixKind::ScrambledHadamard, 8, 8, 1).is_err());
        assert!(build_operator(MatrixKind::ScrambledHadamard, 8, 7, 1).is_ok());
    }

    #[test]
    fn splitmix_reference_values() {
        // published SplitMix64 outputs for seed 0
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn permutation_is_a_bijection_and_seeded() {
        let p = seeded_permutation(1000, 42);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<u32>>());
        assert_eq!(p, seeded_permutation(1000, 42));
        assert_ne!(p, seeded_permutation(1000, 43));
    }

    #[test]
    fn zero_image_gives_zero_stream() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 16, 10, 3).unwrap();
        let z = SceneImage::zeros(4, 4);
        assert!(op.project(&z).unwrap().values.iter().all(|&v| v == 0));
        assert!(op.project_dense(&z).unwrap().values.iter().all(|&v| v == 0));
    }

    #[test]
    fn row_pattern_attains_half_order() {
        let op = SensingOperator::unscrambled(MatrixKind::ScrambledHadamard, 4, 3).unwrap();
        // ones where row 0 ([1,-1,1,-1]) is +1
        let x = img(&[1.0, 0.0, 1.0, 0.0]);
        let y = op.project(&x).unwrap();
        assert_eq!(y.values[0], 2);
        assert_eq!(measurement_bounds(4).unwrap(), (-2, 2));
    }

    #[test]
    fn basis_image_gives_column() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 8, 7, 11).unwrap();
        let dense = op.dense();
        for j in 0..8 {
            let mut v = vec![0.0; 8];
            v[j] = 1.0;
            let y = op.project_dense(&img(&v)).unwrap();
            let col: Vec<i16> = dense.iter().map(|row| row[j] as i16).collect();
            assert_eq!(y.values, col);
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(measurement_bounds(65536).unwrap(), (-32768, 32768));
        assert_eq!(measurement_bounds(256).unwrap(), (-128, 128));
        assert!(measurement_bounds(6).is_err());
    }

    #[test]
    fn unit_stream_adjoint_is_row() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 16, 9, 5).unwrap();
        let dense = op.dense();
        for i in 0..9 {
            let mut e = vec![0.0; 9];
            e[i] = 1.0;
            let a = op.adjoint(&e).unwrap();
            let row: Vec<f64> = dense[i].iter().map(|&v| v as f64).collect();
            assert_eq!(a, row);
        }
        assert!(op.adjoint(&[0.0; 9]).unwrap().iter().all(|&v| v == 0.0));
        assert!(op.adjoint(&[0.0; 8]).is_err());
    }

    #[test]
    fn reduce_keeps_order() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 8, 4, 1).unwrap();
        assert_eq!(op.reduce(&[]).unwrap(), op);
        let r = op.reduce(&[0]).unwrap();
        let d = op.dense();
        assert_eq!(r.dense(), d[1..].to_vec());
        assert!(op.reduce(&[4]).is_err());
        assert!(op.reduce(&[2, 2]).is_err());
        assert!(op.reduce(&[3, 1]).is_err());
    }

    #[test]
    fn size_mismatch() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 8, 4, 1).unwrap();
        assert!(matches!(
            op.project(&SceneImage::zeros(4, 4)),
            Err(Error::SizeMismatch { expected: 8, actual: 16 })
        ));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let one = 1i64 << FRAC_BITS;
        assert_eq!(round_fixed(one / 2), 1);
        assert_eq!(round_fixed(-one / 2), -1);
        assert_eq!(round_fixed(one / 2 - 1), 0);
        assert_eq!(round_fixed(-3 * one - one / 2), -4);
    }
}
