//! Orthonormal 2D sparsifying transforms.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sparsity {
    /// Periodized Daubechies-4 wavelet, multi-level.
    #[default]
    Daubechies4,
    /// Orthonormal DCT-II along rows and columns.
    Dct,
}

const S3: f64 = 1.732_050_807_568_877_2;

fn d4_lowpass() -> [f64; 4] {
    let k = 4.0 * std::f64::consts::SQRT_2;
    [(1.0 + S3) / k, (3.0 + S3) / k, (3.0 - S3) / k, (1.0 - S3) / k]
}

fn d4_highpass() -> [f64; 4] {
    let h = d4_lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

// one analysis step on a strided line of length `n` (n even, n >= 4)
fn d4_forward_line(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let (h, g) = (d4_lowpass(), d4_highpass());
    scratch.clear();
    scratch.resize(n, 0.0);
    for i in 0..n / 2 {
        let mut a = 0.0;
        let mut d = 0.0;
        for k in 0..4 {
            let x = line[(2 * i + k) % n];
            a += h[k] * x;
            d += g[k] * x;
        }
        scratch[i] = a;
        scratch[n / 2 + i] = d;
    }
    line.copy_from_slice(scratch);
}

fn d4_inverse_line(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let (h, g) = (d4_lowpass(), d4_highpass());
    scratch.clear();
    scratch.resize(n, 0.0);
    for i in 0..n / 2 {
        let (a, d) = (line[i], line[n / 2 + i]);
        for k in 0..4 {
            scratch[(2 * i + k) % n] += h[k] * a + g[k] * d;
        }
    }
    line.copy_from_slice(scratch);
}

#[derive(Debug, Clone, Copy)]
struct Level {
    w: usize,
    h: usize,
    rows: bool,
    cols: bool,
}

/// A transform bound to an image size.
#[derive(Clone)]
pub struct Transform2d {
    kind: Sparsity,
    width: usize,
    height: usize,
    levels: Vec<Level>,
    dct_w: Option<Arc<dyn TransformType2And3<f64>>>,
    dct_h: Option<Arc<dyn TransformType2And3<f64>>>,
}

impl std::fmt::Debug for Transform2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform2d")
            .field("kind", &self.kind)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Transform2d {
    pub fn new(kind: Sparsity, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("empty transform".into()));
        }
        let mut t = Self {
            kind,
            width,
            height,
            levels: Vec::new(),
            dct_w: None,
            dct_h: None,
        };
        match kind {
            Sparsity::Daubechies4 => {
                if !width.is_power_of_two() || !height.is_power_of_two() {
                    return Err(Error::InvalidParameter(format!(
                        "wavelet needs power-of-two sides, got {width}x{height}"
                    )));
                }
                let (mut w, mut h) = (width, height);
                while w >= 4 || h >= 4 {
                    let level = Level {
                        w,
                        h,
                        rows: w >= 4,
                        cols: h >= 4,
                    };
                    t.levels.push(level);
                    if level.rows {
                        w /= 2;
                    }
                    if level.cols {
                        h /= 2;
                    }
                }
            }
            Sparsity::Dct => {
                let mut planner = DctPlanner::new();
                t.dct_w = Some(planner.plan_dct2(width));
                t.dct_h = Some(planner.plan_dct2(height));
            }
        }
        Ok(t)
    }

    pub fn kind(&self) -> Sparsity {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image to coefficients.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len());
        let mut c = x.to_vec();
        match self.kind {
            Sparsity::Daubechies4 => {
                for lv in &self.levels {
                    self.wavelet_level(&mut c, lv, d4_forward_line);
                }
            }
            Sparsity::Dct => self.dct(&mut c, true),
        }
        c
    }

    /// Coefficients to image.
    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.len());
        let mut x = c.to_vec();
        match self.kind {
            Sparsity::Daubechies4 => {
                for lv in self.levels.iter().rev() {
                    self.wavelet_level(&mut x, lv, d4_inverse_line);
                }
            }
            Sparsity::Dct => self.dct(&mut x, false),
        }
        x
    }

    fn wavelet_level(&self, data: &mut [f64], lv: &Level, step: fn(&mut [f64], &mut Vec<f64>)) {
        let mut line = Vec::new();
        let mut scratch = Vec::new();
        // rows and columns commute, so the same order works both ways
        if lv.rows {
            for r in 0..lv.h {
                let start = r * self.width;
                step(&mut data[start..start + lv.w], &mut scratch);
            }
        }
        if lv.cols {
            for c in 0..lv.w {
                line.clear();
                line.extend((0..lv.h).map(|r| data[r * self.width + c]));
                step(&mut line, &mut scratch);
                for (r, v) in line.iter().enumerate() {
                    data[r * self.width + c] = *v;
                }
            }
        }
    }

    fn dct(&self, data: &mut [f64], forward: bool) {
        let (w, h) = (self.width, self.height);
        let pw = self.dct_w.as_ref().expect("dct plan");
        let ph = self.dct_h.as_ref().expect("dct plan");
        let mut line = Vec::new();
        for r in 0..h {
            dct_line(pw.as_ref(), &mut data[r * w..(r + 1) * w], forward);
        }
        for c in 0..w {
            line.clear();
            line.extend((0..h).map(|r| data[r * w + c]));
            dct_line(ph.as_ref(), &mut line, forward);
            for (r, v) in line.iter().enumerate() {
                data[r * w + c] = *v;
            }
        }
    }
}

fn dct_line(plan: &dyn TransformType2And3<f64>, line: &mut [f64], forward: bool) {
    let n = line.len() as f64;
    let s0 = (1.0 / n).sqrt();
    let sk = (2.0 / n).sqrt();
    if forward {
        plan.process_dct2(line);
        line[0] *= s0;
        for v in &mut line[1..] {
            *v *= sk;
        }
    } else {
        line[0] *= 2.0 * s0;
        for v in &mut line[1..] {
            *v *= sk;
        }
        plan.process_dct3(line);
    }
}

/// `sign(v)·max(|v| - τ, 0)` componentwise.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau >= 0.0, "threshold must be non-negative");
    v.iter().map(|&x| shrink(x, tau)).collect()
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(len: usize) -> Vec<f64> {
        (0..len).map(|i| ((i * 7919 + 13) % 257) as f64 / 257.0 - 0.3).collect()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn orthonormal_round_trip() {
        for kind in [Sparsity::Daubechies4, Sparsity::Dct] {
            for (w, h) in [(8, 8), (64, 64), (16, 8), (4, 1), (2, 2)] {
                let t = Transform2d::new(kind, w, h).unwrap();
                let x = sample(w * h);
                let c = t.forward(&x);
                assert!((norm(&c) - norm(&x)).abs() < 1e-10, "{kind:?} {w}x{h}");
                let back = t.inverse(&c);
                assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn constant_image_is_one_coefficient() {
        // the wavelet stops at a 2x2 approximation band
        for (kind, want) in [(Sparsity::Daubechies4, 4), (Sparsity::Dct, 1)] {
            let t = Transform2d::new(kind, 16, 16).unwrap();
            let c = t.forward(&[0.5; 256]);
            let big: Vec<usize> = (0..256).filter(|&i| c[i].abs() > 1e-9).collect();
            assert_eq!(big.len(), want, "{kind:?}");
            assert!(big.iter().all(|&i| i % 16 < 2 && i / 16 < 2));
        }
    }

    #[test]
    fn dct_basis_vector_matches_definition() {
        let t = Transform2d::new(Sparsity::Dct, 8, 1).unwrap();
        let mut c = vec![0.0; 8];
        c[3] = 1.0;
        let x = t.inverse(&c);
        for (i, v) in x.iter().enumerate() {
            let want = (2.0f64 / 8.0).sqrt() * (std::f64::consts::PI * (i as f64 + 0.5) * 3.0 / 8.0).cos();
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn wavelet_needs_power_of_two() {
        assert!(Transform2d::new(Sparsity::Daubechies4, 12, 8).is_err());
        assert!(Transform2d::new(Sparsity::Dct, 12, 8).is_ok());
    }

    #[test]
    fn soft_threshold_examples() {
        let v = [3.0, -1.0, 0.5, -4.0];
        assert_eq!(soft_threshold(&v, 0.0), v.to_vec());
        assert_eq!(soft_threshold(&[3.0, -1.0], 2.0), vec![1.0, 0.0]);
        let once = soft_threshold(&v, 1.5);
        assert_eq!(soft_threshold(&once, 0.0), once);
    }
}
