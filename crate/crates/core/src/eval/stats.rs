use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("median of an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    /// P(ρ ≤ observed) under independence.
    pub p_lower: f64,
    /// P(ρ ≥ observed) under independence.
    pub p_upper: f64,
    pub exact: bool,
}

pub const EXACT_SPEARMAN_MAX: usize = 10;

/// Spearman rank correlation. The p-values enumerate every permutation for
/// up to ten points and use the Student t approximation beyond that.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidParameter("spearman needs at least 3 points".into()));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let rho = pearson(&rx, &ry);
    let n = x.len();
    if n <= EXACT_SPEARMAN_MAX {
        let (mut lower, mut upper, mut total) = (0u64, 0u64, 0u64);
        let eps = 1e-12;
        let mut perm = ry.clone();
        for_each_permutation(&mut perm, &mut |p| {
            let r = pearson(&rx, p);
            total += 1;
            if r <= rho + eps {
                lower += 1;
            }
            if r >= rho - eps {
                upper += 1;
            }
        });
        Ok(Spearman {
            rho,
            p_lower: lower as f64 / total as f64,
            p_upper: upper as f64 / total as f64,
            exact: true,
        })
    } else {
        let df = (n - 2) as f64;
        let r = rho.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        Ok(Spearman {
            rho,
            p_lower: dist.cdf(t),
            p_upper: 1.0 - dist.cdf(t),
            exact: false,
        })
    }
}

// Heap's algorithm
fn for_each_permutation(v: &mut [f64], f: &mut dyn FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
