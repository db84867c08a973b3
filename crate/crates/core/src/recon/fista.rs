//! Monotone FISTA for `½‖Φx − y‖² + λ‖Ψx‖₁` with an optional `[0, 1]` box.

use serde::Serialize;

use super::transform::{shrink, Sparsity, Transform2d};
use crate::error::{Error, Result};
use crate::scene::SceneImage;
use crate::sensing::{SensingOperator, SplitMix64};

/// Minimal operator interface the solver needs.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn transpose(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for SensingOperator {
    fn rows(&self) -> usize {
        self.row_count()
    }

    fn cols(&self) -> usize {
        self.order()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).expect("length checked by the solver")
    }

    fn transpose(&self, y: &[f64]) -> Vec<f64> {
        self.adjoint(y).expect("length checked by the solver")
    }
}

/// Row-major dense matrix, mostly for tests and small problems.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &v) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * v;
            }
        }
        out
    }
}

pub const LIPSCHITZ_FLOOR: f64 = 1e-12;
const POWER_ITERS: usize = 20;
const SAFETY: f64 = 1.05;

/// Upper estimate of `‖Φ‖²` by power iteration on `ΦᵀΦ`, inflated by 5%.
pub fn lipschitz_estimate<O: LinearOperator + ?Sized>(op: &O) -> f64 {
    if op.rows() == 0 || op.cols() == 0 {
        return LIPSCHITZ_FLOOR;
    }
    let mut rng = SplitMix64::new(0x5EED);
    let mut v: Vec<f64> = (0..op.cols())
        .map(|_| rng.next_u64() as f64 / u64::MAX as f64 - 0.5)
        .collect();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = op.transpose(&op.forward(&v));
        estimate = norm(&w);
        v = w;
    }
    (estimate * SAFETY).max(LIPSCHITZ_FLOOR)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `½‖Φx − y‖²`.
pub fn data_objective<O: LinearOperator + ?Sized>(op: &O, x: &[f64], y: &[f64]) -> f64 {
    let r = op.forward(x);
    0.5 * r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// `Φᵀ(Φx − y)`.
pub fn data_gradient<O: LinearOperator + ?Sized>(op: &O, x: &[f64], y: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = op.forward(x).iter().zip(y).map(|(a, b)| a - b).collect();
    op.transpose(&r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaOptions {
    /// `None` means `0.01·‖Φᵀy‖∞`.
    pub lambda: Option<f64>,
    pub max_iters: usize,
    /// Relative objective change that ends the run.
    pub tolerance: f64,
    pub sparsity: Sparsity,
    pub box_constraint: bool,
    /// Overrides the power-iteration step bound.
    pub lipschitz: Option<f64>,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iters: 500,
            tolerance: 1e-6,
            sparsity: Sparsity::Daubechies4,
            box_constraint: true,
            lipschitz: None,
        }
    }
}

pub const DEFAULT_LAMBDA_FRACTION: f64 = 0.01;

/// Everything one solve needs.
pub struct ReconProblem<'a, O: LinearOperator + ?Sized> {
    pub operator: &'a O,
    pub measurements: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub options: FistaOptions,
}

impl<'a, O: LinearOperator + ?Sized> ReconProblem<'a, O> {
    pub fn new(operator: &'a O, measurements: Vec<f64>, width: usize, height: usize) -> Self {
        Self {
            operator,
            measurements,
            width,
            height,
            options: FistaOptions::default(),
        }
    }

    pub fn with_options(mut self, options: FistaOptions) -> Self {
        self.options = options;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub x: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub lipschitz: f64,
}

impl FistaResult {
    /// The estimate as a scene, clamped into `[0, 1]`.
    pub fn image(&self) -> SceneImage {
        SceneImage::from_clamped(self.width, self.height, &self.x).expect("dimensions match")
    }

    pub fn objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.objective)
    }
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

const DIVERGENCE_RUN: usize = 5;

struct Evaluator<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    y: &'a [f64],
    psi: Transform2d,
    lambda: f64,
}

impl<O: LinearOperator + ?Sized> Evaluator<'_, O> {
    fn penalty(&self, x: &[f64]) -> f64 {
        if self.lambda > 0.0 {
            self.lambda * self.psi.forward(x).iter().map(|c| c.abs()).sum::<f64>()
        } else {
            0.0
        }
    }

    // (objective, residual norm)
    fn objective(&self, x: &[f64]) -> (f64, f64) {
        let r = self.op.forward(x);
        let rss: f64 = r.iter().zip(self.y).map(|(a, b)| (a - b) * (a - b)).sum();
        (0.5 * rss + self.penalty(x), rss.sqrt())
    }

    fn prox(&self, v: &[f64], step: f64, boxed: bool) -> Vec<f64> {
        let mut x = if self.lambda > 0.0 {
            let tau = self.lambda * step;
            let c: Vec<f64> = self.psi.forward(v).into_iter().map(|c| shrink(c, tau)).collect();
            self.psi.inverse(&c)
        } else {
            v.to_vec()
        };
        if boxed {
            x.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
        }
        x
    }
}

/// Solves the problem from a zero start.
pub fn fista_solve<O: LinearOperator + ?Sized>(problem: &ReconProblem<'_, O>) -> Result<FistaResult> {
    let op = problem.operator;
    let opts = &problem.options;
    let y = &problem.measurements;
    let n = problem.width * problem.height;
    if y.len() != op.rows() {
        return Err(Error::SizeMismatch {
            expected: op.rows(),
            actual: y.len(),
        });
    }
    if n != op.cols() {
        return Err(Error::SizeMismatch {
            expected: op.cols(),
            actual: n,
        });
    }
    let aty = op.transpose(y);
    let lambda = match opts.lambda {
        Some(l) if l >= 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::InvalidParameter(format!("lambda {l}"))),
        None => DEFAULT_LAMBDA_FRACTION * aty.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let mut lip = match opts.lipschitz {
        Some(l) if l > 0.0 => l,
        Some(l) => return Err(Error::InvalidParameter(format!("lipschitz {l}"))),
        None => lipschitz_estimate(op),
    };
    let eval = Evaluator {
        op,
        y,
        psi: Transform2d::new(opts.sparsity, problem.width, problem.height)?,
        lambda,
    };

    let mut x = vec![0.0; n];
    let (mut f_x, mut res_x) = eval.objective(&x);
    let f_start = f_x;
    let mut x_prev = x.clone();
    let mut point = x.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let mut growth_run = 0usize;
    let mut last_candidate = f_x;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=opts.max_iters {
        iterations = k;
        // gradient step from the extrapolated point, with a backtracking
        // guard in case the step bound was too optimistic
        let r_point: Vec<f64> = op.forward(&point).iter().zip(y).map(|(a, b)| a - b).collect();
        let f_point_data = 0.5 * r_point.iter().map(|r| r * r).sum::<f64>();
        let grad = op.transpose(&r_point);
        let (z, f_z, res_z) = loop {
            let v: Vec<f64> = point.iter().zip(&grad).map(|(p, g)| p - g / lip).collect();
            let z = eval.prox(&v, 1.0 / lip, opts.box_constraint);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((a, b), g) in z.iter().zip(&point).zip(&grad) {
                lin += (a - b) * g;
                sq += (a - b) * (a - b);
            }
            let model = f_point_data + lin + 0.5 * lip * sq;
            let rss: f64 = op.forward(&z).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            let data_z = 0.5 * rss;
            if data_z <= model + 1e-12 * model.abs() || !data_z.is_finite() {
                break (z.clone(), data_z + eval.penalty(&z), rss.sqrt());
            }
            lip *= 2.0;
        };
        if !f_z.is_finite() {
            return Err(Error::Diverged(k));
        }
        if f_z > last_candidate * (1.0 + opts.tolerance) && f_z > f_start {
            growth_run += 1;
            if growth_run >= DIVERGENCE_RUN {
                return Err(Error::Diverged(k));
            }
        } else {
            growth_run = 0;
        }
        last_candidate = f_z;

        let accepted = f_z <= f_x;
        let f_before = f_x;
        x_prev.clone_from(&x);
        if accepted {
            x = z.clone();
            f_x = f_z;
            res_x = res_z;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        point = x
            .iter()
            .zip(&z)
            .zip(&x_prev)
            .map(|((&xk, &zk), &xp)| xk + (t / t_next) * (zk - xk) + ((t - 1.0) / t_next) * (xk - xp))
            .collect();
        t = t_next;
        trace.push(TraceRow {
            iter: k,
            objective: f_x,
            residual: res_x,
        });
        if accepted {
            let change = (f_before - f_x).abs() / f_before.abs().max(f64::MIN_POSITIVE);
            if change < opts.tolerance {
                converged = true;
                break;
            }
        }
    }

    Ok(FistaResult {
        x,
        width: problem.width,
        height: problem.height,
        trace,
        iterations,
        converged,
        lambda,
        lipschitz: lip,
    })
}

/// Reconstructs a scene of the operator's order from real measurements.
pub fn reconstruct(
    op: &SensingOperator,
    measurements: &[f64],
    width: usize,
    height: usize,
    options: FistaOptions,
) -> Result<FistaResult> {
    fista_solve(&ReconProblem::new(op, measurements.to_vec(), width, height).with_options(options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{build_operator, MatrixKind};

    fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseOperator {
        let mut g = SplitMix64::new(seed);
        DenseOperator {
            rows,
            cols,
            data: (0..rows * cols).map(|_| g.next_u64() as f64 / u64::MAX as f64 - 0.5).collect(),
        }
    }

    #[test]
    fn lipschitz_floor_for_empty_operator() {
        let z = DenseOperator {
            rows: 0,
            cols: 4,
            data: vec![],
        };
        assert_eq!(lipschitz_estimate(&z), LIPSCHITZ_FLOOR);
        let zero = DenseOperator {
            rows: 2,
            cols: 2,
            data: vec![0.0; 4],
        };
        assert_eq!(lipschitz_estimate(&zero), LIPSCHITZ_FLOOR);
    }

    #[test]
    fn hadamard_lipschitz_is_order() {
        let op = build_operator(MatrixKind::ScrambledHadamard, 16, 15, 2).unwrap();
        let l = lipschitz_estimate(&op);
        assert!((16.0..=16.0 * 1.05 + 1e-9).contains(&l), "{l}");
    }

    #[test]
    fn objective_is_monotone_and_gradient_agrees() {
        let op = random_dense(12, 16, 4);
        let y: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.4).collect();
        let p = ReconProblem::new(&op, y.clone(), 4, 4);
        let r = fista_solve(&p).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].objective <= w[0].objective + 1e-9));
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = data_gradient(&op, &x, &y);
        let h = 1e-6;
        for j in 0..16 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (data_objective(&op, &a, &y) - data_objective(&op, &b, &y)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0));
        }
    }

    #[test]
    fn size_checks() {
        let op = random_dense(3, 4, 1);
        assert!(fista_solve(&ReconProblem::new(&op, vec![0.0; 2], 2, 2)).is_err());
        assert!(fista_solve(&ReconProblem::new(&op, vec![0.0; 3], 3, 1)).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&[TraceRow { iter: 1, objective: 2.0, residual: 0.5 }], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iter,objective,residual\n"));
    }
}
