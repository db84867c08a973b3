use nalgebra::DMatrix;
use spc_rdh::capacity::{eligibility_probability, relative_capacity, simulate_gaussian_capacity};
use spc_rdh::recon::{
    fista_solve, lipschitz_estimate, reconstruct, FistaOptions, LinearOperator, ReconProblem, Sparsity, Transform2d,
};
use spc_rdh::sensing::SplitMix64;
use spc_rdh::{build_operator, EmbedParams, MatrixKind};

fn uniform(g: &mut SplitMix64) -> f64 {
    (g.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn spectral_norm_sq(op: &spc_rdh::SensingOperator) -> f64 {
    let rows = op.dense();
    let m = DMatrix::from_fn(rows.len(), op.order(), |r, c| {
        if c < op.column_count() {
            rows[r][c] as f64
        } else {
            0.0
        }
    });
    let s = m.singular_values().max();
    s * s
}

#[test]
fn lipschitz_bound_against_svd() {
    let mut g = SplitMix64::new(1);
    for order in [4usize, 8, 16, 32] {
        for kind in [MatrixKind::ScrambledHadamard, MatrixKind::ScrambledSMatrix] {
            for _ in 0..5 {
                let rows = 1 + g.next_below(order as u64 - 1) as usize;
                let op = build_operator(kind, order, rows, g.next_u64()).unwrap();
                let exact = spectral_norm_sq(&op);
                let est = lipschitz_estimate(&op);
                assert!(est >= exact * (1.0 - 1e-9), "{kind:?} S={order} L={rows}: {est} < {exact}");
                assert!(est <= 1.05 * exact * (1.0 + 1e-9), "{kind:?} S={order} L={rows}: {est} > 1.05·{exact}");

                if rows > 1 {
                    let reduced = op.reduce(&[0]).unwrap();
                    assert!(spectral_norm_sq(&reduced) <= exact * (1.0 + 1e-12));
                }
            }
        }
    }
}

#[test]
fn sparse_recovery_matches_support_oracle() {
    let (w, h) = (8, 8);
    let psi = Transform2d::new(Sparsity::Daubechies4, w, h).unwrap();
    let op = build_operator(MatrixKind::ScrambledHadamard, 64, 32, 9).unwrap();
    let mut g = SplitMix64::new(2);
    // detail bands only: the constant image is invisible without the first
    // Hadamard row, and the coarse band carries it
    let support = [3usize, 12, 20, 35, 50];
    let mut coeffs = vec![0.0; 64];
    for &s in &support {
        coeffs[s] = 1.0 + uniform(&mut g);
    }
    let truth = psi.inverse(&coeffs);
    let y = op.apply(&truth).unwrap();

    // least squares restricted to the true support
    let cols: Vec<Vec<f64>> = support
        .iter()
        .map(|&s| {
            let mut e = vec![0.0; 64];
            e[s] = 1.0;
            op.apply(&psi.inverse(&e)).unwrap()
        })
        .collect();
    let a = DMatrix::from_fn(32, support.len(), |r, c| cols[c][r]);
    let sol = a.pseudo_inverse(1e-12).unwrap() * nalgebra::DVector::from_vec(y.clone());
    let mut oracle_c = vec![0.0; 64];
    for (k, &s) in support.iter().enumerate() {
        oracle_c[s] = sol[k];
    }
    let oracle = psi.inverse(&oracle_c);

    let options = FistaOptions {
        lambda: Some(1e-4),
        max_iters: 20_000,
        tolerance: 0.0,
        box_constraint: false,
        ..FistaOptions::default()
    };
    let r = reconstruct(&op, &y, w, h, options).unwrap();
    let peak = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mse = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    let psnr = 10.0 * (peak * peak / mse(&r.x, &oracle)).log10();
    assert!(psnr > 60.0, "PSNR against the support oracle {psnr:.1} dB");
    assert!(mse(&oracle, &truth) < 1e-20);
}

#[test]
fn unpenalised_solve_is_scale_covariant() {
    let mut g = SplitMix64::new(3);
    let op = build_operator(MatrixKind::ScrambledHadamard, 256, 100, 4).unwrap();
    let y: Vec<f64> = (0..100).map(|_| (g.next_below(200) as f64) - 100.0).collect();
    let options = FistaOptions {
        lambda: Some(0.0),
        max_iters: 200,
        box_constraint: false,
        lipschitz: Some(lipschitz_estimate(&op)),
        ..FistaOptions::default()
    };
    let base = reconstruct(&op, &y, 16, 16, options).unwrap();
    for n in [1, 7, 10, 16] {
        let c = f64::from(1u32 << n);
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let r = reconstruct(&op, &scaled, 16, 16, options).unwrap();
        assert_eq!(r.iterations, base.iterations);
        for (a, b) in r.x.iter().zip(&base.x) {
            assert_eq!(*a, b * c, "n = {n}");
        }
    }
}

#[test]
fn tight_threshold_capacity_tracks_model() {
    let sigma = 40.0;
    for n in [8u32, 10, 12] {
        let t = 2.0 * sigma;
        let params = EmbedParams::new(n, t as u32).unwrap();
        let mc = simulate_gaussian_capacity(10_000, sigma, &params, 6, 11).unwrap();
        let p = eligibility_probability(t, sigma).unwrap();
        let model = relative_capacity(p, n);
        let rel = (mc.c_r.mean - model).abs() / model;
        assert!(rel < 0.05, "n={n}: empirical {} vs model {model}", mc.c_r.mean);
    }
}

#[test]
fn dense_problem_solves() {
    let mut g = SplitMix64::new(5);
    let op = spc_rdh::recon::DenseOperator {
        rows: 10,
        cols: 16,
        data: (0..160).map(|_| uniform(&mut g) - 0.5).collect(),
    };
    let y = op.forward(&[0.5; 16]);
    let r = fista_solve(&ReconProblem::new(&op, y, 4, 4)).unwrap();
    assert!(r.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
}
