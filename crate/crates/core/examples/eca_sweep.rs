//! Unauthorized and post-attack PSNR over synthetic patches.
//!
//! `cargo run --release --example eca_sweep -- [patches] [iters]`

use spc_rdh::eval::{median, run_sweep, EvalSettings, SweepConfig, Threshold, Variant};
use spc_rdh::synthetic::synthetic_patches;
use spc_rdh::{KeySpec, MatrixKind, OperatorDescriptor};

fn main() -> spc_rdh::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("numeric argument"));
    let count = args.next().unwrap_or(20);
    let iters = args.next().unwrap_or(500);
    let images = synthetic_patches(count, 64, 100);
    let mut settings = EvalSettings::default();
    settings.fista.max_iters = iters;
    let config = SweepConfig {
        descriptor: OperatorDescriptor {
            kind: MatrixKind::ScrambledHadamard,
            order: 4096,
            rows: 1638,
            seed: 7,
        },
        levels: (7..=14).collect(),
        threshold: Threshold::Loose,
        key: KeySpec::new(b"example-key-material")?,
        variants: vec![Variant::MarkedTruncated, Variant::PostEca],
        settings,
    };
    let result = run_sweep(&images, &config)?;
    println!("n,unauthorized_db,post_eca_db,eca_wins");
    for n in 7..=14 {
        let before = result.psnr(n, Variant::MarkedTruncated);
        let after = result.psnr(n, Variant::PostEca);
        let wins = before.iter().zip(&after).filter(|(b, a)| a > b).count();
        println!("{n},{:.2},{:.2},{wins}/{count}", median(&before)?, median(&after)?);
    }
    Ok(())
}
