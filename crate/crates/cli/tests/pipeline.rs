use std::path::{Path, PathBuf};
use std::process::Command;

use spc_rdh::format::{StreamFile, HEADER_BYTES};
use spc_rdh::synthetic::synthetic_patch;
use spc_rdh::SceneImage;
use spc_rdh_cli::commands::{embed_file, read_stream};
use spc_rdh_cli::pgm::write_pgm;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spc-rdh"))
}

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = bin().current_dir(dir).args(args).output().expect("spawn");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let (code, out, err) = run(dir, args);
    assert_eq!(code, 0, "{args:?} failed: {err}");
    out
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("key.bin"), b"pipeline-test-key-0001").unwrap();
    let p = dir.path().to_path_buf();
    (dir, p)
}

#[test]
fn black_image_golden_stream() {
    let (_t, dir) = setup();
    write_pgm(&dir.join("black.pgm"), &SceneImage::zeros(8, 8)).unwrap();
    ok(&dir, &["acquire", "--image", "black.pgm", "--rate", "50", "--seed", "7", "--out", "black.cswm"]);
    let mut want = Vec::new();
    want.extend_from_slice(b"CSWM");
    want.extend_from_slice(&[1, 0]);
    want.extend_from_slice(&64u32.to_le_bytes());
    want.extend_from_slice(&32u32.to_le_bytes());
    want.extend_from_slice(&7u64.to_le_bytes());
    want.extend_from_slice(&[0, 0, 0, 0]);
    want.extend_from_slice(&0u32.to_le_bytes());
    want.extend_from_slice(&[0; 64]);
    assert_eq!(want.len(), HEADER_BYTES + 64);
    assert_eq!(std::fs::read(dir.join("black.cswm")).unwrap(), want);
}

#[test]
fn full_rate_caps_rows() {
    let (_t, dir) = setup();
    write_pgm(&dir.join("a.pgm"), &synthetic_patch(8, 1)).unwrap();
    ok(&dir, &["acquire", "--image", "a.pgm", "--rate", "100", "--out", "a.cswm"]);
    assert_eq!(read_stream(&dir.join("a.cswm")).unwrap().header.total, 63);
    let (code, _, _) = run(&dir, &["acquire", "--image", "a.pgm", "--rate", "0", "--out", "b.cswm"]);
    assert_eq!(code, 1);
}

#[test]
fn round_trip_is_byte_identical() {
    let (_t, dir) = setup();
    for seed in [11u64, 12, 13] {
        write_pgm(&dir.join("a.pgm"), &synthetic_patch(32, seed)).unwrap();
        let s = seed.to_string();
        // L = 420: at n = 8 each payload fills exactly two carriers, so a
        // length divisible by 3 leaves no tail
        ok(&dir, &["acquire", "--image", "a.pgm", "--rate", "41", "--seed", &s, "--matrix", "smatrix", "--out", "o.cswm"]);
        let printed = ok(&dir, &["embed", "--in", "o.cswm", "--levels", "8", "--key", "key.bin", "--offset", "-3", "--out", "m.cswm"]);
        assert!(printed.starts_with("x="), "{printed}");
        assert_eq!(read_stream(&dir.join("m.cswm")).unwrap().header.tail_bits, 0);
        ok(&dir, &["extract", "--in", "m.cswm", "--key", "key.bin", "--offset", "-3", "--out", "r.cswm"]);
        assert_eq!(std::fs::read(dir.join("o.cswm")).unwrap(), std::fs::read(dir.join("r.cswm")).unwrap());
    }
}

#[test]
fn truncated_tail_is_flagged() {
    let (_t, dir) = setup();
    let mut found = false;
    'search: for seed in 0..40u64 {
        write_pgm(&dir.join("a.pgm"), &synthetic_patch(16, seed)).unwrap();
        let s = seed.to_string();
        ok(&dir, &["acquire", "--image", "a.pgm", "--rate", "30", "--seed", &s, "--out", "o.cswm"]);
        for n in ["7", "10", "13"] {
            ok(&dir, &["embed", "--in", "o.cswm", "--levels", n, "--key", "key.bin", "--out", "m.cswm"]);
            let marked = read_stream(&dir.join("m.cswm")).unwrap();
            if marked.header.tail_bits == 0 {
                continue;
            }
            let (code, _, err) = run(&dir, &["extract", "--in", "m.cswm", "--key", "key.bin", "--out", "r.cswm"]);
            assert_eq!(code, 2, "{err}");
            let last = *marked.location_map.last().unwrap() as usize;
            let a = read_stream(&dir.join("o.cswm")).unwrap().original_stream().unwrap().values;
            let b = read_stream(&dir.join("r.cswm")).unwrap().original_stream().unwrap().values;
            let differ: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
            assert!(differ.is_empty() || differ == [last], "differences at {differ:?}, last payload {last}");
            found = true;
            break 'search;
        }
    }
    assert!(found, "no truncated case in the search range");
}

#[test]
fn wrong_key_reports_checksum() {
    let (_t, dir) = setup();
    write_pgm(&dir.join("a.pgm"), &synthetic_patch(16, 5)).unwrap();
    std::fs::write(dir.join("other.bin"), b"another-key-of-enough-bytes").unwrap();
    ok(&dir, &["acquire", "--image", "a.pgm", "--out", "o.cswm"]);
    ok(&dir, &["embed", "--in", "o.cswm", "--levels", "8", "--key", "key.bin", "--out", "m.cswm"]);
    let (code, _, err) = run(&dir, &["extract", "--in", "m.cswm", "--key", "other.bin", "--out", "r.cswm"]);
    assert_eq!(code, 1);
    assert!(err.contains("checksum"), "{err}");
    std::fs::write(dir.join("short.bin"), b"short").unwrap();
    let (code, _, _) = run(&dir, &["extract", "--in", "m.cswm", "--key", "short.bin", "--out", "r.cswm"]);
    assert_eq!(code, 1);
}

#[test]
fn unsafe_threshold_refused() {
    let (_t, dir) = setup();
    write_pgm(&dir.join("a.pgm"), &synthetic_patch(16, 2)).unwrap();
    ok(&dir, &["acquire", "--image", "a.pgm", "--out", "o.cswm"]);
    let (code, _, err) = run(&dir, &["embed", "--in", "o.cswm", "--levels", "13", "--threshold", "4", "--key", "key.bin", "--out", "m.cswm"]);
    assert_eq!(code, 1);
    assert!(err.contains("limit 3"), "{err}");
    ok(&dir, &["embed", "--in", "o.cswm", "--levels", "13", "--threshold", "3", "--key", "key.bin", "--out", "m.cswm"]);
    ok(&dir, &["embed", "--in", "o.cswm", "--levels", "13", "--threshold", "4", "--allow-overflow", "--key", "key.bin", "--out", "m.cswm"]);
}

#[test]
fn sixty_four_values_at_sixteen_levels() {
    let img = synthetic_patch(16, 9).tile(0, 0, 8).unwrap();
    let big = {
        let mut s = SceneImage::zeros(16, 8);
        s.paste(&img, 0, 0).unwrap();
        s
    };
    let desc = spc_rdh::OperatorDescriptor {
        kind: spc_rdh::MatrixKind::ScrambledHadamard,
        order: 128,
        rows: 64,
        seed: 4,
    };
    let stream = desc.build().unwrap().project(&big).unwrap();
    let original = StreamFile::from_original(&stream).unwrap();
    let key = spc_rdh::KeySpec::new(b"pipeline-test-key-0001").unwrap();
    let params = spc_rdh::EmbedParams::loose(16, 128).unwrap();
    let (marked, report) = embed_file(&original, &params, &key).unwrap();
    assert_eq!(marked.header.map_count, 32);
    assert_eq!(report.carriers, 32);
    assert_eq!(marked.header.tail_bits, 0);
}

#[test]
fn reconstruct_modes() {
    let (_t, dir) = setup();
    write_pgm(&dir.join("a.pgm"), &synthetic_patch(16, 3)).unwrap();
    ok(&dir, &["acquire", "--image", "a.pgm", "--out", "o.cswm"]);
    ok(&dir, &["embed", "--in", "o.cswm", "--levels", "10", "--key", "key.bin", "--out", "m.cswm"]);
    for mode in ["authorized", "unauthorized", "eca"] {
        ok(&dir, &["reconstruct", "--in", "m.cswm", "--mode", mode, "--key", "key.bin", "--iters", "50", "--out", &format!("{mode}.pgm"), "--trace", "t.csv"]);
    }
    ok(&dir, &["reconstruct", "--in", "o.cswm", "--iters", "50", "--out", "ref.pgm"]);
    // both authorized paths solve the same problem
    assert_eq!(std::fs::read(dir.join("ref.pgm")).unwrap(), std::fs::read(dir.join("authorized.pgm")).unwrap());
    let trace = std::fs::read_to_string(dir.join("t.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,residual"));
    let (code, _, _) = run(&dir, &["reconstruct", "--in", "o.cswm", "--mode", "eca", "--out", "x.pgm"]);
    assert_eq!(code, 1);
    let (code, _, _) = run(&dir, &["reconstruct", "--in", "m.cswm", "--out", "x.pgm"]);
    assert_eq!(code, 1, "authorized reconstruction without a key");
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn analyze_curve_endpoints() {
    let (_t, dir) = setup();
    ok(&dir, &["analyze", "--curves", "capacity,rate,remaining", "--out-dir", "out"]);
    let cap = column(&std::fs::read_to_string(dir.join("out/capacity.csv")).unwrap(), "C_r");
    assert_eq!(cap.len(), 14);
    assert!((cap[0] - 0.941).abs() < 1e-3 && (cap[13] - 7.467).abs() < 1e-3, "{cap:?}");
    let rate = column(&std::fs::read_to_string(dir.join("out/rate.csv")).unwrap(), "r");
    assert!((rate[0] - 1.882).abs() < 1e-3 && (rate[13] - 1.067).abs() < 1e-3, "{rate:?}");
    let rem = std::fs::read_to_string(dir.join("out/remaining.csv")).unwrap();
    let pct = column(&rem, "r_p_percent");
    for block in pct.chunks(14) {
        assert!(block.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn analyze_experimental_curves() {
    let (_t, dir) = setup();
    ok(&dir, &["--jobs", "1", "analyze", "--curves", "rd,eca,breakdown", "--min-levels", "9", "--max-levels", "10", "--patches", "2", "--patch", "16", "--iters", "60", "--out-dir", "out"]);
    let rd = std::fs::read_to_string(dir.join("out/rd_curve.csv")).unwrap();
    assert!(rd.starts_with("n,C_r,r,psnr_median"), "{rd}");
    assert_eq!(rd.lines().count(), 3);
    let eca = std::fs::read_to_string(dir.join("out/eca.csv")).unwrap();
    assert!(eca.starts_with("n,psnr_before,psnr_after"));
    let bd = std::fs::read_to_string(dir.join("out/breakdown.csv")).unwrap();
    assert_eq!(bd.lines().count(), 1 + 2 * 5);
}

#[test]
fn tiled_acquisition() {
    let (_t, dir) = setup();
    let mut img = SceneImage::zeros(40, 20);
    img.paste(&synthetic_patch(16, 1), 0, 0).unwrap();
    write_pgm(&dir.join("big.pgm"), &img).unwrap();
    ok(&dir, &["acquire", "--image", "big.pgm", "--patch", "16", "--seed", "100", "--out", "t.cswm"]);
    for k in 0..2 {
        let f = read_stream(&dir.join(format!("t_{k:04}.cswm"))).unwrap();
        assert_eq!(f.header.seed, 100 + k);
        assert_eq!(f.header.order, 256);
    }
    assert!(!dir.join("t_0002.cswm").exists());
}
