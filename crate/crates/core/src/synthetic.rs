//! Seeded sky-like test scenes: a faint background, a few broad nebula blobs
//! and a scatter of point-like stars. Sparse in a wavelet basis, which is
//! what the reconstruction experiments need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::SceneImage;

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

/// One `size`×`size` patch.
pub fn synthetic_patch(size: usize, seed: u64) -> SceneImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let background = rng.random_range(0.01..0.05);
    let mut blobs = Vec::new();
    for _ in 0..rng.random_range(2..=5) {
        blobs.push(Blob {
            cx: rng.random_range(0.0..s),
            cy: rng.random_range(0.0..s),
            sigma: rng.random_range(0.06..0.18) * s,
            amp: rng.random_range(0.15..0.45),
        });
    }
    for _ in 0..rng.random_range(6..=20) {
        blobs.push(Blob {
            cx: rng.random_range(0.0..s),
            cy: rng.random_range(0.0..s),
            sigma: rng.random_range(0.6..1.4),
            amp: rng.random_range(0.3..0.9),
        });
    }
    let mut pixels = vec![background; size * size];
    for (i, p) in pixels.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64, (i / size) as f64);
        for b in &blobs {
            let r2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            *p += b.amp * (-r2 / (2.0 * b.sigma * b.sigma)).exp();
        }
    }
    SceneImage::from_clamped(size, size, &pixels).expect("square patch")
}

/// `count` patches with seeds `seed, seed + 1, ...`.
pub fn synthetic_patches(count: usize, size: usize, seed: u64) -> Vec<SceneImage> {
    (0..count as u64).map(|k| synthetic_patch(size, seed.wrapping_add(k))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = synthetic_patch(32, 5);
        assert_eq!(a, synthetic_patch(32, 5));
        assert_ne!(a, synthetic_patch(32, 6));
        assert!(a.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(synthetic_patches(3, 8, 1).len(), 3);
    }
}
