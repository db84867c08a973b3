//! In-place fast Walsh–Hadamard transform in natural (Sylvester) order.
//!
//! The transform is unnormalised: applying it twice multiplies by the length.
//! Every butterfly performs the same two operations regardless of the
//! execution path, so the sequential and parallel kernels are bit-identical
//! for both integer and floating-point data.

use std::ops::{Add, Sub};

/// Element types the transform can run on.
pub trait Butterfly: Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> {}

impl Butterfly for i64 {}
impl Butterfly for f64 {}

/// Below this length the parallel entry point just runs sequentially.
pub const PAR_MIN_LEN: usize = 1 << 14;

// Sub-transform length handled by one task before the cross-tile stages.
#[cfg(feature = "parallel")]
const TILE: usize = 1 << 12;

#[inline]
fn butterflies<T: Butterfly>(lo: &mut [T], hi: &mut [T]) {
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = x + y;
        *b = x - y;
    }
}

/// Sequential transform. Panics if the length is not a power of two.
pub fn fwht_seq<T: Butterfly>(data: &mut [T]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fwht length {n} is not a power of two");
    let mut h = 1;
    while h < n {
        for block in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            butterflies(lo, hi);
        }
        h *= 2;
    }
}

/// Transform using the rayon pool for long inputs.
#[cfg(feature = "parallel")]
pub fn fwht_par<T: Butterfly>(data: &mut [T]) {
    use rayon::prelude::*;

    let n = data.len();
    if n < PAR_MIN_LEN {
        return fwht_seq(data);
    }
    assert!(n.is_power_of_two(), "fwht length {n} is not a power of two");
    // stages with span < TILE stay inside one tile
    data.par_chunks_mut(TILE).for_each(fwht_seq);
    let mut h = TILE;
    while h < n {
        data.par_chunks_mut(2 * h).for_each(|block| {
            let (lo, hi) = block.split_at_mut(h);
            lo.par_chunks_mut(TILE)
                .zip(hi.par_chunks_mut(TILE))
                .for_each(|(a, b)| butterflies(a, b));
        });
        h *= 2;
    }
}

#[cfg(not(feature = "parallel"))]
pub fn fwht_par<T: Butterfly>(data: &mut [T]) {
    fwht_seq(data)
}

/// Default entry point: parallel when the feature is enabled.
pub fn fwht<T: Butterfly>(data: &mut [T]) {
    fwht_par(data)
}
