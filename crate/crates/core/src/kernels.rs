//! Inner loops shared by the pairwise matcher and the gallery, so both
//! produce bit-identical scores.

use wide::f64x4;

use crate::scalar::Scalar;

#[inline(always)]
fn load4<T: Scalar>(c: &[T; 4]) -> f64x4 {
    f64x4::new([c[0].as_f64(), c[1].as_f64(), c[2].as_f64(), c[3].as_f64()])
}

/// Dot products of `R` rows against `P` probes, all of the same length.
///
/// Every pair is accumulated in f64 the same way whatever the tile shape:
/// four lanes with fused multiply-add over consecutive groups of four,
/// reduced as `(l0 + l1) + (l2 + l3)`, then any tail added in order. Callers
/// may therefore tile freely and still get bit-identical results.
#[inline(always)]
pub fn dot_tile<T: Scalar, U: Scalar, const R: usize, const P: usize>(
    rows: [&[T]; R],
    probes: [&[U]; P],
) -> [[f64; P]; R] {
    let len = if R > 0 { rows[0].len() } else { 0 };
    let n = len / 4;
    let row_chunks: [&[[T; 4]]; R] = std::array::from_fn(|r| {
        assert_eq!(rows[r].len(), len, "row lengths differ");
        &rows[r].as_chunks::<4>().0[..n]
    });
    let probe_chunks: [&[[U; 4]]; P] = std::array::from_fn(|p| {
        assert_eq!(probes[p].len(), len, "probe length differs from rows");
        &probes[p].as_chunks::<4>().0[..n]
    });
    let mut acc = [[f64x4::ZERO; P]; R];
    for k in 0..n {
        let pv: [f64x4; P] = std::array::from_fn(|p| load4(&probe_chunks[p][k]));
        for r in 0..R {
            let rv = load4(&row_chunks[r][k]);
            for p in 0..P {
                acc[r][p] = rv.mul_add(pv[p], acc[r][p]);
            }
        }
    }
    let mut out = [[0.0; P]; R];
    for r in 0..R {
        for p in 0..P {
            let l = acc[r][p].to_array();
            let mut sum = (l[0] + l[1]) + (l[2] + l[3]);
            for i in 4 * n..len {
                sum += rows[r][i].as_f64() * probes[p][i].as_f64();
            }
            out[r][p] = sum;
        }
    }
    out
}

/// Dot product accumulated in f64; the 1 × 1 case of [`dot_tile`].
#[inline]
pub fn dot_f64<T: Scalar, U: Scalar>(a: &[T], b: &[U]) -> f64 {
    dot_tile([a], [b])[0][0]
}

/// Number of differing descriptor bits restricted to `overlap`.
///
/// `q` and `g` hold `2c` channels of four words each; the 256-bit overlap
/// mask is applied to every channel.
#[inline]
pub fn masked_hamming(q: &[u64], g: &[u64], overlap: &[u64; 4]) -> u32 {
    debug_assert_eq!(q.len(), g.len());
    let mut diff = 0u32;
    for (qc, gc) in q.chunks_exact(4).zip(g.chunks_exact(4)) {
        for w in 0..4 {
            diff += ((qc[w] ^ gc[w]) & overlap[w]).count_ones();
        }
    }
    diff
}
