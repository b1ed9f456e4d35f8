//! Fixed 2-D sinusoidal positional embedding.
//!
//! With `d` channels, the first `d/2` encode the row position and the last
//! `d/2` the column position. Inside each half, pair `i` holds
//! `sin(p / 10000^(2i / (d/2)))` at channel `2i` and the matching cosine at
//! `2i + 1`.

use crate::error::{FddError, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

const BASE: f64 = 10_000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEmbedding<T> {
    grid: DenseTensor<T>,
}

impl<T: Scalar> PositionalEmbedding<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.grid.dims()
    }

    pub fn grid(&self) -> &DenseTensor<T> {
        &self.grid
    }
}

pub fn make_embedding<T: Scalar>(channels: usize, height: usize, width: usize) -> Result<PositionalEmbedding<T>> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(FddError::param(format!(
            "positional embedding needs a positive multiple of 4 channels, got {channels}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(FddError::param("positional embedding needs a nonempty grid"));
    }
    let half = channels / 2;
    let grid = DenseTensor::from_fn((channels, height, width), |ch, row, col| {
        let (pos, k) = if ch < half { (row, ch) } else { (col, ch - half) };
        let pair = k / 2;
        let angle = pos as f64 / BASE.powf(2.0 * pair as f64 / half as f64);
        T::of(if k % 2 == 0 { angle.sin() } else { angle.cos() })
    });
    Ok(PositionalEmbedding { grid })
}

pub fn add_embedding<T: Scalar>(features: &DenseTensor<T>, pe: &PositionalEmbedding<T>) -> Result<DenseTensor<T>> {
    features.add(&pe.grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn origin_is_sin_zero_cos_one() {
        let pe = make_embedding::<f64>(16, 4, 4).unwrap();
        for ch in 0..16 {
            let want = if ch % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(pe.grid().get(ch, 0, 0), want);
        }
    }

    #[test]
    fn deterministic() {
        let a = make_embedding::<f32>(128, 64, 64).unwrap();
        let b = make_embedding::<f32>(128, 64, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_scalar_formula() {
        let pe = make_embedding::<f64>(8, 4, 4).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                // y half: channels 0..4, pairs i = 0, 1 with d/2 = 4
                for i in 0..2 {
                    let w = 1.0 / 10000f64.powf(2.0 * i as f64 / 4.0);
                    assert_eq!(pe.grid().get(2 * i, row, col), (row as f64 * w).sin());
                    assert_eq!(pe.grid().get(2 * i + 1, row, col), (row as f64 * w).cos());
                    assert_eq!(pe.grid().get(4 + 2 * i, row, col), (col as f64 * w).sin());
                    assert_eq!(pe.grid().get(4 + 2 * i + 1, row, col), (col as f64 * w).cos());
                }
            }
        }
    }

    #[test]
    fn rejects_bad_channel_counts() {
        assert!(make_embedding::<f32>(6, 4, 4).is_err());
        assert!(make_embedding::<f32>(0, 4, 4).is_err());
    }

    #[test]
    fn bounded_and_collision_free() {
        for size in [16usize, 128] {
            let pe = make_embedding::<f64>(8, size, size).unwrap();
            assert!(pe.grid().data().iter().all(|v| v.abs() <= 1.0));
            let mut seen = HashSet::new();
            for r in 0..size {
                for c in 0..size {
                    let key: Vec<u64> = (0..8).map(|ch| pe.grid().get(ch, r, c).to_bits()).collect();
                    assert!(seen.insert(key), "collision at ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn add_is_elementwise() {
        let pe = make_embedding::<f64>(4, 3, 5).unwrap();
        let zero = DenseTensor::zeros((4, 3, 5));
        assert_eq!(add_embedding(&zero, &pe).unwrap(), *pe.grid());

        let feats = DenseTensor::from_fn((4, 3, 5), |c, r, k| (c * 15 + r * 5 + k) as f64 * 0.25 - 3.0);
        let sum = add_embedding(&feats, &pe).unwrap();
        for (i, v) in sum.data().iter().enumerate() {
            assert_eq!(*v, feats.data()[i] + pe.grid().data()[i]);
        }
        let back = sum.sub(pe.grid()).unwrap();
        for (a, b) in back.data().iter().zip(feats.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(add_embedding(&DenseTensor::zeros((4, 3, 4)), &pe).is_err());
    }
}
