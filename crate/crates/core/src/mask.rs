//! The 16×16 foreground grid shared by templates and matchers.

/// Side length of the descriptor grid.
pub const GRID: usize = 16;
/// Number of cells in the descriptor grid.
pub const CELLS: usize = GRID * GRID;
/// Bytes in the serialized mask bitmap.
pub const MASK_BYTES: usize = CELLS / 8;

/// Binary 16×16 cell mask.
///
/// Cell `(row, col)` has flat index `row * 16 + col` and lives in bit
/// `index % 64` of word `index / 64`. Serialized LSB-first, that is byte
/// `index / 8`, bit `index % 8`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CellMask {
    words: [u64; 4],
}

impl CellMask {
    pub const fn empty() -> Self {
        Self { words: [0; 4] }
    }

    pub const fn full() -> Self {
        Self { words: [u64::MAX; 4] }
    }

    pub const fn from_words(words: [u64; 4]) -> Self {
        Self { words }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty();
        for row in 0..GRID {
            for col in 0..GRID {
                if f(row, col) {
                    mask.set(row, col, true);
                }
            }
        }
        mask
    }

    /// Mask from per-cell flags in row-major order.
    pub fn from_cells(cells: &[bool; CELLS]) -> Self {
        Self::from_fn(|r, c| cells[r * GRID + c])
    }

    pub fn words(&self) -> &[u64; 4] {
        &self.words
    }

    #[inline]
    pub fn get_index(&self, idx: usize) -> bool {
        (self.words[idx / 64] >> (idx % 64)) & 1 == 1
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.get_index(row * GRID + col)
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        let idx = row * GRID + col;
        let bit = 1u64 << (idx % 64);
        if on {
            self.words[idx / 64] |= bit;
        } else {
            self.words[idx / 64] &= !bit;
        }
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut words = self.words;
        for (w, o) in words.iter_mut().zip(other.words) {
            *w &= o;
        }
        Self { words }
    }

    /// Flat indices of set cells, ascending.
    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        (0..CELLS).filter(move |&i| self.get_index(i))
    }

    /// 0/1 multipliers per cell, used by the matrix form of the matcher.
    pub fn to_weights(&self) -> [f64; CELLS] {
        let mut out = [0.0; CELLS];
        for (i, v) in out.iter_mut().enumerate() {
            if self.get_index(i) {
                *v = 1.0;
            }
        }
        out
    }

    pub fn to_bytes(&self) -> [u8; MASK_BYTES] {
        let mut out = [0u8; MASK_BYTES];
        for (i, w) in self.words.iter().enumerate() {
            out[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; MASK_BYTES]) -> Self {
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[i * 8..(i + 1) * 8]);
            *w = u64::from_le_bytes(buf);
        }
        Self { words }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_is_lsb_first_row_major() {
        let mut m = CellMask::empty();
        m.set(0, 0, true);
        m.set(0, 9, true);
        m.set(15, 15, true);
        let b = m.to_bytes();
        assert_eq!(b[0], 0b0000_0001);
        assert_eq!(b[1], 0b0000_0010);
        assert_eq!(b[31], 0b1000_0000);
        assert_eq!(m.count(), 3);
    }

    #[test]
    fn intersect_and_weights() {
        let a = CellMask::from_fn(|r, _| r < 8);
        let b = CellMask::from_fn(|_, c| c < 4);
        let ab = a.intersect(&b);
        assert_eq!(ab.count(), 32);
        let w = ab.to_weights();
        assert_eq!(w.iter().sum::<f64>(), 32.0);
        assert_eq!(w[0], 1.0);
        assert_eq!(w[4], 0.0);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(words in any::<[u64; 4]>()) {
            let m = CellMask::from_words(words);
            prop_assert_eq!(CellMask::from_bytes(&m.to_bytes()), m);
        }
    }
}
