//! Descriptor templates: the unit of enrollment and matching.

use std::collections::BTreeMap;

use crate::error::{FddError, Result};
use crate::mask::{CellMask, CELLS, GRID};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Free-form key/value tags carried with a template (subject, finger, source).
pub type Metadata = BTreeMap<String, String>;

/// Number of flattened values per descriptor channel pair: `2 · 16 · 16`.
pub const VALUES_PER_C: usize = 2 * CELLS;

/// Masked dense descriptor of shape `(2c, 16, 16)`.
///
/// The first `c` channels come from the texture branch, the last `c` from the
/// minutia branch. Every value outside the mask is exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FddTemplate<T> {
    c: usize,
    descriptor: DenseTensor<T>,
    mask: CellMask,
    pub meta: Metadata,
}

impl<T: Scalar> FddTemplate<T> {
    /// Validates dims and the mask-zeroing invariant.
    pub fn new(c: usize, descriptor: DenseTensor<T>, mask: CellMask, meta: Metadata) -> Result<Self> {
        if c == 0 {
            return Err(FddError::param("channel count c must be at least 1"));
        }
        if descriptor.dims() != (2 * c, GRID, GRID) {
            return Err(FddError::shape(format!(
                "descriptor dims {:?}, expected {:?}",
                descriptor.dims(),
                (2 * c, GRID, GRID)
            )));
        }
        if !descriptor.all_finite() {
            return Err(FddError::Input("descriptor has non-finite values".into()));
        }
        for ch in 0..2 * c {
            let plane = descriptor.channel(ch);
            for (cell, v) in plane.iter().enumerate() {
                if !mask.get_index(cell) && *v != T::zero() {
                    return Err(FddError::Input(format!(
                        "descriptor is nonzero at masked-out cell {} (channel {ch})",
                        cell
                    )));
                }
            }
        }
        Ok(Self {
            c,
            descriptor,
            mask,
            meta,
        })
    }

    /// Masks `descriptor` and wraps it.
    pub fn from_unmasked(c: usize, descriptor: &DenseTensor<T>, mask: CellMask, meta: Metadata) -> Result<Self> {
        let masked = apply_mask(descriptor, &mask)?;
        Self::new(c, masked, mask, meta)
    }

    /// Reshapes a channel-outermost flat vector; inverse of [`flatten`](Self::flatten).
    pub fn from_flat(c: usize, flat: Vec<T>, mask: CellMask, meta: Metadata) -> Result<Self> {
        let desc = DenseTensor::new((2 * c, GRID, GRID), flat)?;
        Self::new(c, desc, mask, meta)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn descriptor(&self) -> &DenseTensor<T> {
        &self.descriptor
    }

    pub fn mask(&self) -> &CellMask {
        &self.mask
    }

    /// Set when the mask has no foreground cell; such templates match nothing.
    pub fn has_empty_mask(&self) -> bool {
        self.mask.is_empty()
    }

    /// Flattened descriptor, length `512 · c`, channel-outermost row-major.
    pub fn flatten(&self) -> &[T] {
        self.descriptor.data()
    }

    pub fn flat_len(&self) -> usize {
        VALUES_PER_C * self.c
    }

    /// Per-cell squared norm `Σ_ch desc(ch, cell)²`, accumulated in `f64`.
    pub fn cell_norms(&self) -> [f64; CELLS] {
        let mut out = [0.0; CELLS];
        for ch in 0..2 * self.c {
            for (acc, v) in out.iter_mut().zip(self.descriptor.channel(ch)) {
                let v = v.as_f64();
                *acc += v * v;
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> FddTemplate<U> {
        FddTemplate {
            c: self.c,
            descriptor: self.descriptor.cast(),
            mask: self.mask,
            meta: self.meta.clone(),
        }
    }
}

/// `out(ch, i, j) = desc(ch, i, j) · mask(i, j)`.
pub fn apply_mask<T: Scalar>(desc: &DenseTensor<T>, mask: &CellMask) -> Result<DenseTensor<T>> {
    let (channels, h, w) = desc.dims();
    if h != GRID || w != GRID {
        return Err(FddError::shape(format!(
            "mask needs a {GRID}×{GRID} grid, descriptor is {h}×{w}"
        )));
    }
    let mut out = desc.clone();
    let data = out.data_mut();
    for ch in 0..channels {
        for cell in 0..CELLS {
            if !mask.get_index(cell) {
                data[ch * CELLS + cell] = T::zero();
            }
        }
    }
    Ok(out)
}

/// Sign-binarized descriptor packed into 64-bit words.
///
/// Bit `i` of the flattened descriptor (channel outermost, then row, then
/// column) is bit `i % 64` of word `i / 64`, which is byte `i / 8`, bit
/// `i % 8` once the words are written little-endian. Each channel occupies
/// exactly four words, so the cell mask lines up with every channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryFddTemplate {
    c: usize,
    bits: Vec<u64>,
    mask: CellMask,
    pub meta: Metadata,
}

impl BinaryFddTemplate {
    pub const WORDS_PER_CHANNEL: usize = CELLS / 64;

    pub fn new(c: usize, bits: Vec<u64>, mask: CellMask, meta: Metadata) -> Result<Self> {
        if c == 0 {
            return Err(FddError::param("channel count c must be at least 1"));
        }
        if bits.len() != Self::words_for(c) {
            return Err(FddError::shape(format!(
                "binary template with c={c} needs {} words, got {}",
                Self::words_for(c),
                bits.len()
            )));
        }
        Ok(Self { c, bits, mask, meta })
    }

    /// Packs one flag per descriptor value.
    pub fn from_flags(c: usize, flags: &[bool], mask: CellMask, meta: Metadata) -> Result<Self> {
        if flags.len() != VALUES_PER_C * c {
            return Err(FddError::shape(format!(
                "expected {} bits, got {}",
                VALUES_PER_C * c,
                flags.len()
            )));
        }
        let mut bits = vec![0u64; Self::words_for(c)];
        for (i, _) in flags.iter().enumerate().filter(|(_, &f)| f) {
            bits[i / 64] |= 1 << (i % 64);
        }
        Self::new(c, bits, mask, meta)
    }

    pub fn words_for(c: usize) -> usize {
        2 * c * Self::WORDS_PER_CHANNEL
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn bits(&self) -> &[u64] {
        &self.bits
    }

    pub fn mask(&self) -> &CellMask {
        &self.mask
    }

    pub fn bit_len(&self) -> usize {
        VALUES_PER_C * self.c
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.bits[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn has_empty_mask(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(c: usize, bytes: &[u8], mask: CellMask, meta: Metadata) -> Result<Self> {
        let words = Self::words_for(c);
        if bytes.len() != words * 8 {
            return Err(FddError::shape(format!(
                "binary payload for c={c} is {} bytes, got {}",
                words * 8,
                bytes.len()
            )));
        }
        let bits = bytes
            .chunks_exact(8)
            .map(|chunk| {
                let mut buf = [0u8; 8];
                buf.copy_from_slice(chunk);
                u64::from_le_bytes(buf)
            })
            .collect();
        Self::new(c, bits, mask, meta)
    }
}

/// Thresholds a float template at zero: bit set iff the value is strictly
/// positive. Masked-out cells (exactly zero) therefore always read 0.
pub fn binarize_template<T: Scalar>(t: &FddTemplate<T>) -> BinaryFddTemplate {
    let mut bits = vec![0u64; BinaryFddTemplate::words_for(t.c())];
    for (i, v) in t.flatten().iter().enumerate() {
        if *v > T::zero() {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    BinaryFddTemplate {
        c: t.c(),
        bits,
        mask: *t.mask(),
        meta: t.meta.clone(),
    }
}

/// Six-channel 128×128 heatmap of minutia locations, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinutiaMap<T> {
    grid: DenseTensor<T>,
}

impl<T: Scalar> MinutiaMap<T> {
    pub const CHANNELS: usize = 6;
    pub const SIZE: usize = 128;

    pub fn new(grid: DenseTensor<T>) -> Result<Self> {
        let want = (Self::CHANNELS, Self::SIZE, Self::SIZE);
        if grid.dims() != want {
            return Err(FddError::shape(format!(
                "minutia map dims {:?}, expected {:?}",
                grid.dims(),
                want
            )));
        }
        if grid.data().iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(FddError::Input("minutia map values must lie in [0, 1]".into()));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &DenseTensor<T> {
        &self.grid
    }
}
