//! Enrollment store and exhaustive 1:N identification.
//!
//! Scoring a probe `q` against every row `g` needs three quantities per row:
//!
//! ```text
//! num_g      = ⟨flat_g, flat_q⟩                     one n×512c matrix–vector product
//! ‖q ⊙ h_g‖² = Σ_cell h_g(cell) · cellnorm_q(cell)   n×256 product with q's cell norms
//! ‖g ⊙ h_q‖² = Σ_cell cellnorm_g(cell) · h_q(cell)   n×256 product with q's mask
//! ```
//!
//! where `cellnorm(cell) = Σ_ch desc(ch, cell)²`. Both normalization terms
//! thus reduce to 256-wide products against precomputed rows, which is what
//! makes exhaustive search cost about one dot product per pair. The arithmetic
//! is the same code path as [`match_templates`](crate::matchkit::match_templates),
//! so gallery scores equal pairwise scores exactly.
//!
//! Rows are processed in blocks of [`GalleryIndex::block_rows`], one block per
//! parallel task. Within a block, small tiles of rows × probes share each
//! loaded vector (see [`dot_tile`]), so scoring several probes at once
//! ([`GalleryIndex::identify_batch`]) is compute-bound rather than
//! memory-bound.

use std::cmp::Ordering;
use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{FddError, Result};
use crate::format::{read_template_body, write_atomic, write_template_body, ByteReader, StoredTemplate};
use crate::kernels::{dot_tile, masked_hamming};
use crate::mask::{CellMask, CELLS};
use crate::matchkit::{binary_score, cosine_score};
use crate::scalar::Scalar;
use crate::template::{BinaryFddTemplate, FddTemplate, Metadata, VALUES_PER_C};

pub const GALLERY_MAGIC: &[u8; 4] = b"FDDG";
pub const GALLERY_VERSION: u16 = 1;
const FLAG_BINARIZED: u16 = 1;

pub const DEFAULT_BLOCK_ROWS: usize = 64;

/// One ranked identification result.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: String,
    /// Enrollment position in the gallery.
    pub index: usize,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    pub empty_overlap: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct RowScore {
    score: f64,
    empty: bool,
}

/// Score descending, then enrollment order.
fn rank_order(a: &(usize, RowScore), b: &(usize, RowScore)) -> Ordering {
    b.1.score
        .partial_cmp(&a.1.score)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn top_k(scores: &[RowScore], ids: &[String], k: usize) -> Vec<Candidate> {
    let mut all: Vec<(usize, RowScore)> = scores.iter().copied().enumerate().collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, rank_order);
        all.truncate(k);
    }
    all.sort_by(rank_order);
    all.into_iter()
        .enumerate()
        .map(|(pos, (index, s))| Candidate {
            id: ids[index].clone(),
            index,
            score: s.score,
            rank: pos + 1,
            empty_overlap: s.empty,
        })
        .collect()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(FddError::param("top-k must be at least 1"));
    }
    Ok(())
}

/// Precomputed probe-side terms. The descriptor is widened to f64 once;
/// widening is exact, so dot products equal those on the original values.
struct Probe {
    flat: Vec<f64>,
    mask: CellMask,
    cell_norms: [f64; CELLS],
    mask_weights: [f64; CELLS],
}

impl Probe {
    fn new<T: Scalar>(q: &FddTemplate<T>) -> Self {
        Self {
            flat: q.flatten().iter().map(|v| v.as_f64()).collect(),
            mask: *q.mask(),
            cell_norms: q.cell_norms(),
            mask_weights: q.mask().to_weights(),
        }
    }
}

/// Float-template gallery, rows in enrollment order.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryIndex<T> {
    c: usize,
    ids: Vec<String>,
    flat: Vec<T>,
    cell_norms: Vec<f64>,
    masks: Vec<CellMask>,
    metas: Vec<Metadata>,
    block_rows: usize,
}

impl<T: Scalar> GalleryIndex<T> {
    pub fn new(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(FddError::param("gallery channel count must be at least 1"));
        }
        Ok(Self {
            c,
            ids: Vec::new(),
            flat: Vec::new(),
            cell_norms: Vec::new(),
            masks: Vec::new(),
            metas: Vec::new(),
            block_rows: DEFAULT_BLOCK_ROWS,
        })
    }

    pub fn with_capacity(c: usize, n: usize) -> Result<Self> {
        let mut g = Self::new(c)?;
        g.ids.reserve(n);
        g.flat.reserve(n * VALUES_PER_C * c);
        g.cell_norms.reserve(n * CELLS);
        g.masks.reserve(n);
        g.metas.reserve(n);
        Ok(g)
    }

    /// Rows per processing block.
    pub fn set_block_rows(&mut self, rows: usize) {
        self.block_rows = rows.max(1);
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn dim(&self) -> usize {
        VALUES_PER_C * self.c
    }

    /// Flattened descriptor of row `i`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.flat[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn row_cell_norms(&self, i: usize) -> &[f64] {
        &self.cell_norms[i * CELLS..(i + 1) * CELLS]
    }

    pub fn row_mask(&self, i: usize) -> &CellMask {
        &self.masks[i]
    }

    /// Rebuilds the template stored at row `i`.
    pub fn template(&self, i: usize) -> FddTemplate<T> {
        FddTemplate::from_flat(self.c, self.row(i).to_vec(), self.masks[i], self.metas[i].clone())
            .expect("rows hold valid templates")
    }

    /// Appends a template. Duplicate ids are allowed; rows are told apart by index.
    pub fn enroll(&mut self, t: &FddTemplate<T>, id: impl Into<String>) -> Result<usize> {
        if t.c() != self.c {
            return Err(FddError::param(format!(
                "template has c = {}, gallery has c = {}",
                t.c(),
                self.c
            )));
        }
        self.flat.extend_from_slice(t.flatten());
        self.cell_norms.extend_from_slice(&t.cell_norms());
        self.masks.push(*t.mask());
        self.metas.push(t.meta.clone());
        self.ids.push(id.into());
        Ok(self.ids.len() - 1)
    }

    /// Scores rows `start..start + R` against `P` probes.
    #[inline(always)]
    fn score_tile<const R: usize, const P: usize>(
        &self,
        start: usize,
        weights: &[[f64; CELLS]],
        probes: [&Probe; P],
    ) -> [[RowScore; P]; R] {
        let num: [[f64; P]; R] = dot_tile(
            std::array::from_fn(|r| self.row(start + r)),
            probes.map(|p| &p.flat[..]),
        );
        let q_norm_sq: [[f64; P]; R] = dot_tile(
            std::array::from_fn(|r| &weights[r][..]),
            probes.map(|p| &p.cell_norms[..]),
        );
        let g_norm_sq: [[f64; P]; R] = dot_tile(
            std::array::from_fn(|r| self.row_cell_norms(start + r)),
            probes.map(|p| &p.mask_weights[..]),
        );
        std::array::from_fn(|r| {
            std::array::from_fn(|p| {
                if probes[p].mask.intersect(&self.masks[start + r]).is_empty() {
                    RowScore {
                        score: 0.0,
                        empty: true,
                    }
                } else {
                    RowScore {
                        score: cosine_score(num[r][p], q_norm_sq[r][p], g_norm_sq[r][p]),
                        empty: false,
                    }
                }
            })
        })
    }

    /// Scores `rows` rows from `start` against every probe; `out` is
    /// probe-major (`out[p * rows + r]`).
    fn score_block<const RT: usize, const PT: usize>(
        &self,
        start: usize,
        rows: usize,
        probes: &[Probe],
        out: &mut [RowScore],
    ) {
        let weights: Vec<[f64; CELLS]> = (start..start + rows).map(|i| self.masks[i].to_weights()).collect();
        let mut r = 0;
        while r < rows {
            let tile_rows = if r + RT <= rows { RT } else { 1 };
            let mut p = 0;
            while p < probes.len() {
                let tile_probes = if p + PT <= probes.len() { PT } else { 1 };
                let w = &weights[r..];
                let mut put = |dr: usize, dp: usize, v: RowScore| out[(p + dp) * rows + r + dr] = v;
                match (tile_rows == RT, tile_probes == PT) {
                    (true, true) => {
                        let t = self.score_tile::<RT, PT>(start + r, w, std::array::from_fn(|i| &probes[p + i]));
                        for (dr, row) in t.iter().enumerate() {
                            for (dp, v) in row.iter().enumerate() {
                                put(dr, dp, *v);
                            }
                        }
                    }
                    (true, false) => {
                        let t = self.score_tile::<RT, 1>(start + r, w, [&probes[p]]);
                        for (dr, row) in t.iter().enumerate() {
                            put(dr, 0, row[0]);
                        }
                    }
                    (false, true) => {
                        let t = self.score_tile::<1, PT>(start + r, w, std::array::from_fn(|i| &probes[p + i]));
                        for (dp, v) in t[0].iter().enumerate() {
                            put(0, dp, *v);
                        }
                    }
                    (false, false) => put(0, 0, self.score_tile::<1, 1>(start + r, w, [&probes[p]])[0][0]),
                }
                p += tile_probes;
            }
            r += tile_rows;
        }
    }

    fn check_probe(&self, q: &FddTemplate<T>) -> Result<()> {
        if q.c() != self.c {
            return Err(FddError::param(format!(
                "probe has c = {}, gallery has c = {}",
                q.c(),
                self.c
            )));
        }
        Ok(())
    }

    /// Scores of `q` against every row, in enrollment order.
    pub fn scores(&self, q: &FddTemplate<T>) -> Result<Vec<f64>> {
        Ok(self.raw_scores(&[q])?.remove(0).into_iter().map(|s| s.score).collect())
    }

    fn raw_scores(&self, probes: &[&FddTemplate<T>]) -> Result<Vec<Vec<RowScore>>> {
        for q in probes {
            self.check_probe(q)?;
        }
        let prepared: Vec<Probe> = probes.iter().map(|q| Probe::new(q)).collect();
        let n = self.len();
        let block = self.block_rows;
        // Block-major buffer: for each block, probes × rows of that block.
        let mut buf = vec![
            RowScore {
                score: 0.0,
                empty: true
            };
            n * prepared.len()
        ];
        buf.par_chunks_mut(block * prepared.len().max(1))
            .enumerate()
            .for_each(|(b, out)| {
                let start = b * block;
                let rows = (n - start).min(block);
                if prepared.len() == 1 {
                    self.score_block::<8, 1>(start, rows, &prepared, out);
                } else {
                    self.score_block::<4, 3>(start, rows, &prepared, out);
                }
            });
        let mut per_probe = vec![Vec::with_capacity(n); prepared.len()];
        for (b, chunk) in buf.chunks(block * prepared.len().max(1)).enumerate() {
            let rows = (n - b * block).min(block);
            for (pi, dst) in per_probe.iter_mut().enumerate() {
                dst.extend_from_slice(&chunk[pi * rows..(pi + 1) * rows]);
            }
        }
        Ok(per_probe)
    }

    /// Top `k` rows by score; ties go to the earlier enrollment.
    pub fn identify(&self, q: &FddTemplate<T>, k: usize) -> Result<Vec<Candidate>> {
        check_k(k)?;
        let scores = self.raw_scores(&[q])?;
        Ok(top_k(&scores[0], &self.ids, k))
    }

    /// [`identify`](Self::identify) for many probes, scoring each gallery
    /// block against all probes before moving on.
    pub fn identify_batch(&self, probes: &[FddTemplate<T>], k: usize) -> Result<Vec<Vec<Candidate>>> {
        check_k(k)?;
        let refs: Vec<&FddTemplate<T>> = probes.iter().collect();
        let scores = self.raw_scores(&refs)?;
        Ok(scores.iter().map(|s| top_k(s, &self.ids, k)).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = gallery_header(self.c, false, self.len());
        for i in 0..self.len() {
            put_id(&mut out, &self.ids[i]);
            write_template_body(&mut out, &StoredTemplate::Float(self.template(i)));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match AnyGallery::decode(bytes)? {
            AnyGallery::Float(g) => Ok(g),
            AnyGallery::Binary(_) => Err(FddError::format("gallery holds binarized templates")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Gallery of sign-binarized templates.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGalleryIndex {
    c: usize,
    ids: Vec<String>,
    bits: Vec<u64>,
    masks: Vec<CellMask>,
    metas: Vec<Metadata>,
}

impl BinaryGalleryIndex {
    pub fn new(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(FddError::param("gallery channel count must be at least 1"));
        }
        Ok(Self {
            c,
            ids: Vec::new(),
            bits: Vec::new(),
            masks: Vec::new(),
            metas: Vec::new(),
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn words(&self) -> usize {
        BinaryFddTemplate::words_for(self.c)
    }

    pub fn template(&self, i: usize) -> BinaryFddTemplate {
        let w = self.words();
        BinaryFddTemplate::new(
            self.c,
            self.bits[i * w..(i + 1) * w].to_vec(),
            self.masks[i],
            self.metas[i].clone(),
        )
        .expect("rows hold valid templates")
    }

    pub fn enroll(&mut self, t: &BinaryFddTemplate, id: impl Into<String>) -> Result<usize> {
        if t.c() != self.c {
            return Err(FddError::param(format!(
                "template has c = {}, gallery has c = {}",
                t.c(),
                self.c
            )));
        }
        self.bits.extend_from_slice(t.bits());
        self.masks.push(*t.mask());
        self.metas.push(t.meta.clone());
        self.ids.push(id.into());
        Ok(self.ids.len() - 1)
    }

    fn raw_scores(&self, q: &BinaryFddTemplate) -> Result<Vec<RowScore>> {
        if q.c() != self.c {
            return Err(FddError::param(format!(
                "probe has c = {}, gallery has c = {}",
                q.c(),
                self.c
            )));
        }
        let w = self.words();
        let per_cell = 2 * self.c as u64;
        let mut out = vec![
            RowScore {
                score: 0.0,
                empty: true
            };
            self.len()
        ];
        out.par_chunks_mut(DEFAULT_BLOCK_ROWS * 16)
            .enumerate()
            .for_each(|(b, chunk)| {
                let start = b * DEFAULT_BLOCK_ROWS * 16;
                for (r, slot) in chunk.iter_mut().enumerate() {
                    let i = start + r;
                    let overlap = q.mask().intersect(&self.masks[i]);
                    if overlap.is_empty() {
                        continue;
                    }
                    let diff = masked_hamming(q.bits(), &self.bits[i * w..(i + 1) * w], overlap.words());
                    *slot = RowScore {
                        score: binary_score(diff as u64, overlap.count() as u64 * per_cell),
                        empty: false,
                    };
                }
            });
        Ok(out)
    }

    pub fn scores(&self, q: &BinaryFddTemplate) -> Result<Vec<f64>> {
        Ok(self.raw_scores(q)?.into_iter().map(|s| s.score).collect())
    }

    pub fn identify_binary(&self, q: &BinaryFddTemplate, k: usize) -> Result<Vec<Candidate>> {
        check_k(k)?;
        Ok(top_k(&self.raw_scores(q)?, &self.ids, k))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = gallery_header(self.c, true, self.len());
        for i in 0..self.len() {
            put_id(&mut out, &self.ids[i]);
            write_template_body::<f32>(&mut out, &StoredTemplate::Binary(self.template(i)));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match AnyGallery::<f32>::decode(bytes)? {
            AnyGallery::Binary(g) => Ok(g),
            AnyGallery::Float(_) => Err(FddError::format("gallery holds float templates")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn gallery_header(c: usize, binary: bool, n: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GALLERY_MAGIC);
    out.extend_from_slice(&GALLERY_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u16).to_le_bytes());
    out.extend_from_slice(&(if binary { FLAG_BINARIZED } else { 0 }).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out
}

fn put_id(out: &mut Vec<u8>, id: &str) {
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
}

/// A gallery file of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyGallery<T> {
    Float(GalleryIndex<T>),
    Binary(BinaryGalleryIndex),
}

impl<T: Scalar> AnyGallery<T> {
    pub fn c(&self) -> usize {
        match self {
            AnyGallery::Float(g) => g.c(),
            AnyGallery::Binary(g) => g.c(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyGallery::Float(g) => g.len(),
            AnyGallery::Binary(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, AnyGallery::Binary(_))
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            AnyGallery::Float(g) => g.encode(),
            AnyGallery::Binary(g) => g.encode(),
        }
    }

    /// Appends a stored template, binarizing float input for binary galleries.
    pub fn enroll(&mut self, t: &StoredTemplate<T>, id: impl Into<String>) -> Result<usize> {
        match (self, t) {
            (AnyGallery::Float(g), StoredTemplate::Float(f)) => g.enroll(f, id),
            (AnyGallery::Float(_), StoredTemplate::Binary(_)) => Err(FddError::param(
                "cannot enroll a binarized template into a float gallery",
            )),
            (AnyGallery::Binary(g), t) => g.enroll(&t.to_binary(), id),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(GALLERY_MAGIC)?;
        let version = r.u16()?;
        if version != GALLERY_VERSION {
            return Err(FddError::format(format!("unsupported gallery version {version}")));
        }
        let c = r.u16()? as usize;
        let flags = r.u16()?;
        if flags & !FLAG_BINARIZED != 0 {
            return Err(FddError::format(format!("unknown gallery flags {flags:#06x}")));
        }
        let n = r.u64()?;
        let binary = flags & FLAG_BINARIZED != 0;
        let mut gallery = if binary {
            AnyGallery::Binary(BinaryGalleryIndex::new(c).map_err(|e| FddError::format(e.to_string()))?)
        } else {
            AnyGallery::Float(GalleryIndex::new(c).map_err(|e| FddError::format(e.to_string()))?)
        };
        for entry in 0..n {
            let id_len = r.u16()? as usize;
            let id = r.utf8(id_len)?.to_string();
            let t = read_template_body::<T>(&mut r)?;
            if t.is_binary() != binary || t.c() != c {
                return Err(FddError::format(format!(
                    "entry {entry} does not match the gallery header"
                )));
            }
            gallery.enroll(&t, id)?;
        }
        r.finish()?;
        Ok(gallery)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Exclusive writer lock on a gallery file, held as `<gallery>.lock`.
#[derive(Debug)]
pub struct GalleryLock {
    path: PathBuf,
}

impl GalleryLock {
    pub fn lock_path(gallery: &Path) -> PathBuf {
        let mut p = gallery.as_os_str().to_owned();
        p.push(".lock");
        p.into()
    }

    /// Fails with [`FddError::Locked`] if another writer holds the lock.
    pub fn acquire(gallery: &Path) -> Result<Self> {
        let path = Self::lock_path(gallery);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(FddError::Locked(format!(
                "{} exists; another enrollment is in progress",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for GalleryLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchkit::{match_binary, match_templates};
    use crate::template::binarize_template;
    use crate::tensor::DenseTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_template(c: usize, rng: &mut ChaCha8Rng) -> FddTemplate<f32> {
        let mask = CellMask::from_fn(|_, _| rng.random_bool(0.6));
        let d = DenseTensor::from_fn((2 * c, 16, 16), |_, _, _| rng.random_range(-1.0f32..1.0) as f64 as f32);
        FddTemplate::from_unmasked(c, &d, mask, Metadata::new()).unwrap()
    }

    #[test]
    fn enroll_and_self_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_template(6, &mut rng);
        let mut g = GalleryIndex::new(6).unwrap();
        assert!(g.identify(&t, 3).unwrap().is_empty());
        g.enroll(&t, "alice").unwrap();
        assert_eq!(g.len(), 1);
        let hits = g.identify(&t, 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!((hits[0].id.as_str(), hits[0].rank), ("alice", 1));
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(g.identify(&t, 0).is_err());
        assert!(g.enroll(&random_template(3, &mut rng), "x").is_err());
    }

    #[test]
    fn cell_norms_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = GalleryIndex::new(3).unwrap();
        let t = random_template(3, &mut rng);
        g.enroll(&t, "a").unwrap();
        for cell in 0..CELLS {
            let mut want = 0.0;
            for ch in 0..6 {
                let v = t.descriptor().get(ch, cell / 16, cell % 16) as f64;
                want += v * v;
            }
            assert!((g.row_cell_norms(0)[cell] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_probe_scores_zero_with_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = GalleryIndex::new(2).unwrap();
        for i in 0..5 {
            g.enroll(&random_template(2, &mut rng), format!("id{i}")).unwrap();
        }
        let empty = FddTemplate::new(2, DenseTensor::zeros((4, 16, 16)), CellMask::empty(), Metadata::new()).unwrap();
        let hits = g.identify(&empty, 5).unwrap();
        assert!(hits.iter().all(|c| c.score == 0.0 && c.empty_overlap));
        // all tied → enrollment order
        assert_eq!(hits.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn gallery_scores_equal_pairwise_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = GalleryIndex::new(6).unwrap();
        g.set_block_rows(7);
        let mut bg = BinaryGalleryIndex::new(6).unwrap();
        let rows: Vec<_> = (0..50).map(|_| random_template(6, &mut rng)).collect();
        for (i, t) in rows.iter().enumerate() {
            g.enroll(t, format!("{i}")).unwrap();
            bg.enroll(&binarize_template(t), format!("{i}")).unwrap();
        }
        let probes: Vec<_> = (0..3).map(|_| random_template(6, &mut rng)).collect();
        let batch = g.identify_batch(&probes, 50).unwrap();
        for (q, hits) in probes.iter().zip(&batch) {
            assert_eq!(hits, &g.identify(q, 50).unwrap());
            for h in hits {
                assert_eq!(h.score, match_templates(q, &rows[h.index]).unwrap().score);
            }
            let bq = binarize_template(q);
            for h in bg.identify_binary(&bq, 50).unwrap() {
                assert_eq!(
                    h.score,
                    match_binary(&bq, &binarize_template(&rows[h.index])).unwrap().score
                );
            }
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let empty = GalleryIndex::<f32>::new(6).unwrap();
        assert_eq!(GalleryIndex::<f32>::decode(&empty.encode()).unwrap(), empty);

        let mut g = GalleryIndex::new(2).unwrap();
        let mut t = random_template(2, &mut rng);
        t.meta.insert("finger".into(), "3".into());
        g.enroll(&t, "ü-id").unwrap();
        let bytes = g.encode();
        assert_eq!(&bytes[..4], b"FDDG");
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 1);
        let back = GalleryIndex::<f32>::decode(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.encode(), bytes);
        assert!(BinaryGalleryIndex::decode(&bytes).is_err());

        let mut bg = BinaryGalleryIndex::new(2).unwrap();
        bg.enroll(&binarize_template(&t), "b").unwrap();
        let bbytes = bg.encode();
        assert_eq!(BinaryGalleryIndex::decode(&bbytes).unwrap(), bg);
        for cut in [0, 5, 17, bytes.len() - 1] {
            assert!(matches!(
                GalleryIndex::<f32>::decode(&bytes[..cut]),
                Err(FddError::Format(_))
            ));
        }
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.fddg");
        let lock = GalleryLock::acquire(&path).unwrap();
        assert!(matches!(GalleryLock::acquire(&path), Err(FddError::Locked(_))));
        drop(lock);
        assert!(GalleryLock::acquire(&path).is_ok());
    }
}
