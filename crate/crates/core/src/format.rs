//! Template file encoding (`FDD1`) and the byte-level helpers shared with
//! the gallery and weight formats.
//!
//! ```text
//! "FDD1" | version u16 | c u16 | flags u16 | mask [u8; 32] | payload | meta
//! ```
//!
//! All integers are little-endian. `flags` bit 0 marks a binarized payload:
//! `ceil(512·c / 8)` packed bytes instead of `512·c` f32 values. `meta` is a
//! u32 byte length followed by a UTF-8 JSON object of string values; length
//! zero means no metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{FddError, Result};
use crate::mask::{CellMask, MASK_BYTES};
use crate::scalar::Scalar;
use crate::template::{BinaryFddTemplate, FddTemplate, Metadata, VALUES_PER_C};
use crate::tensor::DenseTensor;

pub const TEMPLATE_MAGIC: &[u8; 4] = b"FDD1";
pub const TEMPLATE_VERSION: u16 = 1;
pub const FLAG_BINARIZED: u16 = 1;

/// A template as stored on disk: float or binarized.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredTemplate<T> {
    Float(FddTemplate<T>),
    Binary(BinaryFddTemplate),
}

impl<T: Scalar> StoredTemplate<T> {
    pub fn c(&self) -> usize {
        match self {
            StoredTemplate::Float(t) => t.c(),
            StoredTemplate::Binary(t) => t.c(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, StoredTemplate::Binary(_))
    }

    pub fn meta(&self) -> &Metadata {
        match self {
            StoredTemplate::Float(t) => &t.meta,
            StoredTemplate::Binary(t) => &t.meta,
        }
    }

    /// Binarized view; float templates are thresholded at zero.
    pub fn to_binary(&self) -> BinaryFddTemplate {
        match self {
            StoredTemplate::Float(t) => crate::template::binarize_template(t),
            StoredTemplate::Binary(t) => t.clone(),
        }
    }
}

impl<T> From<FddTemplate<T>> for StoredTemplate<T> {
    fn from(t: FddTemplate<T>) -> Self {
        StoredTemplate::Float(t)
    }
}

impl<T> From<BinaryFddTemplate> for StoredTemplate<T> {
    fn from(t: BinaryFddTemplate) -> Self {
        StoredTemplate::Binary(t)
    }
}

/// Little-endian cursor over an in-memory buffer. Every read reports
/// truncation as a format error.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(FddError::format(format!(
                "truncated: needed {n} bytes at offset {}, {} available",
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f32_vec<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>> {
        let bytes = self.take(
            count
                .checked_mul(4)
                .ok_or_else(|| FddError::format("length overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect())
    }

    pub(crate) fn utf8(&mut self, len: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(len)?).map_err(|e| FddError::format(format!("invalid UTF-8: {e}")))
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.array::<4>()?;
        if &got != magic {
            return Err(FddError::format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FddError::format(format!(
                "{} trailing bytes after offset {}",
                self.buf.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_f32s<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

fn encode_meta(out: &mut Vec<u8>, meta: &Metadata) {
    if meta.is_empty() {
        out.extend_from_slice(&0u32.to_le_bytes());
        return;
    }
    let json = serde_json::to_string(meta).expect("string map always serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
}

fn decode_meta(r: &mut ByteReader<'_>) -> Result<Metadata> {
    let len = r.u32()? as usize;
    if len == 0 {
        return Ok(Metadata::new());
    }
    let text = r.utf8(len)?;
    serde_json::from_str(text).map_err(|e| FddError::format(format!("bad metadata block: {e}")))
}

/// Writes everything after the magic: the record layout the gallery reuses.
pub(crate) fn write_template_body<T: Scalar>(out: &mut Vec<u8>, t: &StoredTemplate<T>) {
    let flags = if t.is_binary() { FLAG_BINARIZED } else { 0 };
    out.extend_from_slice(&TEMPLATE_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.c() as u16).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    match t {
        StoredTemplate::Float(f) => {
            out.extend_from_slice(&f.mask().to_bytes());
            put_f32s(out, f.flatten());
            encode_meta(out, &f.meta);
        }
        StoredTemplate::Binary(b) => {
            out.extend_from_slice(&b.mask().to_bytes());
            out.extend_from_slice(&b.to_bytes());
            encode_meta(out, &b.meta);
        }
    }
}

pub(crate) fn read_template_body<T: Scalar>(r: &mut ByteReader<'_>) -> Result<StoredTemplate<T>> {
    let version = r.u16()?;
    if version != TEMPLATE_VERSION {
        return Err(FddError::format(format!("unsupported template version {version}")));
    }
    let c = r.u16()? as usize;
    if c == 0 {
        return Err(FddError::format("template with c = 0"));
    }
    let flags = r.u16()?;
    if flags & !FLAG_BINARIZED != 0 {
        return Err(FddError::format(format!("unknown template flags {flags:#06x}")));
    }
    let mask = CellMask::from_bytes(&r.array::<MASK_BYTES>()?);
    if flags & FLAG_BINARIZED != 0 {
        let payload = r.take((VALUES_PER_C * c).div_ceil(8))?;
        let meta = decode_meta(r)?;
        Ok(StoredTemplate::Binary(BinaryFddTemplate::from_bytes(
            c, payload, mask, meta,
        )?))
    } else {
        let values = r.f32_vec::<T>(VALUES_PER_C * c)?;
        let meta = decode_meta(r)?;
        let desc = DenseTensor::new((2 * c, 16, 16), values).map_err(|e| FddError::format(e.to_string()))?;
        let t = FddTemplate::new(c, desc, mask, meta).map_err(|e| FddError::format(e.to_string()))?;
        Ok(StoredTemplate::Float(t))
    }
}

pub fn encode_template<T: Scalar>(t: &StoredTemplate<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * VALUES_PER_C * t.c());
    out.extend_from_slice(TEMPLATE_MAGIC);
    write_template_body(&mut out, t);
    out
}

pub fn decode_template<T: Scalar>(bytes: &[u8]) -> Result<StoredTemplate<T>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(TEMPLATE_MAGIC)?;
    let t = read_template_body(&mut r)?;
    r.finish()?;
    Ok(t)
}

pub fn save_template<T: Scalar>(path: &Path, t: &StoredTemplate<T>) -> Result<()> {
    write_atomic(path, &encode_template(t))
}

pub fn load_template<T: Scalar>(path: &Path) -> Result<StoredTemplate<T>> {
    decode_template(&fs::read(path)?)
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| FddError::Input(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::binarize_template;

    fn sample() -> FddTemplate<f32> {
        let mask = CellMask::from_fn(|r, c| (r + c) % 3 != 0);
        let desc = DenseTensor::from_fn((4, 16, 16), |ch, r, c| ((ch * 31 + r * 7 + c) as f32 * 0.173).sin());
        let mut meta = Metadata::new();
        meta.insert("subject".into(), "s001".into());
        meta.insert("finger".into(), "2".into());
        FddTemplate::from_unmasked(2, &desc, mask, meta).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode_template(&StoredTemplate::Float(sample()));
        assert_eq!(&bytes[0..4], b"FDD1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 0);
        assert_eq!(&bytes[10..42], &sample().mask().to_bytes());
        let first = f32::from_le_bytes([bytes[42], bytes[43], bytes[44], bytes[45]]);
        assert_eq!(first, sample().flatten()[0]);
        let meta_at = 42 + 4 * 1024;
        let meta_len = u32::from_le_bytes(bytes[meta_at..meta_at + 4].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), meta_at + 4 + meta_len);
    }

    #[test]
    fn float_and_binary_round_trip() {
        let t = sample();
        let bytes = encode_template(&StoredTemplate::Float(t.clone()));
        let back: StoredTemplate<f32> = decode_template(&bytes).unwrap();
        assert_eq!(back, StoredTemplate::Float(t.clone()));
        assert_eq!(encode_template(&back), bytes);

        let b = binarize_template(&t);
        let bytes = encode_template::<f32>(&StoredTemplate::Binary(b.clone()));
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 1);
        assert_eq!(
            bytes.len(),
            42 + 128 + 4 + serde_json::to_string(&b.meta).unwrap().len()
        );
        let back: StoredTemplate<f32> = decode_template(&bytes).unwrap();
        assert_eq!(back, StoredTemplate::Binary(b));
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = encode_template(&StoredTemplate::Float(sample()));
        for cut in [0, 3, 9, 41, 100, bytes.len() - 1] {
            let err = decode_template::<f32>(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, FddError::Format(_)), "cut {cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_template::<f32>(&bad), Err(FddError::Format(_))));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(matches!(decode_template::<f32>(&trailing), Err(FddError::Format(_))));
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fdd");
        save_template(&path, &StoredTemplate::Float(sample())).unwrap();
        let back: StoredTemplate<f32> = load_template(&path).unwrap();
        assert_eq!(back, StoredTemplate::Float(sample()));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
