//! Pose-normalized preprocessing: rigid alignment, crop and downscale to the
//! 256×256 network input.
//!
//! Coordinates are continuous with pixel `(row, col)` centered at
//! `(x = col, y = row)`, y pointing down. A pose with angle `theta` means the
//! finger in the source image is turned counter-clockwise (as seen on screen)
//! by `theta` relative to the canonical upright frame; alignment applies the
//! inverse rotation. Canonical offset `(dx, dy)` from the pose center is read
//! from the source at
//!
//! ```text
//! x = cx + cos(theta)·dx + sin(theta)·dy
//! y = cy − sin(theta)·dx + cos(theta)·dy
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{FddError, Result};
use crate::scalar::Scalar;

/// Native sensor resolution the network expects.
pub const TARGET_PPI: f64 = 500.0;
/// Side of the aligned crop before downsampling.
pub const CROP_SIZE: usize = 512;
/// Side of the network input.
pub const INPUT_SIZE: usize = 256;
/// Intensity used for samples that fall outside the source image.
pub const BACKGROUND: f64 = 255.0;

const MIN_SIDE: usize = 8;

/// Grayscale image, intensities in `[0, 255]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintImage<T> {
    rows: usize,
    cols: usize,
    pixels: Vec<T>,
    ppi: f64,
}

impl<T: Scalar> FingerprintImage<T> {
    pub fn new(rows: usize, cols: usize, pixels: Vec<T>, ppi: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FddError::Input("image must have at least one row and column".into()));
        }
        if pixels.len() != rows * cols {
            return Err(FddError::shape(format!(
                "{rows}×{cols} image needs {} pixels, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        let lo = T::zero();
        let hi = T::of(255.0);
        if pixels.iter().any(|p| !(*p >= lo && *p <= hi)) {
            return Err(FddError::Input("pixel intensities must lie in [0, 255]".into()));
        }
        if !(ppi.is_finite() && ppi > 0.0) {
            return Err(FddError::param(format!("resolution must be positive, got {ppi}")));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            ppi,
        })
    }

    pub fn from_u8(rows: usize, cols: usize, pixels: &[u8], ppi: f64) -> Result<Self> {
        Self::new(rows, cols, pixels.iter().map(|&p| T::of(p as f64)).collect(), ppi)
    }

    pub fn from_fn(rows: usize, cols: usize, ppi: f64, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pixels.push(T::of(f(r, c)));
            }
        }
        Self::new(rows, cols, pixels, ppi)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ppi(&self) -> f64 {
        self.ppi
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.cols + col]
    }

    /// Bilinear sample; neighbours outside the image read as `fill`.
    #[inline]
    fn sample_fill(&self, x: f64, y: f64, fill: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let px = |xi: i64, yi: i64| -> f64 {
            if xi >= 0 && yi >= 0 && (xi as usize) < self.cols && (yi as usize) < self.rows {
                self.at(yi as usize, xi as usize).as_f64()
            } else {
                fill
            }
        };
        let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
        let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear sample with coordinates clamped to the image.
    #[inline]
    fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.cols - 1) as f64);
        let y = y.clamp(0.0, (self.rows - 1) as f64);
        let x0 = (x.floor() as usize).min(self.cols - 1);
        let y0 = (y.floor() as usize).min(self.rows - 1);
        let x1 = (x0 + 1).min(self.cols - 1);
        let y1 = (y0 + 1).min(self.rows - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(y0, x0).as_f64() * (1.0 - fx) + self.at(y0, x1).as_f64() * fx;
        let bottom = self.at(y1, x0).as_f64() * (1.0 - fx) + self.at(y1, x1).as_f64() * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Rigid pose of a fingerprint in source-image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseTransform {
    pub center_x: f64,
    pub center_y: f64,
    theta: f64,
}

impl PoseTransform {
    /// `theta` in radians, normalized into `(−π, π]`.
    pub fn new(center_x: f64, center_y: f64, theta: f64) -> Result<Self> {
        if !(center_x.is_finite() && center_y.is_finite() && theta.is_finite()) {
            return Err(FddError::param("pose values must be finite"));
        }
        Ok(Self {
            center_x,
            center_y,
            theta: normalize_angle(theta),
        })
    }

    pub fn from_degrees(center_x: f64, center_y: f64, degrees: f64) -> Result<Self> {
        Self::new(center_x, center_y, degrees.to_radians())
    }

    /// Centered, unrotated pose for an image of the given size.
    pub fn identity_for(rows: usize, cols: usize) -> Self {
        Self {
            center_x: (cols as f64 - 1.0) / 2.0,
            center_y: (rows as f64 - 1.0) / 2.0,
            theta: 0.0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Same center, rotation increased by `delta`.
    pub fn rotated(&self, delta: f64) -> Self {
        Self {
            theta: normalize_angle(self.theta + delta),
            ..*self
        }
    }

    /// Source coordinates of canonical offset `(dx, dy)` from the center.
    #[inline]
    pub fn source_point(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.center_x + c * dx + s * dy, self.center_y - s * dx + c * dy)
    }
}

fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Network input: 256×256, intensities scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedImage<T> {
    pixels: Vec<T>,
}

impl<T: Scalar> AlignedImage<T> {
    pub fn new(pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != INPUT_SIZE * INPUT_SIZE {
            return Err(FddError::shape(format!(
                "aligned image needs {} pixels, got {}",
                INPUT_SIZE * INPUT_SIZE,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(*p >= T::zero() && *p <= T::one())) {
            return Err(FddError::Input("aligned intensities must lie in [0, 1]".into()));
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.pixels[row * INPUT_SIZE + col]
    }
}

/// Crops the 512×512 window around the pose center, undoes the pose
/// rotation with bilinear sampling (white outside the image), box-averages
/// 2×2 down to 256×256 and scales by 1/255.
///
/// The image must already be at 500 ppi; see [`rescale_to_500ppi`].
pub fn align_and_crop<T: Scalar>(img: &FingerprintImage<T>, pose: &PoseTransform) -> Result<AlignedImage<T>> {
    if img.rows < MIN_SIDE || img.cols < MIN_SIDE {
        return Err(FddError::Input(format!(
            "image {}×{} is smaller than {MIN_SIDE}×{MIN_SIDE}",
            img.rows, img.cols
        )));
    }
    let half = (CROP_SIZE as f64 - 1.0) / 2.0;
    let mut canvas = vec![0.0f64; CROP_SIZE * CROP_SIZE];
    for v in 0..CROP_SIZE {
        let dy = v as f64 - half;
        for u in 0..CROP_SIZE {
            let (x, y) = pose.source_point(u as f64 - half, dy);
            canvas[v * CROP_SIZE + u] = img.sample_fill(x, y, BACKGROUND);
        }
    }
    let mut pixels = Vec::with_capacity(INPUT_SIZE * INPUT_SIZE);
    for r in 0..INPUT_SIZE {
        let top = 2 * r * CROP_SIZE;
        let bottom = top + CROP_SIZE;
        for c in 0..INPUT_SIZE {
            let sum =
                canvas[top + 2 * c] + canvas[top + 2 * c + 1] + canvas[bottom + 2 * c] + canvas[bottom + 2 * c + 1];
            let v = (sum / 4.0 / 255.0).clamp(0.0, 1.0);
            pixels.push(T::of(v));
        }
    }
    Ok(AlignedImage { pixels })
}

/// Bilinear resize by `500 / ppi`, sampling at pixel centers with edge
/// clamping. Output dims are `round(dim · 500 / ppi)`, at least 1.
pub fn rescale_to_500ppi<T: Scalar>(img: &FingerprintImage<T>) -> FingerprintImage<T> {
    if img.ppi == TARGET_PPI {
        return img.clone();
    }
    let scale = TARGET_PPI / img.ppi;
    let rows = ((img.rows as f64 * scale).round() as usize).max(1);
    let cols = ((img.cols as f64 * scale).round() as usize).max(1);
    let mut pixels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let y = (r as f64 + 0.5) / scale - 0.5;
        for c in 0..cols {
            let x = (c as f64 + 0.5) / scale - 0.5;
            pixels.push(T::of(img.sample_clamped(x, y).clamp(0.0, 255.0)));
        }
    }
    FingerprintImage {
        rows,
        cols,
        pixels,
        ppi: TARGET_PPI,
    }
}

/// Loads an 8-bit grayscale PGM (P5) or PNG. Color images are converted to
/// luma. The resolution is not stored in these formats and must be given.
pub fn load_image<T: Scalar>(path: &Path, ppi: f64) -> Result<FingerprintImage<T>> {
    let img = image::open(path)
        .map_err(|e| FddError::Input(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (cols, rows) = img.dimensions();
    FingerprintImage::from_u8(rows as usize, cols as usize, img.as_raw(), ppi)
}

/// Writes an 8-bit PGM (P5), rounding intensities.
pub fn save_pgm<T: Scalar>(path: &Path, img: &FingerprintImage<T>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols, img.rows).into_bytes();
    out.extend(img.pixels.iter().map(|p| p.as_f64().round().clamp(0.0, 255.0) as u8));
    fs::write(path, out)?;
    Ok(())
}

/// Parses `cx cy theta_degrees` (whitespace separated).
pub fn parse_pose(text: &str) -> Result<PoseTransform> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(FddError::Input(format!(
            "pose needs `cx cy theta_degrees`, got {} fields",
            fields.len()
        )));
    }
    let mut vals = [0.0f64; 3];
    for (v, f) in vals.iter_mut().zip(&fields) {
        *v = f
            .parse()
            .map_err(|_| FddError::Input(format!("bad pose number `{f}`")))?;
    }
    PoseTransform::from_degrees(vals[0], vals[1], vals[2])
}

/// Sidecar path candidates for an image: `finger.png.pose`, then `finger.pose`.
pub fn pose_sidecar_candidates(image: &Path) -> [std::path::PathBuf; 2] {
    let mut appended = image.as_os_str().to_owned();
    appended.push(".pose");
    [appended.into(), image.with_extension("pose")]
}

pub fn read_pose_sidecar(image: &Path) -> Result<PoseTransform> {
    for candidate in pose_sidecar_candidates(image) {
        if candidate.is_file() {
            return parse_pose(&fs::read_to_string(&candidate)?);
        }
    }
    Err(FddError::Input(format!("no pose sidecar for {}", image.display())))
}
