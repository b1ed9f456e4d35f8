//! Convolution primitives on channel-major tensors, lowered to GEMM.

use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

use super::graph::ConvSpec;

const BN_EPS: f64 = 1e-5;

/// Unrolls `x` into a `(in_ch·k·k) × (oh·ow)` patch matrix. Taps that fall
/// into the zero padding stay zero.
fn im2col<T: Scalar>(x: &DenseTensor<T>, spec: &ConvSpec, oh: usize, ow: usize) -> Vec<T> {
    let (ch, h, w) = x.dims();
    let k = spec.kernel;
    let plane = oh * ow;
    let mut col = vec![T::zero(); ch * k * k * plane];
    let src = x.data();
    for c in 0..ch {
        let xin = &src[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let srow = &xin[iy as usize * w..(iy as usize + 1) * w];
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = srow[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Cross-correlation with zero padding. `weight` is `[out, in, k, k]`.
pub fn conv2d<T: Scalar>(x: &DenseTensor<T>, weight: &[T], bias: Option<&[T]>, spec: &ConvSpec) -> DenseTensor<T> {
    let (ch, h, w) = x.dims();
    assert_eq!(ch, spec.in_ch, "conv input channels");
    let oh = spec.conv_out(h);
    let ow = spec.conv_out(w);
    let kk = spec.in_ch * spec.kernel * spec.kernel;
    let plane = oh * ow;
    let mut out = vec![T::zero(); spec.out_ch * plane];
    if spec.kernel == 1 && spec.stride == 1 && spec.padding == 0 {
        T::gemm(spec.out_ch, kk, plane, weight, x.data(), &mut out, false);
    } else {
        let col = im2col(x, spec, oh, ow);
        T::gemm(spec.out_ch, kk, plane, weight, &col, &mut out, false);
    }
    if let Some(bias) = bias {
        for (o, b) in out.chunks_exact_mut(plane).zip(bias) {
            o.iter_mut().for_each(|v| *v += *b);
        }
    }
    DenseTensor::from_parts((spec.out_ch, oh, ow), out)
}

/// Transposed convolution (fractionally strided). `weight` is `[in, out, k, k]`.
pub fn deconv2d<T: Scalar>(x: &DenseTensor<T>, weight: &[T], bias: Option<&[T]>, spec: &ConvSpec) -> DenseTensor<T> {
    let (ch, h, w) = x.dims();
    assert_eq!(ch, spec.in_ch, "deconv input channels");
    let k = spec.kernel;
    let oh = spec.deconv_out(h);
    let ow = spec.deconv_out(w);
    let rows = spec.out_ch * k * k;

    // weightᵀ: (out·k·k) × in
    let mut wt = vec![T::zero(); rows * ch];
    for i in 0..ch {
        for r in 0..rows {
            wt[r * ch + i] = weight[i * rows + r];
        }
    }
    let mut col = vec![T::zero(); rows * h * w];
    T::gemm(rows, ch, h * w, &wt, x.data(), &mut col, false);

    let mut out = vec![T::zero(); spec.out_ch * oh * ow];
    for oc in 0..spec.out_ch {
        let dst = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[((oc * k + ky) * k + kx) * h * w..][..h * w];
                for iy in 0..h {
                    let oy = (iy * spec.stride + ky) as isize - spec.padding as isize;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    for ix in 0..w {
                        let ox = (ix * spec.stride + kx) as isize - spec.padding as isize;
                        if ox >= 0 && ox < ow as isize {
                            dst[oy as usize * ow + ox as usize] += src[iy * w + ix];
                        }
                    }
                }
            }
        }
    }
    if let Some(bias) = bias {
        for (o, b) in out.chunks_exact_mut(oh * ow).zip(bias) {
            o.iter_mut().for_each(|v| *v += *b);
        }
    }
    DenseTensor::from_parts((spec.out_ch, oh, ow), out)
}

/// Inference-mode batch norm from stored running statistics, in place.
pub fn batch_norm<T: Scalar>(x: &mut DenseTensor<T>, gamma: &[T], beta: &[T], mean: &[T], var: &[T]) {
    let (ch, h, w) = x.dims();
    let plane = h * w;
    let data = x.data_mut();
    for c in 0..ch {
        let scale = gamma[c].as_f64() / (var[c].as_f64() + BN_EPS).sqrt();
        let shift = beta[c].as_f64() - mean[c].as_f64() * scale;
        let (scale, shift) = (T::of(scale), T::of(shift));
        for v in &mut data[c * plane..(c + 1) * plane] {
            *v = *v * scale + shift;
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut DenseTensor<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> ConvSpec {
        ConvSpec {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            bias: true,
            norm: false,
            relu: false,
        }
    }

    /// Direct nested-loop cross-correlation.
    fn conv_oracle(x: &DenseTensor<f64>, w: &[f64], b: &[f64], s: &ConvSpec) -> DenseTensor<f64> {
        let (ic, h, wd) = x.dims();
        let oh = (h + 2 * s.padding - s.kernel) / s.stride + 1;
        let ow = (wd + 2 * s.padding - s.kernel) / s.stride + 1;
        DenseTensor::from_fn((s.out_ch, oh, ow), |o, y, xx| {
            let mut acc = b[o];
            for c in 0..ic {
                for ky in 0..s.kernel {
                    for kx in 0..s.kernel {
                        let iy = (y * s.stride + ky) as isize - s.padding as isize;
                        let ix = (xx * s.stride + kx) as isize - s.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc +=
                                w[((o * ic + c) * s.kernel + ky) * s.kernel + kx] * x.get(c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn hand_kernel_on_5x5() {
        let x = DenseTensor::<f64>::from_fn((1, 5, 5), |_, r, c| (r * 5 + c) as f64);
        // Picks (top-left) − (bottom-right) of each 3×3 window.
        let mut w = vec![0.0; 9];
        w[0] = 1.0;
        w[8] = -1.0;
        let s = spec(1, 1, 3, 1, 1);
        let y = conv2d(&x, &w, Some(&[0.5]), &s);
        assert_eq!(y.dims(), (1, 5, 5));
        // center: x(1,1) − x(3,3) = 6 − 18
        assert!((y.get(0, 2, 2) - (-12.0 + 0.5)).abs() < 1e-12);
        // corner (0,0): top-left tap is padding, bottom-right is x(1,1)
        assert!((y.get(0, 0, 0) - (-6.0 + 0.5)).abs() < 1e-12);
        // corner (4,4): x(3,3), bottom-right padding
        assert!((y.get(0, 4, 4) - (18.0 + 0.5)).abs() < 1e-12);
        let oracle = conv_oracle(&x, &w, &[0.5], &s);
        for (a, b) in y.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn strided_multichannel_matches_oracle() {
        for &(k, s, p) in &[(3, 2, 1), (7, 2, 3), (1, 2, 0), (1, 1, 0), (3, 1, 1)] {
            let x = DenseTensor::<f64>::from_fn((3, 11, 9), |c, r, q| ((c * 97 + r * 13 + q) as f64 * 0.31).sin());
            let sp = spec(3, 4, k, s, p);
            let w: Vec<f64> = (0..4 * 3 * k * k).map(|i| (i as f64 * 0.77).cos()).collect();
            let b = [0.1, -0.2, 0.3, 0.0];
            let y = conv2d(&x, &w, Some(&b), &sp);
            let o = conv_oracle(&x, &w, &b, &sp);
            assert_eq!(y.dims(), o.dims());
            for (a, bb) in y.data().iter().zip(o.data()) {
                assert!((a - bb).abs() < 1e-10, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn deconv_matches_scatter_oracle() {
        let x = DenseTensor::<f64>::from_fn((2, 4, 3), |c, r, q| (c * 12 + r * 3 + q) as f64 * 0.1 - 1.0);
        let sp = ConvSpec {
            padding: 1,
            ..spec(2, 3, 4, 2, 1)
        };
        let w: Vec<f64> = (0..2 * 3 * 16).map(|i| ((i * 7 % 11) as f64) * 0.05 - 0.2).collect();
        let y = deconv2d(&x, &w, None, &sp);
        assert_eq!(y.dims(), (3, 8, 6));
        let mut want = vec![0.0; 3 * 8 * 6];
        for ic in 0..2 {
            for iy in 0..4 {
                for ix in 0..3 {
                    for oc in 0..3 {
                        for ky in 0..4 {
                            for kx in 0..4 {
                                let oy = (iy * 2 + ky) as isize - 1;
                                let ox = (ix * 2 + kx) as isize - 1;
                                if oy >= 0 && ox >= 0 && oy < 8 && ox < 6 {
                                    want[(oc * 8 + oy as usize) * 6 + ox as usize] +=
                                        x.get(ic, iy, ix) * w[((ic * 3 + oc) * 4 + ky) * 4 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_uses_running_stats() {
        let mut x = DenseTensor::<f64>::from_fn((2, 1, 2), |c, _, q| (c * 2 + q) as f64);
        batch_norm(&mut x, &[2.0, 1.0], &[0.5, 0.0], &[1.0, 0.0], &[4.0 - 1e-5, 1.0 - 1e-5]);
        assert!((x.get(0, 0, 0) - (2.0 * (0.0 - 1.0) / 2.0 + 0.5)).abs() < 1e-9);
        assert!((x.get(1, 0, 1) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
