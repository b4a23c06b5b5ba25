//! Forward and backward kernels on plain tensors.
//!
//! Convolution lowers each batch item to an `im2col` matrix and runs one
//! GEMM; `1×1` stride-1 convolutions use the input plane directly.

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution, validated once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new<T: Element>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        bias_len: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [batch, in_ch, height, width] = input.dims4()?;
        let [out_ch, w_in, kh, kw] = weight.dims4().map_err(|_| Error::ShapeMismatch {
            op: "conv2d",
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        })?;
        if w_in != in_ch || kh != kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if bias_len != out_ch {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: weight.shape().to_vec(),
                rhs: vec![bias_len],
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        if height + 2 * padding < kh || width + 2 * padding < kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d (kernel larger than padded input)",
                lhs: input.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        Ok(Self {
            batch,
            in_ch,
            out_ch,
            height,
            width,
            kernel: kh,
            stride,
            padding,
            out_height: (height + 2 * padding - kh) / stride + 1,
            out_width: (width + 2 * padding - kw) / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// Upper bound on `im2col` scratch elements; larger outputs are processed in row bands.
/// Unit tests use a tiny bound so the banded path is always exercised.
const MAX_COL_ELEMS: usize = if cfg!(test) { 64 } else { 1 << 21 };

fn band_rows(g: &ConvGeometry) -> usize {
    (MAX_COL_ELEMS / (g.col_rows() * g.out_width).max(1)).clamp(1, g.out_height)
}

/// Output columns `[lo, hi)` whose input column `ox·s + kj − pad` lies inside the image.
fn valid_span(g: &ConvGeometry, kj: usize) -> (usize, usize) {
    let (s, pad, ow) = (g.stride, g.padding, g.out_width);
    let lo = if kj >= pad { 0 } else { (pad - kj).div_ceil(s) };
    // need ox·s + kj − pad ≤ width − 1
    let hi = if g.width + pad > kj { ((g.width + pad - kj - 1) / s + 1).min(ow) } else { 0 };
    (lo.min(hi), hi)
}

/// Lowers output rows `[oy0, oy1)` to a `K × ((oy1-oy0)·W_out)` matrix.
fn im2col<T: Element>(g: &ConvGeometry, image: &[T], oy0: usize, oy1: usize, cols: &mut [T]) {
    let (k, s, pad) = (g.kernel, g.stride, g.padding as isize);
    let ow = g.out_width;
    let plane = g.height * g.width;
    let p = (oy1 - oy0) * ow;
    for c in 0..g.in_ch {
        let src = &image[c * plane..(c + 1) * plane];
        for ki in 0..k {
            for kj in 0..k {
                let (lo, hi) = valid_span(g, kj);
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in oy0..oy1 {
                    let iy = (oy * s) as isize + ki as isize - pad;
                    let seg = &mut dst[(oy - oy0) * ow..(oy - oy0 + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    seg[..lo].fill(T::zero());
                    seg[hi..].fill(T::zero());
                    if lo < hi {
                        let x0 = lo * s + kj - g.padding;
                        if s == 1 {
                            seg[lo..hi].copy_from_slice(&line[x0..x0 + (hi - lo)]);
                        } else {
                            for (out, v) in seg[lo..hi].iter_mut().zip(line[x0..].iter().step_by(s)) {
                                *out = *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(g: &ConvGeometry, cols: &[T], oy0: usize, oy1: usize, image: &mut [T]) {
    let (k, s, pad) = (g.kernel, g.stride, g.padding as isize);
    let ow = g.out_width;
    let plane = g.height * g.width;
    let p = (oy1 - oy0) * ow;
    for c in 0..g.in_ch {
        let dst = &mut image[c * plane..(c + 1) * plane];
        for ki in 0..k {
            for kj in 0..k {
                let (lo, hi) = valid_span(g, kj);
                if lo >= hi {
                    continue;
                }
                let x0 = lo * s + kj - g.padding;
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in oy0..oy1 {
                    let iy = (oy * s) as isize + ki as isize - pad;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let seg = &src[(oy - oy0) * ow + lo..(oy - oy0) * ow + hi];
                    for (d, v) in line[x0..].iter_mut().step_by(s).zip(seg) {
                        *d = *d + *v;
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input` (N×C×H×W) with `weight` (O×C×k×k) plus bias.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weight, bias.len(), stride, padding)?;
    let (kr, p) = (g.col_rows(), g.col_cols());
    let in_plane = g.in_ch * g.height * g.width;
    let mut out = vec![T::zero(); g.batch * g.out_ch * p];
    let band = band_rows(&g);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); kr * band * g.out_width]
    };
    for n in 0..g.batch {
        let image = &input.data()[n * in_plane..(n + 1) * in_plane];
        let dst = &mut out[n * g.out_ch * p..(n + 1) * g.out_ch * p];
        for (o, b) in bias.iter().enumerate() {
            dst[o * p..(o + 1) * p].fill(*b);
        }
        if g.is_pointwise() {
            T::gemm(g.out_ch, kr, p, weight.data(), (kr, 1), image, (p, 1), T::one(), dst, (p, 1));
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.out_height {
            let oy1 = (oy0 + band).min(g.out_height);
            let bp = (oy1 - oy0) * g.out_width;
            im2col(&g, image, oy0, oy1, &mut cols);
            T::gemm(
                g.out_ch,
                kr,
                bp,
                weight.data(),
                (kr, 1),
                &cols[..kr * bp],
                (bp, 1),
                T::one(),
                &mut dst[oy0 * g.out_width..],
                (p, 1),
            );
            oy0 = oy1;
        }
    }
    Tensor::new(vec![g.batch, g.out_ch, g.out_height, g.out_width], out)
}

/// Gradients of [`conv2d`] given the upstream gradient.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &[T],
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input, weight, weight.shape()[0], stride, padding)?;
    let (kr, p) = (g.col_rows(), g.col_cols());
    let in_plane = g.in_ch * g.height * g.width;
    if grad_out.len() != g.batch * g.out_ch * p {
        return Err(Error::ShapeMismatch {
            op: "conv2d backward",
            lhs: vec![g.batch, g.out_ch, g.out_height, g.out_width],
            rhs: vec![grad_out.len()],
        });
    }
    let mut d_weight = vec![T::zero(); g.out_ch * kr];
    let mut d_bias = vec![T::zero(); g.out_ch];
    let mut d_input = need_input_grad.then(|| vec![T::zero(); input.len()]);
    let band = band_rows(&g);
    let scratch = if g.is_pointwise() { 0 } else { kr * band * g.out_width };
    let mut cols = vec![T::zero(); scratch];
    let mut d_cols = vec![T::zero(); if need_input_grad { scratch } else { 0 }];

    for n in 0..g.batch {
        let image = &input.data()[n * in_plane..(n + 1) * in_plane];
        let dy = &grad_out[n * g.out_ch * p..(n + 1) * g.out_ch * p];
        for (o, db) in d_bias.iter_mut().enumerate() {
            let s: f64 = dy[o * p..(o + 1) * p].iter().map(|v| v.f64()).sum();
            *db = *db + T::of(s);
        }
        if g.is_pointwise() {
            // dW (O×C) += dY (O×P) · xᵀ (P×C)
            T::gemm(g.out_ch, p, kr, dy, (p, 1), image, (1, p), T::one(), &mut d_weight, (kr, 1));
            if let Some(dx) = d_input.as_mut() {
                let dx = &mut dx[n * in_plane..(n + 1) * in_plane];
                T::gemm(kr, g.out_ch, p, weight.data(), (1, kr), dy, (p, 1), T::one(), dx, (p, 1));
            }
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.out_height {
            let oy1 = (oy0 + band).min(g.out_height);
            let bp = (oy1 - oy0) * g.out_width;
            let dy_band = &dy[oy0 * g.out_width..];
            im2col(&g, image, oy0, oy1, &mut cols);
            // dW (O×K) += dY (O×P) · colsᵀ (P×K)
            T::gemm(
                g.out_ch,
                bp,
                kr,
                dy_band,
                (p, 1),
                &cols[..kr * bp],
                (1, bp),
                T::one(),
                &mut d_weight,
                (kr, 1),
            );
            if let Some(dx) = d_input.as_mut() {
                // dCols (K×P) = Wᵀ (K×O) · dY (O×P)
                T::gemm(
                    kr,
                    g.out_ch,
                    bp,
                    weight.data(),
                    (1, kr),
                    dy_band,
                    (p, 1),
                    T::zero(),
                    &mut d_cols[..kr * bp],
                    (bp, 1),
                );
                col2im(&g, &d_cols[..kr * bp], oy0, oy1, &mut dx[n * in_plane..(n + 1) * in_plane]);
            }
            oy0 = oy1;
        }
    }
    Ok(ConvGrads {
        input: d_input
            .map(|d| Tensor::new(input.shape().to_vec(), d))
            .transpose()?,
        weight: Tensor::new(weight.shape().to_vec(), d_weight)?,
        bias: d_bias,
    })
}

/// 2×2 average pooling with stride 2.
pub fn avgpool2x<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "avgpool2x",
            shape: input.shape().to_vec(),
            reason: "height and width must be even".into(),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            let r0 = base + 2 * y * w;
            let r1 = r0 + w;
            for x in 0..ow {
                let s = src[r0 + 2 * x].f64()
                    + src[r0 + 2 * x + 1].f64()
                    + src[r1 + 2 * x].f64()
                    + src[r1 + 2 * x + 1].f64();
                out.push(T::of(s * 0.25));
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

/// Gradient of [`avgpool2x`]: each upstream value spread as a quarter over its block.
pub fn avgpool2x_backward<T: Element>(input_shape: &[usize], grad_out: &[T]) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let planes = input_shape[0] * input_shape[1];
    let quarter = T::of(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    for plane in 0..planes {
        for y in 0..h {
            for x in 0..w {
                dx[(plane * h + y) * w + x] = grad_out[(plane * oh + y / 2) * ow + x / 2] * quarter;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("shape preserved")
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for y in 0..oh {
            let row = &src[(plane * h + y / 2) * w..(plane * h + y / 2 + 1) * w];
            for x in 0..ow {
                out.push(row[x / 2]);
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

/// Gradient of [`upsample2x`]: 2×2 block sums.
pub fn upsample2x_backward<T: Element>(input_shape: &[usize], grad_out: &[T]) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let ow = 2 * w;
    let planes = input_shape[0] * input_shape[1];
    let mut dx = Vec::with_capacity(planes * h * w);
    for plane in 0..planes {
        let base = plane * 4 * h * w;
        for y in 0..h {
            let r0 = base + 2 * y * ow;
            let r1 = r0 + ow;
            for x in 0..w {
                let s = grad_out[r0 + 2 * x].f64()
                    + grad_out[r0 + 2 * x + 1].f64()
                    + grad_out[r1 + 2 * x].f64()
                    + grad_out[r1 + 2 * x + 1].f64();
                dx.push(T::of(s));
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("shape preserved")
}

/// Concatenation along the channel axis, in argument order.
pub fn concat_channels<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.dims4()?;
    let mut channels = 0;
    for p in parts {
        let [pn, pc, ph, pw] = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        channels += pc;
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * channels * plane);
    for b in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            out.extend_from_slice(&p.data()[b * pc * plane..(b + 1) * pc * plane]);
        }
    }
    Tensor::new(vec![n, channels, h, w], out)
}

/// Straightforward seven-loop convolution used as a reference in tests.
pub fn conv2d_reference<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weight, bias.len(), stride, padding)?;
    let mut out = Tensor::zeros(vec![g.batch, g.out_ch, g.out_height, g.out_width]);
    let k = g.kernel;
    for n in 0..g.batch {
        for o in 0..g.out_ch {
            for oy in 0..g.out_height {
                for ox in 0..g.out_width {
                    let mut acc = bias[o].f64();
                    for c in 0..g.in_ch {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * stride + ki) as isize - padding as isize;
                                let ix = (ox * stride + kj) as isize - padding as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= g.height as isize
                                    || ix >= g.width as isize
                                {
                                    continue;
                                }
                                acc += input.at4(n, c, iy as usize, ix as usize).f64()
                                    * weight.at4(o, c, ki, kj).f64();
                            }
                        }
                    }
                    let idx = ((n * g.out_ch + o) * g.out_height + oy) * g.out_width + ox;
                    out.data_mut()[idx] = T::of(acc);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_ones_full_overlap_center_is_nine() {
        let x = Tensor::<f32>::full(vec![1, 1, 3, 3], 1.0);
        let w = Tensor::<f32>::full(vec![1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, &[0.0], 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.at4(0, 0, 1, 1), 9.0);
        assert_eq!(y.at4(0, 0, 0, 0), 4.0);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::randn(vec![2, 3, 7, 5], 1.0, &mut rng);
        let mut w = Tensor::<f32>::zeros(vec![3, 3, 3, 3]);
        for c in 0..3 {
            w.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = conv2d(&x, &w, &[0.0; 3], 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_reference_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f32>::randn(vec![2, 3, 8, 8], 1.0, &mut rng);
        let w = Tensor::<f32>::randn(vec![4, 3, 3, 3], 1.0, &mut rng);
        let b = [0.1, -0.2, 0.3, 0.0];
        for (stride, pad) in [(1, 1), (1, 0), (2, 1), (3, 2)] {
            let fast = conv2d(&x, &w, &b, stride, pad).unwrap();
            let slow = conv2d_reference(&x, &w, &b, stride, pad).unwrap();
            assert_eq!(fast.shape(), slow.shape());
            for (a, r) in fast.data().iter().zip(slow.data()) {
                assert!((a - r).abs() <= 1e-5 * r.abs().max(1.0), "{a} vs {r}");
            }
        }
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor::<f32>::zeros(vec![1, 2, 9, 6]);
        let w = Tensor::<f32>::zeros(vec![1, 2, 5, 5]);
        let y = conv2d(&x, &w, &[0.0], 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, (9 + 2 - 5) / 2 + 1, (6 + 2 - 5) / 2 + 1]);
    }

    #[test]
    fn conv_shape_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(vec![1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(vec![1, 3, 3, 3]);
        let msg = conv2d(&x, &w, &[0.0], 1, 1).unwrap_err().to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn pooling_examples() {
        let x = Tensor::<f32>::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool2x(&x).unwrap().data(), &[2.5]);
        let c = Tensor::<f32>::full(vec![1, 2, 4, 6], 1.75);
        assert_eq!(avgpool2x(&c).unwrap(), Tensor::full(vec![1, 2, 2, 3], 1.75));
        assert!(avgpool2x(&Tensor::<f32>::zeros(vec![1, 1, 3, 4])).is_err());
    }

    #[test]
    fn pooling_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::randn(vec![1, 1, 4, 4], 1.0, &mut rng);
        let y = avgpool2x(&x).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += x.at4(0, 0, 2 * oy + dy, 2 * ox + dx);
                    }
                }
                assert_eq!(y.at4(0, 0, oy, ox), s / 4.0);
            }
        }
    }

    #[test]
    fn upsample_examples() {
        let x = Tensor::<f32>::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample2x(&x).unwrap();
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Tensor::<f32>::randn(vec![2, 3, 5, 7], 1.0, &mut rng);
        assert_eq!(avgpool2x(&upsample2x(&r).unwrap()).unwrap(), r);
        let c = Tensor::<f32>::full(vec![1, 1, 3, 3], -2.0);
        assert_eq!(upsample2x(&c).unwrap(), Tensor::full(vec![1, 1, 6, 6], -2.0));
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::<f32>::randn(vec![2, 3, 4, 4], 1.0, &mut rng);
        let b = Tensor::<f32>::randn(vec![2, 5, 4, 4], 1.0, &mut rng);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 8, 4, 4]);
        assert_eq!(c.slice_channels(0, 3).unwrap(), a);
        assert_eq!(c.slice_channels(3, 8).unwrap(), b);
        let bad = Tensor::<f32>::zeros(vec![2, 1, 4, 5]);
        assert!(concat_channels(&[&a, &bad]).is_err());
    }
}
