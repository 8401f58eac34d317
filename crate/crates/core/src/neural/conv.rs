//! Strided 2-D convolution kernels and the complex convolution layer built
//! from them.
//!
//! Every layer relates a "big" tensor to a "small" one through
//!
//! ```text
//! small[cs, i, j]  <->  big[cb, i*sh - ph + kh, j*sw - pw + kw]  via  w[cs, cb, kh, kw]
//! ```
//!
//! A down-sampling convolution gathers big -> small; its transpose (the
//! up-sampling layer) scatters small -> big. The same three primitives give
//! the forward pass of one and the backward pass of the other.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::ComplexTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
}

impl ConvGeometry {
    /// Odd kernel with "same"-style padding.
    pub fn centered(kernel: [usize; 2], stride: [usize; 2]) -> Result<Self> {
        if kernel.iter().any(|k| k % 2 == 0) || stride.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "kernel {kernel:?} must be odd and stride {stride:?} positive"
            )));
        }
        Ok(Self {
            kernel,
            stride,
            padding: [kernel[0] / 2, kernel[1] / 2],
        })
    }

    /// Output spatial size of the gathering (down) direction.
    pub fn down_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let dim = |n: usize, a: usize| {
            let padded = n + 2 * self.padding[a];
            (padded >= self.kernel[a]).then(|| (padded - self.kernel[a]) / self.stride[a] + 1)
        };
        Some((dim(h, 0)?, dim(w, 1)?))
    }

    /// Output spatial size of the scattering (up) direction.
    pub fn up_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let dim = |n: usize, a: usize| {
            ((n.max(1) - 1) * self.stride[a] + self.kernel[a]).checked_sub(2 * self.padding[a])
        };
        match (dim(h, 0)?, dim(w, 1)?) {
            (0, _) | (_, 0) => None,
            hw => Some(hw),
        }
    }
}

#[derive(Clone, Copy)]
struct Dims {
    big: [usize; 3],
    small: [usize; 3],
    geo: ConvGeometry,
}

impl Dims {
    fn kernel_len(&self) -> usize {
        self.geo.kernel[0] * self.geo.kernel[1]
    }

    /// Big-tensor row touched by small row `i` at kernel row `kh`.
    fn big_row(&self, i: usize, kh: usize) -> Option<usize> {
        let r = (i * self.geo.stride[0] + kh).checked_sub(self.geo.padding[0])?;
        (r < self.big[1]).then_some(r)
    }

    /// Range of small columns `j` whose big column `j*sw - pw + kw` is in
    /// bounds, with the big column of the first one.
    fn col_span(&self, kw: usize) -> (usize, usize, usize) {
        let sw = self.geo.stride[1];
        let pw = self.geo.padding[1];
        let wb = self.big[2] as isize;
        let off = kw as isize - pw as isize;
        // need 0 <= j*sw + off < wb
        let lo = if off >= 0 {
            0
        } else {
            ((-off) as usize).div_ceil(sw)
        };
        let hi_excl = if wb - 1 - off < 0 {
            0
        } else {
            ((wb - 1 - off) as usize) / sw + 1
        };
        let hi = hi_excl.min(self.small[2]);
        let start_big = (lo as isize * sw as isize + off).max(0) as usize;
        (lo, hi.max(lo), start_big)
    }
}

/// `small += sign * W . big`
fn gather(big: &[f64], w: &[f64], small: &mut [f64], d: Dims, sign: f64) {
    let [cb_n, hb, wb] = d.big;
    let [_, hs, ws] = d.small;
    let [kh_n, kw_n] = d.geo.kernel;
    let sw = d.geo.stride[1];
    let klen = d.kernel_len();
    small
        .par_chunks_mut(hs * ws)
        .enumerate()
        .for_each(|(cs, out)| {
            for cb in 0..cb_n {
                let wbase = (cs * cb_n + cb) * klen;
                let plane = &big[cb * hb * wb..(cb + 1) * hb * wb];
                for kh in 0..kh_n {
                    for kw in 0..kw_n {
                        let wv = sign * w[wbase + kh * kw_n + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        let (lo, hi, b0) = d.col_span(kw);
                        if lo >= hi {
                            continue;
                        }
                        for i in 0..hs {
                            let Some(r) = d.big_row(i, kh) else { continue };
                            let orow = &mut out[i * ws + lo..i * ws + hi];
                            let brow = &plane[r * wb..(r + 1) * wb];
                            if sw == 1 {
                                for (o, b) in orow.iter_mut().zip(&brow[b0..b0 + (hi - lo)]) {
                                    *o += wv * b;
                                }
                            } else {
                                for (n, o) in orow.iter_mut().enumerate() {
                                    *o += wv * brow[b0 + n * sw];
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// `big += sign * W^T . small`
fn scatter(small: &[f64], w: &[f64], big: &mut [f64], d: Dims, sign: f64) {
    let [cb_n, hb, wb] = d.big;
    let [cs_n, hs, ws] = d.small;
    let [kh_n, kw_n] = d.geo.kernel;
    let sw = d.geo.stride[1];
    let klen = d.kernel_len();
    big.par_chunks_mut(hb * wb)
        .enumerate()
        .for_each(|(cb, plane)| {
            for cs in 0..cs_n {
                let wbase = (cs * cb_n + cb) * klen;
                let src = &small[cs * hs * ws..(cs + 1) * hs * ws];
                for kh in 0..kh_n {
                    for kw in 0..kw_n {
                        let wv = sign * w[wbase + kh * kw_n + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        let (lo, hi, b0) = d.col_span(kw);
                        if lo >= hi {
                            continue;
                        }
                        for i in 0..hs {
                            let Some(r) = d.big_row(i, kh) else { continue };
                            let srow = &src[i * ws + lo..i * ws + hi];
                            let brow = &mut plane[r * wb..(r + 1) * wb];
                            if sw == 1 {
                                for (b, s) in brow[b0..b0 + (hi - lo)].iter_mut().zip(srow) {
                                    *b += wv * s;
                                }
                            } else {
                                for (n, s) in srow.iter().enumerate() {
                                    brow[b0 + n * sw] += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// `gw += sign * small (x) big`, the weight gradient shared by both
/// directions.
fn weight_grad(small: &[f64], big: &[f64], gw: &mut [f64], d: Dims, sign: f64) {
    let [cb_n, hb, wb] = d.big;
    let [_, hs, ws] = d.small;
    let [kh_n, kw_n] = d.geo.kernel;
    let sw = d.geo.stride[1];
    let klen = d.kernel_len();
    gw.par_chunks_mut(cb_n * klen)
        .enumerate()
        .for_each(|(cs, gchunk)| {
            let src = &small[cs * hs * ws..(cs + 1) * hs * ws];
            for cb in 0..cb_n {
                let plane = &big[cb * hb * wb..(cb + 1) * hb * wb];
                for kh in 0..kh_n {
                    for kw in 0..kw_n {
                        let (lo, hi, b0) = d.col_span(kw);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for i in 0..hs {
                            let Some(r) = d.big_row(i, kh) else { continue };
                            let srow = &src[i * ws + lo..i * ws + hi];
                            let brow = &plane[r * wb..(r + 1) * wb];
                            if sw == 1 {
                                acc += srow
                                    .iter()
                                    .zip(&brow[b0..b0 + (hi - lo)])
                                    .map(|(s, b)| s * b)
                                    .sum::<f64>();
                            } else {
                                acc += srow
                                    .iter()
                                    .enumerate()
                                    .map(|(n, s)| s * brow[b0 + n * sw])
                                    .sum::<f64>();
                            }
                        }
                        gchunk[cb * klen + kh * kw_n + kw] += sign * acc;
                    }
                }
            }
        });
}

/// Real strided cross-correlation, `out[co] = sum_ci w[co, ci] * x[ci]`.
/// Shapes are `[channels, height, width]`; weights `[out, in, kh, kw]`.
pub fn real_conv2d(
    input: &[f64],
    in_shape: [usize; 3],
    weight: &[f64],
    out_channels: usize,
    geo: ConvGeometry,
) -> Result<(Vec<f64>, [usize; 3])> {
    let (ho, wo) = geo
        .down_size(in_shape[1], in_shape[2])
        .ok_or_else(|| Error::Dimension(format!("input {in_shape:?} smaller than kernel")))?;
    let d = Dims {
        big: in_shape,
        small: [out_channels, ho, wo],
        geo,
    };
    if input.len() != in_shape.iter().product::<usize>()
        || weight.len() != out_channels * in_shape[0] * d.kernel_len()
    {
        return Err(Error::Dimension("real_conv2d operand sizes".into()));
    }
    let mut out = vec![0.0; out_channels * ho * wo];
    gather(input, weight, &mut out, d, 1.0);
    Ok((out, d.small))
}

/// Input gradient of [`real_conv2d`].
pub(crate) fn real_conv2d_backward_input(
    grad_out: &[f64],
    out_shape: [usize; 3],
    weight: &[f64],
    in_shape: [usize; 3],
    geo: ConvGeometry,
) -> Vec<f64> {
    let d = Dims {
        big: in_shape,
        small: out_shape,
        geo,
    };
    let mut gi = vec![0.0; in_shape.iter().product()];
    scatter(grad_out, weight, &mut gi, d, 1.0);
    gi
}

/// Weight gradient of [`real_conv2d`], accumulated into `gw`.
#[cfg(test)]
pub(crate) fn real_conv2d_backward_weight(
    input: &[f64],
    in_shape: [usize; 3],
    grad_out: &[f64],
    out_shape: [usize; 3],
    geo: ConvGeometry,
    gw: &mut [f64],
) {
    let d = Dims {
        big: in_shape,
        small: out_shape,
        geo,
    };
    weight_grad(grad_out, input, gw, d, 1.0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Strided convolution (encoder).
    Down,
    /// Transposed convolution (decoder).
    Up,
}

/// Parameters (or their gradients) of one complex layer. Kernels are
/// `A + iB`, stored `[small_channels, big_channels, kh, kw]`: for a down
/// layer the small side is the output, for an up layer it is the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight_re: Vec<f64>,
    pub weight_im: Vec<f64>,
    pub bias_re: Vec<f64>,
    pub bias_im: Vec<f64>,
}

impl LayerParams {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            weight_re: vec![0.0; other.weight_re.len()],
            weight_im: vec![0.0; other.weight_im.len()],
            bias_re: vec![0.0; other.bias_re.len()],
            bias_im: vec![0.0; other.bias_im.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            &self.weight_re,
            &self.weight_im,
            &self.bias_re,
            &self.bias_im,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.weight_re,
            &mut self.weight_im,
            &mut self.bias_re,
            &mut self.bias_im,
        ]
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexConvLayer {
    pub direction: Direction,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
    pub params: LayerParams,
}

impl ComplexConvLayer {
    pub fn zeros(
        direction: Direction,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    ) -> Self {
        let wlen = in_channels * out_channels * geometry.kernel[0] * geometry.kernel[1];
        Self {
            direction,
            in_channels,
            out_channels,
            geometry,
            params: LayerParams {
                weight_re: vec![0.0; wlen],
                weight_im: vec![0.0; wlen],
                bias_re: vec![0.0; out_channels],
                bias_im: vec![0.0; out_channels],
            },
        }
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        if input[0] != self.in_channels {
            return Err(Error::Dimension(format!(
                "layer expects {} input channels, got {}",
                self.in_channels, input[0]
            )));
        }
        let hw = match self.direction {
            Direction::Down => self.geometry.down_size(input[1], input[2]),
            Direction::Up => self.geometry.up_size(input[1], input[2]),
        };
        let (h, w) = hw.ok_or_else(|| {
            Error::Dimension(format!(
                "input {input:?} incompatible with {:?}",
                self.geometry
            ))
        })?;
        Ok([self.out_channels, h, w])
    }

    fn dims(&self, input: [usize; 3], output: [usize; 3]) -> Dims {
        match self.direction {
            Direction::Down => Dims {
                big: input,
                small: output,
                geo: self.geometry,
            },
            Direction::Up => Dims {
                big: output,
                small: input,
                geo: self.geometry,
            },
        }
    }

    /// `(A*x - B*y) + i(A*y + B*x)` plus the complex bias, for input `x + iy`.
    pub fn forward(&self, input: &ComplexTensor) -> Result<ComplexTensor> {
        let out_shape = self.output_shape(input.shape())?;
        let d = self.dims(input.shape(), out_shape);
        let mut out = ComplexTensor::zeros(out_shape);
        let (a, b) = (&self.params.weight_re, &self.params.weight_im);
        let op = match self.direction {
            Direction::Down => gather,
            Direction::Up => scatter,
        };
        op(&input.re, a, &mut out.re, d, 1.0);
        op(&input.im, b, &mut out.re, d, -1.0);
        op(&input.im, a, &mut out.im, d, 1.0);
        op(&input.re, b, &mut out.im, d, 1.0);
        let plane = out.plane();
        for c in 0..self.out_channels {
            let (br, bi) = (self.params.bias_re[c], self.params.bias_im[c]);
            out.re[c * plane..(c + 1) * plane]
                .iter_mut()
                .for_each(|v| *v += br);
            out.im[c * plane..(c + 1) * plane]
                .iter_mut()
                .for_each(|v| *v += bi);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient. Real and imaginary parts are treated as independent real
    /// variables.
    pub fn backward(
        &self,
        input: &ComplexTensor,
        grad_out: &ComplexTensor,
        grads: &mut LayerParams,
    ) -> Result<ComplexTensor> {
        let out_shape = self.output_shape(input.shape())?;
        if grad_out.shape() != out_shape {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} != output shape {out_shape:?}",
                grad_out.shape()
            )));
        }
        let d = self.dims(input.shape(), out_shape);
        let (a, b) = (&self.params.weight_re, &self.params.weight_im);
        let (gr, gi) = (&grad_out.re, &grad_out.im);
        let (xr, xi) = (&input.re, &input.im);
        let mut gin = ComplexTensor::zeros(input.shape());
        match self.direction {
            Direction::Down => {
                weight_grad(gr, xr, &mut grads.weight_re, d, 1.0);
                weight_grad(gi, xi, &mut grads.weight_re, d, 1.0);
                weight_grad(gr, xi, &mut grads.weight_im, d, -1.0);
                weight_grad(gi, xr, &mut grads.weight_im, d, 1.0);
                scatter(gr, a, &mut gin.re, d, 1.0);
                scatter(gi, b, &mut gin.re, d, 1.0);
                scatter(gr, b, &mut gin.im, d, -1.0);
                scatter(gi, a, &mut gin.im, d, 1.0);
            }
            Direction::Up => {
                weight_grad(xr, gr, &mut grads.weight_re, d, 1.0);
                weight_grad(xi, gi, &mut grads.weight_re, d, 1.0);
                weight_grad(xi, gr, &mut grads.weight_im, d, -1.0);
                weight_grad(xr, gi, &mut grads.weight_im, d, 1.0);
                gather(gr, a, &mut gin.re, d, 1.0);
                gather(gi, b, &mut gin.re, d, 1.0);
                gather(gr, b, &mut gin.im, d, -1.0);
                gather(gi, a, &mut gin.im, d, 1.0);
            }
        }
        let plane = grad_out.plane();
        for c in 0..self.out_channels {
            grads.bias_re[c] += gr[c * plane..(c + 1) * plane].iter().sum::<f64>();
            grads.bias_im[c] += gi[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
        Ok(gin)
    }
}

/// Free-function form of [`ComplexConvLayer::forward`].
pub fn complex_conv_forward(
    input: &ComplexTensor,
    layer: &ComplexConvLayer,
) -> Result<ComplexTensor> {
    layer.forward(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use realfft::num_complex::Complex64;

    fn layer_1x1(a: f64, b: f64) -> ComplexConvLayer {
        let geo = ConvGeometry::centered([1, 1], [1, 1]).unwrap();
        let mut l = ComplexConvLayer::zeros(Direction::Down, 1, 1, geo);
        l.params.weight_re[0] = a;
        l.params.weight_im[0] = b;
        l
    }

    #[test]
    fn scalar_complex_product() {
        let (a, b, x, y) = (0.7, -1.3, 2.0, 0.5);
        let input = ComplexTensor::from_parts([1, 1, 1], vec![x], vec![y]).unwrap();
        let out = layer_1x1(a, b).forward(&input).unwrap();
        let expect = Complex64::new(a, b) * Complex64::new(x, y);
        assert_eq!(out.re[0], a * x - b * y);
        assert_eq!(out.im[0], a * y + b * x);
        assert!((Complex64::new(out.re[0], out.im[0]) - expect).norm() < 1e-15);
    }

    #[test]
    fn real_in_real_kernel_real_out() {
        let geo = ConvGeometry::centered([3, 3], [2, 1]).unwrap();
        let mut l = ComplexConvLayer::zeros(Direction::Down, 2, 3, geo);
        for (i, w) in l.params.weight_re.iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin();
        }
        l.params.bias_re = vec![0.1, 0.2, 0.3];
        let n = 2 * 7 * 5;
        let input = ComplexTensor::from_parts(
            [2, 7, 5],
            (0..n).map(|i| (i as f64).cos()).collect(),
            vec![0.0; n],
        )
        .unwrap();
        let out = l.forward(&input).unwrap();
        assert_eq!(out.shape(), [3, 4, 5]);
        assert!(out.im.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn up_inverts_down_shape() {
        let geo = ConvGeometry::centered([5, 5], [2, 1]).unwrap();
        for h in [257usize, 129, 65, 17, 3] {
            let (hd, wd) = geo.down_size(h, 40).unwrap();
            assert_eq!(hd, (h - 1) / 2 + 1);
            assert_eq!(wd, 40);
            assert_eq!(geo.up_size(hd, wd), Some((h, 40)));
        }
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvGeometry::centered([4, 5], [2, 1]).is_err());
        assert!(ConvGeometry::centered([5, 5], [0, 1]).is_err());
    }

    #[test]
    fn channel_mismatch() {
        let l = layer_1x1(1.0, 0.0);
        let input = ComplexTensor::zeros([2, 3, 3]);
        assert!(l.forward(&input).is_err());
    }
}
