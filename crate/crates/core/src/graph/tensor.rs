//! Channel-major tensors and the forward kernels that operate on them.

use std::io::{self, Read, Write};

use rayon::prelude::*;

use super::GraphError;

/// A `channels × height × width` grid stored channel-major, then row-major
/// within a channel: element `(c, y, x)` lives at `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, GraphError> {
        if data.len() != channels * height * width {
            return Err(GraphError::DataLength {
                expected: channels * height * width,
                found: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Binary dump: `TNSR`, then channels, height, width as little-endian
    /// u32, then the values as little-endian f64 in storage order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"TNSR")?;
        for d in [self.channels, self.height, self.width] {
            let d = u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self, GraphError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"TNSR" {
            return Err(GraphError::BadDump("missing TNSR header".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        Self::from_vec(dims[0], dims[1], dims[2], data)
    }
}

/// Kernel, stride and padding of a sliding-window op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ShapeSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self { kernel, stride, padding }
    }

    /// Kernel `k`, stride `s`, padding `k / 2`.
    pub fn same(kernel: usize, stride: usize) -> Self {
        Self::new(kernel, stride, kernel / 2)
    }
}

/// `floor((input - kernel + 2 * padding) / stride) + 1`.
pub fn conv_output_dim(input: usize, spec: ShapeSpec) -> Result<usize, GraphError> {
    let padded = input as i64 + 2 * spec.padding as i64;
    if input == 0 || spec.stride == 0 || spec.kernel == 0 || padded < spec.kernel as i64 {
        return Err(GraphError::OutputDim {
            input,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
        });
    }
    Ok(((padded - spec.kernel as i64) / spec.stride as i64) as usize + 1)
}

/// Weights of a convolution, laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx]
    }

    pub fn check(&self) -> Result<(), GraphError> {
        let expected = self.out_channels * self.in_channels * self.kernel * self.kernel;
        if self.weights.len() != expected || self.bias.len() != self.out_channels {
            return Err(GraphError::DataLength {
                expected,
                found: self.weights.len(),
            });
        }
        Ok(())
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Convolution with bias, optionally followed by SiLU.
pub fn conv2d(input: &Tensor3, w: &ConvWeights, spec: ShapeSpec, activation: bool) -> Result<Tensor3, GraphError> {
    w.check()?;
    if w.kernel != spec.kernel || w.in_channels != input.channels {
        return Err(GraphError::ShapeMismatch(format!(
            "conv expects {} input channels with kernel {}, got {} channels and kernel {}",
            w.in_channels, w.kernel, input.channels, spec.kernel
        )));
    }
    let mut out = conv2d_raw(input, w, spec)?;
    if activation {
        out.data.iter_mut().for_each(|v| *v = silu(*v));
    }
    Ok(out)
}

pub(crate) fn conv2d_raw(input: &Tensor3, w: &ConvWeights, spec: ShapeSpec) -> Result<Tensor3, GraphError> {
    let oh = conv_output_dim(input.height, spec)?;
    let ow = conv_output_dim(input.width, spec)?;
    let mut out = Tensor3::zeros(w.out_channels, oh, ow);
    let (ih, iw) = (input.height as isize, input.width as isize);
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    out.data.par_chunks_mut(oh * ow).enumerate().for_each(|(o, plane)| {
        plane.iter_mut().for_each(|v| *v = w.bias[o]);
        for i in 0..w.in_channels {
            let src = input.channel(i);
            for ky in 0..w.kernel {
                for kx in 0..w.kernel {
                    let wv = w.at(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let y = oy as isize * s + ky as isize - p;
                        if y < 0 || y >= ih {
                            continue;
                        }
                        let row = &src[y as usize * iw as usize..(y as usize + 1) * iw as usize];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = ox as isize * s + kx as isize - p;
                            if x >= 0 && x < iw {
                                *d += wv * row[x as usize];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradient of a convolution's output with respect to its input.
pub(crate) fn conv2d_input_grad(grad_out: &Tensor3, w: &ConvWeights, spec: ShapeSpec, input_shape: Shape) -> Tensor3 {
    let (c, ih, iw) = input_shape;
    let mut g = Tensor3::zeros(c, ih, iw);
    let (oh, ow) = (grad_out.height, grad_out.width);
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    g.data.par_chunks_mut(ih * iw).enumerate().for_each(|(i, dst)| {
        for o in 0..w.out_channels {
            let go = grad_out.channel(o);
            for ky in 0..w.kernel {
                for kx in 0..w.kernel {
                    let wv = w.at(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let y = oy as isize * s + ky as isize - p;
                        if y < 0 || y >= ih as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let x = ox as isize * s + kx as isize - p;
                            if x >= 0 && x < iw as isize {
                                dst[y as usize * iw + x as usize] += wv * go[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    });
    g
}

/// Stride-1 max pooling with `-inf` padding. Also returns, for every output
/// element, the flat input index it was taken from; the first maximum in
/// row-major window order wins.
pub(crate) fn maxpool2d_with_argmax(input: &Tensor3, k: usize, p: usize) -> Result<(Tensor3, Vec<usize>), GraphError> {
    let spec = ShapeSpec::new(k, 1, p);
    let oh = conv_output_dim(input.height, spec)?;
    let ow = conv_output_dim(input.width, spec)?;
    let mut out = Tensor3::zeros(input.channels, oh, ow);
    let mut arg = vec![0usize; out.len()];
    for c in 0..input.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for ky in 0..k {
                    let y = (oy + ky) as isize - p as isize;
                    if y < 0 || y >= input.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let x = (ox + kx) as isize - p as isize;
                        if x < 0 || x >= input.width as isize {
                            continue;
                        }
                        let idx = input.index(c, y as usize, x as usize);
                        if best_i == usize::MAX || input.data[idx] > best {
                            best = input.data[idx];
                            best_i = idx;
                        }
                    }
                }
                let o = out.index(c, oy, ox);
                out.data[o] = best;
                arg[o] = best_i;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2d(input: &Tensor3, k: usize, p: usize) -> Result<Tensor3, GraphError> {
    maxpool2d_with_argmax(input, k, p).map(|(t, _)| t)
}

/// Every value copied into a `factor × factor` block.
pub fn upsample_nearest(input: &Tensor3, factor: usize) -> Result<Tensor3, GraphError> {
    if factor == 0 {
        return Err(GraphError::InvalidParameter("upsample factor must be >= 1".into()));
    }
    resize_nearest(input, input.height * factor, input.width * factor)
}

/// Nearest-neighbour resize: output `(y, x)` reads input
/// `(y * H / height, x * W / width)`.
pub fn resize_nearest(input: &Tensor3, height: usize, width: usize) -> Result<Tensor3, GraphError> {
    if height == 0 || width == 0 {
        return Err(GraphError::InvalidParameter("resize target must be non-empty".into()));
    }
    let mut out = Tensor3::zeros(input.channels, height, width);
    for c in 0..input.channels {
        for y in 0..height {
            let sy = y * input.height / height;
            for x in 0..width {
                let sx = x * input.width / width;
                out.set(c, y, x, input.get(c, sy, sx));
            }
        }
    }
    Ok(out)
}

pub fn concat_channels(inputs: &[&Tensor3]) -> Result<Tensor3, GraphError> {
    let first = inputs
        .first()
        .ok_or_else(|| GraphError::InvalidParameter("concat needs at least one input".into()))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = inputs.iter().find(|t| t.height != h || t.width != w) {
        return Err(GraphError::ShapeMismatch(format!(
            "concat inputs differ spatially: {}x{} vs {}x{}",
            h, w, bad.height, bad.width
        )));
    }
    let channels = inputs.iter().map(|t| t.channels).sum();
    let mut data = Vec::with_capacity(channels * h * w);
    for t in inputs {
        data.extend_from_slice(&t.data);
    }
    Tensor3::from_vec(channels, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dim_examples() {
        assert_eq!(conv_output_dim(640, ShapeSpec::new(3, 2, 1)).unwrap(), 320);
        assert_eq!(conv_output_dim(20, ShapeSpec::new(5, 1, 2)).unwrap(), 20);
        assert_eq!(conv_output_dim(37, ShapeSpec::new(1, 1, 0)).unwrap(), 37);
        assert!(conv_output_dim(2, ShapeSpec::new(5, 1, 0)).is_err());
        assert!(conv_output_dim(0, ShapeSpec::new(1, 1, 0)).is_err());
    }

    #[test]
    fn identity_and_zero_convs() {
        let x = Tensor3::from_vec(1, 2, 3, vec![1., -2., 3., 4., 5., -6.]).unwrap();
        let mut w = ConvWeights::zeros(1, 1, 1);
        w.weights[0] = 1.0;
        assert_eq!(conv2d(&x, &w, ShapeSpec::new(1, 1, 0), false).unwrap(), x);
        let z = conv2d(&x, &ConvWeights::zeros(4, 1, 3), ShapeSpec::same(3, 1), false).unwrap();
        assert_eq!(z.shape(), (4, 2, 3));
        assert!(z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = Tensor3::from_vec(2, 3, 3, (0..18).map(|v| v as f64 * 0.1 - 0.7).collect()).unwrap();
        let mut w = ConvWeights::zeros(1, 2, 3);
        for (i, v) in w.weights.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        w.bias[0] = 0.25;
        let y = conv2d(&x, &w, ShapeSpec::new(3, 2, 1), false).unwrap();
        assert_eq!(y.shape(), (1, 2, 2));
        for oy in 0..2 {
            for ox in 0..2 {
                let mut s = 0.25;
                for i in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (yy, xx) = ((oy * 2 + ky) as i64 - 1, (ox * 2 + kx) as i64 - 1);
                            if (0..3).contains(&yy) && (0..3).contains(&xx) {
                                s += w.at(0, i, ky, kx) * x.get(i, yy as usize, xx as usize);
                            }
                        }
                    }
                }
                assert!((y.get(0, oy, ox) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_layer_shape() {
        let x = Tensor3::zeros(3, 64, 64);
        let y = conv2d(&x, &ConvWeights::zeros(32, 3, 3), ShapeSpec::new(3, 2, 1), true).unwrap();
        assert_eq!(y.shape(), (32, 32, 32));
    }

    #[test]
    fn maxpool_examples() {
        let c = Tensor3::filled(2, 4, 4, 3.5);
        assert_eq!(maxpool2d(&c, 5, 2).unwrap(), c);
        let mut x = Tensor3::zeros(1, 7, 7);
        x.set(0, 3, 3, 9.0);
        let y = maxpool2d(&x, 5, 2).unwrap();
        for yy in 0..7 {
            for xx in 0..7 {
                let inside = (1..=5).contains(&yy) && (1..=5).contains(&xx);
                assert_eq!(y.get(0, yy, xx), if inside { 9.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn maxpool_ties_take_first_in_scan_order() {
        let x = Tensor3::filled(1, 3, 3, 1.0);
        let (_, arg) = maxpool2d_with_argmax(&x, 3, 1).unwrap();
        assert_eq!(arg[x.index(0, 1, 1)], 0);
        assert_eq!(arg[x.index(0, 2, 2)], x.index(0, 1, 1));
    }

    #[test]
    fn upsample_worked_matrix() {
        let x = Tensor3::from_vec(1, 2, 2, vec![1., 2., 3., 4.]).unwrap();
        let y = upsample_nearest(&x, 2).unwrap();
        let expected = [1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.];
        assert_eq!(y.shape(), (1, 4, 4));
        assert_eq!(y.data, expected);
        assert_eq!(upsample_nearest(&x, 1).unwrap(), x);
        assert_eq!(upsample_nearest(&Tensor3::zeros(3, 5, 5), 2).unwrap().shape(), (3, 10, 10));
    }

    #[test]
    fn concat_examples() {
        let a = Tensor3::from_vec(1, 1, 1, vec![2.0]).unwrap();
        let b = Tensor3::from_vec(1, 1, 1, vec![5.0]).unwrap();
        assert_eq!(concat_channels(&[&a, &b]).unwrap().data, vec![2.0, 5.0]);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let four = Tensor3::zeros(8, 2, 2);
        assert_eq!(concat_channels(&[&four, &four, &four, &four]).unwrap().shape(), (32, 2, 2));
        assert!(concat_channels(&[&a, &Tensor3::zeros(1, 2, 1)]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let x = Tensor3::from_vec(2, 1, 3, vec![0.5, -1.0, 2.0, 1e-300, f64::MAX, 0.0]).unwrap();
        let mut buf = Vec::new();
        x.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TNSR");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(Tensor3::read_dump(buf.as_slice()).unwrap(), x);
        assert!(Tensor3::read_dump(&buf[..20]).is_err());
    }
}
