use serde::{Deserialize, Serialize};

use crate::tensor::{gemm, Grid, Padded, Real, Tensor4, View};
use crate::{NetError, Result};

/// Shape of one convolution: input and output channels, cubic kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn taps(&self) -> usize {
        self.kernel.pow(3)
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.taps()
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    /// Neighbour offsets in weight order (`kx` fastest).
    fn offsets(&self) -> Vec<[isize; 3]> {
        let r = (self.kernel / 2) as isize;
        let w = self.kernel as isize;
        let mut out = Vec::with_capacity(self.taps());
        for kz in 0..w {
            for ky in 0..w {
                for kx in 0..w {
                    out.push([kx - r, ky - r, kz - r]);
                }
            }
        }
        out
    }
}

/// Zero-padded "same" cross-correlation plus bias.
pub(crate) fn conv_forward<T: Real>(s: ConvShape, w: &[T], b: &[T], x: &Padded<T>) -> Padded<T> {
    debug_assert_eq!(x.channels, s.cin);
    let g = x.grid;
    let mut y = Padded::zeros(s.cout, g);
    let (lo, hi) = g.span();
    for (o, &bias) in b.iter().enumerate() {
        y.channel_mut(o)[lo..hi].fill(bias);
    }
    let taps = s.taps();
    for (t, d) in s.offsets().into_iter().enumerate() {
        let off = (lo as isize + g.shift(d)) as usize;
        gemm(
            s.cout,
            s.cin,
            hi - lo,
            w,
            View::new(t, s.cin * taps, taps),
            &x.data,
            View::new(off, g.len, 1),
            &mut y.data,
            View::new(lo, g.len, 1),
        );
    }
    // Positions between interior rows picked up garbage; restore the padding.
    g.zero_border(&mut y.data);
    y
}

/// Accumulates weight and bias gradients and optionally returns the input
/// gradient. `dy` must have a zero border.
pub(crate) fn conv_backward<T: Real>(
    s: ConvShape,
    w: &[T],
    x: &Padded<T>,
    dy: &Padded<T>,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Padded<T>> {
    let g = x.grid;
    let (lo, hi) = g.span();
    let n = hi - lo;
    let taps = s.taps();
    for (o, acc) in db.iter_mut().enumerate() {
        *acc = dy.channel(o)[lo..hi].iter().fold(*acc, |a, &v| a + v);
    }
    let offsets = s.offsets();
    for (t, &d) in offsets.iter().enumerate() {
        let off = (lo as isize + g.shift(d)) as usize;
        gemm(
            s.cout,
            n,
            s.cin,
            &dy.data,
            View::new(lo, g.len, 1),
            &x.data,
            View::new(off, 1, g.len),
            dw,
            View::new(t, s.cin * taps, taps),
        );
    }
    if !need_dx {
        return None;
    }
    let mut dx = Padded::zeros(s.cin, g);
    for (t, &d) in offsets.iter().enumerate() {
        let off = (lo as isize + g.shift(d)) as usize;
        gemm(
            s.cin,
            s.cout,
            n,
            w,
            View::new(t, taps, s.cin * taps),
            &dy.data,
            View::new(lo, g.len, 1),
            &mut dx.data,
            View::new(off, g.len, 1),
        );
    }
    g.zero_border(&mut dx.data);
    Some(dx)
}

/// Standalone convolution on an unpadded tensor. Weights are laid out
/// `[out][in][kz][ky][kx]`; `kernel` is 1 or 3.
pub fn conv3d_forward<T: Real>(
    input: &Tensor4<T>,
    weights: &[T],
    bias: &[T],
    kernel: usize,
) -> Result<Tensor4<T>> {
    if kernel != 1 && kernel != 3 {
        return Err(NetError::Shape {
            what: "convolution kernel",
            expected: "width 1 or 3".into(),
            found: format!("width {kernel}"),
        });
    }
    let s = ConvShape { cin: input.channels(), cout: bias.len(), kernel };
    if s.cout == 0 || weights.len() != s.weight_len() {
        return Err(NetError::Shape {
            what: "convolution weights",
            expected: format!("{} x {} x {kernel}^3 for input {}", s.cout.max(1), s.cin, input.shape()),
            found: format!("{} weights and {} biases", weights.len(), bias.len()),
        });
    }
    Ok(conv_forward(s, weights, bias, &Padded::from_tensor(input)).to_tensor())
}

pub(crate) fn relu<T: Real>(x: &mut Padded<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` by the positive entries of the activation output `y`.
pub(crate) fn relu_backward<T: Real>(y: &Padded<T>, dy: &mut Padded<T>) {
    for (g, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x max pooling; also returns the flat position of each selected input.
pub(crate) fn maxpool<T: Real>(x: &Padded<T>) -> (Padded<T>, Vec<usize>) {
    let g = x.grid;
    let h = g.half();
    let mut y = Padded::zeros(x.channels, h);
    let mut arg = Vec::with_capacity(x.channels * h.dims.iter().product::<usize>());
    let [px, py, _] = g.padded;
    let window: Vec<usize> = (0..8).map(|q| (q & 1) + px * ((q >> 1 & 1) + py * (q >> 2))).collect();
    for c in 0..x.channels {
        let src = x.channel(c);
        let base_c = c * g.len;
        let dst = &mut y.data[c * h.len..(c + 1) * h.len];
        for k in 0..h.dims[2] {
            for j in 0..h.dims[1] {
                for i in 0..h.dims[0] {
                    let base = g.index(2 * i, 2 * j, 2 * k);
                    let mut best = base;
                    for &d in &window[1..] {
                        if src[base + d] > src[best] {
                            best = base + d;
                        }
                    }
                    dst[h.index(i, j, k)] = src[best];
                    arg.push(base_c + best);
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool_backward<T: Real>(dy: &Padded<T>, arg: &[usize], input: Grid) -> Padded<T> {
    let h = dy.grid;
    let mut dx = Padded::zeros(dy.channels, input);
    let mut n = 0;
    for c in 0..dy.channels {
        let src = dy.channel(c);
        h.for_each_interior(|pi, _| {
            dx.data[arg[n]] = dx.data[arg[n]] + src[pi];
            n += 1;
        });
    }
    dx
}

/// 2x nearest-neighbour upsampling.
pub(crate) fn upsample<T: Real>(x: &Padded<T>) -> Padded<T> {
    let h = x.grid;
    let g = h.double();
    let mut y = Padded::zeros(x.channels, g);
    for c in 0..x.channels {
        let src = &x.data[c * h.len..(c + 1) * h.len];
        let dst = &mut y.data[c * g.len..(c + 1) * g.len];
        for k in 0..g.dims[2] {
            for j in 0..g.dims[1] {
                let row = g.index(0, j, k);
                let from = h.index(0, j / 2, k / 2);
                for i in 0..g.dims[0] {
                    dst[row + i] = src[from + i / 2];
                }
            }
        }
    }
    y
}

pub(crate) fn upsample_backward<T: Real>(dy: &Padded<T>) -> Padded<T> {
    let g = dy.grid;
    let h = g.half();
    let mut dx = Padded::zeros(dy.channels, h);
    for c in 0..dy.channels {
        let src = &dy.data[c * g.len..(c + 1) * g.len];
        let dst = &mut dx.data[c * h.len..(c + 1) * h.len];
        for k in 0..g.dims[2] {
            for j in 0..g.dims[1] {
                let row = g.index(0, j, k);
                let to = h.index(0, j / 2, k / 2);
                for i in 0..g.dims[0] {
                    dst[to + i / 2] = dst[to + i / 2] + src[row + i];
                }
            }
        }
    }
    dx
}

pub(crate) fn concat<T: Real>(a: &Padded<T>, b: &Padded<T>) -> Padded<T> {
    debug_assert_eq!(a.grid, b.grid);
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Padded { channels: a.channels + b.channels, grid: a.grid, data }
}

/// Splits a gradient into the parts for the first `first` channels and the rest.
pub(crate) fn split<T: Real>(mut x: Padded<T>, first: usize) -> (Padded<T>, Padded<T>) {
    let tail = x.data.split_off(first * x.grid.len);
    let rest = Padded { channels: x.channels - first, grid: x.grid, data: tail };
    x.channels = first;
    (x, rest)
}
