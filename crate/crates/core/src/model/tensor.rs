//! Multi-channel 64-bit volumes and the handful of kernels the network uses.
//!
//! Layout is channel-major, each channel x-fastest like [`VoxelGrid`].
//! The convolution loops walk whole x-rows so the innermost loop is a
//! contiguous multiply-add.
//!
//! [`VoxelGrid`]: crate::datamodel::VoxelGrid

use crate::datamodel::Dims;

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    channels: usize,
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(channels: usize, dims: Dims) -> Self {
        Volume { channels, dims, data: vec![0.0; channels * dims.len()] }
    }

    /// Panics if `data.len() != channels * dims.len()`.
    pub fn from_vec(channels: usize, dims: Dims, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * dims.len(), "volume data length");
        Volume { channels, dims, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Half-open range of output coordinates whose input at `offset` is in bounds.
fn valid_range(n: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Calls `f(out_start, in_start, len)` for every x-row pairing output voxels
/// with the input shifted by `(dx, dy, dz)` under zero padding.
#[inline]
fn for_each_row(dims: Dims, dx: isize, dy: isize, dz: isize, mut f: impl FnMut(usize, usize, usize)) {
    let (x_lo, x_hi) = valid_range(dims.nx, dx);
    let (y_lo, y_hi) = valid_range(dims.ny, dy);
    let (z_lo, z_hi) = valid_range(dims.nz, dz);
    if x_lo >= x_hi {
        return;
    }
    let len = x_hi - x_lo;
    for z in z_lo..z_hi {
        let zi = (z as isize + dz) as usize;
        for y in y_lo..y_hi {
            let yi = (y as isize + dy) as usize;
            let out_start = (z * dims.ny + y) * dims.nx + x_lo;
            let in_start = (zi * dims.ny + yi) * dims.nx + (x_lo as isize + dx) as usize;
            f(out_start, in_start, len);
        }
    }
}

const TAPS: usize = 27;

#[inline]
fn tap_offset(k: usize) -> (isize, isize, isize) {
    let kx = (k % 3) as isize - 1;
    let ky = ((k / 3) % 3) as isize - 1;
    let kz = (k / 9) as isize - 1;
    (kx, ky, kz)
}

/// 3×3×3 convolution, stride 1, zero padding 1. `weight` is
/// `[out, in, kz, ky, kx]` row-major.
pub fn conv3_forward(input: &Volume, weight: &[f64], bias: &[f64]) -> Volume {
    let cin = input.channels;
    let cout = bias.len();
    debug_assert_eq!(weight.len(), cout * cin * TAPS);
    let dims = input.dims;
    let mut out = Volume::zeros(cout, dims);
    for (o, &b) in bias.iter().enumerate() {
        let out_o = out.channel_mut(o);
        out_o.fill(b);
        for i in 0..cin {
            let inp = input.channel(i);
            let w_oi = &weight[(o * cin + i) * TAPS..][..TAPS];
            for (k, &w) in w_oi.iter().enumerate() {
                let (dx, dy, dz) = tap_offset(k);
                for_each_row(dims, dx, dy, dz, |os, is, len| {
                    for (a, &x) in out_o[os..os + len].iter_mut().zip(&inp[is..is + len]) {
                        *a += w * x;
                    }
                });
            }
        }
    }
    out
}

/// Gradients of [`conv3_forward`]. Input gradient is skipped when
/// `want_input_grad` is false (the stem never needs it).
pub fn conv3_backward(
    input: &Volume,
    weight: &[f64],
    d_out: &Volume,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Volume> {
    let cin = input.channels;
    let cout = d_out.channels;
    let dims = input.dims;
    let mut d_in = want_input_grad.then(|| Volume::zeros(cin, dims));
    for o in 0..cout {
        let g = d_out.channel(o);
        d_bias[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let inp = input.channel(i);
            let base = (o * cin + i) * TAPS;
            for k in 0..TAPS {
                let (dx, dy, dz) = tap_offset(k);
                let mut acc = 0.0;
                for_each_row(dims, dx, dy, dz, |os, is, len| {
                    acc += g[os..os + len].iter().zip(&inp[is..is + len]).map(|(a, b)| a * b).sum::<f64>();
                });
                d_weight[base + k] += acc;
                if let Some(d_in) = d_in.as_mut() {
                    let w = weight[base + k];
                    let d_in_i = d_in.channel_mut(i);
                    for_each_row(dims, dx, dy, dz, |os, is, len| {
                        for (a, &x) in d_in_i[is..is + len].iter_mut().zip(&g[os..os + len]) {
                            *a += w * x;
                        }
                    });
                }
            }
        }
    }
    d_in
}

pub fn relu_inplace(v: &mut Volume) {
    for x in v.data_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` wherever `pre_activation <= 0` (ReLU derivative at 0 is 0).
pub fn relu_backward_inplace(grad: &mut Volume, pre_activation: &Volume) {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre_activation.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Sums non-overlapping `f`×`f`×`f` blocks. Dims must be divisible by `f`.
pub fn block_sum(v: &Volume, f: usize) -> Volume {
    if f == 1 {
        return v.clone();
    }
    let d = v.dims;
    let small = Dims { nx: d.nx / f, ny: d.ny / f, nz: d.nz / f };
    let mut out = Volume::zeros(v.channels, small);
    for c in 0..v.channels {
        let src = v.channel(c);
        let dst = out.channel_mut(c);
        for z in 0..d.nz {
            for y in 0..d.ny {
                let row = &src[(z * d.ny + y) * d.nx..][..d.nx];
                let drow = &mut dst[((z / f) * small.ny + y / f) * small.nx..][..small.nx];
                for (x, &val) in row.iter().enumerate() {
                    drow[x / f] += val;
                }
            }
        }
    }
    out
}

/// Non-overlapping average pooling by factor `f`.
pub fn avg_pool(v: &Volume, f: usize) -> Volume {
    let mut out = block_sum(v, f);
    let inv = 1.0 / (f * f * f) as f64;
    if f > 1 {
        out.data_mut().iter_mut().for_each(|x| *x *= inv);
    }
    out
}

/// Nearest-neighbour upsampling by factor `f` onto `full` dims.
pub fn upsample_nearest(v: &Volume, f: usize, full: Dims) -> Volume {
    if f == 1 {
        return v.clone();
    }
    let s = v.dims;
    let mut out = Volume::zeros(v.channels, full);
    for c in 0..v.channels {
        let src = v.channel(c);
        let dst = out.channel_mut(c);
        for z in 0..full.nz {
            for y in 0..full.ny {
                let srow = &src[((z / f) * s.ny + y / f) * s.nx..][..s.nx];
                let drow = &mut dst[(z * full.ny + y) * full.nx..][..full.nx];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = srow[x / f];
                }
            }
        }
    }
    out
}
