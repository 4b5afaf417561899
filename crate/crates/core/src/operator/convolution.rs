//! Lattice convolution with an even weight table, `out[i] = sum_j
//! w(|i - j|) in[j]`, evaluated by zero-padded FFT.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par::{self, Parallelism};

pub struct Convolution {
    dims: [usize; 2],
    pad: [usize; 2],
    kernel_hat: Vec<Complex64>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for Convolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolution").field("dims", &self.dims).field("pad", &self.pad).finish()
    }
}

impl Convolution {
    /// `weight(dx, dy)` is queried for `dx < dims[0]`, `dy < dims[1]`.
    pub fn new<W: Fn(usize, usize) -> f64>(dims: [usize; 2], weight: W, par: Parallelism) -> Self {
        let pad = [2 * dims[0], if dims[1] > 1 { 2 * dims[1] } else { 1 }];
        let mut planner = FftPlanner::new();
        let fwd = [planner.plan_fft_forward(pad[0]), planner.plan_fft_forward(pad[1])];
        let inv = [planner.plan_fft_inverse(pad[0]), planner.plan_fft_inverse(pad[1])];
        let mut kernel = vec![Complex64::new(0.0, 0.0); pad[0] * pad[1]];
        for dx in 0..dims[0] {
            for dy in 0..dims[1] {
                let w = weight(dx, dy);
                for ix in wrap(dx, pad[0]) {
                    for iy in wrap(dy, pad[1]) {
                        kernel[ix * pad[1] + iy] = Complex64::new(w, 0.0);
                    }
                }
            }
        }
        let mut conv = Convolution {
            dims,
            pad,
            kernel_hat: Vec::new(),
            fwd,
            inv,
        };
        conv.transform(&mut kernel, false, par);
        conv.kernel_hat = kernel;
        conv
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool, par: Parallelism) {
        let [px, py] = self.pad;
        let plans = if inverse { &self.inv } else { &self.fwd };
        if py > 1 {
            par::for_each_chunk_mut(par, buf, py, |_, row| plans[1].process(row));
        }
        // Transform along x through a transpose.
        let mut t = vec![Complex64::new(0.0, 0.0); px * py];
        for i in 0..px {
            for j in 0..py {
                t[j * px + i] = buf[i * py + j];
            }
        }
        par::for_each_chunk_mut(par, &mut t, px, |_, col| plans[0].process(col));
        for i in 0..px {
            for j in 0..py {
                buf[i * py + j] = t[j * px + i];
            }
        }
    }

    /// Convolve a lattice vector of length `dims[0] * dims[1]`.
    pub fn apply(&self, input: &[f64], par: Parallelism) -> Vec<f64> {
        let [nx, ny] = self.dims;
        let [px, py] = self.pad;
        debug_assert_eq!(input.len(), nx * ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); px * py];
        for i in 0..nx {
            for j in 0..ny {
                buf[i * py + j] = Complex64::new(input[i * ny + j], 0.0);
            }
        }
        self.transform(&mut buf, false, par);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, true, par);
        let scale = 1.0 / (px * py) as f64;
        let mut out = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                out[i * ny + j] = buf[i * py + j].re * scale;
            }
        }
        out
    }
}

/// Positions of offsets `+d` and `-d` in a periodic array of length `p`.
fn wrap(d: usize, p: usize) -> Vec<usize> {
    if d == 0 {
        vec![0]
    } else {
        vec![d, p - d]
    }
}

/// Reference `O(L^2)` convolution.
pub fn direct<W: Fn(usize, usize) -> f64 + Sync>(dims: [usize; 2], weight: W, input: &[f64], par: Parallelism) -> Vec<f64> {
    let [nx, ny] = dims;
    par::map_range(par, nx * ny, |l| {
        let (i, j) = (l / ny, l % ny);
        let mut acc = 0.0;
        for i2 in 0..nx {
            for j2 in 0..ny {
                let v = input[i2 * ny + j2];
                if v != 0.0 {
                    acc += weight(i.abs_diff(i2), j.abs_diff(j2)) * v;
                }
            }
        }
        acc
    })
}
