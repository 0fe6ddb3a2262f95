//! 3D cross-correlation via im2col + GEMM.

use super::gemm::gemm;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        input_shape: &[usize],
        kernel_shape: &[usize],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        if input_shape.len() != 4 {
            return Err(Error::dim(format!("conv3d input must be [C, D, H, W], got {input_shape:?}")));
        }
        if kernel_shape.len() != 5 {
            return Err(Error::dim(format!(
                "conv3d kernel must be [C_out, C_in, kd, kh, kw], got {kernel_shape:?}"
            )));
        }
        if kernel_shape[1] != input_shape[0] {
            return Err(Error::dim(format!(
                "kernel expects {} input channels, input has {}",
                kernel_shape[1], input_shape[0]
            )));
        }
        if stride.contains(&0) {
            return Err(Error::dim("conv3d stride must be >= 1"));
        }
        let mut output = [0; 3];
        for a in 0..3 {
            let padded = input_shape[a + 1] + 2 * padding[a];
            let k = kernel_shape[a + 2];
            if k > padded {
                return Err(Error::dim(format!(
                    "kernel extent {k} exceeds padded input extent {padded} on axis {a}"
                )));
            }
            output[a] = (padded - k) / stride[a] + 1;
        }
        Ok(Self {
            c_in: input_shape[0],
            c_out: kernel_shape[0],
            input: [input_shape[1], input_shape[2], input_shape[3]],
            kernel: [kernel_shape[2], kernel_shape[3], kernel_shape[4]],
            stride,
            padding,
            output,
        })
    }

    /// Rows of the column matrix: `C_in * kd * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.output[0], self.output[1], self.output[2]]
    }
}

/// Source index range along one axis: for each output coordinate, the input
/// coordinate hit by kernel tap `k`, or `None` when it lands in padding.
fn tap_index(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let pos = (o * stride + k) as isize - pad as isize;
    if pos < 0 || pos as usize >= extent {
        None
    } else {
        Some(pos as usize)
    }
}

pub(crate) fn im2col(g: &ConvGeom, input: &[f64]) -> Vec<f64> {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let p = g.out_positions();
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut row = 0;
    for c in 0..g.c_in {
        let chan = &input[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let mut col = 0;
                    for z in 0..od {
                        let iz = tap_index(z, kz, g.stride[0], g.padding[0], d);
                        for y in 0..oh {
                            let iy = tap_index(y, ky, g.stride[1], g.padding[1], h);
                            match (iz, iy) {
                                (Some(iz), Some(iy)) => {
                                    let base = (iz * h + iy) * w;
                                    for x in 0..ow {
                                        if let Some(ix) =
                                            tap_index(x, kx, g.stride[2], g.padding[2], w)
                                        {
                                            dst[col + x] = chan[base + ix];
                                        }
                                    }
                                }
                                _ => {}
                            }
                            col += ow;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], grad_input: &mut [f64]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let p = g.out_positions();
    let mut row = 0;
    for c in 0..g.c_in {
        let chan = &mut grad_input[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    let mut col = 0;
                    for z in 0..od {
                        let iz = tap_index(z, kz, g.stride[0], g.padding[0], d);
                        for y in 0..oh {
                            let iy = tap_index(y, ky, g.stride[1], g.padding[1], h);
                            if let (Some(iz), Some(iy)) = (iz, iy) {
                                let base = (iz * h + iy) * w;
                                for x in 0..ow {
                                    if let Some(ix) =
                                        tap_index(x, kx, g.stride[2], g.padding[2], w)
                                    {
                                        chan[base + ix] += src[col + x];
                                    }
                                }
                            }
                            col += ow;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Forward pass; returns the output values and the column matrix kept for backward.
pub(crate) fn forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(g, input);
    let p = g.out_positions();
    let mut out = vec![0.0; g.c_out * p];
    for (o, b) in bias.iter().enumerate() {
        out[o * p..(o + 1) * p].fill(*b);
    }
    gemm(g.c_out, g.patch_len(), p, 1.0, kernel, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

/// Accumulates kernel gradient `gk += gout * cols^T`.
pub(crate) fn backward_kernel(g: &ConvGeom, grad_out: &[f64], cols: &[f64], gk: &mut [f64]) {
    gemm(g.c_out, g.out_positions(), g.patch_len(), 1.0, grad_out, false, cols, true, 1.0, gk);
}

pub(crate) fn backward_bias(g: &ConvGeom, grad_out: &[f64], gb: &mut [f64]) {
    let p = g.out_positions();
    for (o, acc) in gb.iter_mut().enumerate() {
        *acc += grad_out[o * p..(o + 1) * p].iter().sum::<f64>();
    }
}

/// Accumulates input gradient via `kernel^T * gout` scattered back by col2im.
pub(crate) fn backward_input(g: &ConvGeom, grad_out: &[f64], kernel: &[f64], gi: &mut [f64]) {
    let p = g.out_positions();
    let mut gcols = vec![0.0; g.patch_len() * p];
    gemm(g.patch_len(), g.c_out, p, 1.0, kernel, true, grad_out, false, 0.0, &mut gcols);
    col2im(g, &gcols, gi);
}
