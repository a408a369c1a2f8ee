//! Raw numeric loops behind the tape primitives.
//!
//! Convolutions skip zero input entries, which makes one-hot and padded
//! inputs cheap without changing results.

use super::tape::axpy;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `c (m×n) = a (m×k) · b (k×n)`
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip != 0.0 {
                axpy(aip, &b[p * n..(p + 1) * n], out);
            }
        }
    }
}

/// `da += g · bᵀ`
pub fn matmul_grad_lhs(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            da[i * k + p] += dot(gi, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `db += aᵀ · g`
pub fn matmul_grad_rhs(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(aip, gi, &mut db[p * n..(p + 1) * n]);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Conv1d: signal L×Cin, kernel K×Cin×Cout, output (L−K+1)×Cout. The K
// consecutive input rows under output position p form a contiguous window
// of K·Cin values whose flat index matches the kernel's leading two axes.

pub fn conv1d(x: &[f64], k: &[f64], out: &mut [f64], len: usize, c_in: usize, width: usize, c_out: usize) {
    let positions = len + 1 - width;
    let window = width * c_in;
    for p in 0..positions {
        let xs = &x[p * c_in..p * c_in + window];
        let o = &mut out[p * c_out..(p + 1) * c_out];
        for (j, &xv) in xs.iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, &k[j * c_out..(j + 1) * c_out], o);
            }
        }
    }
}

pub fn conv1d_grad_kernel(x: &[f64], g: &[f64], dk: &mut [f64], len: usize, c_in: usize, width: usize, c_out: usize) {
    let positions = len + 1 - width;
    let window = width * c_in;
    for p in 0..positions {
        let gp = &g[p * c_out..(p + 1) * c_out];
        if gp.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xs = &x[p * c_in..p * c_in + window];
        for (j, &xv) in xs.iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, gp, &mut dk[j * c_out..(j + 1) * c_out]);
            }
        }
    }
}

pub fn conv1d_grad_input(k: &[f64], g: &[f64], dx: &mut [f64], len: usize, c_in: usize, width: usize, c_out: usize) {
    let positions = len + 1 - width;
    let window = width * c_in;
    for p in 0..positions {
        let gp = &g[p * c_out..(p + 1) * c_out];
        if gp.iter().all(|&v| v == 0.0) {
            continue;
        }
        let dxs = &mut dx[p * c_in..p * c_in + window];
        for (j, d) in dxs.iter_mut().enumerate() {
            *d += dot(&k[j * c_out..(j + 1) * c_out], gp);
        }
    }
}

/// Geometry of a valid 2D convolution: image H×W, kernel kh×kw×F,
/// output (H−kh+1)×(W−kw+1)×F.
#[derive(Clone, Copy, Debug)]
pub struct Conv2dDims {
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub filters: usize,
}

impl Conv2dDims {
    pub fn new(image: &[usize], kernel: &[usize]) -> Self {
        Conv2dDims {
            height: image[0],
            width: image[1],
            kh: kernel[0],
            kw: kernel[1],
            filters: kernel[2],
        }
    }

    pub fn out_rows(&self) -> usize {
        self.height + 1 - self.kh
    }

    pub fn out_cols(&self) -> usize {
        self.width + 1 - self.kw
    }
}

pub fn conv2d(x: &[f64], k: &[f64], out: &mut [f64], d: &Conv2dDims) {
    let f = d.filters;
    let cols = d.out_cols();
    for p in 0..d.out_rows() {
        for q in 0..cols {
            let o = &mut out[(p * cols + q) * f..(p * cols + q + 1) * f];
            for r in 0..d.kh {
                let row = &x[(p + r) * d.width + q..(p + r) * d.width + q + d.kw];
                for (c, &xv) in row.iter().enumerate() {
                    if xv != 0.0 {
                        let kk = (r * d.kw + c) * f;
                        axpy(xv, &k[kk..kk + f], o);
                    }
                }
            }
        }
    }
}

pub fn conv2d_grad_kernel(x: &[f64], g: &[f64], dk: &mut [f64], d: &Conv2dDims) {
    let f = d.filters;
    let cols = d.out_cols();
    for p in 0..d.out_rows() {
        for q in 0..cols {
            let gpq = &g[(p * cols + q) * f..(p * cols + q + 1) * f];
            if gpq.iter().all(|&v| v == 0.0) {
                continue;
            }
            for r in 0..d.kh {
                let row = &x[(p + r) * d.width + q..(p + r) * d.width + q + d.kw];
                for (c, &xv) in row.iter().enumerate() {
                    if xv != 0.0 {
                        let kk = (r * d.kw + c) * f;
                        axpy(xv, gpq, &mut dk[kk..kk + f]);
                    }
                }
            }
        }
    }
}

pub fn conv2d_grad_input(k: &[f64], g: &[f64], dx: &mut [f64], d: &Conv2dDims) {
    let f = d.filters;
    let cols = d.out_cols();
    for p in 0..d.out_rows() {
        for q in 0..cols {
            let gpq = &g[(p * cols + q) * f..(p * cols + q + 1) * f];
            if gpq.iter().all(|&v| v == 0.0) {
                continue;
            }
            for r in 0..d.kh {
                for c in 0..d.kw {
                    let kk = (r * d.kw + c) * f;
                    dx[(p + r) * d.width + q + c] += dot(&k[kk..kk + f], gpq);
                }
            }
        }
    }
}
