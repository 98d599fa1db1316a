//! Batched layer kernels on flat row-major buffers.

/// Operand layout for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    N,
    T,
}

/// `c = a·b + beta·c` where `a` is m×k and `b` is k×n after applying `op`.
/// Untransposed storage of `a` is m×k (or k×m when `Op::T`), likewise for `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], op_a: Op, b: &[f64], op_b: Op, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.in_channels * self.kernel
    }

    fn cols(&self) -> usize {
        self.batch * self.out_len
    }

    fn source(&self, o: usize, kk: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.in_len).then_some(pos as usize)
    }
}

/// Unrolls the input into a `(C_in·k) × (B·L_out)` patch matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let ncols = g.cols();
    let mut cols = vec![0.0; g.rows() * ncols];
    for ci in 0..g.in_channels {
        for kk in 0..g.kernel {
            let row = &mut cols[(ci * g.kernel + kk) * ncols..(ci * g.kernel + kk + 1) * ncols];
            for b in 0..g.batch {
                let xin = &x[(b * g.in_channels + ci) * g.in_len..(b * g.in_channels + ci + 1) * g.in_len];
                for o in 0..g.out_len {
                    if let Some(p) = g.source(o, kk) {
                        row[b * g.out_len + o] = xin[p];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let ncols = g.cols();
    let mut dx = vec![0.0; g.batch * g.in_channels * g.in_len];
    for ci in 0..g.in_channels {
        for kk in 0..g.kernel {
            let row = &dcols[(ci * g.kernel + kk) * ncols..(ci * g.kernel + kk + 1) * ncols];
            for b in 0..g.batch {
                let base = (b * g.in_channels + ci) * g.in_len;
                for o in 0..g.out_len {
                    if let Some(p) = g.source(o, kk) {
                        dx[base + p] += row[b * g.out_len + o];
                    }
                }
            }
        }
    }
    dx
}

/// Returns the output `[B, C_out, L_out]` and the patch matrix for backward.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(x, g);
    let ncols = g.cols();
    let mut yt = vec![0.0; g.out_channels * ncols];
    gemm(g.out_channels, g.rows(), ncols, w, Op::N, &cols, Op::N, 0.0, &mut yt);
    let mut y = vec![0.0; g.batch * g.out_channels * g.out_len];
    for co in 0..g.out_channels {
        for b in 0..g.batch {
            let src = &yt[co * ncols + b * g.out_len..co * ncols + (b + 1) * g.out_len];
            let dst = &mut y[(b * g.out_channels + co) * g.out_len..(b * g.out_channels + co + 1) * g.out_len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias[co];
            }
        }
    }
    (y, cols)
}

/// Accumulates weight and bias gradients; returns the input gradient when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    dy: &[f64],
    cols: &[f64],
    w: &[f64],
    g: &ConvGeom,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
    need_dx: bool,
) -> Option<Vec<f64>> {
    let ncols = g.cols();
    let mut dyt = vec![0.0; g.out_channels * ncols];
    for co in 0..g.out_channels {
        for b in 0..g.batch {
            let src = &dy[(b * g.out_channels + co) * g.out_len..(b * g.out_channels + co + 1) * g.out_len];
            dyt[co * ncols + b * g.out_len..co * ncols + (b + 1) * g.out_len].copy_from_slice(src);
        }
    }
    if let Some(dw) = dw {
        gemm(g.out_channels, ncols, g.rows(), &dyt, Op::N, cols, Op::T, 1.0, dw);
    }
    if let Some(db) = db {
        for (co, acc) in db.iter_mut().enumerate() {
            *acc += dyt[co * ncols..(co + 1) * ncols].iter().sum::<f64>();
        }
    }
    need_dx.then(|| {
        let mut dcols = vec![0.0; g.rows() * ncols];
        gemm(g.rows(), g.out_channels, ncols, w, Op::T, &dyt, Op::N, 0.0, &mut dcols);
        col2im(&dcols, g)
    })
}

/// `y = x·Wᵀ + b` for `x` of shape `[B, in]` and `W` of shape `[out, in]`.
pub(crate) fn linear_forward(x: &[f64], w: &[f64], bias: &[f64], batch: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(batch, n_in, n_out, x, Op::N, w, Op::T, 1.0, &mut y);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
    need_dx: bool,
) -> Option<Vec<f64>> {
    if let Some(dw) = dw {
        gemm(n_out, batch, n_in, dy, Op::T, x, Op::N, 1.0, dw);
    }
    if let Some(db) = db {
        for row in dy.chunks_exact(n_out) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; batch * n_in];
        gemm(batch, n_out, n_in, dy, Op::N, w, Op::N, 0.0, &mut dx);
        dx
    })
}

/// Max pooling over each row of length `in_len`. Ties resolve to the first maximum.
pub(crate) fn maxpool_forward(x: &[f64], rows: usize, in_len: usize, kernel: usize, stride: usize) -> (Vec<f64>, Vec<u32>) {
    let out_len = (in_len - kernel) / stride + 1;
    let mut y = Vec::with_capacity(rows * out_len);
    let mut arg = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let row = &x[r * in_len..(r + 1) * in_len];
        for o in 0..out_len {
            let start = o * stride;
            let mut best = start;
            for p in start + 1..start + kernel {
                if row[p] > row[best] {
                    best = p;
                }
            }
            y.push(row[best]);
            arg.push(best as u32);
        }
    }
    (y, arg)
}

pub(crate) fn maxpool_backward(dy: &[f64], arg: &[u32], rows: usize, in_len: usize) -> Vec<f64> {
    let out_len = dy.len() / rows.max(1);
    let mut dx = vec![0.0; rows * in_len];
    for r in 0..rows {
        for o in 0..out_len {
            dx[r * in_len + arg[r * out_len + o] as usize] += dy[r * out_len + o];
        }
    }
    dx
}

/// Bin `i` of `out_len` covers `[floor(i·L/o), ceil((i+1)·L/o))`.
pub(crate) fn adaptive_bin(i: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = i * in_len / out_len;
    let end = ((i + 1) * in_len).div_ceil(out_len);
    (start, end)
}

pub(crate) fn adaptive_avg_forward(x: &[f64], rows: usize, in_len: usize, out_len: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let row = &x[r * in_len..(r + 1) * in_len];
        for i in 0..out_len {
            let (s, e) = adaptive_bin(i, in_len, out_len);
            y.push(row[s..e].iter().sum::<f64>() / (e - s) as f64);
        }
    }
    y
}

pub(crate) fn adaptive_avg_backward(dy: &[f64], rows: usize, in_len: usize, out_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; rows * in_len];
    for r in 0..rows {
        for i in 0..out_len {
            let (s, e) = adaptive_bin(i, in_len, out_len);
            let share = dy[r * out_len + i] / (e - s) as f64;
            for v in &mut dx[r * in_len + s..r * in_len + e] {
                *v += share;
            }
        }
    }
    dx
}
