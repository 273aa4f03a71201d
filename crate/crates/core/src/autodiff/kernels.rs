//! Raw numeric kernels shared by the tape's forward and backward rules.

/// `c[m,n] = beta c + a[m,k] b[k,n]`, with either operand read transposed through
/// its strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides address exactly the m*k, k*n and m*n row-major buffers,
    // whose lengths the callers guarantee.
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

/// `a[m,k] * b[k,n]`, row-major.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert!(a.len() == m * k && b.len() == k * n);
    let mut out = vec![0.0; m * n];
    gemm(
        m,
        k,
        n,
        a,
        (k as isize, 1),
        b,
        (n as isize, 1),
        0.0,
        &mut out,
    );
    out
}

/// `acc[k,n] += a[m,k]^T * g[m,n]`.
pub fn matmul_at_b_acc(acc: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    assert!(a.len() == m * k && g.len() == m * n && acc.len() == k * n);
    gemm(k, m, n, a, (1, k as isize), g, (n as isize, 1), 1.0, acc);
}

/// `acc[m,k] += g[m,n] * b[k,n]^T`.
pub fn matmul_a_bt_acc(acc: &mut [f64], g: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    assert!(g.len() == m * n && b.len() == k * n && acc.len() == m * k);
    gemm(m, n, k, g, (n as isize, 1), b, (1, n as isize), 1.0, acc);
}

/// Output length of a strided, zero-padded 1D convolution.
pub fn conv1d_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Geometry of a batched time-major 1D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dDims {
    pub batch: usize,
    pub len: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_len: usize,
}

/// Input windows as rows: `[B*T', K*Ci]`, zero where the window hangs over the padding.
fn im2col(x: &[f64], d: &Conv1dDims) -> Vec<f64> {
    let width = d.kernel * d.c_in;
    let mut cols = vec![0.0; d.batch * d.out_len * width];
    for b in 0..d.batch {
        for to in 0..d.out_len {
            let row = &mut cols[(b * d.out_len + to) * width..(b * d.out_len + to + 1) * width];
            for k in 0..d.kernel {
                let ti = (to * d.stride + k) as isize - d.pad as isize;
                if ti < 0 || ti as usize >= d.len {
                    continue;
                }
                let src = (b * d.len + ti as usize) * d.c_in;
                row[k * d.c_in..(k + 1) * d.c_in].copy_from_slice(&x[src..src + d.c_in]);
            }
        }
    }
    cols
}

/// `x[B,T,Ci] (*) w[K,Ci,Co] -> [B,T',Co]`.
pub fn conv1d(x: &[f64], w: &[f64], d: &Conv1dDims) -> Vec<f64> {
    let cols = im2col(x, d);
    matmul(&cols, w, d.batch * d.out_len, d.kernel * d.c_in, d.c_out)
}

/// Accumulates input and weight gradients of [`conv1d`].
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    d: &Conv1dDims,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
) {
    let rows = d.batch * d.out_len;
    let width = d.kernel * d.c_in;
    if let Some(gw) = gw {
        let cols = im2col(x, d);
        matmul_at_b_acc(gw, &cols, g, rows, width, d.c_out);
    }
    if let Some(gx) = gx {
        let mut gcols = vec![0.0; rows * width];
        matmul_a_bt_acc(&mut gcols, g, w, rows, width, d.c_out);
        for b in 0..d.batch {
            for to in 0..d.out_len {
                let row = &gcols[(b * d.out_len + to) * width..(b * d.out_len + to + 1) * width];
                for k in 0..d.kernel {
                    let ti = (to * d.stride + k) as isize - d.pad as isize;
                    if ti < 0 || ti as usize >= d.len {
                        continue;
                    }
                    let dst = (b * d.len + ti as usize) * d.c_in;
                    for (o, &v) in gx[dst..dst + d.c_in]
                        .iter_mut()
                        .zip(&row[k * d.c_in..(k + 1) * d.c_in])
                    {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Row-wise softmax over the last axis of width `cols`.
pub fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, out_row) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &v) in out_row.iter_mut().zip(row) {
            *o = (v - max).exp();
            total += *o;
        }
        for o in out_row.iter_mut() {
            *o /= total;
        }
    }
    out
}

/// Coefficients of the axis-angle exponential `R = I + a K + b K^2`, where `K` is the
/// skew matrix of the (unnormalized) rotation vector, together with `a'/θ` and `b'/θ`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-2 {
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            s / theta,
            (1.0 - c) / t2,
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    }
}

fn skew(v: [f64; 3]) -> [f64; 9] {
    [0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0]
}

fn mat3_mul(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * b[k * 3 + j]).sum();
        }
    }
    out
}

/// Axis-angle vector to a row-major 3x3 rotation matrix.
pub fn rodrigues(v: [f64; 3]) -> [f64; 9] {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (a, b, _, _) = rodrigues_coefficients(theta);
    let k = skew(v);
    let k2 = mat3_mul(&k, &k);
    let mut r = [0.0; 9];
    for i in 0..9 {
        r[i] = a * k[i] + b * k2[i];
    }
    r[0] += 1.0;
    r[4] += 1.0;
    r[8] += 1.0;
    r
}

/// Vector-Jacobian product of [`rodrigues`]: returns `sum_jk g_jk dR_jk/dv_i`.
pub fn rodrigues_vjp(v: [f64; 3], g: &[f64]) -> [f64; 3] {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (a, b, da, db) = rodrigues_coefficients(theta);
    let k = skew(v);
    let k2 = mat3_mul(&k, &k);
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ei = skew(e);
        let eik = mat3_mul(&ei, &k);
        let kei = mat3_mul(&k, &ei);
        let mut acc = 0.0;
        for j in 0..9 {
            let d = da * v[i] * k[j] + a * ei[j] + db * v[i] * k2[j] + b * (eik[j] + kei[j]);
            acc += g[j] * d;
        }
        *slot = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], d: &Conv1dDims) -> Vec<f64> {
        let mut out = vec![0.0; d.batch * d.out_len * d.c_out];
        for b in 0..d.batch {
            for to in 0..d.out_len {
                for co in 0..d.c_out {
                    let mut acc = 0.0;
                    for k in 0..d.kernel {
                        let ti = (to * d.stride + k) as isize - d.pad as isize;
                        if ti < 0 || ti as usize >= d.len {
                            continue;
                        }
                        for ci in 0..d.c_in {
                            acc += x[(b * d.len + ti as usize) * d.c_in + ci]
                                * w[(k * d.c_in + ci) * d.c_out + co];
                        }
                    }
                    out[(b * d.out_len + to) * d.c_out + co] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64) * f).sin()).collect()
    }

    #[test]
    fn matmul_family_matches_index_loops() {
        let (m, k, n) = (5, 3, 4);
        let a = ramp(m * k, 0.7);
        let b = ramp(k * n, 1.3);
        let g = ramp(m * n, 0.4);
        let c = matmul(&a, &b, m, k, n);
        let mut gb = vec![1.0; k * n];
        let mut ga = vec![1.0; m * k];
        matmul_at_b_acc(&mut gb, &a, &g, m, k, n);
        matmul_a_bt_acc(&mut ga, &g, &b, m, k, n);
        for i in 0..m {
            for j in 0..n {
                let e: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                assert!((c[i * n + j] - e).abs() < 1e-14);
            }
        }
        for t in 0..k {
            for j in 0..n {
                let e: f64 = 1.0 + (0..m).map(|i| a[i * k + t] * g[i * n + j]).sum::<f64>();
                assert!((gb[t * n + j] - e).abs() < 1e-14);
            }
        }
        for i in 0..m {
            for t in 0..k {
                let e: f64 = 1.0 + (0..n).map(|j| g[i * n + j] * b[t * n + j]).sum::<f64>();
                assert!((ga[i * k + t] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        for (stride, pad, kernel) in [(1, 4, 9), (2, 4, 9), (1, 0, 1), (3, 1, 3)] {
            let len = 11;
            let out_len = conv1d_out_len(len, kernel, stride, pad).unwrap();
            let d = Conv1dDims {
                batch: 3,
                len,
                c_in: 2,
                c_out: 4,
                kernel,
                stride,
                pad,
                out_len,
            };
            let x = ramp(d.batch * len * d.c_in, 0.9);
            let w = ramp(kernel * d.c_in * d.c_out, 0.37);
            let fast = conv1d(&x, &w, &d);
            for (a, b) in fast.iter().zip(naive_conv(&x, &w, &d)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn conv_output_lengths() {
        assert_eq!(conv1d_out_len(90, 9, 1, 4), Some(90));
        assert_eq!(conv1d_out_len(90, 9, 2, 4), Some(45));
        assert_eq!(conv1d_out_len(45, 9, 2, 4), Some(23));
        assert_eq!(conv1d_out_len(3, 9, 1, 0), None);
    }

    #[test]
    fn rodrigues_series_and_closed_form_agree_at_switch() {
        let below = rodrigues_coefficients(1e-2 - 1e-12);
        let above = rodrigues_coefficients(1e-2 + 1e-12);
        assert!((below.0 - above.0).abs() < 1e-12);
        assert!((below.1 - above.1).abs() < 1e-12);
        assert!((below.2 - above.2).abs() < 1e-9);
        assert!((below.3 - above.3).abs() < 1e-8);
    }
}
