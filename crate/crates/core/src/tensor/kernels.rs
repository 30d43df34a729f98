//! Raw numeric kernels behind the graph ops. All loops are plain f64 with
//! deterministic iteration order; no kernel allocates beyond its output.

/// y = op(A, B) for 2-D matrices with optional transposes.
/// `a` is (ar, ac) row-major; effective A is aᵀ when `ta`.
pub fn matmul(
    a: &[f64],
    (ar, ac): (usize, usize),
    ta: bool,
    b: &[f64],
    (br, bc): (usize, usize),
    tb: bool,
    out: &mut [f64],
) {
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, kb);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        for p in 0..k {
            let av = if ta { a[p * ac + i] } else { a[i * ac + p] };
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            if tb {
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += av * b[j * bc + p];
                }
            } else {
                let brow = &b[p * bc..p * bc + n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// Output length of a valid (no padding) strided 1-D convolution.
pub fn conv1d_out_len(len: usize, k: usize, stride: usize) -> usize {
    (len - k) / stride + 1
}

/// y[n,co,j] = Σ_{ci,p} x[n,ci,j*s+p] k[co,ci,p]
pub fn conv1d(
    x: &[f64],
    (n, ci, l): (usize, usize, usize),
    k: &[f64],
    (co, _ci, kl): (usize, usize, usize),
    stride: usize,
    out: &mut [f64],
) {
    let lo = conv1d_out_len(l, kl, stride);
    debug_assert_eq!(out.len(), n * co * lo);
    out.fill(0.0);
    for b in 0..n {
        for oc in 0..co {
            for icc in 0..ci {
                let krow = &k[(oc * ci + icc) * kl..(oc * ci + icc + 1) * kl];
                let xrow = &x[(b * ci + icc) * l..(b * ci + icc + 1) * l];
                let orow = &mut out[(b * co + oc) * lo..(b * co + oc + 1) * lo];
                for j in 0..lo {
                    let base = j * stride;
                    let mut acc = 0.0;
                    for (p, &kv) in krow.iter().enumerate() {
                        acc += xrow[base + p] * kv;
                    }
                    orow[j] += acc;
                }
            }
        }
    }
}

/// Adjoint of `conv1d` w.r.t. its input: scatters dy back through the kernel.
pub fn conv1d_back_input(
    dy: &[f64],
    (n, co, lo): (usize, usize, usize),
    k: &[f64],
    (_co, ci, kl): (usize, usize, usize),
    stride: usize,
    in_len: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), n * ci * in_len);
    out.fill(0.0);
    for b in 0..n {
        for oc in 0..co {
            let dyrow = &dy[(b * co + oc) * lo..(b * co + oc + 1) * lo];
            for icc in 0..ci {
                let krow = &k[(oc * ci + icc) * kl..(oc * ci + icc + 1) * kl];
                let orow = &mut out[(b * ci + icc) * in_len..(b * ci + icc + 1) * in_len];
                for (j, &dv) in dyrow.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let base = j * stride;
                    for (p, &kv) in krow.iter().enumerate() {
                        orow[base + p] += dv * kv;
                    }
                }
            }
        }
    }
}

/// Adjoint of `conv1d` w.r.t. its kernel.
pub fn conv1d_back_kernel(
    x: &[f64],
    (n, ci, l): (usize, usize, usize),
    dy: &[f64],
    (_n, co, lo): (usize, usize, usize),
    stride: usize,
    k_len: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), co * ci * k_len);
    out.fill(0.0);
    for b in 0..n {
        for oc in 0..co {
            let dyrow = &dy[(b * co + oc) * lo..(b * co + oc + 1) * lo];
            for icc in 0..ci {
                let xrow = &x[(b * ci + icc) * l..(b * ci + icc + 1) * l];
                let krow = &mut out[(oc * ci + icc) * k_len..(oc * ci + icc + 1) * k_len];
                for (j, &dv) in dyrow.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let base = j * stride;
                    for (p, kv) in krow.iter_mut().enumerate() {
                        *kv += xrow[base + p] * dv;
                    }
                }
            }
        }
    }
}

/// Output side of a stride-1 2-D convolution with symmetric zero padding.
pub fn conv2d_out_side(side: usize, k: usize, pad: usize) -> usize {
    side + 2 * pad + 1 - k
}

/// y[n,co,i,j] = Σ_{ci,a,b} x[n,ci,i+a-pad,j+b-pad] k[co,ci,a,b]
pub fn conv2d(
    x: &[f64],
    (n, ci, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (co, _ci, kh, kw): (usize, usize, usize, usize),
    pad: usize,
    out: &mut [f64],
) {
    let ho = conv2d_out_side(h, kh, pad);
    let wo = conv2d_out_side(w, kw, pad);
    debug_assert_eq!(out.len(), n * co * ho * wo);
    out.fill(0.0);
    let ipad = pad as isize;
    for b in 0..n {
        for oc in 0..co {
            for icc in 0..ci {
                let kbase = ((oc * ci) + icc) * kh * kw;
                let xbase = ((b * ci) + icc) * h * w;
                let obase = ((b * co) + oc) * ho * wo;
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for a in 0..kh {
                            let xi = i as isize + a as isize - ipad;
                            if xi < 0 || xi >= h as isize {
                                continue;
                            }
                            for bb in 0..kw {
                                let xj = j as isize + bb as isize - ipad;
                                if xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                acc += x[xbase + xi as usize * w + xj as usize]
                                    * k[kbase + a * kw + bb];
                            }
                        }
                        out[obase + i * wo + j] += acc;
                    }
                }
            }
        }
    }
}

/// Adjoint of `conv2d` w.r.t. its input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_back_input(
    dy: &[f64],
    (n, co, ho, wo): (usize, usize, usize, usize),
    k: &[f64],
    (_co, ci, kh, kw): (usize, usize, usize, usize),
    pad: usize,
    (h, w): (usize, usize),
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), n * ci * h * w);
    out.fill(0.0);
    let ipad = pad as isize;
    for b in 0..n {
        for oc in 0..co {
            let dybase = ((b * co) + oc) * ho * wo;
            for icc in 0..ci {
                let kbase = ((oc * ci) + icc) * kh * kw;
                let obase = ((b * ci) + icc) * h * w;
                for i in 0..ho {
                    for j in 0..wo {
                        let dv = dy[dybase + i * wo + j];
                        if dv == 0.0 {
                            continue;
                        }
                        for a in 0..kh {
                            let xi = i as isize + a as isize - ipad;
                            if xi < 0 || xi >= h as isize {
                                continue;
                            }
                            for bb in 0..kw {
                                let xj = j as isize + bb as isize - ipad;
                                if xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                out[obase + xi as usize * w + xj as usize] +=
                                    dv * k[kbase + a * kw + bb];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `conv2d` w.r.t. its kernel.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_back_kernel(
    x: &[f64],
    (n, ci, h, w): (usize, usize, usize, usize),
    dy: &[f64],
    (_n, co, ho, wo): (usize, usize, usize, usize),
    pad: usize,
    (kh, kw): (usize, usize),
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), co * ci * kh * kw);
    out.fill(0.0);
    let ipad = pad as isize;
    for b in 0..n {
        for oc in 0..co {
            let dybase = ((b * co) + oc) * ho * wo;
            for icc in 0..ci {
                let kbase = ((oc * ci) + icc) * kh * kw;
                let xbase = ((b * ci) + icc) * h * w;
                for i in 0..ho {
                    for j in 0..wo {
                        let dv = dy[dybase + i * wo + j];
                        if dv == 0.0 {
                            continue;
                        }
                        for a in 0..kh {
                            let xi = i as isize + a as isize - ipad;
                            if xi < 0 || xi >= h as isize {
                                continue;
                            }
                            for bb in 0..kw {
                                let xj = j as isize + bb as isize - ipad;
                                if xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                out[kbase + a * kw + bb] +=
                                    dv * x[xbase + xi as usize * w + xj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        let mut out = vec![0.0; 4];
        matmul(&a, (2, 2), false, &eye, (2, 2), false, &mut out);
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![5.0, 6.0, 7.0, 8.0];
        let mut out = vec![0.0; 4];
        // Aᵀ·B = [[1,3],[2,4]]·[[5,6],[7,8]] = [[26,30],[38,44]]
        matmul(&a, (2, 2), true, &b, (2, 2), false, &mut out);
        assert_eq!(out, vec![26.0, 30.0, 38.0, 44.0]);
        // A·Bᵀ = [[17,23],[39,53]]
        matmul(&a, (2, 2), false, &b, (2, 2), true, &mut out);
        assert_eq!(out, vec![17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn conv1d_lengths() {
        assert_eq!(conv1d_out_len(112, 1, 4), 28);
        assert_eq!(conv1d_out_len(5, 3, 1), 3);
    }

    #[test]
    fn conv1d_hand_value() {
        // x = [1,2,3,4], k = [1,-1]: valid conv -> [1*1+2*(-1), ...] = [-1,-1,-1]
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let k = vec![1.0, -1.0];
        let mut out = vec![0.0; 3];
        conv1d(&x, (1, 1, 4), &k, (1, 1, 2), 1, &mut out);
        assert_eq!(out, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn conv2d_sides() {
        assert_eq!(conv2d_out_side(28, 5, 0), 24);
        assert_eq!(conv2d_out_side(8, 3, 1), 8);
        assert_eq!(conv2d_out_side(2, 2, 0), 1);
    }

    #[test]
    fn conv2d_padded_sum_kernel() {
        // 2x2 ones input, 3x3 ones kernel, pad 1: each output = count of in-bounds taps.
        let x = vec![1.0; 4];
        let k = vec![1.0; 9];
        let mut out = vec![0.0; 4];
        conv2d(&x, (1, 1, 2, 2), &k, (1, 1, 3, 3), 1, &mut out);
        assert_eq!(out, vec![4.0, 4.0, 4.0, 4.0]);
    }
}
