//! Direct-summation convolution loops. Two deliberately separate code paths
//! exist: a standard path for plain convs and a grouped path for group /
//! learned-group / depthwise convs, so each can serve as a check on the
//! other. "Same" padding is realized by materializing a zero-padded input
//! and running the full kernel window everywhere; border multiplies against
//! zeros are executed (and counted), which keeps the instrumented MAC count
//! equal to `h * w * weight_elements`.

use super::macs;
use super::tensor::Tensor4;

/// Standard convolution, stride 1, "same" padding, square kernel `k` (1 or 3).
/// Weights are `[c_out][c_in][k][k]`, row-major. Kept as a loop of its own
/// rather than delegating to the grouped path, so the two can be compared
/// against each other in tests.
pub fn conv2d(x: &Tensor4, weights: &[f64], c_out: usize, k: usize) -> Tensor4 {
    let (n, c_in, h, w) = x.dims();
    assert!(k == 1 || k == 3, "kernel size {k} unsupported");
    assert_eq!(weights.len(), c_out * c_in * k * k, "weight shape mismatch");

    let pad = k / 2;
    let xp = x.pad_spatial(pad);
    let wp = w + 2 * pad;
    let mut out = Tensor4::zeros((n, c_out, h, w));
    let mut mac_count = 0u64;

    for ni in 0..n {
        for oc in 0..c_out {
            let out_plane = out.plane_mut(ni, oc);
            for ic in 0..c_in {
                let in_plane = xp.plane(ni, ic);
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = weights[((oc * c_in + ic) * k + kh) * k + kw];
                        for oh in 0..h {
                            let row = &in_plane[(oh + kh) * wp + kw..(oh + kh) * wp + kw + w];
                            let orow = &mut out_plane[oh * w..oh * w + w];
                            for ow in 0..w {
                                orow[ow] += wv * row[ow];
                            }
                            mac_count += w as u64;
                        }
                    }
                }
            }
        }
    }
    macs::record(mac_count);
    out
}

/// Grouped convolution; `groups` must divide both channel counts. Weights are
/// `[c_out][c_in / groups][k][k]`. The standard path is the `groups == 1`
/// special case but callers treat the two as distinct routes.
pub fn conv2d_grouped(x: &Tensor4, weights: &[f64], c_out: usize, k: usize, groups: usize) -> Tensor4 {
    let (n, c_in, h, w) = x.dims();
    assert!(k == 1 || k == 3, "kernel size {k} unsupported");
    assert_eq!(c_in % groups, 0, "c_in {c_in} not divisible by {groups} groups");
    assert_eq!(c_out % groups, 0, "c_out {c_out} not divisible by {groups} groups");
    let in_pg = c_in / groups;
    let out_pg = c_out / groups;
    assert_eq!(weights.len(), c_out * in_pg * k * k, "weight shape mismatch");

    let pad = k / 2;
    let xp = x.pad_spatial(pad);
    let wp = w + 2 * pad;
    let mut out = Tensor4::zeros((n, c_out, h, w));
    let mut mac_count = 0u64;

    for ni in 0..n {
        for oc in 0..c_out {
            let g = oc / out_pg;
            let out_plane = out.plane_mut(ni, oc);
            for icg in 0..in_pg {
                let ic = g * in_pg + icg;
                let in_plane = xp.plane(ni, ic);
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = weights[((oc * in_pg + icg) * k + kh) * k + kw];
                        for oh in 0..h {
                            let row = &in_plane[(oh + kh) * wp + kw..(oh + kh) * wp + kw + w];
                            let orow = &mut out_plane[oh * w..oh * w + w];
                            for ow in 0..w {
                                orow[ow] += wv * row[ow];
                            }
                            mac_count += w as u64;
                        }
                    }
                }
            }
        }
    }
    macs::record(mac_count);
    out
}

/// Gradients of [`conv2d_grouped`] with respect to the input and the weights.
pub fn conv2d_grouped_backward(
    x: &Tensor4,
    weights: &[f64],
    grad_out: &Tensor4,
    c_out: usize,
    k: usize,
    groups: usize,
) -> (Tensor4, Vec<f64>) {
    let (n, c_in, h, w) = x.dims();
    let in_pg = c_in / groups;
    let out_pg = c_out / groups;
    let pad = k / 2;
    let xp = x.pad_spatial(pad);
    let wp = w + 2 * pad;

    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_xp = Tensor4::zeros(xp.dims());

    for ni in 0..n {
        for oc in 0..c_out {
            let g = oc / out_pg;
            let go_plane = grad_out.plane(ni, oc);
            for icg in 0..in_pg {
                let ic = g * in_pg + icg;
                let in_plane = xp.plane(ni, ic);
                let gx_plane = grad_xp.plane_mut(ni, ic);
                for kh in 0..k {
                    for kw in 0..k {
                        let wi = ((oc * in_pg + icg) * k + kh) * k + kw;
                        let wv = weights[wi];
                        let mut gw = 0.0;
                        for oh in 0..h {
                            let base = (oh + kh) * wp + kw;
                            let go_row = &go_plane[oh * w..oh * w + w];
                            let in_row = &in_plane[base..base + w];
                            let gx_row = &mut gx_plane[base..base + w];
                            for ow in 0..w {
                                gw += go_row[ow] * in_row[ow];
                                gx_row[ow] += wv * go_row[ow];
                            }
                        }
                        grad_w[wi] += gw;
                    }
                }
            }
        }
    }
    (grad_xp.crop_spatial(pad), grad_w)
}

/// The channel shuffle permutation: with `cpg = channels / groups`, the
/// channel at position `i * groups + j` moves to position `j * cpg + i` for
/// `i` in `[0, cpg)`, `j` in `[0, groups)`. A pure permutation of planes.
pub fn channel_shuffle(x: &Tensor4, groups: usize) -> Result<Tensor4, super::KernelError> {
    let (n, c, _, _) = x.dims();
    if groups == 0 || c % groups != 0 {
        return Err(super::KernelError::ShuffleDivisibility { channels: c, groups });
    }
    let cpg = c / groups;
    let mut out = Tensor4::zeros(x.dims());
    for ni in 0..n {
        for i in 0..cpg {
            for j in 0..groups {
                let src = i * groups + j;
                let dst = j * cpg + i;
                out.plane_mut(ni, dst).copy_from_slice(x.plane(ni, src));
            }
        }
    }
    Ok(out)
}

/// Inverse of [`channel_shuffle`] with the same group count (equivalently, a
/// shuffle with the swapped factor `channels / groups`).
pub fn channel_unshuffle(x: &Tensor4, groups: usize) -> Result<Tensor4, super::KernelError> {
    let c = x.channels();
    if groups == 0 || c % groups != 0 {
        return Err(super::KernelError::ShuffleDivisibility { channels: c, groups });
    }
    channel_shuffle(x, c / groups)
}

/// Gathers input channels: output channel `i` is input channel `gather[i]`.
/// Indices may repeat (the learned-group selection can share channels).
pub fn gather_channels(x: &Tensor4, gather: &[usize]) -> Tensor4 {
    let (n, _, h, w) = x.dims();
    let mut out = Tensor4::zeros((n, gather.len(), h, w));
    for ni in 0..n {
        for (dst, &src) in gather.iter().enumerate() {
            out.plane_mut(ni, dst).copy_from_slice(x.plane(ni, src));
        }
    }
    out
}

/// Adjoint of [`gather_channels`]: scatter-adds gradients back onto the
/// gathered source channels.
pub fn scatter_add_channels(grad: &Tensor4, gather: &[usize], c_in: usize) -> Tensor4 {
    let (n, _, h, w) = grad.dims();
    let mut out = Tensor4::zeros((n, c_in, h, w));
    for ni in 0..n {
        for (src_pos, &dst) in gather.iter().enumerate() {
            let gplane = grad.plane(ni, src_pos).to_vec();
            let oplane = out.plane_mut(ni, dst);
            for (o, gv) in oplane.iter_mut().zip(gplane) {
                *o += gv;
            }
        }
    }
    out
}
