//! Dense tensor primitives for the segmentation net, in f64 throughout so
//! gradients can be checked against finite differences tightly.

use ndarray::{Array2, ArrayView2};

/// Channel-major 2D feature map: `data[(c * h + y) * w + x]`.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Tensor {
        Tensor { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(data.len(), c * h * w);
        Tensor { c, h, w, data }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

/// Unfolds 3x3 neighbourhoods (zero-padded) into a (c*9) x (h*w) matrix.
fn im2col3(x: &Tensor) -> Array2<f64> {
    let (c, h, w) = (x.c, x.h, x.w);
    let mut cols = Array2::<f64>::zeros((c * 9, h * w));
    for ci in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ci * 9 + ky * 3 + kx;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        cols[[row, y * w + xx]] = x.at(ci, sy as usize, sx as usize);
                    }
                }
            }
        }
    }
    cols
}

/// Scatters column gradients back onto the input layout (adjoint of
/// [`im2col3`]).
fn col2im3(dcols: &Array2<f64>, c: usize, h: usize, w: usize) -> Tensor {
    let mut dx = Tensor::zeros(c, h, w);
    for ci in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ci * 9 + ky * 3 + kx;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        dx.data[(ci * h + sy as usize) * w + sx as usize] +=
                            dcols[[row, y * w + xx]];
                    }
                }
            }
        }
    }
    dx
}

/// 3x3 same-padding convolution. `weights` is row-major (out_c, in_c*9).
pub fn conv3(x: &Tensor, weights: &[f64], bias: &[f64], out_c: usize) -> Tensor {
    let cols = im2col3(x);
    let w = ArrayView2::from_shape((out_c, x.c * 9), weights).expect("conv3 weight shape");
    let mut out = w.dot(&cols);
    for (mut row, &b) in out.rows_mut().into_iter().zip(bias) {
        row += b;
    }
    Tensor::from_vec(out_c, x.h, x.w, out.into_raw_vec_and_offset().0)
}

/// Gradients of [`conv3`]: returns (dx, dweights, dbias).
pub fn conv3_backward(
    x: &Tensor,
    weights: &[f64],
    out_c: usize,
    dout: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let cols = im2col3(x);
    let dout_m =
        ArrayView2::from_shape((out_c, x.h * x.w), &dout.data).expect("conv3 dout shape");
    let dw = dout_m.dot(&cols.t());
    let w = ArrayView2::from_shape((out_c, x.c * 9), weights).expect("conv3 weight shape");
    let dcols = w.t().dot(&dout_m);
    let dx = col2im3(&dcols, x.c, x.h, x.w);
    let db: Vec<f64> = (0..out_c)
        .map(|oc| dout.data[oc * x.h * x.w..(oc + 1) * x.h * x.w].iter().sum())
        .collect();
    (dx, dw.into_raw_vec_and_offset().0, db)
}

/// 1x1 convolution (per-pixel linear map).
pub fn conv1(x: &Tensor, weights: &[f64], bias: &[f64], out_c: usize) -> Tensor {
    let xm = ArrayView2::from_shape((x.c, x.h * x.w), &x.data).expect("conv1 input shape");
    let w = ArrayView2::from_shape((out_c, x.c), weights).expect("conv1 weight shape");
    let mut out = w.dot(&xm);
    for (mut row, &b) in out.rows_mut().into_iter().zip(bias) {
        row += b;
    }
    Tensor::from_vec(out_c, x.h, x.w, out.into_raw_vec_and_offset().0)
}

pub fn conv1_backward(
    x: &Tensor,
    weights: &[f64],
    out_c: usize,
    dout: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let xm = ArrayView2::from_shape((x.c, x.h * x.w), &x.data).expect("conv1 input shape");
    let dout_m =
        ArrayView2::from_shape((out_c, x.h * x.w), &dout.data).expect("conv1 dout shape");
    let dw = dout_m.dot(&xm.t());
    let w = ArrayView2::from_shape((out_c, x.c), weights).expect("conv1 weight shape");
    let dx = w.t().dot(&dout_m);
    let db: Vec<f64> = (0..out_c)
        .map(|oc| dout.data[oc * x.h * x.w..(oc + 1) * x.h * x.w].iter().sum())
        .collect();
    (
        Tensor::from_vec(x.c, x.h, x.w, dx.into_raw_vec_and_offset().0),
        dw.into_raw_vec_and_offset().0,
        db,
    )
}

/// In-place rectifier.
pub fn relu(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward through the rectifier given its output (zero output blocks the
/// gradient, so relu'(0) = 0).
pub fn relu_backward(out: &Tensor, dout: &mut Tensor) {
    for (d, &o) in dout.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
}

/// 2x2 max pooling with stride 2; also returns the flat input index of each
/// maximum for the backward pass (lowest index wins ties).
pub fn maxpool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (x.c, x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(c, h, w);
    let mut argmax = vec![0usize; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = (ci * x.h + 2 * y + dy) * x.w + 2 * xx + dx;
                        if x.data[i] > best {
                            best = x.data[i];
                            best_i = i;
                        }
                    }
                }
                let o = (ci * h + y) * w + xx;
                out.data[o] = best;
                argmax[o] = best_i;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward(
    argmax: &[usize],
    dout: &Tensor,
    in_h: usize,
    in_w: usize,
) -> Tensor {
    let mut dx = Tensor::zeros(dout.c, in_h, in_w);
    for (o, &i) in argmax.iter().enumerate() {
        dx.data[i] += dout.data[o];
    }
    dx
}

/// 2x2 stride-2 transposed convolution (learned 2x upsampling). `weights`
/// is laid out (in_c, out_c, 2, 2).
pub fn upconv2(x: &Tensor, weights: &[f64], bias: &[f64], out_c: usize) -> Tensor {
    let (ic, h, w) = (x.c, x.h, x.w);
    let mut out = Tensor::zeros(out_c, 2 * h, 2 * w);
    for oc in 0..out_c {
        let base = oc * 4 * h * w; // reused below via indexing math
        let _ = base;
        for y in 0..2 * h {
            for xx in 0..2 * w {
                out.data[(oc * 2 * h + y) * 2 * w + xx] = bias[oc];
            }
        }
    }
    for ci in 0..ic {
        for oc in 0..out_c {
            let wbase = (ci * out_c + oc) * 4;
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(ci, y, xx);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            out.data[(oc * 2 * h + 2 * y + dy) * 2 * w + 2 * xx + dx] +=
                                weights[wbase + dy * 2 + dx] * v;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn upconv2_backward(
    x: &Tensor,
    weights: &[f64],
    out_c: usize,
    dout: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (ic, h, w) = (x.c, x.h, x.w);
    let mut dx = Tensor::zeros(ic, h, w);
    let mut dw = vec![0.0f64; ic * out_c * 4];
    for ci in 0..ic {
        for oc in 0..out_c {
            let wbase = (ci * out_c + oc) * 4;
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(ci, y, xx);
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx_ in 0..2 {
                            let g = dout.data[(oc * 2 * h + 2 * y + dy) * 2 * w + 2 * xx + dx_];
                            acc += weights[wbase + dy * 2 + dx_] * g;
                            dw[wbase + dy * 2 + dx_] += v * g;
                        }
                    }
                    dx.data[(ci * h + y) * w + xx] += acc;
                }
            }
        }
    }
    let db: Vec<f64> = (0..out_c)
        .map(|oc| dout.data[oc * 4 * h * w..(oc + 1) * 4 * h * w].iter().sum())
        .collect();
    (dx, dw, db)
}

/// Stacks two tensors along the channel axis, `a` first.
pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity((a.c + b.c) * a.h * a.w);
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.c + b.c, a.h, a.w, data)
}

/// Splits a channel-concat gradient back into its two parts.
pub fn split(d: &Tensor, c_a: usize) -> (Tensor, Tensor) {
    let plane = d.h * d.w;
    let (da, db) = d.data.split_at(c_a * plane);
    (
        Tensor::from_vec(c_a, d.h, d.w, da.to_vec()),
        Tensor::from_vec(d.c - c_a, d.h, d.w, db.to_vec()),
    )
}

/// Per-pixel softmax over channels.
pub fn softmax(logits: &Tensor) -> Tensor {
    let (c, h, w) = (logits.c, logits.h, logits.w);
    let plane = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for p in 0..plane {
        let mut m = f64::NEG_INFINITY;
        for ci in 0..c {
            m = m.max(logits.data[ci * plane + p]);
        }
        let mut z = 0.0;
        for ci in 0..c {
            let e = (logits.data[ci * plane + p] - m).exp();
            out.data[ci * plane + p] = e;
            z += e;
        }
        for ci in 0..c {
            out.data[ci * plane + p] /= z;
        }
    }
    out
}

/// Backward through softmax: dL/dlogit_i = p_i (dL/dp_i - sum_j dL/dp_j p_j).
pub fn softmax_backward(probs: &Tensor, dprobs: &Tensor) -> Tensor {
    let (c, h, w) = (probs.c, probs.h, probs.w);
    let plane = h * w;
    let mut dlogits = Tensor::zeros(c, h, w);
    for p in 0..plane {
        let mut dot = 0.0;
        for ci in 0..c {
            dot += dprobs.data[ci * plane + p] * probs.data[ci * plane + p];
        }
        for ci in 0..c {
            dlogits.data[ci * plane + p] =
                probs.data[ci * plane + p] * (dprobs.data[ci * plane + p] - dot);
        }
    }
    dlogits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn conv3_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(2, 4, 5, randn(40, &mut rng));
        let weights = randn(3 * 2 * 9, &mut rng);
        let bias = randn(3, &mut rng);
        let out = conv3(&x, &weights, &bias, 3);
        for oc in 0..3 {
            for y in 0..4i64 {
                for xx in 0..5i64 {
                    let mut want = bias[oc];
                    for ci in 0..2 {
                        for ky in -1..=1i64 {
                            for kx in -1..=1i64 {
                                let (sy, sx) = (y + ky, xx + kx);
                                if sy < 0 || sy >= 4 || sx < 0 || sx >= 5 {
                                    continue;
                                }
                                want += weights
                                    [oc * 18 + ci * 9 + ((ky + 1) * 3 + kx + 1) as usize]
                                    * x.at(ci, sy as usize, sx as usize);
                            }
                        }
                    }
                    let got = out.at(oc, y as usize, xx as usize);
                    assert!((got - want).abs() < 1e-12, "({oc},{y},{xx}): {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_block_maxima() {
        let x = Tensor::from_vec(
            1,
            4,
            4,
            vec![1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12., 13., 14., 15., 16.],
        );
        let (out, arg) = maxpool2(&x);
        assert_eq!(out.data, vec![6., 8., 14., 16.]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
        let dout = Tensor::from_vec(1, 2, 2, vec![1., 2., 3., 4.]);
        let dx = maxpool2_backward(&arg, &dout, 4, 4);
        assert_eq!(dx.data[5], 1.0);
        assert_eq!(dx.data[7], 2.0);
        assert_eq!(dx.data[13], 3.0);
        assert_eq!(dx.data[15], 4.0);
        assert_eq!(dx.data.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn upconv_spreads_each_pixel_over_a_block() {
        // One input channel, one output channel, kernel [[1,2],[3,4]].
        let x = Tensor::from_vec(1, 1, 2, vec![10.0, 100.0]);
        let out = upconv2(&x, &[1.0, 2.0, 3.0, 4.0], &[0.5], 1);
        assert_eq!(out.h, 2);
        assert_eq!(out.w, 4);
        assert_eq!(out.data, vec![10.5, 20.5, 100.5, 200.5, 30.5, 40.5, 300.5, 400.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = Tensor::from_vec(5, 3, 3, randn(45, &mut rng));
        let p = softmax(&logits);
        for px in 0..9 {
            let s: f64 = (0..5).map(|c| p.data[c * 9 + px]).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for c in 0..5 {
                assert!(p.data[c * 9 + px] > 0.0 && p.data[c * 9 + px] < 1.0);
            }
        }
    }

    /// Finite-difference check of one op's input gradient.
    fn check_input_grad(
        f: impl Fn(&Tensor) -> Tensor,
        backward: impl Fn(&Tensor, &Tensor) -> Tensor,
        x: &Tensor,
    ) {
        let out = f(x);
        // Loss = weighted sum of outputs with fixed pseudo-random weights.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let lw: Vec<f64> = (0..out.data.len()).map(|_| rng.random::<f64>()).collect();
        let dout = Tensor::from_vec(out.c, out.h, out.w, lw.clone());
        let dx = backward(x, &dout);
        let h = 1e-5;
        for i in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[i] += h;
            let lp: f64 = f(&xp).data.iter().zip(&lw).map(|(a, b)| a * b).sum();
            let mut xm = x.clone();
            xm.data[i] -= h;
            let lm: f64 = f(&xm).data.iter().zip(&lw).map(|(a, b)| a * b).sum();
            let want = (lp - lm) / (2.0 * h);
            assert!(
                (dx.data[i] - want).abs() < 1e-6 * (1.0 + want.abs()),
                "param {i}: {} vs {want}",
                dx.data[i]
            );
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_vec(2, 4, 4, randn(32, &mut rng));
        let weights = randn(3 * 2 * 9, &mut rng);
        let bias = randn(3, &mut rng);
        check_input_grad(
            |x| conv3(x, &weights, &bias, 3),
            |x, dout| conv3_backward(x, &weights, 3, dout).0,
            &x,
        );
        let w1 = randn(3 * 2, &mut rng);
        check_input_grad(
            |x| conv1(x, &w1, &bias, 3),
            |x, dout| conv1_backward(x, &w1, 3, dout).0,
            &x,
        );
        let wu = randn(2 * 3 * 4, &mut rng);
        check_input_grad(
            |x| upconv2(x, &wu, &bias, 3),
            |x, dout| upconv2_backward(x, &wu, 3, dout).0,
            &x,
        );
    }
}
