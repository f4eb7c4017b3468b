//! Soft Dice loss over a mini-batch.
//!
//! The per-class overlap sums pool every pixel of every sample in the batch
//! (a set union, not a mean of per-sample scores), which keeps the loss
//! stable when a class is missing from individual patches.

use super::ops::Tensor;
use crate::error::{Error, Result};

fn check(probs: &[&Tensor], labels: &[&[u8]], classes: usize) -> Result<()> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::shape("loss needs matching, non-empty probability/label batches"));
    }
    for (p, l) in probs.iter().zip(labels) {
        if p.c != classes {
            return Err(Error::shape(format!(
                "probabilities have {} channels, expected {classes}",
                p.c
            )));
        }
        if l.len() != p.h * p.w {
            return Err(Error::shape("label plane does not match probability plane"));
        }
        if let Some(&bad) = l.iter().find(|&&v| v as usize >= classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
    }
    Ok(())
}

/// Per-class sums (overlap, predicted mass, target mass) across the batch.
fn union_sums(probs: &[&Tensor], labels: &[&[u8]], classes: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut s = vec![0.0f64; classes];
    let mut p_sum = vec![0.0f64; classes];
    let mut t_sum = vec![0.0f64; classes];
    for (p, l) in probs.iter().zip(labels) {
        let plane = p.h * p.w;
        for c in 0..classes {
            let ch = &p.data[c * plane..(c + 1) * plane];
            let mut sc = 0.0;
            let mut pc = 0.0;
            let mut tc = 0.0;
            for (v, &lab) in ch.iter().zip(l.iter()) {
                pc += v;
                if lab as usize == c {
                    sc += v;
                    tc += 1.0;
                }
            }
            s[c] += sc;
            p_sum[c] += pc;
            t_sum[c] += tc;
        }
    }
    (s, p_sum, t_sum)
}

/// Dice loss `1 - mean_c (2 S_c + eps) / (P_c + T_c + eps)` where the sums
/// run over every pixel in the batch.
pub fn dice_loss(probs: &[&Tensor], labels: &[&[u8]], classes: usize, eps: f64) -> Result<f64> {
    check(probs, labels, classes)?;
    let (s, p_sum, t_sum) = union_sums(probs, labels, classes);
    let mut acc = 0.0;
    for c in 0..classes {
        acc += (2.0 * s[c] + eps) / (p_sum[c] + t_sum[c] + eps);
    }
    Ok(1.0 - acc / classes as f64)
}

pub(crate) use dice_loss as dice_batch;

/// Loss plus dL/dprobs for every sample. Because the sums couple the whole
/// batch, each pixel's gradient depends on the shared per-class totals:
/// d/dp of (2S+eps)/(P+T+eps) is (2t (P+T+eps) - (2S+eps)) / (P+T+eps)^2.
pub(crate) fn dice_grad(
    probs: &[&Tensor],
    labels: &[&[u8]],
    classes: usize,
    eps: f64,
) -> Result<(f64, Vec<Tensor>)> {
    check(probs, labels, classes)?;
    let (s, p_sum, t_sum) = union_sums(probs, labels, classes);
    let mut loss_value = 0.0;
    let mut num = vec![0.0f64; classes];
    let mut denom = vec![0.0f64; classes];
    for c in 0..classes {
        num[c] = 2.0 * s[c] + eps;
        denom[c] = p_sum[c] + t_sum[c] + eps;
        loss_value += num[c] / denom[c];
    }
    let loss_value = 1.0 - loss_value / classes as f64;
    let scale = 1.0 / classes as f64;
    let mut grads = Vec::with_capacity(probs.len());
    for (p, l) in probs.iter().zip(labels) {
        let plane = p.h * p.w;
        let mut g = Tensor::zeros(classes, p.h, p.w);
        for c in 0..classes {
            let d2 = denom[c] * denom[c];
            for (i, &lab) in l.iter().enumerate() {
                let t = if lab as usize == c { 1.0 } else { 0.0 };
                g.data[c * plane + i] = -scale * (2.0 * t * denom[c] - num[c]) / d2;
            }
        }
        grads.push(g);
    }
    Ok((loss_value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[u8], classes: usize) -> Tensor {
        let n = labels.len();
        let mut t = Tensor::zeros(classes, 1, n);
        for (i, &l) in labels.iter().enumerate() {
            t.data[l as usize * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let labels: Vec<u8> = vec![0, 1, 2, 1, 0, 2, 2, 1];
        let p = one_hot(&labels, 3);
        let loss = dice_loss(&[&p], &[&labels], 3, 1.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn hand_computed_two_pixel_case() {
        // p = [[0.8, 0.3], [0.2, 0.7]], t = [0, 1], eps = 1:
        //   class 0: S = 0.8, P = 1.1, T = 1 -> 2.6 / 3.1
        //   class 1: S = 0.7, P = 0.9, T = 1 -> 2.4 / 2.9
        let p = Tensor::from_vec(2, 1, 2, vec![0.8, 0.3, 0.2, 0.7]);
        let labels: Vec<u8> = vec![0, 1];
        let loss = dice_loss(&[&p], &[&labels], 2, 1.0).unwrap();
        let want = 1.0 - 0.5 * (2.6 / 3.1 + 2.4 / 2.9);
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn batch_union_equals_single_concatenated_sample() {
        let pa = Tensor::from_vec(2, 1, 3, vec![0.9, 0.4, 0.2, 0.1, 0.6, 0.8]);
        let pb = Tensor::from_vec(2, 1, 2, vec![0.3, 0.7, 0.7, 0.3]);
        let la: Vec<u8> = vec![0, 1, 1];
        let lb: Vec<u8> = vec![1, 0];
        let batch = dice_loss(&[&pa, &pb], &[&la, &lb], 2, 1.0).unwrap();

        let mut joined = vec![0.9, 0.4, 0.2, 0.3, 0.7];
        joined.extend([0.1, 0.6, 0.8, 0.7, 0.3]);
        let pj = Tensor::from_vec(2, 1, 5, joined);
        let lj: Vec<u8> = vec![0, 1, 1, 1, 0];
        let single = dice_loss(&[&pj], &[&lj], 2, 1.0).unwrap();
        assert_eq!(batch, single);

        // And it is not the mean of per-sample losses.
        let mean = 0.5
            * (dice_loss(&[&pa], &[&la], 2, 1.0).unwrap()
                + dice_loss(&[&pb], &[&lb], 2, 1.0).unwrap());
        assert!((batch - mean).abs() > 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences_on_probabilities() {
        let p = Tensor::from_vec(2, 2, 2, vec![0.8, 0.3, 0.5, 0.2, 0.2, 0.7, 0.5, 0.8]);
        let labels: Vec<u8> = vec![0, 1, 0, 1];
        let (_, grads) = dice_grad(&[&p], &[&labels], 2, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..p.data.len() {
            let mut pp = p.clone();
            pp.data[i] += h;
            let lp = dice_loss(&[&pp], &[&labels], 2, 1.0).unwrap();
            let mut pm = p.clone();
            pm.data[i] -= h;
            let lm = dice_loss(&[&pm], &[&labels], 2, 1.0).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (grads[0].data[i] - fd).abs() < 1e-8,
                "entry {i}: {} vs {fd}",
                grads[0].data[i]
            );
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let p = Tensor::from_vec(2, 1, 2, vec![0.5; 4]);
        let labels: Vec<u8> = vec![0, 2];
        assert!(dice_loss(&[&p], &[&labels], 2, 1.0).is_err());
    }
}
