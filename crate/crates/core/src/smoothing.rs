//! Separable Gaussian blur over 2D and 3D arrays, with window-clipped
//! borders (weights renormalized over in-bounds taps).

/// Normalized Gaussian taps truncated at ceil(3 sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

fn blur_axis(data: &mut [f64], dims: &[usize], axis: usize, kernel: &[f64]) {
    if kernel.len() == 1 {
        return;
    }
    let len = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let r = (kernel.len() / 2) as isize;
    let mut line = vec![0.0f64; len];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * len * stride + s;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            for i in 0..len as isize {
                let mut num = 0.0;
                let mut den = 0.0;
                for (j, &w) in kernel.iter().enumerate() {
                    let src = i + j as isize - r;
                    if src >= 0 && src < len as isize {
                        num += w * line[src as usize];
                        den += w;
                    }
                }
                data[base + i as usize * stride] = num / den;
            }
        }
    }
}

/// In-place separable blur; `dims` is (z, y, x) or (y, x), matching the
/// flattened raster layout.
pub fn gaussian_blur(data: &mut [f64], dims: &[usize], sigma: f64) {
    debug_assert_eq!(data.len(), dims.iter().product::<usize>());
    let kernel = gaussian_kernel(sigma);
    for axis in 0..dims.len() {
        blur_axis(data, dims, axis, &kernel);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let mut data = vec![1.0, 5.0, 9.0, 2.0];
        gaussian_blur(&mut data, &[2, 2], 0.0);
        assert_eq!(data, vec![1.0, 5.0, 9.0, 2.0]);
    }

    #[test]
    fn constant_field_is_fixed_point() {
        let mut data = vec![3.5; 27];
        gaussian_blur(&mut data, &[3, 3, 3], 1.2);
        for v in data {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() / 2 {
            assert!((k[i] - k[k.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn central_impulse_matches_separable_product() {
        // Far enough from borders that no window is clipped, the response
        // to a unit impulse is the outer product of 1D kernels.
        let n = 21;
        let mut data = vec![0.0; n * n];
        data[(n / 2) * n + n / 2] = 1.0;
        let sigma = 1.5;
        gaussian_blur(&mut data, &[n, n], sigma);
        let k = gaussian_kernel(sigma);
        let r = k.len() / 2;
        for dy in 0..k.len() {
            for dx in 0..k.len() {
                let y = n / 2 + dy - r;
                let x = n / 2 + dx - r;
                let want = k[dy] * k[dx];
                assert!((data[y * n + x] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_preserved_away_from_borders() {
        // The response must not reach any border-clipped window (within one
        // kernel radius of the edge), or renormalization would add mass.
        let n = 31;
        let mut data = vec![0.0; n * n];
        data[(n / 2) * n + n / 2] = 7.0;
        gaussian_blur(&mut data, &[n, n], 2.0);
        let total: f64 = data.iter().sum();
        assert!((total - 7.0).abs() < 1e-9);
    }
}
