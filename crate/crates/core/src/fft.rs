//! Cached n-dimensional complex FFTs over row-major buffers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Unnormalized in-place transform along every axis. `inverse` uses e^{+i}.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let mut stride = 1;
    let mut line = Vec::new();
    for axis in (0..shape.len()).rev() {
        let n = shape[axis];
        let fft = plan(n, inverse);
        if stride == 1 {
            fft.process(data);
        } else {
            line.resize(n, Complex64::new(0.0, 0.0));
            let block = n * stride;
            for outer in 0..total / block {
                let base = outer * block;
                for inner in 0..stride {
                    for (j, c) in line.iter_mut().enumerate() {
                        *c = data[base + inner + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, c) in line.iter().enumerate() {
                        data[base + inner + j * stride] = *c;
                    }
                }
            }
        }
        stride *= n;
    }
}

/// Unnormalized forward transform of real data.
pub(crate) fn forward_real(values: &[f64], shape: &[usize]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, shape, false);
    data
}

/// Circular convolution `(a * b)_i = Σ_j a_j b_{i-j}` of two real arrays.
pub(crate) fn convolve(a: &[f64], b_hat: &[Complex64], shape: &[usize]) -> Vec<f64> {
    let mut data = forward_real(a, shape);
    data.iter_mut().zip(b_hat).for_each(|(x, y)| *x *= y);
    fft_nd(&mut data, shape, true);
    let scale = 1.0 / data.len() as f64;
    data.iter().map(|c| c.re * scale).collect()
}
