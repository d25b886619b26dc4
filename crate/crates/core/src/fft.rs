//! Iterative radix-2 FFT.
//!
//! Only power-of-two sizes are supported; the STFT configuration enforces
//! this up front.

use core::f64::consts::PI;

use crate::prelude::*;
use crate::{Complex, Error, Result};

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    size: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<u32>,
}

impl FftPlan {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::Config(format!(
                "FFT size {size} is not a power of two"
            )));
        }
        let bits = size.trailing_zeros();
        let bitrev = (0..size as u32)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (32 - bits)
                }
            })
            .collect();
        let twiddles = (0..size / 2)
            .map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / size as f64))
            .collect();
        Ok(Self {
            size,
            twiddles,
            bitrev,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place forward transform, `X[k] = Σ x[n] e^{-2πjkn/N}`.
    pub fn forward(&self, buf: &mut [Complex]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform including the `1/N` normalization.
    pub fn inverse(&self, buf: &mut [Complex]) {
        self.transform(buf, true);
        let scale = 1.0 / self.size as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.size;
        assert_eq!(buf.len(), n, "buffer length does not match FFT plan");
        for i in 0..n {
            let j = self.bitrev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }

    /// Transforms two real sequences with one complex FFT and returns the
    /// one-sided spectra (`N/2 + 1` bins each).
    pub fn forward_real_pair(
        &self,
        a: &[f64],
        b: &[f64],
        scratch: &mut [Complex],
        out_a: &mut [Complex],
        out_b: &mut [Complex],
    ) {
        let n = self.size;
        for (i, s) in scratch.iter_mut().enumerate() {
            *s = Complex::new(a[i], b[i]);
        }
        self.forward(scratch);
        let half = n / 2;
        for f in 0..=half {
            let z = scratch[f % n];
            let zc = scratch[(n - f) % n].conj();
            out_a[f] = (z + zc) * 0.5;
            // (z - zc) / 2j
            let d = (z - zc) * 0.5;
            out_b[f] = Complex::new(d.im, -d.re);
        }
    }
}
