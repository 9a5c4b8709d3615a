//! Iterative radix-2 complex FFT. Embedding lengths are always powers of
//! two, so no mixed-radix support is needed.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Radix2Fft {
    n: usize,
    /// `exp(+2πi k / n)` for `k < n/2`
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Radix2Fft {
    /// # Panics
    ///
    /// Panics if `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length {n} is not a power of two");
        let bits = n.trailing_zeros();
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let bitrev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `x_j ← Σ_k x_k exp(+2πi jk/n)`, no normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// `x_j ← Σ_k x_k exp(-2πi jk/n)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        assert_eq!(buf.len(), self.n);
        for (i, &r) in self.bitrev.iter().enumerate() {
            let r = r as usize;
            if i < r {
                buf.swap(i, r);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if forward {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|j| {
                x.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let a = sign * 2.0 * PI * (j * k) as f64 / n as f64;
                        v * Complex64::new(libm::cos(a), libm::sin(a))
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for &n in &[1usize, 2, 4, 8, 64] {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new(libm::sin(i as f64 * 0.7), libm::sqrt(i as f64)))
                .collect();
            let plan = Radix2Fft::new(n);
            let mut f = x.clone();
            plan.forward(&mut f);
            let mut g = x.clone();
            plan.inverse(&mut g);
            for (a, b) in f.iter().zip(naive(&x, -1.0)) {
                assert!((a - b).norm() < 1e-10);
            }
            for (a, b) in g.iter().zip(naive(&x, 1.0)) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
