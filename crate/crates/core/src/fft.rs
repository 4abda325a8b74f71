//! Complex FFT for arbitrary lengths.
//!
//! Lengths whose prime factors are all small use a recursive mixed-radix
//! decimation in time; anything with a large prime factor goes through
//! Bluestein's chirp-z convolution on a power-of-two plan.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

const MAX_DIRECT_PRIME: usize = 64;

#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    MixedRadix { factors: Vec<usize>, twiddles: Vec<Complex64> },
    Bluestein(Box<Bluestein>),
}

#[derive(Debug, Clone)]
struct Bluestein {
    chirp: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    inner: FftPlan,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n.is_multiple_of(4) {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let factors = factorize(n);
        if factors.iter().any(|&p| p > MAX_DIRECT_PRIME) {
            return Self { n, kind: Kind::Bluestein(Box::new(Bluestein::new(n))) };
        }
        let twiddles = (0..n).map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)).collect();
        Self { n, kind: Kind::MixedRadix { factors, twiddles } }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform `X_k = sum_j x_j exp(-2 pi i jk / n)`.
    pub fn forward(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        assert_eq!(data.len(), self.n);
        match &self.kind {
            Kind::MixedRadix { factors, twiddles } => {
                scratch.clear();
                scratch.extend_from_slice(data);
                let mut tmp = vec![Complex64::new(0.0, 0.0); factors.iter().copied().max().unwrap_or(1)];
                dit(scratch, 0, 1, data, self.n, factors, twiddles, self.n, &mut tmp);
            }
            Kind::Bluestein(b) => b.run(data, scratch),
        }
    }

    /// Unnormalized inverse transform (positive exponent).
    pub fn inverse(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data, scratch);
        for v in data.iter_mut() {
            *v = v.conj();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dit(
    input: &[Complex64],
    offset: usize,
    stride: usize,
    out: &mut [Complex64],
    n: usize,
    factors: &[usize],
    twiddles: &[Complex64],
    total: usize,
    tmp: &mut [Complex64],
) {
    if n == 1 {
        out[0] = input[offset];
        return;
    }
    let p = factors[0];
    let m = n / p;
    for r in 0..p {
        dit(
            input,
            offset + r * stride,
            stride * p,
            &mut out[r * m..(r + 1) * m],
            m,
            &factors[1..],
            twiddles,
            total,
            tmp,
        );
    }
    let step = total / n;
    let pstep = total / p;
    for k in 0..m {
        for r in 0..p {
            tmp[r] = out[r * m + k] * twiddles[(r * k * step) % total];
        }
        match p {
            2 => {
                out[k] = tmp[0] + tmp[1];
                out[m + k] = tmp[0] - tmp[1];
            }
            4 => {
                let a = tmp[0] + tmp[2];
                let b = tmp[0] - tmp[2];
                let c = tmp[1] + tmp[3];
                let d = tmp[1] - tmp[3];
                // -i * d
                let d = Complex64::new(d.im, -d.re);
                out[k] = a + c;
                out[m + k] = b + d;
                out[2 * m + k] = a - c;
                out[3 * m + k] = b - d;
            }
            _ => {
                for q in 0..p {
                    let mut s = Complex64::new(0.0, 0.0);
                    for (r, t) in tmp.iter().take(p).enumerate() {
                        s += *t * twiddles[((r * q) % p) * pstep];
                    }
                    out[q * m + k] = s;
                }
            }
        }
    }
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let mut m = 1;
        while m < 2 * n - 1 {
            m *= 2;
        }
        let two_n = 2 * n as u128;
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128) % two_n;
                Complex64::from_polar(1.0, -PI * k2 as f64 / n as f64)
            })
            .collect();
        let inner = FftPlan::new(m);
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        let mut scratch = Vec::new();
        inner.forward(&mut kernel, &mut scratch);
        Self { chirp, kernel_hat: kernel, inner }
    }

    fn run(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let n = data.len();
        let m = self.kernel_hat.len();
        let mut a = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            a[k] = data[k] * self.chirp[k];
        }
        self.inner.forward(&mut a, scratch);
        for (x, y) in a.iter_mut().zip(&self.kernel_hat) {
            *x *= *y;
        }
        self.inner.inverse(&mut a, scratch);
        let scale = 1.0 / m as f64;
        for k in 0..n {
            data[k] = a[k] * self.chirp[k] * scale;
        }
    }
}
