//! Minimal complex FFT used for the frequency-domain Hilbert transform in
//! envelope detection. Power-of-two lengths run the iterative radix-2
//! algorithm; other lengths go through Bluestein's chirp-z reduction to a
//! padded power-of-two convolution.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{cos, sin, sqrt};

/// Precomputed transform for one length.
pub(crate) struct FftPlan {
    n: usize,
    kind: PlanKind,
}

enum PlanKind {
    Radix2 {
        twiddle_re: Vec<f64>,
        twiddle_im: Vec<f64>,
    },
    Bluestein {
        m: usize,
        inner_tw_re: Vec<f64>,
        inner_tw_im: Vec<f64>,
        chirp_re: Vec<f64>,
        chirp_im: Vec<f64>,
        // FFT of the chirp filter, length m.
        filt_re: Vec<f64>,
        filt_im: Vec<f64>,
    },
}

fn radix2_twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    let half = n / 2;
    let mut re = Vec::with_capacity(half);
    let mut im = Vec::with_capacity(half);
    for k in 0..half {
        let ang = -2.0 * PI * k as f64 / n as f64;
        re.push(cos(ang));
        im.push(sin(ang));
    }
    (re, im)
}

fn radix2_inplace(re: &mut [f64], im: &mut [f64], tw_re: &[f64], tw_im: &[f64]) {
    let n = re.len();
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        let half = len / 2;
        let mut base = 0;
        while base < n {
            for k in 0..half {
                let (wr, wi) = (tw_re[k * stride], tw_im[k * stride]);
                let (ur, ui) = (re[base + k], im[base + k]);
                let (vr, vi) = (re[base + k + half], im[base + k + half]);
                let tr = vr * wr - vi * wi;
                let ti = vr * wi + vi * wr;
                re[base + k] = ur + tr;
                im[base + k] = ui + ti;
                re[base + k + half] = ur - tr;
                im[base + k + half] = ui - ti;
            }
            base += len;
        }
        len <<= 1;
    }
}

impl FftPlan {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n >= 1, "fft length must be positive");
        if n.is_power_of_two() {
            let (twiddle_re, twiddle_im) = radix2_twiddles(n);
            return FftPlan {
                n,
                kind: PlanKind::Radix2 {
                    twiddle_re,
                    twiddle_im,
                },
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        let (inner_tw_re, inner_tw_im) = radix2_twiddles(m);
        // chirp_k = exp(-i pi k^2 / n); the filter carries its conjugate.
        let mut chirp_re = Vec::with_capacity(n);
        let mut chirp_im = Vec::with_capacity(n);
        for k in 0..n {
            // k^2 mod 2n keeps the sin/cos argument small for exactness.
            let q = (k * k) % (2 * n);
            let ang = -PI * q as f64 / n as f64;
            chirp_re.push(cos(ang));
            chirp_im.push(sin(ang));
        }
        let mut filt_re = vec![0.0; m];
        let mut filt_im = vec![0.0; m];
        filt_re[0] = chirp_re[0];
        filt_im[0] = -chirp_im[0];
        for k in 1..n {
            filt_re[k] = chirp_re[k];
            filt_im[k] = -chirp_im[k];
            filt_re[m - k] = chirp_re[k];
            filt_im[m - k] = -chirp_im[k];
        }
        radix2_inplace(&mut filt_re, &mut filt_im, &inner_tw_re, &inner_tw_im);
        FftPlan {
            n,
            kind: PlanKind::Bluestein {
                m,
                inner_tw_re,
                inner_tw_im,
                chirp_re,
                chirp_im,
                filt_re,
                filt_im,
            },
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    /// In-place forward DFT (engineering sign convention).
    pub(crate) fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        assert_eq!(re.len(), self.n);
        assert_eq!(im.len(), self.n);
        match &self.kind {
            PlanKind::Radix2 {
                twiddle_re,
                twiddle_im,
            } => radix2_inplace(re, im, twiddle_re, twiddle_im),
            PlanKind::Bluestein {
                m,
                inner_tw_re,
                inner_tw_im,
                chirp_re,
                chirp_im,
                filt_re,
                filt_im,
            } => {
                let n = self.n;
                let mut a_re = vec![0.0; *m];
                let mut a_im = vec![0.0; *m];
                for k in 0..n {
                    a_re[k] = re[k] * chirp_re[k] - im[k] * chirp_im[k];
                    a_im[k] = re[k] * chirp_im[k] + im[k] * chirp_re[k];
                }
                radix2_inplace(&mut a_re, &mut a_im, inner_tw_re, inner_tw_im);
                for k in 0..*m {
                    let r = a_re[k] * filt_re[k] - a_im[k] * filt_im[k];
                    let i = a_re[k] * filt_im[k] + a_im[k] * filt_re[k];
                    a_re[k] = r;
                    a_im[k] = i;
                }
                // Inverse of the inner FFT via conjugation.
                for k in 0..*m {
                    a_im[k] = -a_im[k];
                }
                radix2_inplace(&mut a_re, &mut a_im, inner_tw_re, inner_tw_im);
                let scale = 1.0 / *m as f64;
                for k in 0..n {
                    let r = a_re[k] * scale;
                    let i = -a_im[k] * scale;
                    re[k] = r * chirp_re[k] - i * chirp_im[k];
                    im[k] = r * chirp_im[k] + i * chirp_re[k];
                }
            }
        }
    }

    /// In-place inverse DFT with 1/n normalization.
    pub(crate) fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        for v in im.iter_mut() {
            *v = -*v;
        }
        self.forward(re, im);
        let scale = 1.0 / self.n as f64;
        for k in 0..self.n {
            re[k] *= scale;
            im[k] = -im[k] * scale;
        }
    }
}

/// Magnitude of the analytic signal of a real sequence: FFT, zero the
/// negative frequencies, double the positive ones, inverse FFT, modulus.
pub(crate) fn analytic_envelope(plan: &FftPlan, x: &[f64]) -> Vec<f64> {
    let n = plan.len();
    assert_eq!(x.len(), n);
    let mut re = x.to_vec();
    let mut im = vec![0.0; n];
    plan.forward(&mut re, &mut im);
    // DC (and Nyquist for even n) keep unit weight.
    for k in 1..n.div_ceil(2) {
        re[k] *= 2.0;
        im[k] *= 2.0;
    }
    for k in (n / 2 + 1)..n {
        re[k] = 0.0;
        im[k] = 0.0;
    }
    plan.inverse(&mut re, &mut im);
    (0..n).map(|k| sqrt(re[k] * re[k] + im[k] * im[k])).collect()
}
