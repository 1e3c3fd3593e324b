//! Unitary 2-D FFT on power-of-two grids (radix-2, f64).

use crate::error::{Error, Result};
use crate::substrate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    fn add(self, other: Complex) -> Complex {
        Complex {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }

    fn sub(self, other: Complex) -> Complex {
        Complex {
            re: self.re - other.re,
            im: self.im - other.im,
        }
    }
}

fn is_pow2(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

/// In-place radix-2 Cooley–Tukey, unnormalized.
fn fft_inplace(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    debug_assert!(is_pow2(n));
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
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * std::f64::consts::TAU / len as f64;
        let wl = Complex::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = u.add(v);
                buf[i + k + len / 2] = u.sub(v);
                w = w.mul(wl);
            }
            i += len;
        }
        len <<= 1;
    }
}

/// 2-D complex spectrum with its grid dimensions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub h: usize,
    pub w: usize,
    pub data: Vec<Complex>,
}

impl Spectrum {
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> Complex {
        self.data[y * self.w + x]
    }
}

fn check_dims(h: usize, w: usize) -> Result<()> {
    if !is_pow2(h) || !is_pow2(w) {
        return Err(Error::Invalid(format!(
            "fft2 requires power-of-two dims, got {h}x{w}"
        )));
    }
    Ok(())
}

fn fft2_core(mut data: Vec<Complex>, h: usize, w: usize, inverse: bool) -> Spectrum {
    // Rows.
    for row in data.chunks_mut(w) {
        fft_inplace(row, inverse);
    }
    // Columns.
    let mut col = vec![Complex::ZERO; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        fft_inplace(&mut col, inverse);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    // Unitary normalization in both directions.
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for v in data.iter_mut() {
        v.re *= norm;
        v.im *= norm;
    }
    Spectrum { h, w, data }
}

/// Unitary 2-D DFT of a real H×W grid.
pub fn fft2_raw(values: &[f64], h: usize, w: usize) -> Result<Spectrum> {
    check_dims(h, w)?;
    if values.len() != h * w {
        return Err(Error::Shape(format!(
            "fft2 expects {} values, got {}",
            h * w,
            values.len()
        )));
    }
    let data: Vec<Complex> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    Ok(fft2_core(data, h, w, false))
}

/// Unitary inverse 2-D DFT.
pub fn ifft2(spec: &Spectrum) -> Result<Spectrum> {
    check_dims(spec.h, spec.w)?;
    Ok(fft2_core(spec.data.clone(), spec.h, spec.w, true))
}

/// Unitary 2-D DFT of an H×W tensor (2-dim, or H×W×1).
pub fn fft2(image: &Tensor) -> Result<Spectrum> {
    let (h, w) = match image.dims() {
        [h, w] => (*h, *w),
        [h, w, 1] => (*h, *w),
        other => {
            return Err(Error::Shape(format!(
                "fft2 expects an HxW image, got dims {other:?}"
            )))
        }
    };
    let values: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    fft2_raw(&values, h, w)
}
