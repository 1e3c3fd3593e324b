//! Activation normalization: per-channel affine with data-initialized
//! mean and scale.

use crate::error::{Error, Result};
use crate::layers::Direction;
use crate::substrate::tensor::{Tensor, Vol};

const SIGMA_FLOOR: f32 = 1e-4;

#[derive(Debug, Clone)]
pub struct ActNorm {
    pub(crate) mu: Vec<f32>,
    pub(crate) sigma: Vec<f32>,
}

impl ActNorm {
    /// Identity parameters (μ = 0, σ = 1).
    pub fn identity(channels: usize) -> Self {
        ActNorm {
            mu: vec![0.0; channels],
            sigma: vec![1.0; channels],
        }
    }

    pub fn new(mu: Vec<f32>, sigma: Vec<f32>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Shape("mu/sigma length mismatch".into()));
        }
        if sigma.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::Invalid("actnorm sigma must be positive".into()));
        }
        Ok(ActNorm { mu, sigma })
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// Data-dependent initialization: per-channel batch mean and std, with
    /// the std floored at 1e-4 (a warning is logged when the floor bites).
    /// The batch is an N×H×W×C or N×C tensor with N ≥ 2.
    pub fn init_from_batch(batch: &Tensor) -> Result<ActNorm> {
        let (n, c) = match batch.dims() {
            [n, _, _, c] => (*n, *c),
            [n, c] => (*n, *c),
            other => {
                return Err(Error::Shape(format!(
                    "actnorm init expects NxHxWxC or NxC batch, got {other:?}"
                )))
            }
        };
        if n < 2 {
            return Err(Error::Invalid("actnorm init needs at least 2 samples".into()));
        }
        let per_sample = batch.len() / n;
        let positions = per_sample / c;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        let count = (n * positions) as f64;
        for s in 0..n {
            let sample = &batch.data()[s * per_sample..(s + 1) * per_sample];
            for p in 0..positions {
                for ch in 0..c {
                    mean[ch] += sample[p * c + ch] as f64;
                }
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        for s in 0..n {
            let sample = &batch.data()[s * per_sample..(s + 1) * per_sample];
            for p in 0..positions {
                for ch in 0..c {
                    let d = sample[p * c + ch] as f64 - mean[ch];
                    var[ch] += d * d;
                }
            }
        }
        let mut mu = Vec::with_capacity(c);
        let mut sigma = Vec::with_capacity(c);
        for ch in 0..c {
            let std = (var[ch] / count).sqrt() as f32;
            if std < SIGMA_FLOOR {
                log::warn!(
                    "actnorm init: channel {ch} std {std:.3e} below floor, clamping to {SIGMA_FLOOR:e}"
                );
            }
            mu.push(mean[ch] as f32);
            sigma.push(std.max(SIGMA_FLOOR));
        }
        Ok(ActNorm { mu, sigma })
    }

    /// Same statistics computed from a slice of activation volumes.
    pub(crate) fn init_from_vols(vols: &[Vol]) -> Result<ActNorm> {
        if vols.len() < 2 {
            return Err(Error::Invalid("actnorm init needs at least 2 samples".into()));
        }
        let c = vols[0].c;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        let mut count = 0f64;
        for v in vols {
            for p in 0..v.h * v.w {
                for ch in 0..c {
                    mean[ch] += v.data[p * c + ch];
                }
            }
            count += (v.h * v.w) as f64;
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        for v in vols {
            for p in 0..v.h * v.w {
                for ch in 0..c {
                    let d = v.data[p * c + ch] - mean[ch];
                    var[ch] += d * d;
                }
            }
        }
        let mut mu = Vec::with_capacity(c);
        let mut sigma = Vec::with_capacity(c);
        for ch in 0..c {
            let std = (var[ch] / count).sqrt() as f32;
            if std < SIGMA_FLOOR {
                log::warn!(
                    "actnorm init: channel {ch} std {std:.3e} below floor, clamping to {SIGMA_FLOOR:e}"
                );
            }
            mu.push(mean[ch] as f32);
            sigma.push(std.max(SIGMA_FLOOR));
        }
        Ok(ActNorm { mu, sigma })
    }

    /// Forward y = (x − μ)/σ per channel; inverse x = σ·y + μ.
    pub fn apply(&self, x: &Tensor, direction: Direction) -> Result<Tensor> {
        let vol = x.to_vol()?;
        if vol.c != self.channels() {
            return Err(Error::Shape(format!(
                "actnorm has {} channels, input has {}",
                self.channels(),
                vol.c
            )));
        }
        let out = match direction {
            Direction::Forward => self.normalize(&vol),
            Direction::Inverse => self.denormalize(&vol),
        };
        Ok(out.to_tensor())
    }

    pub(crate) fn normalize(&self, x: &Vol) -> Vol {
        let mut out = x.clone();
        for p in 0..x.h * x.w {
            for ch in 0..x.c {
                let v = &mut out.data[p * x.c + ch];
                *v = (*v - self.mu[ch] as f64) / self.sigma[ch] as f64;
            }
        }
        out
    }

    pub(crate) fn denormalize(&self, y: &Vol) -> Vol {
        let mut out = y.clone();
        for p in 0..y.h * y.w {
            for ch in 0..y.c {
                let v = &mut out.data[p * y.c + ch];
                *v = self.sigma[ch] as f64 * *v + self.mu[ch] as f64;
            }
        }
        out
    }

    /// log|det JᵀJ| of the denormalizing map over an H×W feature map.
    pub(crate) fn logdet_jtj_denorm(&self, h: usize, w: usize) -> f64 {
        2.0 * (h * w) as f64 * self.sigma.iter().map(|&s| (s as f64).ln()).sum::<f64>()
    }

    /// Cotangent and parameter gradients of the denormalizing (generative)
    /// map y = σ·x + μ. Gradient layout: [μ..., σ...].
    pub(crate) fn denorm_vjp(&self, x: &Vol, cot: &Vol, grads: Option<&mut [f64]>) -> Vol {
        let c = x.c;
        let mut xbar = Vol::zeros(x.h, x.w, x.c);
        for p in 0..x.h * x.w {
            for ch in 0..c {
                xbar.data[p * c + ch] = self.sigma[ch] as f64 * cot.data[p * c + ch];
            }
        }
        if let Some(g) = grads {
            for p in 0..x.h * x.w {
                for ch in 0..c {
                    g[ch] += cot.data[p * c + ch];
                    g[c + ch] += cot.data[p * c + ch] * x.data[p * c + ch];
                }
            }
        }
        xbar
    }

    /// Cotangent and parameter gradients of the normalizing (data-side)
    /// map y = (x − μ)/σ.
    pub(crate) fn norm_vjp(&self, x: &Vol, cot: &Vol, grads: Option<&mut [f64]>) -> Vol {
        let c = x.c;
        let mut xbar = Vol::zeros(x.h, x.w, x.c);
        for p in 0..x.h * x.w {
            for ch in 0..c {
                xbar.data[p * c + ch] = cot.data[p * c + ch] / self.sigma[ch] as f64;
            }
        }
        if let Some(g) = grads {
            for p in 0..x.h * x.w {
                for ch in 0..c {
                    let s = self.sigma[ch] as f64;
                    let y = (x.data[p * c + ch] - self.mu[ch] as f64) / s;
                    g[ch] += -cot.data[p * c + ch] / s;
                    g[c + ch] += -cot.data[p * c + ch] * y / s;
                }
            }
        }
        xbar
    }

    /// Gradient of `weight · logdet_jtj_denorm` with respect to σ.
    pub(crate) fn logdet_grad(&self, h: usize, w: usize, weight: f64, grads: &mut [f64]) {
        let c = self.channels();
        for ch in 0..c {
            grads[c + ch] += weight * 2.0 * (h * w) as f64 / self.sigma[ch] as f64;
        }
    }

    pub(crate) fn n_params(&self) -> usize {
        2 * self.channels()
    }

    pub(crate) fn read_params(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.sigma);
    }

    pub(crate) fn write_params(&mut self, src: &[f32]) {
        let c = self.channels();
        self.mu.copy_from_slice(&src[..c]);
        self.sigma.copy_from_slice(&src[c..2 * c]);
    }
}
