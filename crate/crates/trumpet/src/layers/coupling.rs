//! Affine coupling: the conditioning block passes through unchanged and the
//! other block is scaled and shifted by functions of it, giving a triangular
//! Jacobian whose log-determinant is a sum of log-scales.

use crate::error::{Error, Result};
use crate::layers::subnet::{Subnet, SubnetCache, SubnetKind};
use crate::layers::Direction;
use crate::substrate::rng::Rng;
use crate::substrate::tensor::{Tensor, Vol};

/// Raw log-scale clamp bound; keeps s = exp(clamp(raw)) in [e^-5, e^5].
const CLAMP: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Coupling {
    pub(crate) scale_net: Subnet,
    pub(crate) bias_net: Subnet,
    /// Channels that pass through unchanged (the conditioning block).
    pub(crate) c_pass: usize,
    /// Channels that are affinely transformed.
    pub(crate) c_trans: usize,
    /// When set, the transformed block comes first and the conditioning
    /// block last (alternating splits in flat-vector flows).
    pub(crate) swap: bool,
}

pub(crate) struct CouplingCache {
    pub x1: Vol,
    pub x2: Vol,
    pub raw: Vol,
    pub s: Vol,
    pub snet: SubnetCache,
    pub bnet: SubnetCache,
    pub b: Vol,
}

impl Coupling {
    /// Identity-initialized coupling over `channels` total channels: the
    /// subnets' final convolutions are zero, so s ≡ 1 and b ≡ 0.
    pub fn new(channels: usize, kind: SubnetKind, swap: bool, rng: &mut Rng) -> Result<Self> {
        if channels < 2 {
            return Err(Error::Invalid(format!(
                "coupling needs at least 2 channels, got {channels}"
            )));
        }
        let c_pass = channels.div_ceil(2);
        let c_trans = channels / 2;
        let mut rs = rng.split(101);
        let mut rb = rng.split(102);
        Ok(Coupling {
            scale_net: Subnet::new(kind, c_pass, c_trans, &mut rs),
            bias_net: Subnet::new(kind, c_pass, c_trans, &mut rb),
            c_pass,
            c_trans,
            swap,
        })
    }

    pub fn channels(&self) -> usize {
        self.c_pass + self.c_trans
    }

    fn split(&self, x: &Vol) -> (Vol, Vol) {
        let (h, w) = (x.h, x.w);
        let mut x1 = Vol::zeros(h, w, self.c_pass);
        let mut x2 = Vol::zeros(h, w, self.c_trans);
        let (off1, off2) = if self.swap {
            (self.c_trans, 0)
        } else {
            (0, self.c_pass)
        };
        for p in 0..h * w {
            for c in 0..self.c_pass {
                x1.data[p * self.c_pass + c] = x.data[p * x.c + off1 + c];
            }
            for c in 0..self.c_trans {
                x2.data[p * self.c_trans + c] = x.data[p * x.c + off2 + c];
            }
        }
        (x1, x2)
    }

    fn merge(&self, x1: &Vol, x2: &Vol) -> Vol {
        let (h, w) = (x1.h, x1.w);
        let ctot = self.channels();
        let mut out = Vol::zeros(h, w, ctot);
        let (off1, off2) = if self.swap {
            (self.c_trans, 0)
        } else {
            (0, self.c_pass)
        };
        for p in 0..h * w {
            for c in 0..self.c_pass {
                out.data[p * ctot + off1 + c] = x1.data[p * self.c_pass + c];
            }
            for c in 0..self.c_trans {
                out.data[p * ctot + off2 + c] = x2.data[p * self.c_trans + c];
            }
        }
        out
    }

    fn scale_from_raw(raw: &Vol) -> Vol {
        Vol {
            h: raw.h,
            w: raw.w,
            c: raw.c,
            data: raw
                .data
                .iter()
                .map(|&r| r.clamp(-CLAMP, CLAMP).exp())
                .collect(),
        }
    }

    /// Forward y2 = s(x1)⊙x2 + b(x1); inverse x2 = (y2 − b(y1)) ⊘ s(y1).
    pub fn apply(&self, x: &Tensor, direction: Direction) -> Result<Tensor> {
        let vol = x.to_vol()?;
        let out = match direction {
            Direction::Forward => self.fwd(&vol)?.0,
            Direction::Inverse => self.inv(&vol)?.0,
        };
        Ok(out.to_tensor())
    }

    fn eval_nets(&self, x1: &Vol) -> Result<(Vol, Vol, Vol, SubnetCache, SubnetCache, Vol)> {
        let (raw, snet) = self.scale_net.forward(x1)?;
        let (b, bnet) = self.bias_net.forward(x1)?;
        let s = Self::scale_from_raw(&raw);
        Ok((raw, s, b.clone(), snet, bnet, b))
    }

    pub(crate) fn fwd(&self, x: &Vol) -> Result<(Vol, CouplingCache)> {
        if x.c != self.channels() {
            return Err(Error::Shape(format!(
                "coupling expects {} channels, got {}",
                self.channels(),
                x.c
            )));
        }
        let (x1, x2) = self.split(x);
        let (raw, s, _, snet, bnet, b) = self.eval_nets(&x1)?;
        let mut y2 = Vol::zeros(x2.h, x2.w, x2.c);
        for i in 0..x2.data.len() {
            y2.data[i] = s.data[i] * x2.data[i] + b.data[i];
        }
        let y = self.merge(&x1, &y2);
        Ok((
            y,
            CouplingCache {
                x1,
                x2,
                raw,
                s,
                snet,
                bnet,
                b,
            },
        ))
    }

    pub(crate) fn inv(&self, y: &Vol) -> Result<(Vol, CouplingCache)> {
        if y.c != self.channels() {
            return Err(Error::Shape(format!(
                "coupling expects {} channels, got {}",
                self.channels(),
                y.c
            )));
        }
        let (y1, y2) = self.split(y);
        let (raw, s, _, snet, bnet, b) = self.eval_nets(&y1)?;
        let mut x2 = Vol::zeros(y2.h, y2.w, y2.c);
        for i in 0..y2.data.len() {
            x2.data[i] = (y2.data[i] - b.data[i]) / s.data[i];
        }
        let x = self.merge(&y1, &x2);
        Ok((
            x,
            CouplingCache {
                x1: y1,
                x2,
                raw,
                s,
                snet,
                bnet,
                b,
            },
        ))
    }

    /// Σ log s over transformed positions, evaluated from a cached forward
    /// input; the JᵀJ convention doubles this.
    pub fn log_det(&self, x: &Tensor) -> Result<f64> {
        let vol = x.to_vol()?;
        let (_, cache) = self.fwd(&vol)?;
        Ok(cache.raw.data.iter().map(|&r| r.clamp(-CLAMP, CLAMP)).sum())
    }

    pub(crate) fn logdet_jtj_from_cache(cache: &CouplingCache) -> f64 {
        2.0 * cache
            .raw
            .data
            .iter()
            .map(|&r| r.clamp(-CLAMP, CLAMP))
            .sum::<f64>()
    }

    /// JVP of the forward map.
    pub(crate) fn fwd_jvp(&self, cache: &CouplingCache, t: &Vol) -> Vol {
        let (t1, t2) = self.split(t);
        let draw = self.scale_net.jvp(&cache.snet, &t1);
        let db = self.bias_net.jvp(&cache.bnet, &t1);
        let mut dy2 = Vol::zeros(t2.h, t2.w, t2.c);
        for i in 0..t2.data.len() {
            let mask = if cache.raw.data[i].abs() < CLAMP { 1.0 } else { 0.0 };
            let ds = cache.s.data[i] * mask * draw.data[i];
            dy2.data[i] = cache.s.data[i] * t2.data[i] + ds * cache.x2.data[i] + db.data[i];
        }
        self.merge(&t1, &dy2)
    }

    /// VJP of the forward map. Gradient layout: [scale_net..., bias_net...].
    pub(crate) fn fwd_vjp(
        &self,
        cache: &CouplingCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Vol {
        let (c1, c2) = self.split(cot);
        let ns = self.scale_net.n_params();
        let (gs, gb) = match grads {
            Some(g) => {
                let (a, b) = g.split_at_mut(ns);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        // x2 cotangent: s ⊙ c2.
        let mut x2bar = Vol::zeros(c2.h, c2.w, c2.c);
        let mut rawbar = Vol::zeros(c2.h, c2.w, c2.c);
        for i in 0..c2.data.len() {
            x2bar.data[i] = cache.s.data[i] * c2.data[i];
            let mask = if cache.raw.data[i].abs() < CLAMP { 1.0 } else { 0.0 };
            rawbar.data[i] = c2.data[i] * cache.x2.data[i] * cache.s.data[i] * mask;
        }
        let mut x1bar = self.scale_net.vjp(&cache.snet, &rawbar, gs);
        let x1bar_b = self.bias_net.vjp(&cache.bnet, &c2, gb);
        x1bar.add_assign(&x1bar_b);
        x1bar.add_assign(&c1);
        self.merge(&x1bar, &x2bar)
    }

    /// VJP of the inverse map (data direction), with cotangent given on the
    /// inverse output x = (x1, x2).
    pub(crate) fn inv_vjp(
        &self,
        cache: &CouplingCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Vol {
        let (c1, c2) = self.split(cot);
        let ns = self.scale_net.n_params();
        let (gs, gb) = match grads {
            Some(g) => {
                let (a, b) = g.split_at_mut(ns);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        // x2 = (y2 − b)/s: y2 cotangent = c2/s; raw cotangent = −c2⊙x2⊙mask;
        // b cotangent = −c2/s.
        let mut y2bar = Vol::zeros(c2.h, c2.w, c2.c);
        let mut rawbar = Vol::zeros(c2.h, c2.w, c2.c);
        let mut bbar = Vol::zeros(c2.h, c2.w, c2.c);
        for i in 0..c2.data.len() {
            let s = cache.s.data[i];
            y2bar.data[i] = c2.data[i] / s;
            bbar.data[i] = -c2.data[i] / s;
            let mask = if cache.raw.data[i].abs() < CLAMP { 1.0 } else { 0.0 };
            rawbar.data[i] = -c2.data[i] * cache.x2.data[i] * mask;
        }
        let mut y1bar = self.scale_net.vjp(&cache.snet, &rawbar, gs);
        let y1bar_b = self.bias_net.vjp(&cache.bnet, &bbar, gb);
        y1bar.add_assign(&y1bar_b);
        y1bar.add_assign(&c1);
        self.merge(&y1bar, &y2bar)
    }

    /// Adds the gradient of `weight · log|det JᵀJ|` (evaluated at the cached
    /// conditioning block) to the input cotangent and parameter gradients.
    pub(crate) fn logdet_vjp(
        &self,
        cache: &CouplingCache,
        weight: f64,
        cot: &mut Vol,
        grads: Option<&mut [f64]>,
    ) {
        let ns = self.scale_net.n_params();
        let gs = grads.map(|g| &mut g[..ns]);
        let mut rawbar = Vol::zeros(cache.raw.h, cache.raw.w, cache.raw.c);
        for i in 0..rawbar.data.len() {
            let mask = if cache.raw.data[i].abs() < CLAMP { 1.0 } else { 0.0 };
            rawbar.data[i] = 2.0 * weight * mask;
        }
        let x1bar = self.scale_net.vjp(&cache.snet, &rawbar, gs);
        // Scatter into the conditioning channels of the full cotangent.
        let (off1, ctot) = if self.swap {
            (self.c_trans, self.channels())
        } else {
            (0, self.channels())
        };
        for p in 0..cot.h * cot.w {
            for c in 0..self.c_pass {
                cot.data[p * ctot + off1 + c] += x1bar.data[p * self.c_pass + c];
            }
        }
    }

    /// Freezes the subnets at constant outputs (s ≡ exp(clamp(raw_value)),
    /// b ≡ bias_value); used by desk tests.
    pub fn freeze_constant(&mut self, raw_value: f32, bias_value: f32) {
        self.scale_net.set_constant_output(raw_value);
        self.bias_net.set_constant_output(bias_value);
    }

    pub(crate) fn n_params(&self) -> usize {
        self.scale_net.n_params() + self.bias_net.n_params()
    }

    pub(crate) fn read_params(&self, out: &mut Vec<f32>) {
        self.scale_net.read_params(out);
        self.bias_net.read_params(out);
    }

    pub(crate) fn write_params(&mut self, src: &[f32]) {
        let ns = self.scale_net.n_params();
        self.scale_net.write_params(&src[..ns]);
        self.bias_net.write_params(&src[ns..]);
    }

    pub(crate) fn param_entries(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        self.scale_net.param_entries(&format!("{prefix}.scale"), out);
        self.bias_net.param_entries(&format!("{prefix}.bias"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(dims: Vec<usize>, rng: &mut Rng) -> Tensor {
        let n = dims.iter().product();
        Tensor::new(dims, (0..n).map(|_| rng.normal() as f32).collect()).unwrap()
    }

    #[test]
    fn identity_at_init() {
        let mut rng = Rng::new(40, 0);
        let cp = Coupling::new(4, SubnetKind::Plain { hidden: 6 }, false, &mut rng).unwrap();
        let x = rand_tensor(vec![4, 4, 4], &mut rng);
        let y = cp.apply(&x, Direction::Forward).unwrap();
        assert_eq!(x, y);
        let back = cp.apply(&y, Direction::Inverse).unwrap();
        assert_eq!(x, back);
        assert_eq!(cp.log_det(&x).unwrap(), 0.0);
    }

    #[test]
    fn frozen_constant_nets() {
        let mut rng = Rng::new(41, 0);
        let mut cp = Coupling::new(2, SubnetKind::Plain { hidden: 4 }, false, &mut rng).unwrap();
        cp.freeze_constant(2.0f32.ln(), 1.0);
        // x = (x1, x2) = (0.5, 3): y2 = 2*3 + 1 = 7.
        let x = Tensor::new(vec![1, 1, 2], vec![0.5, 3.0]).unwrap();
        let y = cp.apply(&x, Direction::Forward).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-7);
        assert!((y.data()[1] - 7.0).abs() < 1e-6);
        let back = cp.apply(&y, Direction::Inverse).unwrap();
        assert!((back.data()[1] - 3.0).abs() < 1e-6);
        // s = 2 over 4 transformed elements.
        let x4 = Tensor::new(vec![2, 2, 2], vec![0.0; 8]).unwrap();
        let ld = cp.log_det(&x4).unwrap();
        assert!((ld - 4.0 * 2.0f64.ln()).abs() < 1e-6);
    }

    fn randomized_coupling(channels: usize, swap: bool, rng: &mut Rng) -> Coupling {
        let mut cp = Coupling::new(channels, SubnetKind::Plain { hidden: 6 }, swap, rng).unwrap();
        let mut p = Vec::new();
        cp.read_params(&mut p);
        for v in p.iter_mut() {
            if *v == 0.0 {
                *v = (rng.normal() * 0.3) as f32;
            }
        }
        cp.write_params(&p);
        cp
    }

    #[test]
    fn random_round_trip() {
        let mut rng = Rng::new(42, 0);
        for swap in [false, true] {
            let cp = randomized_coupling(5, swap, &mut rng);
            let x = rand_tensor(vec![4, 4, 5], &mut rng);
            let y = cp.apply(&x, Direction::Forward).unwrap();
            let back = cp.apply(&y, Direction::Inverse).unwrap();
            assert!(x.rel_err(&back) <= 1e-5, "swap {swap} rel err {}", x.rel_err(&back));
        }
    }

    #[test]
    fn rejects_single_channel() {
        let mut rng = Rng::new(43, 0);
        assert!(Coupling::new(1, SubnetKind::Plain { hidden: 4 }, false, &mut rng).is_err());
    }

    #[test]
    fn forward_adjoint_identity() {
        let mut rng = Rng::new(44, 0);
        let cp = randomized_coupling(4, false, &mut rng);
        let x = rand_tensor(vec![3, 3, 4], &mut rng).to_vol().unwrap();
        let (y, cache) = cp.fwd(&x).unwrap();
        let t = rand_tensor(vec![3, 3, 4], &mut rng).to_vol().unwrap();
        let cot = rand_tensor(vec![3, 3, 4], &mut rng).to_vol().unwrap();
        let jv = cp.fwd_jvp(&cache, &t);
        let vj = cp.fwd_vjp(&cache, &cot, None);
        let lhs = jv.dot(&cot);
        let rhs = t.dot(&vj);
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn inverse_vjp_matches_fd() {
        let mut rng = Rng::new(45, 0);
        let cp = randomized_coupling(4, true, &mut rng);
        let y = rand_tensor(vec![2, 2, 4], &mut rng).to_vol().unwrap();
        let (x0, cache) = cp.inv(&y).unwrap();
        let cot = rand_tensor(vec![2, 2, 4], &mut rng).to_vol().unwrap();
        let ybar = cp.inv_vjp(&cache, &cot, None);
        let t = rand_tensor(vec![2, 2, 4], &mut rng).to_vol().unwrap();
        let eps = 1e-5;
        let mut y2 = y.clone();
        for (a, b) in y2.data.iter_mut().zip(&t.data) {
            *a += eps * b;
        }
        let (x2, _) = cp.inv(&y2).unwrap();
        let fd = x2.sub(&x0).scale(1.0 / eps).dot(&cot);
        let an = t.dot(&ybar);
        assert!((fd - an).abs() <= 1e-3 * an.abs().max(1.0), "fd {fd} vs analytic {an}");
    }
}
