//! 1×1 convolutions: bijective (square kernel), injective-linear
//! (channel-expanding kernel), and injective-ReLU (implicit [w; −w] kernel
//! followed by ReLU). Each variant has a per-pixel matrix forward, a
//! Tikhonov-regularized left pseudoinverse, an input-independent
//! log-det Jacobian, and exact JVP/VJP/parameter-gradient paths.

use crate::error::{Error, Result};
use crate::substrate::linalg::{inverse_spd, svd_small, Mat};
use crate::substrate::rng::Rng;
use crate::substrate::tensor::{Tensor, Vol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Square invertible kernel, c_out = c_in.
    Bijective,
    /// Expanding kernel, c_out = k·c_in with k ≥ 1.
    InjectiveLinear,
    /// Stored kernel has ⌊k/2⌋·c_in rows; the layer applies [w; −w] then
    /// ReLU, so the effective output has twice the stored rows. k ≥ 2.
    InjectiveRelu,
}

#[derive(Debug, Clone)]
pub struct Conv1x1 {
    pub(crate) w: Vec<f32>, // stored kernel, c_out × c_in row-major
    pub(crate) c_out: usize,
    pub(crate) c_in: usize,
    pub mode: ConvMode,
    /// Tikhonov regularizer for the pseudoinverse (w^T w + λI)^{-1} w^T.
    pub lambda: f32,
}

pub(crate) struct ConvFwdCache {
    /// ReLU activation mask over 2·c_out channels per pixel; empty for the
    /// linear modes.
    pub mask: Vec<bool>,
}

pub(crate) struct ConvPinvCache {
    /// Collapsed per-pixel input u (c_out channels): y itself for linear
    /// modes, y_top − y_bottom for the ReLU mode.
    pub u: Vol,
    /// Pseudoinverse output.
    pub x: Vol,
    /// (wᵀw + λI)^{-1}, cached for the backward pass.
    pub g: Mat,
}

impl Conv1x1 {
    pub fn new(w: Vec<f32>, c_out: usize, c_in: usize, mode: ConvMode, lambda: f32) -> Result<Self> {
        if w.len() != c_out * c_in {
            return Err(Error::Shape("kernel size mismatch".into()));
        }
        let conv = Conv1x1 {
            w,
            c_out,
            c_in,
            mode,
            lambda,
        };
        conv.validate()?;
        Ok(conv)
    }

    /// Random kernel with orthonormal columns (unit singular values), which
    /// guarantees injectivity and perfect conditioning at initialization.
    pub fn init_orthogonal(c_out: usize, c_in: usize, mode: ConvMode, lambda: f32, rng: &mut Rng) -> Result<Self> {
        let m = crate::substrate::linalg::orthonormal_columns(c_out, c_in, rng);
        let w = m.data.iter().map(|&v| v as f32).collect();
        Conv1x1::new(w, c_out, c_in, mode, lambda)
    }

    fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Invalid("tikhonov lambda must be non-negative".into()));
        }
        match self.mode {
            ConvMode::Bijective => {
                if self.c_out != self.c_in {
                    return Err(Error::Invalid(format!(
                        "bijective 1x1 conv needs square kernel, got {}x{}",
                        self.c_out, self.c_in
                    )));
                }
            }
            ConvMode::InjectiveLinear => {
                if self.c_out < self.c_in || self.c_out % self.c_in != 0 {
                    return Err(Error::Invalid(format!(
                        "injective-linear kernel needs c_out = k*c_in with k >= 1, got {}x{}",
                        self.c_out, self.c_in
                    )));
                }
            }
            ConvMode::InjectiveRelu => {
                // Stored rows are floor(k/2)*c_in and the effective output is
                // twice that, so k >= 2 exactly when c_out >= c_in.
                if self.c_out < self.c_in || self.c_out % self.c_in != 0 {
                    return Err(Error::Invalid(format!(
                        "injective-relu kernel needs floor(k/2)*c_in stored rows with k >= 2, got {}x{}",
                        self.c_out, self.c_in
                    )));
                }
            }
        }
        Ok(())
    }

    /// Channels the layer consumes.
    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    /// Channels the layer produces (2·c_out for the ReLU variant).
    pub fn out_channels(&self) -> usize {
        match self.mode {
            ConvMode::InjectiveRelu => 2 * self.c_out,
            _ => self.c_out,
        }
    }

    pub(crate) fn w_mat(&self) -> Mat {
        Mat {
            rows: self.c_out,
            cols: self.c_in,
            data: self.w.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Smallest singular value of the stored kernel.
    pub fn smin(&self) -> Result<f64> {
        let svd = svd_small(&self.w_mat())?;
        Ok(*svd.s.last().unwrap())
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        Ok(svd_small(&self.w_mat())?.s)
    }

    /// Per-pixel forward: W·x, or ReLU([W; −W]·x) in ReLU mode.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let vol = x.to_vol()?;
        Ok(self.fwd(&vol)?.0.to_tensor())
    }

    pub(crate) fn fwd(&self, x: &Vol) -> Result<(Vol, ConvFwdCache)> {
        if x.c != self.c_in {
            return Err(Error::Shape(format!(
                "conv1x1 expects {} input channels, got {}",
                self.c_in, x.c
            )));
        }
        let w = self.w_mat();
        let pixels = x.h * x.w;
        match self.mode {
            ConvMode::Bijective | ConvMode::InjectiveLinear => {
                let mut out = Vol::zeros(x.h, x.w, self.c_out);
                for p in 0..pixels {
                    let xi = &x.data[p * x.c..(p + 1) * x.c];
                    let yo = w.matvec(xi);
                    out.data[p * self.c_out..(p + 1) * self.c_out].copy_from_slice(&yo);
                }
                Ok((out, ConvFwdCache { mask: Vec::new() }))
            }
            ConvMode::InjectiveRelu => {
                let co = 2 * self.c_out;
                let mut out = Vol::zeros(x.h, x.w, co);
                let mut mask = vec![false; pixels * co];
                for p in 0..pixels {
                    let xi = &x.data[p * x.c..(p + 1) * x.c];
                    let top = w.matvec(xi);
                    for (i, &t) in top.iter().enumerate() {
                        let pos = t > 0.0;
                        let neg = -t > 0.0;
                        if pos {
                            out.data[p * co + i] = t;
                        }
                        if neg {
                            out.data[p * co + self.c_out + i] = -t;
                        }
                        mask[p * co + i] = pos;
                        mask[p * co + self.c_out + i] = neg;
                    }
                }
                Ok((out, ConvFwdCache { mask }))
            }
        }
    }

    fn gram_inverse(&self) -> Result<Mat> {
        let w = self.w_mat();
        let mut gram = w.transpose().matmul(&w);
        for i in 0..self.c_in {
            *gram.at_mut(i, i) += self.lambda as f64;
        }
        inverse_spd(&gram).map_err(|_| {
            Error::Numerical("conv1x1 pseudoinverse: (w^T w + lambda I) numerically singular".into())
        })
    }

    /// Left pseudoinverse: x = (wᵀw + λI)^{-1} wᵀ u, with u = y for the
    /// linear modes and u = y_top − y_bottom for the ReLU mode.
    pub fn pseudo_inverse(&self, y: &Tensor) -> Result<Tensor> {
        let vol = y.to_vol()?;
        Ok(self.pinv(&vol)?.0.to_tensor())
    }

    pub(crate) fn pinv(&self, y: &Vol) -> Result<(Vol, ConvPinvCache)> {
        if y.c != self.out_channels() {
            return Err(Error::Shape(format!(
                "conv1x1 pseudoinverse expects {} channels, got {}",
                self.out_channels(),
                y.c
            )));
        }
        let g = self.gram_inverse()?;
        let w = self.w_mat();
        let pixels = y.h * y.w;
        let mut u = Vol::zeros(y.h, y.w, self.c_out);
        match self.mode {
            ConvMode::Bijective | ConvMode::InjectiveLinear => {
                u.data.copy_from_slice(&y.data);
            }
            ConvMode::InjectiveRelu => {
                for p in 0..pixels {
                    for i in 0..self.c_out {
                        u.data[p * self.c_out + i] =
                            y.data[p * y.c + i] - y.data[p * y.c + self.c_out + i];
                    }
                }
            }
        }
        let mut x = Vol::zeros(y.h, y.w, self.c_in);
        for p in 0..pixels {
            let up = &u.data[p * self.c_out..(p + 1) * self.c_out];
            let wtu = w.matvec_t(up);
            let xp = g.matvec(&wtu);
            x.data[p * self.c_in..(p + 1) * self.c_in].copy_from_slice(&xp);
        }
        Ok((x.clone(), ConvPinvCache { u, x, g }))
    }

    /// log|det JᵀJ| over an H×W feature map: H·W·Σ log s_i(w)². The ReLU
    /// variant shares the value because flipping row signs leaves |det|
    /// unchanged. Errors on a numerically zero singular value.
    pub fn log_det(&self, h: usize, w: usize) -> Result<f64> {
        let s = self.singular_values()?;
        let smax = s[0];
        if s.iter().any(|&v| v <= smax * 1e-12 || v == 0.0) {
            return Err(Error::Numerical(
                "conv1x1 log-det: kernel has a zero singular value".into(),
            ));
        }
        Ok(2.0 * (h * w) as f64 * s.iter().map(|v| v.ln()).sum::<f64>())
    }

    /// JVP of the forward map at the cached activation pattern.
    pub(crate) fn fwd_jvp(&self, cache: &ConvFwdCache, t: &Vol) -> Vol {
        let w = self.w_mat();
        let pixels = t.h * t.w;
        match self.mode {
            ConvMode::Bijective | ConvMode::InjectiveLinear => {
                let mut out = Vol::zeros(t.h, t.w, self.c_out);
                for p in 0..pixels {
                    let ti = &t.data[p * t.c..(p + 1) * t.c];
                    let yo = w.matvec(ti);
                    out.data[p * self.c_out..(p + 1) * self.c_out].copy_from_slice(&yo);
                }
                out
            }
            ConvMode::InjectiveRelu => {
                let co = 2 * self.c_out;
                let mut out = Vol::zeros(t.h, t.w, co);
                for p in 0..pixels {
                    let ti = &t.data[p * t.c..(p + 1) * t.c];
                    let top = w.matvec(ti);
                    for i in 0..self.c_out {
                        if cache.mask[p * co + i] {
                            out.data[p * co + i] = top[i];
                        }
                        if cache.mask[p * co + self.c_out + i] {
                            out.data[p * co + self.c_out + i] = -top[i];
                        }
                    }
                }
                out
            }
        }
    }

    /// VJP of the forward map; parameter gradients accumulate into the flat
    /// kernel layout when `grads` is given.
    pub(crate) fn fwd_vjp(
        &self,
        x: &Vol,
        cache: &ConvFwdCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Vol {
        let w = self.w_mat();
        let pixels = x.h * x.w;
        let mut xbar = Vol::zeros(x.h, x.w, self.c_in);
        let mut gref = grads;
        match self.mode {
            ConvMode::Bijective | ConvMode::InjectiveLinear => {
                for p in 0..pixels {
                    let cp = &cot.data[p * self.c_out..(p + 1) * self.c_out];
                    let back = w.matvec_t(cp);
                    xbar.data[p * self.c_in..(p + 1) * self.c_in].copy_from_slice(&back);
                    if let Some(g) = gref.as_deref_mut() {
                        let xp = &x.data[p * self.c_in..(p + 1) * self.c_in];
                        for r in 0..self.c_out {
                            for c in 0..self.c_in {
                                g[r * self.c_in + c] += cp[r] * xp[c];
                            }
                        }
                    }
                }
            }
            ConvMode::InjectiveRelu => {
                let co = 2 * self.c_out;
                for p in 0..pixels {
                    // Effective cotangent on the stored rows:
                    // masked top minus masked bottom.
                    let mut eff = vec![0.0f64; self.c_out];
                    for i in 0..self.c_out {
                        if cache.mask[p * co + i] {
                            eff[i] += cot.data[p * co + i];
                        }
                        if cache.mask[p * co + self.c_out + i] {
                            eff[i] -= cot.data[p * co + self.c_out + i];
                        }
                    }
                    let back = w.matvec_t(&eff);
                    xbar.data[p * self.c_in..(p + 1) * self.c_in].copy_from_slice(&back);
                    if let Some(g) = gref.as_deref_mut() {
                        let xp = &x.data[p * self.c_in..(p + 1) * self.c_in];
                        for r in 0..self.c_out {
                            for c in 0..self.c_in {
                                g[r * self.c_in + c] += eff[r] * xp[c];
                            }
                        }
                    }
                }
            }
        }
        xbar
    }

    /// VJP of the pseudoinverse, with exact differentiation through the
    /// Tikhonov-regularized formula. Per pixel, with a = G·x̄, q = w·x:
    /// w̄ += (u − q)·aᵀ − (w·a)·xᵀ, and the input cotangent is
    /// ū = w·a mapped back through [I; −I] in ReLU mode.
    pub(crate) fn pinv_vjp(
        &self,
        cache: &ConvPinvCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Vol {
        let w = self.w_mat();
        let pixels = cache.u.h * cache.u.w;
        let mut ubar = Vol::zeros(cache.u.h, cache.u.w, self.c_out);
        let mut gref = grads;
        for p in 0..pixels {
            let cotp = &cot.data[p * self.c_in..(p + 1) * self.c_in];
            let a = cache.g.matvec(cotp);
            let wa = w.matvec(&a);
            ubar.data[p * self.c_out..(p + 1) * self.c_out].copy_from_slice(&wa);
            if let Some(g) = gref.as_deref_mut() {
                let up = &cache.u.data[p * self.c_out..(p + 1) * self.c_out];
                let xp = &cache.x.data[p * self.c_in..(p + 1) * self.c_in];
                let q = w.matvec(xp);
                for r in 0..self.c_out {
                    let uq = up[r] - q[r];
                    for c in 0..self.c_in {
                        g[r * self.c_in + c] += uq * a[c] - wa[r] * xp[c];
                    }
                }
            }
        }
        match self.mode {
            ConvMode::Bijective | ConvMode::InjectiveLinear => ubar,
            ConvMode::InjectiveRelu => {
                let co = 2 * self.c_out;
                let mut ybar = Vol::zeros(cache.u.h, cache.u.w, co);
                for p in 0..pixels {
                    for i in 0..self.c_out {
                        let v = ubar.data[p * self.c_out + i];
                        ybar.data[p * co + i] = v;
                        ybar.data[p * co + self.c_out + i] = -v;
                    }
                }
                ybar
            }
        }
    }

    /// Gradient of `weight · log|det JᵀJ|` with respect to the kernel:
    /// 2·H·W·weight · w(wᵀw)^{-1}.
    pub(crate) fn logdet_grad(&self, h: usize, w: usize, weight: f64, grads: &mut [f64]) -> Result<()> {
        let wm = self.w_mat();
        let gram = wm.transpose().matmul(&wm);
        let inv = inverse_spd(&gram)
            .map_err(|_| Error::Numerical("conv1x1 log-det gradient: singular gram matrix".into()))?;
        let wg = wm.matmul(&inv);
        let scale = 2.0 * (h * w) as f64 * weight;
        for r in 0..self.c_out {
            for c in 0..self.c_in {
                grads[r * self.c_in + c] += scale * wg.at(r, c);
            }
        }
        Ok(())
    }

    pub(crate) fn n_params(&self) -> usize {
        self.w.len()
    }

    pub(crate) fn read_params(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&self.w);
    }

    pub(crate) fn write_params(&mut self, src: &[f32]) {
        self.w.copy_from_slice(src);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(w: Vec<f32>, co: usize, ci: usize, mode: ConvMode, lambda: f32) -> Conv1x1 {
        Conv1x1::new(w, co, ci, mode, lambda).unwrap()
    }

    #[test]
    fn linear_expansion_example() {
        let c = conv(vec![1.0, 0.0], 2, 1, ConvMode::InjectiveLinear, 0.0);
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
        let back = c.pseudo_inverse(&y).unwrap();
        assert!((back.data()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn relu_sign_split_example() {
        let c = conv(vec![1.0], 1, 1, ConvMode::InjectiveRelu, 0.0);
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        assert_eq!(c.forward(&x).unwrap().data(), &[3.0, 0.0]);
        let xn = Tensor::new(vec![1, 1, 1], vec![-2.0]).unwrap();
        let y = c.forward(&xn).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
        let back = c.pseudo_inverse(&y).unwrap();
        assert!((back.data()[0] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn bijective_rotation_example() {
        let c = conv(vec![0.0, -1.0, 1.0, 0.0], 2, 2, ConvMode::Bijective, 0.0);
        let x = Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap();
        let y = c.forward(&x).unwrap();
        assert!((y.data()[0]).abs() < 1e-7 && (y.data()[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let c = conv(vec![1.0, 0.0], 2, 1, ConvMode::InjectiveLinear, 0.0);
        let x = Tensor::new(vec![1, 1, 3], vec![1.0; 3]).unwrap();
        assert!(c.forward(&x).is_err());
        assert!(c.pseudo_inverse(&x).is_err());
    }

    #[test]
    fn logdet_examples() {
        let id = conv(vec![1.0, 0.0, 0.0, 1.0], 2, 2, ConvMode::Bijective, 0.0);
        assert!(id.log_det(3, 5).unwrap().abs() < 1e-12);
        let c = conv(vec![2.0, 0.0], 2, 1, ConvMode::InjectiveLinear, 0.0);
        let ld = c.log_det(1, 1).unwrap();
        assert!((ld - 4.0f64.ln()).abs() < 1e-9, "got {ld}");
    }

    #[test]
    fn zero_singular_value_rejected_in_logdet() {
        let c = conv(vec![1.0, 0.0, 1.0, 0.0], 2, 2, ConvMode::Bijective, 0.0);
        assert!(c.log_det(1, 1).is_err());
    }

    #[test]
    fn tikhonov_round_trip_well_conditioned() {
        let mut rng = Rng::new(31, 0);
        let c = Conv1x1::init_orthogonal(4, 2, ConvMode::InjectiveLinear, 1e-6, &mut rng).unwrap();
        let x = Tensor::new(vec![2, 2, 2], (0..8).map(|_| rng.normal() as f32).collect()).unwrap();
        let y = c.forward(&x).unwrap();
        let back = c.pseudo_inverse(&y).unwrap();
        assert!(x.rel_err(&back) <= 1e-4, "rel err {}", x.rel_err(&back));
    }

    #[test]
    fn relu_round_trip() {
        let mut rng = Rng::new(32, 0);
        let c = Conv1x1::init_orthogonal(2, 2, ConvMode::InjectiveRelu, 0.0, &mut rng).unwrap();
        let x = Tensor::new(vec![3, 3, 2], (0..18).map(|_| rng.normal() as f32).collect()).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.dims(), &[3, 3, 4]);
        let back = c.pseudo_inverse(&y).unwrap();
        assert!(x.rel_err(&back) <= 1e-6);
    }

    #[test]
    fn forward_jvp_vjp_adjoint() {
        let mut rng = Rng::new(33, 0);
        for mode in [ConvMode::Bijective, ConvMode::InjectiveLinear, ConvMode::InjectiveRelu] {
            let (co, ci) = match mode {
                ConvMode::Bijective => (3, 3),
                _ => (4, 2),
            };
            let c = Conv1x1::init_orthogonal(co, ci, mode, 0.0, &mut rng).unwrap();
            let x = Vol {
                h: 2,
                w: 2,
                c: ci,
                data: rng.normal_vec(4 * ci),
            };
            let (y, cache) = c.fwd(&x).unwrap();
            let t = Vol {
                h: 2,
                w: 2,
                c: ci,
                data: rng.normal_vec(4 * ci),
            };
            let cot = Vol {
                h: 2,
                w: 2,
                c: y.c,
                data: rng.normal_vec(4 * y.c),
            };
            let jv = c.fwd_jvp(&cache, &t);
            let vj = c.fwd_vjp(&x, &cache, &cot, None);
            let lhs = jv.dot(&cot);
            let rhs = t.dot(&vj);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{mode:?}: {lhs} vs {rhs}");
        }
    }

    /// Pseudoinverse parameter gradient against central differences,
    /// including the lambda-regularized case.
    #[test]
    fn pinv_param_gradient_matches_fd() {
        let mut rng = Rng::new(34, 0);
        for (mode, lambda) in [
            (ConvMode::InjectiveLinear, 0.0f32),
            (ConvMode::InjectiveLinear, 1e-2),
            (ConvMode::InjectiveRelu, 1e-3),
            (ConvMode::Bijective, 0.0),
        ] {
            let (co, ci) = match mode {
                ConvMode::Bijective => (2, 2),
                _ => (4, 2),
            };
            let mut c = Conv1x1::init_orthogonal(co, ci, mode, lambda, &mut rng).unwrap();
            let y = Vol {
                h: 1,
                w: 2,
                c: c.out_channels(),
                data: rng.normal_vec(2 * c.out_channels()),
            };
            let (x0, cache) = c.pinv(&y).unwrap();
            let cot = Vol {
                h: 1,
                w: 2,
                c: ci,
                data: rng.normal_vec(2 * ci),
            };
            let mut grads = vec![0.0; c.n_params()];
            let ybar = c.pinv_vjp(&cache, &cot, Some(&mut grads));
            // Input gradient check via linearity of the pinv in y.
            let ty = Vol {
                h: 1,
                w: 2,
                c: y.c,
                data: rng.normal_vec(2 * y.c),
            };
            let mut y2 = y.clone();
            let eps = 1e-4;
            for (a, b) in y2.data.iter_mut().zip(&ty.data) {
                *a += eps * b;
            }
            let (x2, _) = c.pinv(&y2).unwrap();
            let dir = x2.sub(&x0).scale(1.0 / eps);
            let lhs = dir.dot(&cot);
            let rhs = ty.dot(&ybar);
            assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0), "{mode:?} input grad");
            // Kernel gradient check.
            let h = 1e-3f32;
            for idx in 0..c.n_params() {
                let orig = c.w[idx];
                c.w[idx] = orig + h;
                let (xp, _) = c.pinv(&y).unwrap();
                c.w[idx] = orig - h;
                let (xm, _) = c.pinv(&y).unwrap();
                c.w[idx] = orig;
                let realized = (orig + h) as f64 - (orig - h) as f64;
                let fd = (xp.dot(&cot) - xm.dot(&cot)) / realized;
                assert!(
                    (fd - grads[idx]).abs() <= 2e-4 * grads[idx].abs().max(1.0),
                    "{mode:?} lambda {lambda}: param {idx} analytic {} vs fd {fd}",
                    grads[idx]
                );
            }
        }
    }

    #[test]
    fn logdet_gradient_matches_fd() {
        let mut rng = Rng::new(35, 0);
        let mut c = Conv1x1::init_orthogonal(4, 2, ConvMode::InjectiveLinear, 0.0, &mut rng).unwrap();
        // Perturb away from orthonormal so the gradient is non-trivial.
        for v in c.w.iter_mut() {
            *v += (rng.normal() * 0.2) as f32;
        }
        let mut grads = vec![0.0; c.n_params()];
        c.logdet_grad(2, 3, 1.0, &mut grads).unwrap();
        let h = 1e-3f32;
        for idx in 0..c.n_params() {
            let orig = c.w[idx];
            c.w[idx] = orig + h;
            let fp = c.log_det(2, 3).unwrap();
            c.w[idx] = orig - h;
            let fm = c.log_det(2, 3).unwrap();
            c.w[idx] = orig;
            let realized = (orig + h) as f64 - (orig - h) as f64;
            let fd = (fp - fm) / realized;
            assert!(
                (fd - grads[idx]).abs() <= 1e-4 * grads[idx].abs().max(1.0),
                "param {idx}: analytic {} vs fd {fd}",
                grads[idx]
            );
        }
    }
}
