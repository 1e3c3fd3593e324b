//! The layer zoo and its composition machinery.
//!
//! Every layer has two directions: `gen` (latent → data, the direction used
//! by generation) and `data` (data → latent, the exact inverse or
//! pseudoinverse on the range). Log-det Jacobians are always reported for
//! the `gen` map as log|det JᵀJ|, evaluated at the gen-direction input.
//!
//! Within a stack, activation normalization denormalizes on the `gen` pass
//! and normalizes on the `data` pass, so its data-dependent initialization
//! standardizes whatever the data pass feeds it.

pub mod actnorm;
pub mod conv1x1;
pub mod coupling;
pub mod squeeze;
pub mod subnet;

pub use actnorm::ActNorm;
pub use conv1x1::{Conv1x1, ConvMode};
pub use coupling::Coupling;
pub use squeeze::{squeeze_apply, SqueezeDirection, SqueezeSpec};
pub use subnet::SubnetKind;

use crate::error::{Error, Result};
use crate::substrate::tensor::{Tensor, Vol};

/// Direction selector for the public per-layer apply operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One entry of an injective or bijective stack.
#[derive(Debug, Clone)]
pub enum Layer {
    ActNorm(ActNorm),
    Conv(Conv1x1),
    Coupling(Coupling),
    /// Gen direction is depth-to-space (upsqueeze); data direction is
    /// space-to-depth.
    Squeeze,
}

pub(crate) enum LayerCache {
    None,
    ConvFwd(conv1x1::ConvFwdCache),
    ConvPinv(conv1x1::ConvPinvCache),
    Coupling(coupling::CouplingCache),
}

impl Layer {
    /// Output shape of the gen-direction map.
    pub fn gen_out_shape(&self, shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (h, w, c) = shape;
        match self {
            Layer::ActNorm(a) => {
                if a.channels() != c {
                    return Err(Error::Shape(format!(
                        "actnorm channels {} vs input {c}",
                        a.channels()
                    )));
                }
                Ok((h, w, c))
            }
            Layer::Conv(cv) => {
                if cv.in_channels() != c {
                    return Err(Error::Shape(format!(
                        "conv1x1 expects {} channels, got {c}",
                        cv.in_channels()
                    )));
                }
                Ok((h, w, cv.out_channels()))
            }
            Layer::Coupling(cp) => {
                if cp.channels() != c {
                    return Err(Error::Shape(format!(
                        "coupling expects {} channels, got {c}",
                        cp.channels()
                    )));
                }
                Ok((h, w, c))
            }
            Layer::Squeeze => {
                if c % 4 != 0 {
                    return Err(Error::Shape(format!(
                        "upsqueeze needs channels divisible by 4, got {c}"
                    )));
                }
                Ok((h * 2, w * 2, c / 4))
            }
        }
    }

    pub(crate) fn gen(&self, x: &Vol) -> Result<(Vol, LayerCache)> {
        match self {
            Layer::ActNorm(a) => Ok((a.denormalize(x), LayerCache::None)),
            Layer::Conv(c) => {
                let (y, cache) = c.fwd(x)?;
                Ok((y, LayerCache::ConvFwd(cache)))
            }
            Layer::Coupling(cp) => {
                let (y, cache) = cp.fwd(x)?;
                Ok((y, LayerCache::Coupling(cache)))
            }
            Layer::Squeeze => Ok((squeeze::depth_to_space(x)?, LayerCache::None)),
        }
    }

    pub(crate) fn data(&self, y: &Vol) -> Result<(Vol, LayerCache)> {
        match self {
            Layer::ActNorm(a) => Ok((a.normalize(y), LayerCache::None)),
            Layer::Conv(c) => {
                let (x, cache) = c.pinv(y)?;
                Ok((x, LayerCache::ConvPinv(cache)))
            }
            Layer::Coupling(cp) => {
                let (x, cache) = cp.inv(y)?;
                Ok((x, LayerCache::Coupling(cache)))
            }
            Layer::Squeeze => Ok((squeeze::space_to_depth(y)?, LayerCache::None)),
        }
    }

    pub(crate) fn gen_jvp(&self, cache: &LayerCache, t: &Vol) -> Result<Vol> {
        match (self, cache) {
            (Layer::ActNorm(a), _) => {
                let mut out = t.clone();
                for p in 0..t.h * t.w {
                    for ch in 0..t.c {
                        out.data[p * t.c + ch] *= a.sigma[ch] as f64;
                    }
                }
                Ok(out)
            }
            (Layer::Conv(c), LayerCache::ConvFwd(cc)) => Ok(c.fwd_jvp(cc, t)),
            (Layer::Coupling(cp), LayerCache::Coupling(cc)) => Ok(cp.fwd_jvp(cc, t)),
            (Layer::Squeeze, _) => squeeze::depth_to_space(t),
            _ => Err(Error::Invalid("layer cache mismatch in gen_jvp".into())),
        }
    }

    pub(crate) fn gen_vjp(
        &self,
        gen_in: &Vol,
        cache: &LayerCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Result<Vol> {
        match (self, cache) {
            (Layer::ActNorm(a), _) => Ok(a.denorm_vjp(gen_in, cot, grads)),
            (Layer::Conv(c), LayerCache::ConvFwd(cc)) => Ok(c.fwd_vjp(gen_in, cc, cot, grads)),
            (Layer::Coupling(cp), LayerCache::Coupling(cc)) => Ok(cp.fwd_vjp(cc, cot, grads)),
            (Layer::Squeeze, _) => squeeze::space_to_depth(cot),
            _ => Err(Error::Invalid("layer cache mismatch in gen_vjp".into())),
        }
    }

    pub(crate) fn data_vjp(
        &self,
        data_in: &Vol,
        cache: &LayerCache,
        cot: &Vol,
        grads: Option<&mut [f64]>,
    ) -> Result<Vol> {
        match (self, cache) {
            (Layer::ActNorm(a), _) => Ok(a.norm_vjp(data_in, cot, grads)),
            (Layer::Conv(c), LayerCache::ConvPinv(cc)) => Ok(c.pinv_vjp(cc, cot, grads)),
            (Layer::Coupling(cp), LayerCache::Coupling(cc)) => Ok(cp.inv_vjp(cc, cot, grads)),
            (Layer::Squeeze, _) => squeeze::depth_to_space(cot),
            _ => Err(Error::Invalid("layer cache mismatch in data_vjp".into())),
        }
    }

    /// log|det JᵀJ| of the gen map at the cached gen-direction input.
    pub(crate) fn logdet_jtj(&self, gen_in: &Vol, cache: &LayerCache) -> Result<f64> {
        match (self, cache) {
            (Layer::ActNorm(a), _) => Ok(a.logdet_jtj_denorm(gen_in.h, gen_in.w)),
            (Layer::Conv(c), _) => c.log_det(gen_in.h, gen_in.w),
            (Layer::Coupling(_), LayerCache::Coupling(cc)) => {
                Ok(Coupling::logdet_jtj_from_cache(cc))
            }
            (Layer::Squeeze, _) => Ok(0.0),
            _ => Err(Error::Invalid("layer cache mismatch in logdet".into())),
        }
    }

    /// Adds ∂(weight · log|det JᵀJ|)/∂(gen input) into `cot` and the matching
    /// parameter gradients into `grads`.
    pub(crate) fn logdet_vjp(
        &self,
        gen_in: &Vol,
        cache: &LayerCache,
        weight: f64,
        cot: &mut Vol,
        grads: Option<&mut [f64]>,
    ) -> Result<()> {
        match (self, cache) {
            (Layer::ActNorm(a), _) => {
                if let Some(g) = grads {
                    a.logdet_grad(gen_in.h, gen_in.w, weight, g);
                }
                Ok(())
            }
            (Layer::Conv(c), _) => {
                if let Some(g) = grads {
                    c.logdet_grad(gen_in.h, gen_in.w, weight, g)?;
                }
                Ok(())
            }
            (Layer::Coupling(cp), LayerCache::Coupling(cc)) => {
                cp.logdet_vjp(cc, weight, cot, grads);
                Ok(())
            }
            (Layer::Squeeze, _) => Ok(()),
            _ => Err(Error::Invalid("layer cache mismatch in logdet_vjp".into())),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Layer::ActNorm(a) => a.n_params(),
            Layer::Conv(c) => c.n_params(),
            Layer::Coupling(cp) => cp.n_params(),
            Layer::Squeeze => 0,
        }
    }

    pub fn read_params(&self, out: &mut Vec<f32>) {
        match self {
            Layer::ActNorm(a) => a.read_params(out),
            Layer::Conv(c) => c.read_params(out),
            Layer::Coupling(cp) => cp.read_params(out),
            Layer::Squeeze => {}
        }
    }

    pub fn write_params(&mut self, src: &[f32]) {
        match self {
            Layer::ActNorm(a) => a.write_params(src),
            Layer::Conv(c) => c.write_params(src),
            Layer::Coupling(cp) => cp.write_params(src),
            Layer::Squeeze => {}
        }
    }

    pub fn param_entries(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        match self {
            Layer::ActNorm(a) => {
                out.push((format!("{prefix}.mu"), vec![a.channels()]));
                out.push((format!("{prefix}.sigma"), vec![a.channels()]));
            }
            Layer::Conv(c) => {
                out.push((format!("{prefix}.w"), vec![c.c_out, c.c_in]));
            }
            Layer::Coupling(cp) => cp.param_entries(prefix, out),
            Layer::Squeeze => {}
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Layer::ActNorm(_) => "actnorm",
            Layer::Conv(_) => "conv1x1",
            Layer::Coupling(_) => "coupling",
            Layer::Squeeze => "squeeze",
        }
    }
}

/// Recorded activations of one pass over a stack.
///
/// `acts` runs along the pass direction: acts[0] is the pass input and
/// acts[k+1] the output after the k-th applied layer. For a data pass,
/// layers are applied in reverse stack order, and each layer's data output
/// equals its gen-direction input.
pub(crate) struct PassCache {
    pub acts: Vec<Vol>,
    pub caches: Vec<LayerCache>,
    pub genward: bool,
}

impl PassCache {
    pub fn output(&self) -> &Vol {
        self.acts.last().unwrap()
    }

    /// Gen-direction input of stack layer `i`.
    pub fn gen_input(&self, n_layers: usize, i: usize) -> &Vol {
        if self.genward {
            &self.acts[i]
        } else {
            &self.acts[n_layers - i]
        }
    }

    fn layer_cache(&self, n_layers: usize, i: usize) -> &LayerCache {
        if self.genward {
            &self.caches[i]
        } else {
            &self.caches[n_layers - 1 - i]
        }
    }
}

/// An ordered stack of layers with shared walkers for forward passes,
/// reverse-mode sweeps, and log-det accounting.
#[derive(Debug, Clone)]
pub(crate) struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Stack { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn trace_gen_shape(
        &self,
        mut shape: (usize, usize, usize),
    ) -> Result<(usize, usize, usize)> {
        for l in &self.layers {
            shape = l.gen_out_shape(shape)?;
        }
        Ok(shape)
    }

    pub fn gen_pass(&self, x: &Vol) -> Result<PassCache> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for l in &self.layers {
            let (y, cache) = l.gen(acts.last().unwrap())?;
            acts.push(y);
            caches.push(cache);
        }
        Ok(PassCache {
            acts,
            caches,
            genward: true,
        })
    }

    pub fn data_pass(&self, y: &Vol) -> Result<PassCache> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        acts.push(y.clone());
        for l in self.layers.iter().rev() {
            let (x, cache) = l.data(acts.last().unwrap())?;
            acts.push(x);
            caches.push(cache);
        }
        Ok(PassCache {
            acts,
            caches,
            genward: false,
        })
    }

    /// JVP through the gen pass.
    pub fn gen_jvp(&self, cache: &PassCache, t: &Vol) -> Result<Vol> {
        debug_assert!(cache.genward);
        let mut cur = t.clone();
        for (i, l) in self.layers.iter().enumerate() {
            cur = l.gen_jvp(&cache.caches[i], &cur)?;
        }
        Ok(cur)
    }

    /// Reverse-mode sweep over a gen pass: cotangent on the gen output comes
    /// in, cotangent on the gen input comes out. When `logdet_weight` is
    /// set, each layer also contributes weight·log|det JᵀJ| evaluated at its
    /// gen input.
    pub fn gen_vjp(
        &self,
        cache: &PassCache,
        cot_out: &Vol,
        mut grads: Option<&mut [f64]>,
        logdet_weight: Option<f64>,
    ) -> Result<Vol> {
        debug_assert!(cache.genward);
        let offsets = self.param_offsets();
        let mut cot = cot_out.clone();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let gen_in = &cache.acts[i];
            let lgrads = grads
                .as_deref_mut()
                .map(|g| &mut g[offsets[i]..offsets[i] + l.n_params()]);
            let mut next = l.gen_vjp(gen_in, &cache.caches[i], &cot, lgrads)?;
            if let Some(w) = logdet_weight {
                let lgrads = grads
                    .as_deref_mut()
                    .map(|g| &mut g[offsets[i]..offsets[i] + l.n_params()]);
                l.logdet_vjp(gen_in, &cache.caches[i], w, &mut next, lgrads)?;
            }
            cot = next;
        }
        Ok(cot)
    }

    /// Reverse-mode sweep over a data pass: cotangent on the latent-side
    /// output comes in, cotangent on the data-side input comes out. Layer
    /// log-det terms (at gen-direction inputs, which the data pass produced)
    /// are injected when `logdet_weight` is set.
    pub fn data_vjp(
        &self,
        cache: &PassCache,
        cot_latent: &Vol,
        mut grads: Option<&mut [f64]>,
        logdet_weight: Option<f64>,
    ) -> Result<Vol> {
        debug_assert!(!cache.genward);
        let n = self.layers.len();
        let offsets = self.param_offsets();
        let mut cot = cot_latent.clone();
        // Walk back along the pass: pass step k applied layer i = n-1-k,
        // consuming acts[k] and producing acts[k+1].
        for k in (0..n).rev() {
            let i = n - 1 - k;
            let l = &self.layers[i];
            let gen_in = &cache.acts[k + 1]; // data output = gen input
            if let Some(w) = logdet_weight {
                let lgrads = grads
                    .as_deref_mut()
                    .map(|g| &mut g[offsets[i]..offsets[i] + l.n_params()]);
                l.logdet_vjp(gen_in, &cache.caches[k], w, &mut cot, lgrads)?;
            }
            let lgrads = grads
                .as_deref_mut()
                .map(|g| &mut g[offsets[i]..offsets[i] + l.n_params()]);
            cot = l.data_vjp(&cache.acts[k], &cache.caches[k], &cot, lgrads)?;
        }
        Ok(cot)
    }

    /// Σ log|det JᵀJ| over the stack at the cached gen-direction inputs.
    pub fn logdet_jtj_sum(&self, cache: &PassCache) -> Result<f64> {
        let n = self.layers.len();
        let mut total = 0.0;
        for (i, l) in self.layers.iter().enumerate() {
            total += l.logdet_jtj(cache.gen_input(n, i), cache.layer_cache(n, i))?;
        }
        Ok(total)
    }

    /// Per-layer log-dets in stack order.
    pub fn logdet_jtj_per_layer(&self, cache: &PassCache) -> Result<Vec<f64>> {
        let n = self.layers.len();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.logdet_jtj(cache.gen_input(n, i), cache.layer_cache(n, i)))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn param_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offs.push(acc);
            acc += l.n_params();
        }
        offs
    }

    pub fn read_params(&self, out: &mut Vec<f32>) {
        for l in &self.layers {
            l.read_params(out);
        }
    }

    pub fn write_params(&mut self, src: &[f32]) {
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let n = l.n_params();
            l.write_params(&src[off..off + n]);
            off += n;
        }
    }

    pub fn param_entries(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.param_entries(&format!("{prefix}.{i}.{}", l.kind_name()), out);
        }
    }

    /// Smallest kernel singular value across all 1×1 convolutions; `None`
    /// when the stack has none.
    pub fn min_conv_smin(&self) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for l in &self.layers {
            if let Layer::Conv(c) = l {
                let s = c.smin()?;
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
        Ok(best)
    }
}

/// Exact directional derivative of a layer's spec-level forward map.
///
/// For the public per-layer contracts the forward map is: actnorm
/// normalization, the channel-expanding convolution, the coupling forward,
/// or space-to-depth.
pub fn layer_jvp(layer: &Layer, x: &Tensor, tangent: &Tensor) -> Result<Tensor> {
    let xv = x.to_vol()?;
    let tv = tangent.to_vol()?;
    match layer {
        Layer::ActNorm(a) => {
            let mut out = tv.clone();
            for p in 0..tv.h * tv.w {
                for ch in 0..tv.c {
                    out.data[p * tv.c + ch] /= a.sigma[ch] as f64;
                }
            }
            Ok(out.to_tensor())
        }
        Layer::Conv(c) => {
            let (_, cache) = c.fwd(&xv)?;
            Ok(c.fwd_jvp(&cache, &tv).to_tensor())
        }
        Layer::Coupling(cp) => {
            let (_, cache) = cp.fwd(&xv)?;
            Ok(cp.fwd_jvp(&cache, &tv).to_tensor())
        }
        Layer::Squeeze => Ok(squeeze::space_to_depth(&tv)?.to_tensor()),
    }
}

/// Adjoint of [`layer_jvp`]: ⟨jvp(u), v⟩ = ⟨u, vjp(v)⟩.
pub fn layer_vjp(layer: &Layer, x: &Tensor, cotangent: &Tensor) -> Result<Tensor> {
    let xv = x.to_vol()?;
    let cv = cotangent.to_vol()?;
    match layer {
        Layer::ActNorm(a) => {
            let mut out = cv.clone();
            for p in 0..cv.h * cv.w {
                for ch in 0..cv.c {
                    out.data[p * cv.c + ch] /= a.sigma[ch] as f64;
                }
            }
            Ok(out.to_tensor())
        }
        Layer::Conv(c) => {
            let (_, cache) = c.fwd(&xv)?;
            Ok(c.fwd_vjp(&xv, &cache, &cv, None).to_tensor())
        }
        Layer::Coupling(cp) => {
            let (_, cache) = cp.fwd(&xv)?;
            Ok(cp.fwd_vjp(&cache, &cv, None).to_tensor())
        }
        Layer::Squeeze => Ok(squeeze::depth_to_space(&cv)?.to_tensor()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::rng::Rng;

    fn rand_tensor(dims: Vec<usize>, rng: &mut Rng) -> Tensor {
        let n = dims.iter().product();
        Tensor::new(dims, (0..n).map(|_| rng.normal() as f32).collect()).unwrap()
    }

    #[test]
    fn identity_like_layer_jvp() {
        let l = Layer::ActNorm(ActNorm::identity(2));
        let mut rng = Rng::new(60, 0);
        let x = rand_tensor(vec![2, 2, 2], &mut rng);
        let t = rand_tensor(vec![2, 2, 2], &mut rng);
        let jv = layer_jvp(&l, &x, &t).unwrap();
        assert_eq!(jv, t);
    }

    #[test]
    fn linear_conv_jvp_vjp_example() {
        let c = Conv1x1::new(vec![2.0, 0.0], 2, 1, ConvMode::InjectiveLinear, 0.0).unwrap();
        let l = Layer::Conv(c);
        let x = Tensor::new(vec![1, 1, 1], vec![0.7]).unwrap();
        let t = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let jv = layer_jvp(&l, &x, &t).unwrap();
        assert_eq!(jv.data(), &[2.0, 0.0]);
        let cot = Tensor::new(vec![1, 1, 2], vec![3.0, 5.0]).unwrap();
        let vj = layer_vjp(&l, &x, &cot).unwrap();
        assert_eq!(vj.data(), &[6.0]);
    }

    #[test]
    fn adjoint_identity_across_layer_zoo() {
        let mut rng = Rng::new(61, 0);
        let layers: Vec<Layer> = vec![
            Layer::ActNorm(ActNorm::new(vec![0.4, -0.3], vec![1.3, 0.6]).unwrap()),
            Layer::Conv(Conv1x1::init_orthogonal(4, 2, ConvMode::InjectiveLinear, 0.0, &mut rng).unwrap()),
            Layer::Conv(Conv1x1::init_orthogonal(2, 2, ConvMode::InjectiveRelu, 0.0, &mut rng).unwrap()),
            {
                let mut cp = Coupling::new(2, SubnetKind::Plain { hidden: 4 }, false, &mut rng).unwrap();
                let mut p = Vec::new();
                cp.read_params(&mut p);
                for v in p.iter_mut() {
                    if *v == 0.0 {
                        *v = (rng.normal() * 0.2) as f32;
                    }
                }
                cp.write_params(&p);
                Layer::Coupling(cp)
            },
        ];
        for l in &layers {
            let x = rand_tensor(vec![2, 2, 2], &mut rng);
            let u = rand_tensor(vec![2, 2, 2], &mut rng);
            let out_dims = layer_jvp(l, &x, &u).unwrap();
            let v = rand_tensor(out_dims.dims().to_vec(), &mut rng);
            let lhs: f64 = out_dims
                .data()
                .iter()
                .zip(v.data())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            let vj = layer_vjp(l, &x, &v).unwrap();
            let rhs: f64 = u
                .data()
                .iter()
                .zip(vj.data())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            assert!(
                (lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0),
                "adjoint identity: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn stack_gen_data_round_trip() {
        let mut rng = Rng::new(62, 0);
        let stack = Stack::new(vec![
            Layer::ActNorm(ActNorm::new(vec![0.1], vec![0.9]).unwrap()),
            Layer::Conv(Conv1x1::init_orthogonal(2, 1, ConvMode::InjectiveLinear, 1e-6, &mut rng).unwrap()),
            Layer::Coupling(Coupling::new(2, SubnetKind::Plain { hidden: 4 }, false, &mut rng).unwrap()),
            Layer::Conv(Conv1x1::init_orthogonal(4, 2, ConvMode::InjectiveLinear, 1e-6, &mut rng).unwrap()),
            Layer::Squeeze,
        ]);
        let z = Vol {
            h: 2,
            w: 2,
            c: 1,
            data: rng.normal_vec(4),
        };
        let genp = stack.gen_pass(&z).unwrap();
        assert_eq!(genp.output().shape(), (4, 4, 1));
        let datap = stack.data_pass(genp.output()).unwrap();
        let back = datap.output();
        let err = back.sub(&z).norm() / z.norm();
        assert!(err <= 1e-4, "round trip rel err {err}");
        // Gen inputs recorded by the data pass match the gen pass.
        for i in 0..stack.len() {
            let a = genp.gen_input(stack.len(), i);
            let b = datap.gen_input(stack.len(), i);
            assert!(a.sub(b).norm() <= 1e-4 * a.norm().max(1.0));
        }
    }
}
