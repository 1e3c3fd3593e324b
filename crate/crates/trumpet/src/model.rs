//! Model assembly: a bijective latent flow `h` on R^d composed with an
//! injective expanding stack `g` into R^D, with generation, left inversion,
//! range projection, exact likelihood and the layerwise likelihood bound.
//!
//! `h` operates on the flat latent viewed as a 1×1×d feature map (so its
//! 1×1 convolutions are dense d×d mixers); the reshape to the spatial
//! latent happens between `h` and `g` and is a row-major reindex.

use crate::error::{Error, Result};
use crate::layers::{ActNorm, Conv1x1, ConvMode, Coupling, Layer, SubnetKind};
use crate::layers::{PassCache, Stack};
use crate::logdet::{self, NeumannConfig};
use crate::substrate::rng::Rng;
use crate::substrate::tensor::{Tensor, Vol};

pub const LN_2PI: f64 = 1.8378770664093453;

/// One resolution stage of the injective stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpec {
    /// Channel-doubling injective revnet steps.
    pub injective_steps: usize,
    /// Bijective revnet steps interleaved after the expansions.
    pub bijective_steps: usize,
    /// Whether the stage ends with an upsqueeze to double resolution.
    pub upsqueeze: bool,
}

/// Architecture description; composing the stages must map the latent shape
/// exactly onto the data shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TrumpetSpec {
    pub latent_dim: usize,
    pub latent_shape: (usize, usize, usize),
    pub data_shape: (usize, usize, usize),
    pub stages: Vec<StageSpec>,
    /// Bijective flow depth (revnet steps in `h`).
    pub bijective_depth: usize,
    /// Injective convolution variant used by the expanding steps.
    pub conv_mode: ConvMode,
    pub subnet: SubnetKind,
    /// Tikhonov regularizer for all pseudoinverses.
    pub lambda: f32,
}

impl TrumpetSpec {
    /// Desk-scale architecture: d = 4 latent as 2×2×1, two stages of two
    /// expansions + one bijective step + upsqueeze each, mapping to 8×8×1.
    pub fn desk() -> Self {
        TrumpetSpec {
            latent_dim: 4,
            latent_shape: (2, 2, 1),
            data_shape: (8, 8, 1),
            stages: vec![
                StageSpec {
                    injective_steps: 2,
                    bijective_steps: 1,
                    upsqueeze: true,
                },
                StageSpec {
                    injective_steps: 2,
                    bijective_steps: 1,
                    upsqueeze: true,
                },
            ],
            bijective_depth: 4,
            conv_mode: ConvMode::InjectiveLinear,
            subnet: SubnetKind::Plain { hidden: 12 },
            lambda: 1e-6,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.data_shape.0 * self.data_shape.1 * self.data_shape.2
    }

    pub fn validate(&self) -> Result<()> {
        let (h0, w0, c0) = self.latent_shape;
        if h0 * w0 * c0 != self.latent_dim {
            return Err(Error::Invalid(format!(
                "latent shape {h0}x{w0}x{c0} does not match latent dim {}",
                self.latent_dim
            )));
        }
        if self.latent_dim >= self.data_dim() {
            return Err(Error::Invalid(format!(
                "latent dim {} must be smaller than data dim {}",
                self.latent_dim,
                self.data_dim()
            )));
        }
        if self.latent_dim < 2 {
            return Err(Error::Invalid("latent dim must be at least 2".into()));
        }
        if matches!(self.conv_mode, ConvMode::Bijective) {
            return Err(Error::Invalid(
                "injective steps need an expanding conv mode (linear or relu)".into(),
            ));
        }
        // Trace shapes through the schedule.
        let (mut h, mut w, mut c) = self.latent_shape;
        for (i, st) in self.stages.iter().enumerate() {
            for _ in 0..st.injective_steps {
                c *= 2;
            }
            if st.bijective_steps > 0 && c < 2 {
                return Err(Error::Invalid(format!(
                    "stage {i}: bijective step on {c} channel(s); couplings need at least 2"
                )));
            }
            if st.upsqueeze {
                if c % 4 != 0 {
                    return Err(Error::Invalid(format!(
                        "stage {i}: upsqueeze needs channels divisible by 4, got {c}"
                    )));
                }
                h *= 2;
                w *= 2;
                c /= 4;
            }
        }
        if (h, w, c) != self.data_shape {
            return Err(Error::Invalid(format!(
                "schedule produces {h}x{w}x{c}, expected data shape {}x{}x{}",
                self.data_shape.0, self.data_shape.1, self.data_shape.2
            )));
        }
        Ok(())
    }
}

/// The assembled generator with its two stacks.
#[derive(Debug, Clone)]
pub struct TrumpetModel {
    pub(crate) h_stack: Stack,
    pub(crate) g_stack: Stack,
    pub spec: TrumpetSpec,
    /// Data-dependent actnorm initialization happens once per stack.
    pub(crate) g_actnorm_ready: bool,
    pub(crate) h_actnorm_ready: bool,
}

/// Which log-det backend `nll_exact` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDetMethod {
    /// Dense Jacobian + SVD (d ≤ 64).
    Oracle,
    /// Stochastic series estimator with default configuration.
    Neumann,
}

fn revnet_step(
    channels: usize,
    conv: Conv1x1,
    subnet: SubnetKind,
    rng: &mut Rng,
) -> Result<Vec<Layer>> {
    let out_channels = conv.out_channels();
    Ok(vec![
        Layer::ActNorm(ActNorm::identity(channels)),
        Layer::Conv(conv),
        Layer::Coupling(Coupling::new(out_channels, subnet, false, rng)?),
    ])
}

/// Builds an identity-initialized model from a validated spec.
pub fn build(spec: &TrumpetSpec, rng: &mut Rng) -> Result<TrumpetModel> {
    spec.validate()?;
    let d = spec.latent_dim;
    let mut layer_seq: u64 = 0;
    let mut next = |rng: &mut Rng| {
        layer_seq += 1;
        rng.split(layer_seq)
    };

    let mut h_layers = Vec::new();
    for _ in 0..spec.bijective_depth {
        let mut r = next(rng);
        let conv = Conv1x1::init_orthogonal(d, d, ConvMode::Bijective, spec.lambda, &mut r)?;
        h_layers.extend(revnet_step(d, conv, spec.subnet, &mut r.split(7))?);
    }

    let mut g_layers = Vec::new();
    let (mut h, mut w, mut c) = spec.latent_shape;
    for st in &spec.stages {
        for _ in 0..st.injective_steps {
            let mut r = next(rng);
            let conv = match spec.conv_mode {
                ConvMode::InjectiveLinear => {
                    Conv1x1::init_orthogonal(2 * c, c, ConvMode::InjectiveLinear, spec.lambda, &mut r)?
                }
                ConvMode::InjectiveRelu => {
                    Conv1x1::init_orthogonal(c, c, ConvMode::InjectiveRelu, spec.lambda, &mut r)?
                }
                ConvMode::Bijective => unreachable!("validated"),
            };
            g_layers.extend(revnet_step(c, conv, spec.subnet, &mut r.split(7))?);
            c *= 2;
        }
        for _ in 0..st.bijective_steps {
            let mut r = next(rng);
            let conv = Conv1x1::init_orthogonal(c, c, ConvMode::Bijective, spec.lambda, &mut r)?;
            g_layers.extend(revnet_step(c, conv, spec.subnet, &mut r.split(7))?);
        }
        if st.upsqueeze {
            g_layers.push(Layer::Squeeze);
            h *= 2;
            w *= 2;
            c /= 4;
        }
    }

    let model = TrumpetModel {
        h_stack: Stack::new(h_layers),
        g_stack: Stack::new(g_layers),
        spec: spec.clone(),
        g_actnorm_ready: false,
        h_actnorm_ready: false,
    };
    debug_assert_eq!((h, w, c), spec.data_shape);
    // One shape-tracing pass catches subnet/spatial inconsistencies early.
    model.generate(&Tensor::zeros(vec![d]), 1.0)?;
    Ok(model)
}

pub(crate) struct GenPass {
    pub h: PassCache,
    pub g: PassCache,
}

pub(crate) struct DataPass {
    pub g: PassCache,
    pub h: PassCache,
}

impl DataPass {
    pub fn latent(&self) -> &Vol {
        self.h.output()
    }
}

impl TrumpetModel {
    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    pub fn data_shape(&self) -> (usize, usize, usize) {
        self.spec.data_shape
    }

    fn check_latent(&self, z: &Tensor) -> Result<()> {
        if z.len() != self.spec.latent_dim {
            return Err(Error::Shape(format!(
                "latent has {} entries, model expects {}",
                z.len(),
                self.spec.latent_dim
            )));
        }
        Ok(())
    }

    fn check_data(&self, x: &Tensor) -> Result<()> {
        let (h, w, c) = self.spec.data_shape;
        if x.dims() != [h, w, c] {
            return Err(Error::Shape(format!(
                "input dims {:?} do not match data shape {h}x{w}x{c}",
                x.dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn gen_full(&self, z: &Vol) -> Result<GenPass> {
        let hp = self.h_stack.gen_pass(z)?;
        let (h0, w0, c0) = self.spec.latent_shape;
        let zprime = hp.output().reshape(h0, w0, c0)?;
        let gp = self.g_stack.gen_pass(&zprime)?;
        Ok(GenPass { h: hp, g: gp })
    }

    pub(crate) fn data_full(&self, x: &Vol) -> Result<DataPass> {
        let gp = self.g_stack.data_pass(x)?;
        let d = self.spec.latent_dim;
        let zprime = gp.output().reshape(1, 1, d)?;
        let hp = self.h_stack.data_pass(&zprime)?;
        Ok(DataPass { g: gp, h: hp })
    }

    /// x = g(h(z · temperature)). Deterministic and side-effect free.
    pub fn generate(&self, z: &Tensor, temperature: f64) -> Result<Tensor> {
        self.check_latent(z)?;
        if temperature < 0.0 || !temperature.is_finite() {
            return Err(Error::Invalid("temperature must be non-negative".into()));
        }
        let zv = z.to_vol()?.scale(temperature);
        let pass = self.gen_full(&zv)?;
        Ok(pass.g.output().to_tensor())
    }

    /// z = h⁻¹(g†(x)); for x in the range of the generator,
    /// generate(z) ≈ x.
    pub fn left_inverse(&self, x: &Tensor) -> Result<Tensor> {
        self.check_data(x)?;
        let pass = self.data_full(&x.to_vol()?)?;
        Ok(pass.latent().to_flat_tensor())
    }

    /// Range projection P(x) = g(g†(x)); idempotent up to pseudoinverse
    /// regularization.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        self.check_data(x)?;
        Ok(self.project_vol(&x.to_vol()?)?.to_tensor())
    }

    pub(crate) fn project_vol(&self, x: &Vol) -> Result<Vol> {
        let gp = self.g_stack.data_pass(x)?;
        let back = self.g_stack.gen_pass(gp.output())?;
        Ok(back.output().clone())
    }

    /// Relative distance to the range, ‖x − P(x)‖/‖x‖.
    pub fn range_residual(&self, x: &Tensor) -> Result<f64> {
        let xv = x.to_vol()?;
        let p = self.project_vol(&xv)?;
        Ok(p.sub(&xv).norm() / xv.norm().max(1e-300))
    }

    fn warn_if_off_range(&self, x: &Tensor, what: &str) -> Result<()> {
        let r = self.range_residual(x)?;
        if r > 0.05 {
            log::warn!(
                "{what}: input is {r:.3} relative distance off the model range; \
                 the value refers to the likelihood of its projection"
            );
        }
        Ok(())
    }

    /// −log p_X(x) with the full-network log|det JᵀJ| from the requested
    /// backend, evaluated at z = h⁻¹(g†(x)).
    pub fn nll_exact(&self, x: &Tensor, method: LogDetMethod) -> Result<f64> {
        self.check_data(x)?;
        self.warn_if_off_range(x, "nll_exact")?;
        let pass = self.data_full(&x.to_vol()?)?;
        let z = pass.latent().clone();
        let lin = self.linearize_at(&z)?;
        let d = self.spec.latent_dim;
        let jvp = |t: &[f64]| lin.jvp(t);
        let vjp = |c: &[f64]| lin.vjp(c);
        let logdet = match method {
            LogDetMethod::Oracle => logdet::exact_logdet(&jvp, d)?,
            LogDetMethod::Neumann => {
                let mut rng = Rng::new(0x6e65756d, 0);
                logdet::neumann_logdet(&jvp, &vjp, d, &NeumannConfig::default(), &mut rng)?
            }
        };
        Ok(prior_nll(&z) + 0.5 * logdet)
    }

    /// Layerwise upper bound on −log p_X(x): the prior term plus half the
    /// per-layer log|det JᵀJ| sums, each evaluated at the intermediate
    /// activations recorded by one inversion pass.
    pub fn nll_bound(&self, x: &Tensor) -> Result<f64> {
        self.check_data(x)?;
        self.warn_if_off_range(x, "nll_bound")?;
        let pass = self.data_full(&x.to_vol()?)?;
        self.nll_bound_from_pass(&pass)
    }

    pub(crate) fn nll_bound_from_pass(&self, pass: &DataPass) -> Result<f64> {
        let g_ld = self.g_stack.logdet_jtj_sum(&pass.g)?;
        let h_ld = self.h_stack.logdet_jtj_sum(&pass.h)?;
        Ok(prior_nll(pass.latent()) + 0.5 * (g_ld + h_ld))
    }

    /// Linearization of the full generator at latent point z.
    pub fn linearize_at(&self, z: &Vol) -> Result<Linearization> {
        let pass = self.gen_full(z)?;
        Ok(Linearization { model: self, pass })
    }

    pub fn n_params(&self) -> usize {
        self.h_stack.n_params() + self.g_stack.n_params()
    }

    /// Flat parameter vector, h-stack first then g-stack.
    pub fn param_vec(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.n_params());
        self.h_stack.read_params(&mut out);
        self.g_stack.read_params(&mut out);
        out
    }

    pub fn set_param_vec(&mut self, src: &[f32]) -> Result<()> {
        if src.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, model expects {}",
                src.len(),
                self.n_params()
            )));
        }
        let nh = self.h_stack.n_params();
        self.h_stack.write_params(&src[..nh]);
        self.g_stack.write_params(&src[nh..]);
        Ok(())
    }

    /// Flat range of the bijective-stack parameters.
    pub fn h_param_range(&self) -> std::ops::Range<usize> {
        0..self.h_stack.n_params()
    }

    /// Flat range of the injective-stack parameters.
    pub fn g_param_range(&self) -> std::ops::Range<usize> {
        let nh = self.h_stack.n_params();
        nh..nh + self.g_stack.n_params()
    }

    /// Named tensor entries (name, dims) in flat-parameter order.
    pub fn param_entries(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.h_stack.param_entries("h", &mut out);
        self.g_stack.param_entries("g", &mut out);
        out
    }

    /// Smallest 1×1 kernel singular value across both stacks.
    pub fn min_conv_smin(&self) -> Result<f64> {
        let a = self.h_stack.min_conv_smin()?;
        let b = self.g_stack.min_conv_smin()?;
        Ok(a
            .into_iter()
            .chain(b)
            .fold(f64::INFINITY, f64::min))
    }
}

/// −log N(z; 0, I) = d/2·log 2π + ‖z‖²/2.
pub fn prior_nll(z: &Vol) -> f64 {
    0.5 * z.len() as f64 * LN_2PI + 0.5 * z.data.iter().map(|v| v * v).sum::<f64>()
}

/// JVP/VJP of the full generator at a fixed latent point.
pub struct Linearization<'m> {
    model: &'m TrumpetModel,
    pass: GenPass,
}

impl Linearization<'_> {
    pub fn in_dim(&self) -> usize {
        self.model.spec.latent_dim
    }

    pub fn out_dim(&self) -> usize {
        self.model.spec.data_dim()
    }

    pub fn output(&self) -> Vol {
        self.pass.g.output().clone()
    }

    pub fn jvp(&self, t: &[f64]) -> Vec<f64> {
        let tv = Vol::from_flat(t.to_vec());
        let th = self
            .model
            .h_stack
            .gen_jvp(&self.pass.h, &tv)
            .expect("jvp shape mismatch");
        let (h0, w0, c0) = self.model.spec.latent_shape;
        let tg = th.reshape(h0, w0, c0).expect("latent reshape");
        self.model
            .g_stack
            .gen_jvp(&self.pass.g, &tg)
            .expect("jvp shape mismatch")
            .data
    }

    pub fn vjp(&self, c: &[f64]) -> Vec<f64> {
        let (hh, ww, cc) = self.model.spec.data_shape;
        let cv = Vol {
            h: hh,
            w: ww,
            c: cc,
            data: c.to_vec(),
        };
        let cg = self
            .model
            .g_stack
            .gen_vjp(&self.pass.g, &cv, None, None)
            .expect("vjp shape mismatch");
        let d = self.model.spec.latent_dim;
        let ch = cg.reshape(1, 1, d).expect("latent reshape");
        self.model
            .h_stack
            .gen_vjp(&self.pass.h, &ch, None, None)
            .expect("vjp shape mismatch")
            .data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::diff::{exact_jacobian, FnMap};
    use crate::substrate::linalg::{inverse_spd, svd_small, Mat};

    fn desk_model(seed: u64) -> TrumpetModel {
        build(&TrumpetSpec::desk(), &mut Rng::new(seed, 0)).unwrap()
    }

    /// g embeds R^d into the first d coordinates of R^D (h identity): a
    /// single injective conv with a [I; 0] kernel.
    fn padded_identity_model(d: usize, scale: f32) -> TrumpetModel {
        let mut w = vec![0.0f32; 2 * d * d];
        for i in 0..d {
            w[i * d + i] = scale;
        }
        let conv = Conv1x1::new(w, 2 * d, d, ConvMode::InjectiveLinear, 0.0).unwrap();
        let spec = TrumpetSpec {
            latent_dim: d,
            latent_shape: (1, 1, d),
            data_shape: (1, 1, 2 * d),
            stages: vec![StageSpec {
                injective_steps: 1,
                bijective_steps: 0,
                upsqueeze: false,
            }],
            bijective_depth: 0,
            conv_mode: ConvMode::InjectiveLinear,
            subnet: SubnetKind::Plain { hidden: 4 },
            lambda: 0.0,
        };
        TrumpetModel {
            h_stack: Stack::new(vec![]),
            g_stack: Stack::new(vec![Layer::Conv(conv)]),
            spec,
            g_actnorm_ready: true,
            h_actnorm_ready: true,
        }
    }

    #[test]
    fn desk_spec_builds_and_generates_right_shape() {
        let model = desk_model(0);
        let z = Tensor::new(vec![4], vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let x = model.generate(&z, 1.0).unwrap();
        assert_eq!(x.dims(), &[8, 8, 1]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = TrumpetSpec::desk();
        spec.latent_dim = 64;
        spec.latent_shape = (8, 8, 1);
        spec.data_shape = (8, 8, 1);
        spec.stages = vec![];
        assert!(spec.validate().is_err()); // d >= D

        let mut spec2 = TrumpetSpec::desk();
        spec2.stages[1].injective_steps = 1;
        assert!(spec2.validate().is_err()); // schedule does not reach data shape
    }

    #[test]
    fn temperature_zero_collapses_outputs() {
        let model = desk_model(1);
        let z1 = Tensor::new(vec![4], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let z2 = Tensor::new(vec![4], vec![-3.0, 0.1, 0.2, 2.0]).unwrap();
        let a = model.generate(&z1, 0.0).unwrap();
        let b = model.generate(&z2, 0.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn generate_left_inverse_round_trip() {
        let model = desk_model(2);
        let mut rng = Rng::new(77, 0);
        for _ in 0..5 {
            let z = Tensor::new(vec![4], (0..4).map(|_| rng.normal() as f32).collect()).unwrap();
            let x = model.generate(&z, 1.0).unwrap();
            let zr = model.left_inverse(&x).unwrap();
            assert!(z.rel_err(&zr) <= 1e-4, "rel err {}", z.rel_err(&zr));
            let xr = model.generate(&zr, 1.0).unwrap();
            assert!(x.rel_err(&xr) <= 1e-4);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let model = desk_model(3);
        let mut rng = Rng::new(78, 0);
        let x = Tensor::new(vec![8, 8, 1], (0..64).map(|_| rng.normal() as f32).collect()).unwrap();
        let p1 = model.project(&x).unwrap();
        let p2 = model.project(&p1).unwrap();
        assert!(p1.rel_err(&p2) <= 1e-4, "idempotence err {}", p1.rel_err(&p2));
        // On-range input is a fixed point.
        let z = Tensor::new(vec![4], (0..4).map(|_| rng.normal() as f32).collect()).unwrap();
        let on_range = model.generate(&z, 1.0).unwrap();
        let p = model.project(&on_range).unwrap();
        assert!(on_range.rel_err(&p) <= 1e-4);
    }

    /// For a frozen-linear generator, the projector must match the dense
    /// matrix formula g (gᵀg + λI)^{-1} gᵀ x applied through explicit
    /// matrices.
    #[test]
    fn linear_projection_matches_matrix_oracle() {
        let model = padded_identity_model(3, 2.0);
        let mut rng = Rng::new(79, 0);
        // Dense generator matrix via the Jacobian oracle (the map is linear).
        let lin = model.linearize_at(&Vol::from_flat(vec![0.0; 3])).unwrap();
        let map = FnMap {
            in_dim: 3,
            out_dim: 6,
            eval: |x: &[f64]| lin.jvp(x),
            jvp: |_: &[f64], t: &[f64]| lin.jvp(t),
        };
        let g = exact_jacobian(&map, &[0.0; 3]).unwrap();
        let gram = g.transpose().matmul(&g);
        let ginv = inverse_spd(&gram).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let proj_oracle = g.matvec(&ginv.matvec(&g.matvec_t(&x)));
        let xt = Tensor::new(vec![1, 1, 6], x.iter().map(|&v| v as f32).collect()).unwrap();
        let p = model.project(&xt).unwrap();
        for (a, b) in p.data().iter().zip(&proj_oracle) {
            assert!((*a as f64 - b).abs() <= 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn nll_of_padded_identity_is_standard_normal() {
        let model = padded_identity_model(2, 1.0);
        let x = Tensor::new(vec![1, 1, 4], vec![0.0; 4]).unwrap();
        let nll = model.nll_exact(&x, LogDetMethod::Oracle).unwrap();
        assert!((nll - LN_2PI).abs() < 1e-6, "nll {nll}");
        let bound = model.nll_bound(&x).unwrap();
        assert!((bound - LN_2PI).abs() < 1e-6, "bound {bound}");
    }

    #[test]
    fn scaled_embedding_shifts_nll_by_log_scale() {
        let model = padded_identity_model(2, 2.0);
        let x = Tensor::new(vec![1, 1, 4], vec![0.0; 4]).unwrap();
        let nll = model.nll_exact(&x, LogDetMethod::Oracle).unwrap();
        let expect = LN_2PI + 2.0 * 2.0f64.ln();
        assert!((nll - expect).abs() < 1e-6, "nll {nll} expect {expect}");
    }

    #[test]
    fn bound_dominates_exact_on_random_models() {
        let model = desk_model(4);
        let mut rng = Rng::new(80, 0);
        for _ in 0..10 {
            let z = Tensor::new(vec![4], (0..4).map(|_| rng.normal() as f32).collect()).unwrap();
            let x = model.generate(&z, 1.0).unwrap();
            let exact = model.nll_exact(&x, LogDetMethod::Oracle).unwrap();
            let bound = model.nll_bound(&x).unwrap();
            assert!(
                bound - exact >= -1e-6,
                "bound {bound} fails to dominate exact {exact}"
            );
        }
    }

    #[test]
    fn full_jacobian_logdet_matches_oracle_on_desk_model() {
        let model = desk_model(5);
        let mut rng = Rng::new(81, 0);
        let z = Vol::from_flat((0..4).map(|_| rng.normal()).collect());
        let lin = model.linearize_at(&z).unwrap();
        let jvp = |t: &[f64]| lin.jvp(t);
        let ld_est = logdet::exact_logdet(&jvp, 4).unwrap();
        // Cross-check against an independently assembled dense Jacobian.
        let map = FnMap {
            in_dim: 4,
            out_dim: 64,
            eval: |x: &[f64]| lin.jvp(x),
            jvp: |_: &[f64], t: &[f64]| lin.jvp(t),
        };
        let jac = exact_jacobian(&map, &z.data).unwrap();
        let svd = svd_small(&jac).unwrap();
        let ld_svd = 2.0 * svd.s.iter().map(|s| s.ln()).sum::<f64>();
        assert!((ld_est - ld_svd).abs() < 1e-8);
    }

    #[test]
    fn linearization_adjoint_identity() {
        let model = desk_model(6);
        let mut rng = Rng::new(82, 0);
        let z = Vol::from_flat((0..4).map(|_| rng.normal()).collect());
        let lin = model.linearize_at(&z).unwrap();
        let t: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let c: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let jv = lin.jvp(&t);
        let vj = lin.vjp(&c);
        let lhs: f64 = jv.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = t.iter().zip(&vj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
    }

    #[test]
    fn param_round_trip_preserves_generation() {
        let mut model = desk_model(7);
        let z = Tensor::new(vec![4], vec![0.4, -0.6, 1.0, 0.2]).unwrap();
        let before = model.generate(&z, 1.0).unwrap();
        let params = model.param_vec();
        assert_eq!(params.len(), model.n_params());
        model.set_param_vec(&params).unwrap();
        let after = model.generate(&z, 1.0).unwrap();
        assert_eq!(before.data(), after.data());
        // Entries cover the whole vector.
        let entries = model.param_entries();
        let total: usize = entries.iter().map(|(_, d)| d.iter().product::<usize>()).sum();
        assert_eq!(total, params.len());
    }
}
