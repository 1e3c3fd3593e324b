//! Two-phase training.
//!
//! Phase one fits the injective stack by minimizing the reconstruction
//! error ‖ξ − g(g†(ξ))‖² with gradients flowing through both the forward
//! stack and the Tikhonov-regularized pseudoinverses. Phase two freezes the
//! injective part and fits the bijective latent flow by maximum likelihood
//! of the preimages. Both phases use bias-corrected Adam, seeded shuffles,
//! and skip steps whose gradients are non-finite.

use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{prior_nll, TrumpetModel, LN_2PI};
use crate::substrate::rng::Rng;
use crate::substrate::tensor::{Tensor, Vol};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub mse_epochs: usize,
    pub ml_epochs: usize,
    /// Tikhonov regularizer applied to every pseudoinverse.
    pub lambda: f32,
    pub seed: u64,
    /// Epochs between checkpoint callbacks; 0 disables.
    pub checkpoint_every: usize,
    /// Plateau patience (epochs without improvement) before early stop.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 64,
            mse_epochs: 50,
            ml_epochs: 40,
            lambda: 1e-6,
            seed: 0,
            checkpoint_every: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.lr > 1e-1 {
            return Err(Error::Config(format!("lr must be in (0, 0.1], got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Adam optimizer state with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Non-finite gradient; parameters and moments untouched.
    SkippedNonFinite,
}

/// One bias-corrected Adam update on a flat parameter slice.
pub fn adam_step(
    params: &mut [f32],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<StepOutcome> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        log::warn!("adam_step: non-finite gradient, step skipped");
        return Ok(StepOutcome::SkippedNonFinite);
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] = (params[i] as f64 - lr * mhat / (vhat.sqrt() + ADAM_EPS)) as f32;
    }
    Ok(StepOutcome::Applied)
}

/// Per-epoch log row.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: &'static str,
    pub loss: f64,
    pub recon_error: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Mean −log p_Z(z) per ML epoch (the latent NLL metric).
    pub latent_nll: Vec<f64>,
    pub best_loss: f64,
    pub skipped_steps: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,phase,loss,recon_error,wall_ms\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{:.9e},{:.9e},{}\n",
                e.epoch, e.phase, e.loss, e.recon_error, e.wall_ms
            ));
        }
        out
    }
}

fn sample_to_vol(t: &Tensor, shape: (usize, usize, usize)) -> Result<Vol> {
    let (h, w, c) = shape;
    if t.len() != h * w * c {
        return Err(Error::Shape(format!(
            "sample has {} elements, data shape wants {}",
            t.len(),
            h * w * c
        )));
    }
    Ok(Vol {
        h,
        w,
        c,
        data: t.data().iter().map(|&v| v as f64).collect(),
    })
}

/// Worker count from TRUMPET_THREADS (default 1). Reduction order is fixed
/// regardless, so results are bit-identical for any setting.
fn worker_count() -> usize {
    std::env::var("TRUMPET_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .map(|n| n.clamp(1, 64))
        .unwrap_or(1)
}

/// Ordered parallel map: output index i always holds f(i).
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (j, s) in slot.iter_mut().enumerate() {
                    *s = Some(f(w * chunk + j));
                }
            });
        }
    });
    out.into_iter().map(|o| o.unwrap()).collect()
}

/// Reconstruction loss ‖ξ − g(g†(ξ))‖² for one sample.
pub(crate) fn mse_loss_sample(model: &TrumpetModel, x: &Vol) -> Result<f64> {
    let down = model.g_stack.data_pass(x)?;
    let up = model.g_stack.gen_pass(down.output())?;
    let r = up.output().sub(x);
    Ok(r.dot(&r))
}

/// Loss plus full-length parameter gradients (only the g range is written).
pub(crate) fn mse_grad_sample(model: &TrumpetModel, x: &Vol, grads: &mut [f64]) -> Result<f64> {
    let down = model.g_stack.data_pass(x)?;
    let up = model.g_stack.gen_pass(down.output())?;
    let r = up.output().sub(x);
    let loss = r.dot(&r);
    let g_range = model.g_param_range();
    let gslice = &mut grads[g_range];
    let cot_out = r.scale(2.0);
    let cot_zprime = model.g_stack.gen_vjp(&up, &cot_out, Some(gslice), None)?;
    model.g_stack.data_vjp(&down, &cot_zprime, Some(gslice), None)?;
    Ok(loss)
}

/// ML objective for one preimage z′ = g†(ξ): −log p_Z(h⁻¹(z′)) plus the
/// layerwise forward log-dets of h at the recorded intermediates. Returns
/// (objective, latent NLL metric).
pub(crate) fn ml_loss_sample(model: &TrumpetModel, zprime: &Vol) -> Result<(f64, f64)> {
    let pass = model.h_stack.data_pass(zprime)?;
    let z = pass.output();
    let nll = prior_nll(z);
    let ld = model.h_stack.logdet_jtj_sum(&pass)?;
    Ok((nll + 0.5 * ld, nll))
}

pub(crate) fn ml_grad_sample(
    model: &TrumpetModel,
    zprime: &Vol,
    grads: &mut [f64],
) -> Result<(f64, f64)> {
    let pass = model.h_stack.data_pass(zprime)?;
    let z = pass.output().clone();
    let nll = prior_nll(&z);
    let ld = model.h_stack.logdet_jtj_sum(&pass)?;
    let h_range = model.h_param_range();
    let hslice = &mut grads[h_range];
    model
        .h_stack
        .data_vjp(&pass, &z, Some(hslice), Some(0.5))?;
    Ok((nll + 0.5 * ld, nll))
}

/// Mean relative reconstruction error ‖ξ − P(ξ)‖/‖ξ‖ over a dataset;
/// zero-norm samples are excluded with a warning.
pub fn reconstruction_error(model: &TrumpetModel, data: &Dataset) -> Result<f64> {
    let shape = model.data_shape();
    let mut total = 0.0;
    let mut counted = 0usize;
    for s in &data.samples {
        let x = sample_to_vol(s, shape)?;
        let norm = x.norm();
        if norm == 0.0 {
            log::warn!("reconstruction_error: zero-norm sample excluded");
            continue;
        }
        let p = model.project_vol(&x)?;
        total += p.sub(&x).norm() / norm;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Data("no usable samples for reconstruction error".into()));
    }
    Ok(total / counted as f64)
}

fn recon_error_subset(model: &TrumpetModel, vols: &[Vol], cap: usize) -> f64 {
    let n = vols.len().min(cap);
    let errs = parallel_map(n, |i| {
        let x = &vols[i];
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        match model.project_vol(x) {
            Ok(p) => p.sub(x).norm() / norm,
            Err(_) => f64::NAN,
        }
    });
    let valid: Vec<f64> = errs.into_iter().filter(|e| e.is_finite()).collect();
    if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    }
}

/// Initializes every actnorm in the injective stack from the first batch's
/// inversion-pass activations, exactly once.
fn init_g_actnorms(model: &mut TrumpetModel, batch: &[Vol]) -> Result<()> {
    use crate::layers::Layer;
    let mut acts: Vec<Vol> = batch.to_vec();
    let n = model.g_stack.layers.len();
    for idx in (0..n).rev() {
        if let Layer::ActNorm(ref a) = model.g_stack.layers[idx] {
            let fresh = crate::layers::ActNorm::init_from_vols(&acts)?;
            let _ = a;
            model.g_stack.layers[idx] = Layer::ActNorm(fresh);
        }
        let layer = &model.g_stack.layers[idx];
        acts = acts
            .iter()
            .map(|v| layer.data(v).map(|(out, _)| out))
            .collect::<Result<Vec<_>>>()?;
    }
    model.g_actnorm_ready = true;
    Ok(())
}

/// Same for the bijective stack, fed with preimage latents.
fn init_h_actnorms(model: &mut TrumpetModel, zprimes: &[Vol]) -> Result<()> {
    use crate::layers::Layer;
    let mut acts: Vec<Vol> = zprimes.to_vec();
    let n = model.h_stack.layers.len();
    for idx in (0..n).rev() {
        if let Layer::ActNorm(_) = model.h_stack.layers[idx] {
            let fresh = crate::layers::ActNorm::init_from_vols(&acts)?;
            model.h_stack.layers[idx] = Layer::ActNorm(fresh);
        }
        let layer = &model.h_stack.layers[idx];
        acts = acts
            .iter()
            .map(|v| layer.data(v).map(|(out, _)| out))
            .collect::<Result<Vec<_>>>()?;
    }
    model.h_actnorm_ready = true;
    Ok(())
}

fn apply_lambda(model: &mut TrumpetModel, lambda: f32) {
    use crate::layers::Layer;
    for stack in [&mut model.h_stack, &mut model.g_stack] {
        for l in stack.layers.iter_mut() {
            if let Layer::Conv(c) = l {
                c.lambda = lambda;
            }
        }
    }
}

fn check_normalized(data: &Dataset, phase: &str) {
    let mut worst = 0.0f32;
    for s in data.samples.iter().take(64) {
        for &v in s.data() {
            worst = worst.max(v.abs());
        }
    }
    if worst > 1.0 + 1e-4 {
        log::warn!("{phase}: dataset exceeds [-1,1] (max abs {worst:.3}); expected normalized input");
    }
}

/// Callback invoked on checkpoint cadence; receives (epoch, model).
pub type CheckpointHook<'a> = dyn FnMut(usize, &TrumpetModel) -> Result<()> + 'a;

/// Reconstruction (MSE) phase: only the injective-stack parameters are
/// updated; returns the per-epoch report and leaves the model at its
/// best-loss parameters.
pub fn train_mse_phase(
    model: &mut TrumpetModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mut ckpt_hook: Option<&mut CheckpointHook>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty training dataset".into()));
    }
    check_normalized(data, "mse phase");
    apply_lambda(model, cfg.lambda);
    let shape = model.data_shape();
    let vols: Vec<Vol> = data
        .samples
        .iter()
        .map(|s| sample_to_vol(s, shape))
        .collect::<Result<Vec<_>>>()?;

    let n = vols.len();
    let rng = Rng::new(cfg.seed, 0x6d7365);
    let mut report = TrainReport {
        best_loss: f64::INFINITY,
        ..Default::default()
    };

    // Data-dependent actnorm init on the first shuffled batch, once.
    let mut order: Vec<usize> = (0..n).collect();
    rng.split(0).shuffle(&mut order);
    if !model.g_actnorm_ready {
        let first: Vec<Vol> = order
            .iter()
            .take(cfg.batch_size.max(2).min(n))
            .map(|&i| vols[i].clone())
            .collect();
        init_g_actnorms(model, &first)?;
    }

    let g_range = model.g_param_range();
    let mut adam = AdamState::new(g_range.len());
    let mut best_params = model.param_vec();
    let mut plateau = 0usize;

    for epoch in 0..cfg.mse_epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        rng.split(epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let frozen: &TrumpetModel = model;
            let results = parallel_map(batch.len(), |j| {
                let mut g = vec![0.0f64; frozen.n_params()];
                mse_grad_sample(frozen, &vols[batch[j]], &mut g).map(|loss| (loss, g))
            });
            let mut grads = vec![0.0f64; model.n_params()];
            let mut batch_loss = 0.0;
            let mut failed = false;
            for r in results {
                match r {
                    Ok((loss, g)) => {
                        batch_loss += loss;
                        for (acc, v) in grads.iter_mut().zip(&g) {
                            *acc += v;
                        }
                    }
                    Err(e) => {
                        log::warn!("mse step skipped: {e}");
                        report.skipped_steps += 1;
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            let inv = 1.0 / batch.len() as f64;
            batch_loss *= inv;
            for v in grads.iter_mut() {
                *v *= inv;
            }
            let mut params = model.param_vec();
            let before = params.clone();
            let outcome = adam_step(
                &mut params[g_range.clone()],
                &grads[g_range.clone()],
                &mut adam,
                cfg.lr,
            )?;
            if outcome == StepOutcome::SkippedNonFinite {
                report.skipped_steps += 1;
                continue;
            }
            model.set_param_vec(&params)?;
            // Kernel injectivity guard: revert a step that collapses a
            // singular value.
            match model.min_conv_smin() {
                Ok(s) if s > 1e-9 => {}
                _ => {
                    log::warn!("mse step reverted: kernel singular value collapsed");
                    model.set_param_vec(&before)?;
                    report.skipped_steps += 1;
                    continue;
                }
            }
            epoch_loss += batch_loss;
            epoch_count += 1;
        }
        let mean_loss = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            f64::NAN
        };
        let recon = recon_error_subset(model, &vols, 256);
        report.epochs.push(EpochLog {
            epoch,
            phase: "mse",
            loss: mean_loss,
            recon_error: recon,
            wall_ms: t0.elapsed().as_millis(),
        });
        if let Some(hook) = ckpt_hook.as_deref_mut() {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                hook(epoch, model)?;
            }
        }
        if mean_loss.is_finite() && mean_loss < report.best_loss - 1e-12 {
            report.best_loss = mean_loss;
            best_params = model.param_vec();
            plateau = 0;
        } else {
            plateau += 1;
            if plateau > cfg.patience {
                break;
            }
        }
    }
    model.set_param_vec(&best_params)?;
    Ok(report)
}

/// Maximum-likelihood phase: the injective stack is frozen; only the
/// bijective flow parameters move.
pub fn train_ml_phase(
    model: &mut TrumpetModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mut ckpt_hook: Option<&mut CheckpointHook>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty training dataset".into()));
    }
    let shape = model.data_shape();
    let d = model.latent_dim();
    // Preimages are fixed for the whole phase.
    let frozen: &TrumpetModel = model;
    let zprimes: Vec<Vol> = data
        .samples
        .iter()
        .map(|s| {
            let x = sample_to_vol(s, shape)?;
            let pass = frozen.g_stack.data_pass(&x)?;
            pass.output().reshape(1, 1, d)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = zprimes.len();
    let rng = Rng::new(cfg.seed, 0x6d6c);
    let mut report = TrainReport {
        best_loss: f64::INFINITY,
        ..Default::default()
    };

    let mut order: Vec<usize> = (0..n).collect();
    rng.split(0).shuffle(&mut order);
    if !model.h_actnorm_ready {
        let first: Vec<Vol> = order
            .iter()
            .take(cfg.batch_size.max(2).min(n))
            .map(|&i| zprimes[i].clone())
            .collect();
        init_h_actnorms(model, &first)?;
    }

    let post_mse_recon = recon_error_subset(model, &data
        .samples
        .iter()
        .take(256)
        .map(|s| sample_to_vol(s, shape))
        .collect::<Result<Vec<_>>>()?, 256);

    let h_range = model.h_param_range();
    let mut adam = AdamState::new(h_range.len());
    let mut best_params = model.param_vec();
    let mut plateau = 0usize;

    for epoch in 0..cfg.ml_epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        rng.split(1000 + epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_nll = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let frozen: &TrumpetModel = model;
            let results = parallel_map(batch.len(), |j| {
                let mut g = vec![0.0f64; frozen.n_params()];
                ml_grad_sample(frozen, &zprimes[batch[j]], &mut g).map(|pair| (pair, g))
            });
            let mut grads = vec![0.0f64; model.n_params()];
            let mut batch_loss = 0.0;
            let mut batch_nll = 0.0;
            let mut failed = false;
            for r in results {
                match r {
                    Ok(((loss, nll), g)) => {
                        if !loss.is_finite() {
                            log::warn!("ml step skipped: non-finite objective");
                            report.skipped_steps += 1;
                            failed = true;
                            break;
                        }
                        batch_loss += loss;
                        batch_nll += nll;
                        for (acc, v) in grads.iter_mut().zip(&g) {
                            *acc += v;
                        }
                    }
                    Err(e) => {
                        log::warn!("ml step skipped: {e}");
                        report.skipped_steps += 1;
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            let inv = 1.0 / batch.len() as f64;
            batch_loss *= inv;
            batch_nll *= inv;
            for v in grads.iter_mut() {
                *v *= inv;
            }
            let mut params = model.param_vec();
            let before = params.clone();
            let outcome = adam_step(
                &mut params[h_range.clone()],
                &grads[h_range.clone()],
                &mut adam,
                cfg.lr,
            )?;
            if outcome == StepOutcome::SkippedNonFinite {
                report.skipped_steps += 1;
                continue;
            }
            model.set_param_vec(&params)?;
            match model.min_conv_smin() {
                Ok(s) if s > 1e-9 => {}
                _ => {
                    log::warn!("ml step reverted: kernel singular value collapsed");
                    model.set_param_vec(&before)?;
                    report.skipped_steps += 1;
                    continue;
                }
            }
            epoch_loss += batch_loss;
            epoch_nll += batch_nll;
            epoch_count += 1;
        }
        let mean_loss = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            f64::NAN
        };
        let mean_nll = if epoch_count > 0 {
            epoch_nll / epoch_count as f64
        } else {
            f64::NAN
        };
        report.latent_nll.push(mean_nll);
        report.epochs.push(EpochLog {
            epoch,
            phase: "ml",
            loss: mean_loss,
            recon_error: post_mse_recon,
            wall_ms: t0.elapsed().as_millis(),
        });
        if let Some(hook) = ckpt_hook.as_deref_mut() {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                hook(epoch, model)?;
            }
        }
        if mean_loss.is_finite() && mean_loss < report.best_loss - 1e-12 {
            report.best_loss = mean_loss;
            best_params = model.param_vec();
            plateau = 0;
        } else {
            plateau += 1;
            if plateau > cfg.patience {
                break;
            }
        }
    }
    model.set_param_vec(&best_params)?;
    Ok(report)
}

/// Analytic optimum of the latent NLL metric for standard-normal preimages:
/// d/2·(log 2π + 1).
pub fn gaussian_latent_nll_optimum(d: usize) -> f64 {
    0.5 * d as f64 * (LN_2PI + 1.0)
}


#[cfg(test)]
mod dbg_tests {
    use super::*;
    use crate::model::{build, TrumpetSpec};

    #[test]
    #[ignore]
    fn dbg_conv_grad() {
        let spec = TrumpetSpec::desk();
        let mut rng = Rng::new(11, 0);
        let mut model = build(&spec, &mut rng).unwrap();
        let mut params = model.param_vec();
        let mut pr = rng.split(1);
        for v in params.iter_mut() {
            if *v == 0.0 { *v = (pr.normal() * 0.15) as f32; } else { *v += (pr.normal() * 0.02) as f32; }
        }
        model.set_param_vec(&params).unwrap();
        let shape = model.data_shape();
        let x = Vol { h: shape.0, w: shape.1, c: shape.2, data: rng.normal_vec(64) };
        let mut grads = vec![0.0; model.n_params()];
        let loss0 = mse_grad_sample(&model, &x, &mut grads).unwrap();
        eprintln!("loss {loss0}");
        let entries = model.param_entries();
        let mut off = 0;
        for (name, dims) in &entries {
            let len: usize = dims.iter().product();
            if name == "g.1.conv1x1.w" {
                let hstep = 1e-3f32;
                for k in 0..len {
                    let idx = off + k;
                    let orig = params[idx];
                    params[idx] = orig + hstep;
                    model.set_param_vec(&params).unwrap();
                    let fp = mse_loss_sample(&model, &x).unwrap();
                    params[idx] = orig - hstep;
                    model.set_param_vec(&params).unwrap();
                    let fm = mse_loss_sample(&model, &x).unwrap();
                    params[idx] = orig;
                    let realized = (orig + hstep) as f64 - (orig - hstep) as f64;
                    let fd = (fp - fm) / realized;
                    eprintln!("k={k} analytic={:+.6e} fd={:+.6e} diff={:+.3e}", grads[idx], fd, grads[idx]-fd);
                }
                model.set_param_vec(&params).unwrap();
                break;
            }
            off += len;
        }
    }
}
