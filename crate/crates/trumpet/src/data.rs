//! Dataset generation and ingestion: seeded synthetic low-dimensional
//! manifolds for desk-scale verification, an IDX image loader, and
//! normalization to [−1, 1].

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::substrate::linalg::{orthonormal_columns, svd_small, Mat};
use crate::substrate::rng::Rng;
use crate::substrate::tensor::Tensor;

/// Affine record mapping a source range onto [−1, 1], kept so outputs can
/// be written back in original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub lo: f32,
    pub hi: f32,
}

impl NormRecord {
    pub fn normalize(&self, v: f32) -> f32 {
        2.0 * (v - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn denormalize(&self, v: f32) -> f32 {
        (v + 1.0) * 0.5 * (self.hi - self.lo) + self.lo
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Tensor>,
    pub intrinsic_dim: Option<usize>,
    pub norm: Option<NormRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Train/test split by a seeded permutation.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed, 0xdead).shuffle(&mut order);
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let pick = |idx: &[usize]| Dataset {
            name: self.name.clone(),
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            intrinsic_dim: self.intrinsic_dim,
            norm: self.norm,
        };
        (pick(&order[..n_train]), pick(&order[n_train..]))
    }
}

/// Fixed smooth injective embedding u ↦ W₂·tanh(W₁u) + W₀u with W₀
/// orthonormal-column, fully determined by its seed.
pub struct ManifoldEmbedding {
    pub w0: Mat,
    pub w1: Mat,
    pub w2: Mat,
}

impl ManifoldEmbedding {
    pub fn new(intrinsic: usize, ambient: usize, seed: u64) -> Self {
        Self::with_amplitude(intrinsic, ambient, 0.45, seed)
    }

    /// `amplitude` scales the nonlinear term; zero reduces the embedding to
    /// the linear injection W₀.
    pub fn with_amplitude(intrinsic: usize, ambient: usize, amplitude: f64, seed: u64) -> Self {
        let hidden = (2 * intrinsic).max(8);
        let mut rng = Rng::new(seed, 3);
        let w0 = orthonormal_columns(ambient, intrinsic, &mut rng.split(1));
        let mut w1 = Mat::zeros(hidden, intrinsic);
        let mut r1 = rng.split(2);
        for v in w1.data.iter_mut() {
            *v = r1.normal() / (intrinsic as f64).sqrt();
        }
        let mut w2 = Mat::zeros(ambient, hidden);
        let mut r2 = rng.split(3);
        for v in w2.data.iter_mut() {
            *v = r2.normal() * amplitude / (hidden as f64).sqrt();
        }
        ManifoldEmbedding { w0, w1, w2 }
    }

    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.w1.matvec(u).iter().map(|v| v.tanh()).collect();
        let mut out = self.w2.matvec(&hidden);
        let lin = self.w0.matvec(u);
        for (o, l) in out.iter_mut().zip(&lin) {
            *o += l;
        }
        out
    }

    pub fn jvp(&self, u: &[f64], t: &[f64]) -> Vec<f64> {
        let pre = self.w1.matvec(u);
        let dpre = self.w1.matvec(t);
        let dh: Vec<f64> = pre
            .iter()
            .zip(&dpre)
            .map(|(p, d)| (1.0 - p.tanh().powi(2)) * d)
            .collect();
        let mut out = self.w2.matvec(&dh);
        let lin = self.w0.matvec(t);
        for (o, l) in out.iter_mut().zip(&lin) {
            *o += l;
        }
        out
    }
}

/// Draws n points from a d*-dimensional manifold embedded in R^D, adds
/// isotropic ambient noise, and rescales everything to [−1, 1].
/// Deterministic per seed; samples are flat D-vectors.
pub fn synth_manifold(
    intrinsic: usize,
    ambient: usize,
    n: usize,
    seed: u64,
    noise: f64,
) -> Result<Dataset> {
    if intrinsic >= ambient {
        return Err(Error::Invalid(format!(
            "intrinsic dim {intrinsic} must be below ambient dim {ambient}"
        )));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let embedding = ManifoldEmbedding::new(intrinsic, ambient, seed);
    let mut rng = Rng::new(seed, 0x5u64);
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = rng.split(i as u64);
        let u: Vec<f64> = (0..intrinsic).map(|_| r.normal()).collect();
        let mut x = embedding.map(&u);
        if noise > 0.0 {
            for v in x.iter_mut() {
                *v += noise * r.normal();
            }
        }
        for &v in &x {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        raw.push(x);
    }
    if !(hi > lo) {
        return Err(Error::Numerical("degenerate manifold sample range".into()));
    }
    let record = NormRecord {
        lo: lo as f32,
        hi: hi as f32,
    };
    let samples = raw
        .into_iter()
        .map(|x| {
            let data: Vec<f32> = x
                .iter()
                .map(|&v| (2.0 * (v - lo) / (hi - lo) - 1.0) as f32)
                .collect();
            Tensor::new(vec![ambient], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: format!("synth-d{intrinsic}-D{ambient}-n{n}-s{seed}"),
        samples,
        intrinsic_dim: Some(intrinsic),
        norm: Some(record),
    })
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Parses a big-endian IDX file of unsigned-byte images (magic 0x00000803),
/// yielding H×W×1 tensors with raw values in [0, 255].
pub fn load_idx(path: &Path) -> Result<Dataset> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    parse_idx(&bytes, &path.display().to_string())
}

pub fn parse_idx(bytes: &[u8], origin: &str) -> Result<Dataset> {
    let be_u32 = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Data(format!("{origin}: truncated IDX header")))
    };
    let magic = be_u32(0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Data(format!(
            "{origin}: bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )));
    }
    let count = be_u32(4)? as usize;
    let h = be_u32(8)? as usize;
    let w = be_u32(12)? as usize;
    let need = 16 + count * h * w;
    if bytes.len() < need {
        return Err(Error::Data(format!(
            "{origin}: truncated IDX payload, need {need} bytes, have {}",
            bytes.len()
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let off = 16 + i * h * w;
        let data: Vec<f32> = bytes[off..off + h * w].iter().map(|&b| b as f32).collect();
        samples.push(Tensor::new(vec![h, w, 1], data)?);
    }
    Ok(Dataset {
        name: origin.to_string(),
        samples,
        intrinsic_dim: None,
        norm: None,
    })
}

/// Affine map from a declared source range onto [−1, 1]; the record is kept
/// for inversion when writing images.
pub fn normalize_pm1(ds: &Dataset, lo: f32, hi: f32) -> Result<Dataset> {
    if !(hi > lo) {
        return Err(Error::Invalid(format!("degenerate source range [{lo}, {hi}]")));
    }
    let record = NormRecord { lo, hi };
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            Tensor::new(
                s.dims().to_vec(),
                s.data().iter().map(|&v| record.normalize(v)).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: ds.name.clone(),
        samples,
        intrinsic_dim: ds.intrinsic_dim,
        norm: Some(record),
    })
}

/// Centered spatial padding of H×W×C images with a fill value.
pub fn pad_images(ds: &Dataset, target_h: usize, target_w: usize, fill: f32) -> Result<Dataset> {
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let (h, w, c) = match s.dims() {
                [h, w, c] => (*h, *w, *c),
                other => {
                    return Err(Error::Shape(format!(
                        "pad_images expects HxWxC samples, got {other:?}"
                    )))
                }
            };
            if target_h < h || target_w < w {
                return Err(Error::Invalid("padding target smaller than image".into()));
            }
            let off_h = (target_h - h) / 2;
            let off_w = (target_w - w) / 2;
            let mut data = vec![fill; target_h * target_w * c];
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        data[((y + off_h) * target_w + (x + off_w)) * c + ch] =
                            s.data()[(y * w + x) * c + ch];
                    }
                }
            }
            Tensor::new(vec![target_h, target_w, c], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: ds.name.clone(),
        samples,
        intrinsic_dim: ds.intrinsic_dim,
        norm: ds.norm,
    })
}

/// Singular values of the dataset's centered covariance, descending. The
/// effective-rank oracle for manifold datasets.
pub fn pca_singular_values(ds: &Dataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let d = ds.samples[0].len();
    let n = ds.len();
    let mut mean = vec![0.0f64; d];
    for s in &ds.samples {
        for (m, &v) in mean.iter_mut().zip(s.data()) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = Mat::zeros(d, d);
    for s in &ds.samples {
        let centered: Vec<f64> = s
            .data()
            .iter()
            .zip(&mean)
            .map(|(&v, m)| v as f64 - m)
            .collect();
        for i in 0..d {
            if centered[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                *cov.at_mut(i, j) += centered[i] * centered[j];
            }
        }
    }
    for v in cov.data.iter_mut() {
        *v /= n as f64;
    }
    Ok(svd_small(&cov)?.s)
}
