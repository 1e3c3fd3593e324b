//! Dense tensors in N×H×W×C layout.
//!
//! `Tensor` is the public value carrier (f32 storage, 1 to 4 dimensions,
//! row-major). `Vol` is the crate-internal single-sample activation type:
//! H×W×C with f64 elements, used by every layer so that intermediate
//! arithmetic runs in double precision while parameters and I/O stay f32.

use crate::error::{Error, Result};

/// Row-major f32 tensor with 1–4 dimensions interpreted as (N×)H×W×C.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting rank 0 / rank > 4, count mismatches and
    /// non-finite elements.
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Shape(format!(
                "tensor rank must be 1..=4, got {}",
                dims.len()
            )));
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                count,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let count = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; count],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Euclidean norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Relative L2 distance ‖a−b‖/‖a‖ (f64 accumulation).
    pub fn rel_err(&self, other: &Tensor) -> f64 {
        assert_eq!(self.dims, other.dims, "rel_err shape mismatch");
        let num: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let den = self.norm().max(1e-300);
        num / den
    }

    /// View as a single-sample H×W×C volume. 1-D tensors become 1×1×d,
    /// 2-D become H×W×1, 3-D map directly; 4-D requires N = 1.
    pub(crate) fn to_vol(&self) -> Result<Vol> {
        let (h, w, c) = match self.dims.len() {
            1 => (1, 1, self.dims[0]),
            2 => (self.dims[0], self.dims[1], 1),
            3 => (self.dims[0], self.dims[1], self.dims[2]),
            4 => {
                if self.dims[0] != 1 {
                    return Err(Error::Shape("expected a single sample (N=1)".into()));
                }
                (self.dims[1], self.dims[2], self.dims[3])
            }
            _ => unreachable!(),
        };
        Ok(Vol {
            h,
            w,
            c,
            data: self.data.iter().map(|&v| v as f64).collect(),
        })
    }
}

/// Crate-internal activation volume: H×W×C, f64, row-major (pixel-major,
/// channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Vol {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Vol {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Vol {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_flat(data: Vec<f64>) -> Self {
        Vol {
            h: 1,
            w: 1,
            c: data.len(),
            data,
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize, ch: usize) -> &mut f64 {
        &mut self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Row-major reinterpretation; element order is unchanged.
    pub fn reshape(&self, h: usize, w: usize, c: usize) -> Result<Vol> {
        if h * w * c != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements to {}x{}x{}",
                self.data.len(),
                h,
                w,
                c
            )));
        }
        Ok(Vol {
            h,
            w,
            c,
            data: self.data.clone(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vol) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Vol) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Vol {
        Vol {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Vol) -> Vol {
        debug_assert_eq!(self.data.len(), other.data.len());
        Vol {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Quantizes down to the public f32 carrier.
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.h, self.w, self.c],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Flat 1-D tensor view (latents).
    pub fn to_flat_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.data.len()],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}
