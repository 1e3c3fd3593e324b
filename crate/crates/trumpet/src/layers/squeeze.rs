//! Factor-2 squeeze: an exact element permutation between (H, W, C) and
//! (H/2, W/2, 4C). The channel order is channel-blocked: each input channel
//! contributes a contiguous block of four outputs ordered row-major within
//! its 2×2 neighborhood, so checkpoints are portable across implementations.

use crate::error::{Error, Result};
use crate::substrate::tensor::{Tensor, Vol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqueezeDirection {
    /// (H, W, C) → (H/2, W/2, 4C)
    SpaceToDepth,
    /// (H, W, C) → (2H, 2W, C/4)
    DepthToSpace,
}

#[derive(Debug, Clone, Copy)]
pub struct SqueezeSpec {
    pub direction: SqueezeDirection,
}

pub(crate) fn space_to_depth(x: &Vol) -> Result<Vol> {
    if x.h % 2 != 0 || x.w % 2 != 0 {
        return Err(Error::Shape(format!(
            "space-to-depth needs even spatial dims, got {}x{}",
            x.h, x.w
        )));
    }
    let mut out = Vol::zeros(x.h / 2, x.w / 2, x.c * 4);
    for y in 0..out.h {
        for xx in 0..out.w {
            for c in 0..x.c {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let oc = c * 4 + dy * 2 + dx;
                        *out.at_mut(y, xx, oc) = x.at(2 * y + dy, 2 * xx + dx, c);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn depth_to_space(x: &Vol) -> Result<Vol> {
    if x.c % 4 != 0 {
        return Err(Error::Shape(format!(
            "depth-to-space needs channels divisible by 4, got {}",
            x.c
        )));
    }
    let co = x.c / 4;
    let mut out = Vol::zeros(x.h * 2, x.w * 2, co);
    for y in 0..x.h {
        for xx in 0..x.w {
            for c in 0..co {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let ic = c * 4 + dy * 2 + dx;
                        *out.at_mut(2 * y + dy, 2 * xx + dx, c) = x.at(y, xx, ic);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Applies the permutation described by `spec`.
pub fn squeeze_apply(spec: SqueezeSpec, x: &Tensor) -> Result<Tensor> {
    let vol = x.to_vol()?;
    let out = match spec.direction {
        SqueezeDirection::SpaceToDepth => space_to_depth(&vol)?,
        SqueezeDirection::DepthToSpace => depth_to_space(&vol)?,
    };
    Ok(out.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::rng::Rng;

    #[test]
    fn fixed_permutation_order() {
        let x = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::SpaceToDepth,
            },
            &x,
        )
        .unwrap();
        assert_eq!(y.dims(), &[1, 1, 4]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::DepthToSpace,
            },
            &y,
        )
        .unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn random_round_trip_is_bit_exact() {
        let mut rng = Rng::new(50, 0);
        let data: Vec<f32> = (0..64).map(|_| rng.normal() as f32).collect();
        let x = Tensor::new(vec![4, 4, 4], data).unwrap();
        let y = squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::SpaceToDepth,
            },
            &x,
        )
        .unwrap();
        assert_eq!(y.dims(), &[2, 2, 16]);
        let back = squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::DepthToSpace,
            },
            &y,
        )
        .unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn divisibility_violations() {
        let x = Tensor::zeros(vec![3, 4, 1]);
        assert!(squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::SpaceToDepth
            },
            &x
        )
        .is_err());
        let y = Tensor::zeros(vec![2, 2, 3]);
        assert!(squeeze_apply(
            SqueezeSpec {
                direction: SqueezeDirection::DepthToSpace
            },
            &y
        )
        .is_err());
    }
}
