//! Brute-force differentiation oracles.
//!
//! Every differentiable map in the crate is validated against these: an
//! exact Jacobian assembled column-by-column from JVPs, and a central
//! finite-difference Jacobian that needs only evaluations.

use crate::error::{Error, Result};
use crate::substrate::linalg::Mat;

/// A differentiable map from R^a to R^b with a JVP contract.
pub trait DiffMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    /// Exact directional derivative at `x` along `tangent`.
    fn jvp(&self, x: &[f64], tangent: &[f64]) -> Vec<f64>;
}

/// Closure-backed map for tests and oracles.
pub struct FnMap<E, J>
where
    E: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    pub in_dim: usize,
    pub out_dim: usize,
    pub eval: E,
    pub jvp: J,
}

impl<E, J> DiffMap for FnMap<E, J>
where
    E: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }
    fn jvp(&self, x: &[f64], tangent: &[f64]) -> Vec<f64> {
        (self.jvp)(x, tangent)
    }
}

/// Exact Jacobian at `point`: column i = jvp(point, e_i). Oracle scale only
/// (input dimension capped at 512).
pub fn exact_jacobian(map: &dyn DiffMap, point: &[f64]) -> Result<Mat> {
    let a = map.in_dim();
    let b = map.out_dim();
    if a > 512 {
        return Err(Error::Invalid(format!(
            "exact_jacobian capped at input dim 512, got {a}"
        )));
    }
    if point.len() != a {
        return Err(Error::Shape(format!(
            "point has {} entries, map expects {a}",
            point.len()
        )));
    }
    let mut jac = Mat::zeros(b, a);
    let mut e = vec![0.0; a];
    for i in 0..a {
        e[i] = 1.0;
        let col = map.jvp(point, &e);
        if col.len() != b {
            return Err(Error::Shape(format!(
                "jvp returned {} entries, expected {b}",
                col.len()
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exact_jacobian jvp output".into()));
        }
        for r in 0..b {
            *jac.at_mut(r, i) = col[r];
        }
        e[i] = 0.0;
    }
    Ok(jac)
}

/// Central finite-difference Jacobian: column i =
/// (f(x + h·e_i) − f(x − h·e_i)) / (2h).
pub fn finite_difference_jacobian(map: &dyn DiffMap, point: &[f64], h: f64) -> Result<Mat> {
    if h <= 0.0 {
        return Err(Error::Invalid("finite difference step must be positive".into()));
    }
    let a = map.in_dim();
    let b = map.out_dim();
    if point.len() != a {
        return Err(Error::Shape(format!(
            "point has {} entries, map expects {a}",
            point.len()
        )));
    }
    let mut jac = Mat::zeros(b, a);
    let mut xp = point.to_vec();
    let mut xm = point.to_vec();
    for i in 0..a {
        xp[i] = point[i] + h;
        xm[i] = point[i] - h;
        let fp = map.eval(&xp);
        let fm = map.eval(&xm);
        for r in 0..b {
            *jac.at_mut(r, i) = (fp[r] - fm[r]) / (2.0 * h);
        }
        xp[i] = point[i];
        xm[i] = point[i];
    }
    Ok(jac)
}

/// Relative Frobenius distance between two Jacobians.
pub fn rel_frobenius(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frobenius() / a.frobenius().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_map(n: usize) -> impl DiffMap {
        FnMap {
            in_dim: n,
            out_dim: n,
            eval: |x: &[f64]| x.to_vec(),
            jvp: |_: &[f64], t: &[f64]| t.to_vec(),
        }
    }

    #[test]
    fn identity_jacobian() {
        let map = identity_map(3);
        let jac = exact_jacobian(&map, &[0.3, -1.0, 2.0]).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_eq!(jac.at(r, c), expect);
            }
        }
        let fd = finite_difference_jacobian(&map, &[0.3, -1.0, 2.0], 1e-3).unwrap();
        assert!(rel_frobenius(&jac, &fd) < 1e-12);
    }

    #[test]
    fn doubling_map() {
        let map = FnMap {
            in_dim: 2,
            out_dim: 2,
            eval: |x: &[f64]| x.iter().map(|v| 2.0 * v).collect(),
            jvp: |_: &[f64], t: &[f64]| t.iter().map(|v| 2.0 * v).collect(),
        };
        let jac = exact_jacobian(&map, &[1.0, 1.0]).unwrap();
        assert_eq!(jac.at(0, 0), 2.0);
        assert_eq!(jac.at(1, 1), 2.0);
        assert_eq!(jac.at(0, 1), 0.0);
    }

    #[test]
    fn square_derivative_via_central_differences() {
        let map = FnMap {
            in_dim: 1,
            out_dim: 1,
            eval: |x: &[f64]| vec![x[0] * x[0]],
            jvp: |x: &[f64], t: &[f64]| vec![2.0 * x[0] * t[0]],
        };
        let fd = finite_difference_jacobian(&map, &[3.0], 1e-3).unwrap();
        assert!((fd.at(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_cap() {
        let map = identity_map(513);
        assert!(exact_jacobian(&map, &vec![0.0; 513]).is_err());
    }
}
