//! Small dense matrices and the decompositions the rest of the crate builds
//! on: one-sided Jacobi SVD, Cholesky solves, and orthonormal initializers.
//!
//! Everything here is f64 and dependency-free; sizes are desk-scale
//! (the SVD caps inputs at 262144 elements).

use crate::error::{Error, Result};
use crate::substrate::rng::Rng;

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *t.at_mut(c, r) = self.at(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.at(k, c);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dims");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Aᵀx without materializing the transpose.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "matvec_t dims");
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for c in 0..self.cols {
                out[c] += self.at(r, c) * xr;
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Singular value decomposition M = U·diag(S)·Vᵀ with S descending.
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

/// One-sided Jacobi SVD, capped at 100 sweeps.
///
/// Returns singular values in descending order; reconstruction error is
/// far below the 1e-5 contract for well-posed desk-scale inputs. Inputs
/// larger than 262144 elements and sweep-cap overruns are rejected.
pub fn svd_small(m: &Mat) -> Result<Svd> {
    if m.rows * m.cols > 262_144 {
        return Err(Error::Invalid(format!(
            "svd_small limited to 262144 elements, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd_small input".into()));
    }
    if m.rows >= m.cols {
        svd_tall(m)
    } else {
        // Work on the transpose and swap factors back.
        let svd = svd_tall(&m.transpose())?;
        Ok(Svd {
            u: svd.vt.transpose(),
            s: svd.s,
            vt: svd.u.transpose(),
        })
    }
}

fn svd_tall(m: &Mat) -> Result<Svd> {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.clone();
    let mut v = Mat::identity(cols);
    let tol = 1e-14;
    let max_sweeps = 100;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..rows {
                    let ap = a.at(r, p);
                    let aq = a.at(r, q);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() + f64::MIN_POSITIVE {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let ap = a.at(r, p);
                    let aq = a.at(r, q);
                    *a.at_mut(r, p) = c * ap - s * aq;
                    *a.at_mut(r, q) = s * ap + c * aq;
                }
                for r in 0..cols {
                    let vp = v.at(r, p);
                    let vq = v.at(r, q);
                    *v.at_mut(r, p) = c * vp - s * vq;
                    *v.at_mut(r, q) = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "svd_small did not converge within 100 Jacobi sweeps".into(),
        ));
    }

    let mut s: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|r| a.at(r, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());

    let mut u = Mat::zeros(rows, cols);
    let mut vt = Mat::zeros(cols, cols);
    let s_sorted: Vec<f64> = order.iter().map(|&j| s[j]).collect();
    for (k, &j) in order.iter().enumerate() {
        let sj = s[j];
        if sj > 0.0 {
            for r in 0..rows {
                *u.at_mut(r, k) = a.at(r, j) / sj;
            }
        } else {
            // Zero column: leave a unit vector slot so U stays well-formed.
            *u.at_mut(k.min(rows - 1), k) = 1.0;
        }
        for r in 0..cols {
            *vt.at_mut(k, r) = v.at(r, j);
        }
    }
    s = s_sorted;
    Ok(Svd { u, s, vt })
}

/// Cholesky factorization of a symmetric positive-definite matrix (lower L).
pub fn cholesky(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.at(i, j);
            for k in 0..j {
                sum -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {sum:.3e} at index {i}; matrix not positive definite"
                    )));
                }
                *l.at_mut(i, j) = sum.sqrt();
            } else {
                *l.at_mut(i, j) = sum / l.at(j, j);
            }
        }
    }
    Ok(l)
}

/// Solves A x = b for SPD A via Cholesky.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Solves using a precomputed Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.at(i, k) * y[k];
        }
        y[i] = sum / l.at(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l.at(k, i) * x[k];
        }
        x[i] = sum / l.at(i, i);
    }
    x
}

/// Inverse of an SPD matrix via Cholesky solves on unit vectors.
pub fn inverse_spd(a: &Mat) -> Result<Mat> {
    let n = a.rows;
    let l = cholesky(a)?;
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            *inv.at_mut(i, j) = col[i];
        }
        e[j] = 0.0;
    }
    Ok(inv)
}

/// Random matrix with orthonormal columns (rows ≥ cols), via Gram–Schmidt
/// with re-orthogonalization on a Gaussian draw.
pub fn orthonormal_columns(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    assert!(rows >= cols, "orthonormal_columns needs rows >= cols");
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        for _pass in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|r| v[r] * m.at(r, k)).sum();
                for r in 0..rows {
                    v[r] -= dot * m.at(r, k);
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // Astronomically unlikely; retry with fresh noise.
            return orthonormal_columns(rows, cols, rng);
        }
        for r in 0..rows {
            *m.at_mut(r, j) = v[r] / norm;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(svd: &Svd) -> Mat {
        let mut us = svd.u.clone();
        for r in 0..us.rows {
            for c in 0..us.cols {
                *us.at_mut(r, c) *= svd.s[c];
            }
        }
        us.matmul(&svd.vt)
    }

    #[test]
    fn svd_diag() {
        let m = Mat::from_rows(vec![vec![3.0, 0.0], vec![0.0, 1.0]]);
        let svd = svd_small(&m).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-12);
        assert!((svd.s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_permutation() {
        let m = Mat::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let svd = svd_small(&m).unwrap();
        assert!((svd.s[0] - 1.0).abs() < 1e-12);
        assert!((svd.s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_reconstruction_and_descending() {
        let mut rng = Rng::new(11, 0);
        for trial in 0..20 {
            let rows = 2 + (trial % 5);
            let cols = 1 + (trial % 4);
            let mut m = Mat::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = rng.normal();
            }
            let svd = svd_small(&m).unwrap();
            let rec = reconstruct(&svd);
            let rel = rec.sub(&m).frobenius() / m.frobenius().max(1e-30);
            assert!(rel < 1e-10, "reconstruction rel err {rel}");
            for w in svd.s.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
            for &s in &svd.s {
                assert!(s >= 0.0);
            }
        }
    }

    #[test]
    fn svd_wide_matrix() {
        let m = Mat::from_rows(vec![vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]);
        let svd = svd_small(&m).unwrap();
        let rec = reconstruct(&svd);
        assert!(rec.sub(&m).frobenius() < 1e-10);
    }

    /// Singular values of a random 4x2 matrix must match the eigenvalues of
    /// sqrt(MᵀM) computed independently from the 2x2 characteristic
    /// polynomial.
    #[test]
    fn svd_matches_characteristic_polynomial_oracle() {
        let mut rng = Rng::new(3, 1);
        let mut m = Mat::zeros(4, 2);
        for v in m.data.iter_mut() {
            *v = rng.normal();
        }
        let g = m.transpose().matmul(&m); // 2x2 Gram matrix
        let (a, b, c, d) = (g.at(0, 0), g.at(0, 1), g.at(1, 0), g.at(1, 1));
        let tr = a + d;
        let det = a * d - b * c;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let lam1 = tr / 2.0 + disc;
        let lam2 = tr / 2.0 - disc;
        let svd = svd_small(&m).unwrap();
        assert!((svd.s[0] - lam1.sqrt()).abs() < 1e-10);
        assert!((svd.s[1] - lam2.max(0.0).sqrt()).abs() < 1e-10);
    }

    /// ‖M v_i‖ = s_i for each right singular vector.
    #[test]
    fn singular_vector_consistency() {
        let mut rng = Rng::new(5, 2);
        let mut m = Mat::zeros(5, 3);
        for v in m.data.iter_mut() {
            *v = rng.normal();
        }
        let svd = svd_small(&m).unwrap();
        for i in 0..3 {
            let vi: Vec<f64> = (0..3).map(|j| svd.vt.at(i, j)).collect();
            let mv = m.matvec(&vi);
            let norm = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - svd.s[i]).abs() < 1e-4 * svd.s[0].max(1.0));
        }
    }

    #[test]
    fn spd_solve_round_trip() {
        let mut rng = Rng::new(9, 0);
        let mut b = Mat::zeros(4, 4);
        for v in b.data.iter_mut() {
            *v = rng.normal();
        }
        let mut a = b.transpose().matmul(&b);
        for i in 0..4 {
            *a.at_mut(i, i) += 1.0;
        }
        let x_true: Vec<f64> = (0..4).map(|i| i as f64 - 1.5).collect();
        let rhs = a.matvec(&x_true);
        let x = solve_spd(&a, &rhs).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-10);
        }
        let inv = inverse_spd(&a).unwrap();
        let eye = a.matmul(&inv);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((eye.at(i, j) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = Rng::new(21, 0);
        let m = orthonormal_columns(6, 3, &mut rng);
        let g = m.transpose().matmul(&m);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g.at(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&m).is_err());
    }
}
