//! Small dense complex matrices.
//!
//! Fields in this crate carry an `m x m` (or `m x k`) matrix per grid node
//! with `m` in the single digits, so everything here works on flat row-major
//! slices. The slice kernels are what the hot loops call; [`Mat`] is the
//! owned wrapper used at API boundaries.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `out = a * b` with `a: r x k`, `b: k x c`.
#[inline]
pub fn mul_into(a: &[C64], b: &[C64], out: &mut [C64], r: usize, k: usize, c: usize) {
    debug_assert!(a.len() >= r * k && b.len() >= k * c && out.len() >= r * c);
    for i in 0..r {
        for j in 0..c {
            let mut acc = ZERO;
            for l in 0..k {
                acc += a[i * k + l] * b[l * c + j];
            }
            out[i * c + j] = acc;
        }
    }
}

/// `out += s * a * b`.
#[inline]
pub fn mul_acc(a: &[C64], b: &[C64], s: C64, out: &mut [C64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        for j in 0..c {
            let mut acc = ZERO;
            for l in 0..k {
                acc += a[i * k + l] * b[l * c + j];
            }
            out[i * c + j] += s * acc;
        }
    }
}

pub fn identity_into(out: &mut [C64], m: usize) {
    for (idx, v) in out[..m * m].iter_mut().enumerate() {
        *v = if idx / m == idx % m { ONE } else { ZERO };
    }
}

/// Largest entry modulus.
pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Frobenius norm.
pub fn frob(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    m: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &[C64], m: usize) -> Result<Self> {
        let mut lu = a[..m * m].to_vec();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut sign = 1.0;
        let scale = max_abs(&lu).max(f64::MIN_POSITIVE);
        for col in 0..m {
            let mut piv = col;
            let mut best = lu[col * m + col].norm();
            for row in col + 1..m {
                let v = lu[row * m + col].norm();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best <= scale * 1e-300 || !best.is_finite() {
                return Err(Error::Singular {
                    context: "LU factorization",
                });
            }
            if piv != col {
                for j in 0..m {
                    lu.swap(col * m + j, piv * m + j);
                }
                perm.swap(col, piv);
                sign = -sign;
            }
            let d = lu[col * m + col];
            for row in col + 1..m {
                let f = lu[row * m + col] / d;
                lu[row * m + col] = f;
                for j in col + 1..m {
                    let t = lu[col * m + j];
                    lu[row * m + j] -= f * t;
                }
            }
        }
        Ok(Self { m, lu, perm, sign })
    }

    pub fn det(&self) -> C64 {
        let mut d = C64::new(self.sign, 0.0);
        for i in 0..self.m {
            d *= self.lu[i * self.m + i];
        }
        d
    }

    /// Solves `A X = B` in place for a `m x k` right-hand side.
    pub fn solve_in_place(&self, b: &mut [C64], k: usize) {
        let m = self.m;
        let src = b[..m * k].to_vec();
        for i in 0..m {
            let p = self.perm[i];
            b[i * k..(i + 1) * k].copy_from_slice(&src[p * k..(p + 1) * k]);
        }
        for i in 0..m {
            for l in 0..i {
                let f = self.lu[i * m + l];
                for j in 0..k {
                    let t = b[l * k + j];
                    b[i * k + j] -= f * t;
                }
            }
        }
        for i in (0..m).rev() {
            for l in i + 1..m {
                let f = self.lu[i * m + l];
                for j in 0..k {
                    let t = b[l * k + j];
                    b[i * k + j] -= f * t;
                }
            }
            let d = self.lu[i * m + i];
            for j in 0..k {
                b[i * k + j] /= d;
            }
        }
    }

    pub fn inverse_into(&self, out: &mut [C64]) {
        identity_into(out, self.m);
        self.solve_in_place(out, self.m);
    }
}

/// Inverse of an `m x m` matrix. Fails when the pivot collapses.
pub fn inverse_into(a: &[C64], out: &mut [C64], m: usize) -> Result<()> {
    match m {
        1 => {
            if a[0] == ZERO || !a[0].is_finite() {
                return Err(Error::Singular {
                    context: "scalar inverse",
                });
            }
            out[0] = a[0].inv();
            Ok(())
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            let scale = max_abs(&a[..4]);
            if det.norm() <= scale * scale * 1e-300 || !det.is_finite() || det == ZERO {
                return Err(Error::Singular {
                    context: "2x2 inverse",
                });
            }
            let inv = det.inv();
            out[0] = a[3] * inv;
            out[1] = -a[1] * inv;
            out[2] = -a[2] * inv;
            out[3] = a[0] * inv;
            Ok(())
        }
        _ => {
            Lu::new(a, m)?.inverse_into(out);
            Ok(())
        }
    }
}

pub fn det(a: &[C64], m: usize) -> C64 {
    match m {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => Lu::new(a, m).map(|lu| lu.det()).unwrap_or(ZERO),
    }
}

fn norm1(a: &[C64], m: usize) -> f64 {
    (0..m)
        .map(|j| (0..m).map(|i| a[i * m + j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number, computed from the explicit inverse.
pub fn condition_number(a: &[C64], m: usize) -> f64 {
    let mut inv = vec![ZERO; m * m];
    match inverse_into(a, &mut inv, m) {
        Ok(()) => norm1(a, m) * norm1(&inv, m),
        Err(_) => f64::INFINITY,
    }
}

/// Matrix exponential by scaling and squaring with a degree-16 Taylor core.
pub fn expm_into(a: &[C64], out: &mut [C64], m: usize) {
    let nrm = norm1(a, m);
    let mut s = 0u32;
    if nrm > 0.5 {
        s = (nrm / 0.5).log2().ceil() as u32;
    }
    let scale = 0.5f64.powi(s as i32);
    let x: Vec<C64> = a[..m * m].iter().map(|v| v * scale).collect();
    let mut term = vec![ZERO; m * m];
    identity_into(&mut term, m);
    identity_into(out, m);
    let mut next = vec![ZERO; m * m];
    for k in 1..=16 {
        mul_into(&term, &x, &mut next, m, m, m);
        let inv_k = 1.0 / k as f64;
        for (t, nv) in term.iter_mut().zip(&next) {
            *t = nv * inv_k;
        }
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
        }
    }
    for _ in 0..s {
        mul_into(out, out, &mut next, m, m, m);
        out[..m * m].copy_from_slice(&next);
    }
}

/// Owned row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut out = Self::zeros(m, m);
        identity_into(&mut out.data, m);
        out
    }

    pub fn from_slice(rows: usize, cols: usize, data: &[C64]) -> Self {
        Self {
            rows,
            cols,
            data: data[..rows * cols].to_vec(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn mul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matrix shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        mul_into(
            &self.data,
            &rhs.data,
            &mut out.data,
            self.rows,
            self.cols,
            rhs.cols,
        );
        out
    }

    pub fn inverse(&self) -> Result<Mat> {
        assert_eq!(self.rows, self.cols);
        let mut out = Mat::zeros(self.rows, self.cols);
        inverse_into(&self.data, &mut out.data, self.rows)?;
        Ok(out)
    }

    pub fn det(&self) -> C64 {
        det(&self.data, self.rows)
    }

    pub fn expm(&self) -> Mat {
        let mut out = Mat::zeros(self.rows, self.cols);
        expm_into(&self.data, &mut out.data, self.rows);
        out
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_3x3_round_trip() {
        let a = Mat::from_slice(
            3,
            3,
            &[
                c(2.0, 0.1),
                c(0.3, -1.0),
                c(0.0, 0.5),
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(4.0, 1.0),
                c(-1.0, 2.0),
                c(0.2, 0.2),
                c(1.0, -0.3),
            ],
        );
        let prod = a.mul(&a.inverse().unwrap());
        assert!(prod.sub(&Mat::identity(3)).max_abs() < 1e-13);
        let lu = Lu::new(&a.data, 3).unwrap();
        assert!((lu.det() - det(&a.data, 3)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = [c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        let mut out = [ZERO; 4];
        assert!(inverse_into(&a, &mut out, 2).is_err());
        let b = [ZERO; 9];
        assert!(Lu::new(&b, 3).is_err());
    }

    #[test]
    fn expm_of_nilpotent_truncates() {
        let a = Mat::from_slice(2, 2, &[ZERO, c(3.0, -1.0), ZERO, ZERO]);
        let e = a.expm();
        let expected = Mat::from_slice(2, 2, &[ONE, c(3.0, -1.0), ZERO, ONE]);
        assert!(e.sub(&expected).max_abs() < 1e-13);
    }

    #[test]
    fn expm_scalar_matches_exp() {
        let z = c(1.7, -2.3);
        let e = Mat::from_slice(1, 1, &[z]).expm();
        assert!((e.at(0, 0) - z.exp()).norm() < 1e-12 * z.exp().norm());
    }

    #[test]
    fn expm_det_is_exp_trace() {
        let a = Mat::from_slice(
            2,
            2,
            &[c(0.4, 0.1), c(-1.2, 0.3), c(0.7, 0.0), c(-0.1, 0.9)],
        );
        let tr = a.at(0, 0) + a.at(1, 1);
        assert!((a.expm().det() - tr.exp()).norm() < 1e-12);
    }
}
