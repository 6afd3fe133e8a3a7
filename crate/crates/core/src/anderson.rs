//! Fixed-point iteration `x = G(x)` with Anderson mixing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{self, C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    /// History length; 0 gives plain Picard iteration.
    pub depth: usize,
    /// Stop when `|G(x) - x| <= tolerance * |G(x)|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Return the last iterate instead of failing when not converged.
    pub allow_unconverged: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            depth: 3,
            tolerance: 1e-8,
            max_iterations: 100,
            allow_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual of every evaluated iterate.
    pub residuals: Vec<f64>,
}

impl FixedPointReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// Whether the last `count` residuals decrease.
    pub fn monotone_tail(&self, count: usize) -> bool {
        let n = self.residuals.len();
        let tail = &self.residuals[n.saturating_sub(count)..];
        tail.windows(2).all(|w| w[1] <= w[0])
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `x = g(x)` from `x0`.
pub fn solve(
    x0: Vec<C64>,
    mut g: impl FnMut(&[C64]) -> Vec<C64>,
    opts: &FixedPointOptions,
) -> Result<(Vec<C64>, FixedPointReport)> {
    let mut report = FixedPointReport::default();
    let mut x = x0;
    // history of residual and image differences
    let mut d_res: Vec<Vec<C64>> = Vec::new();
    let mut d_img: Vec<Vec<C64>> = Vec::new();
    let mut prev: Option<(Vec<C64>, Vec<C64>)> = None;
    for it in 0..=opts.max_iterations {
        let gx = g(&x);
        let res: Vec<C64> = gx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let rel = norm(&res) / norm(&gx).max(f64::MIN_POSITIVE);
        if !rel.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                last: rel,
                history: report.residuals,
            });
        }
        report.residuals.push(rel);
        report.iterations = it;
        if rel <= opts.tolerance {
            report.converged = true;
            return Ok((gx, report));
        }
        if it == opts.max_iterations {
            break;
        }
        if let Some((pr, pg)) = prev.take() {
            d_res.push(res.iter().zip(&pr).map(|(a, b)| a - b).collect());
            d_img.push(gx.iter().zip(&pg).map(|(a, b)| a - b).collect());
            if d_res.len() > opts.depth {
                d_res.remove(0);
                d_img.remove(0);
            }
        }
        let mut next = gx.clone();
        let k = d_res.len();
        if k > 0 {
            // least squares min |res - ΔR γ| by regularized normal equations
            let mut gram = vec![ZERO; k * k];
            let mut rhs = vec![ZERO; k];
            for i in 0..k {
                for j in 0..k {
                    gram[i * k + j] = dot(&d_res[i], &d_res[j]);
                }
                rhs[i] = dot(&d_res[i], &res);
            }
            let trace: f64 = (0..k).map(|i| gram[i * k + i].re).sum();
            for i in 0..k {
                gram[i * k + i] += trace * 1e-12;
            }
            if let Ok(lu) = mat::Lu::new(&gram, k) {
                lu.solve_in_place(&mut rhs, 1);
                for (gm, dg) in rhs.iter().zip(&d_img) {
                    for (n, d) in next.iter_mut().zip(dg) {
                        *n -= gm * d;
                    }
                }
            }
        }
        prev = Some((res, gx));
        x = next;
    }
    if opts.allow_unconverged {
        return Ok((x, report));
    }
    Err(Error::NonConvergence {
        iterations: report.iterations,
        last: report.final_residual(),
        history: report.residuals,
    })
}
