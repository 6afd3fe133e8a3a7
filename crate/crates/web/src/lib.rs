//! Browser bindings: sinogram heatmaps, an attenuated round trip and the
//! Hilbert transform of a line.

use nonabelian_radon::attenuated_inversion::{invert_attenuated, InversionOptions};
use nonabelian_radon::cauchy_ops::riesz_projections;
use nonabelian_radon::narf::block_magnitudes;
use nonabelian_radon::phantom::{bump, make_phantom, PhantomKind, PhantomSpec};
use nonabelian_radon::ray_transport::{attenuated_radon, nonabelian_radon, TransportOptions};
use nonabelian_radon::{GridSpec, MatrixField, C64};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major grey image.
#[wasm_bindgen]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

#[wasm_bindgen]
impl Image {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

impl Image {
    fn of_field(f: &MatrixField) -> Self {
        // grid rows run along x2; flip so +x2 is up on screen
        let n = f.grid.n;
        let mags = block_magnitudes(&f.values, f.block());
        let data = (0..n)
            .rev()
            .flat_map(|r| mags[r * n..(r + 1) * n].to_vec())
            .collect();
        Self {
            width: n,
            height: n,
            data,
        }
    }
}

/// `|S(A) - I|` per line (rows are angles) for a library phantom.
#[wasm_bindgen]
pub fn sinogram(
    kind: &str,
    n: usize,
    m: usize,
    amplitude: f64,
    angles: usize,
    seed: u32,
) -> Result<Image, JsError> {
    let kind: PhantomKind = kind.parse().map_err(js)?;
    let grid = GridSpec::new(n, 1.0).map_err(js)?;
    let a = make_phantom(
        &PhantomSpec::new(kind, m, seed as u64).amplitude(amplitude),
        grid,
    )
    .and_then(|p| p.into_gauge())
    .map_err(js)?;
    let mut s = nonabelian_radon(&a, angles, &TransportOptions::default()).map_err(js)?;
    for blk in s.values.chunks_mut(m * m) {
        for i in 0..m {
            blk[i * m + i] -= C64::new(1.0, 0.0);
        }
    }
    Ok(Image {
        width: s.n_offsets(),
        height: angles,
        data: block_magnitudes(&s.values, m * m),
    })
}

#[wasm_bindgen]
pub struct RoundTrip {
    truth: Image,
    recovered: Image,
    error: f64,
}

#[wasm_bindgen]
impl RoundTrip {
    pub fn truth(&self) -> Image {
        self.truth.clone_image()
    }

    pub fn recovered(&self) -> Image {
        self.recovered.clone_image()
    }

    /// Relative L2 error of the reconstruction.
    #[wasm_bindgen(getter)]
    pub fn error(&self) -> f64 {
        self.error
    }
}

impl Image {
    fn clone_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }
}

/// Scalar source behind a disk of constant attenuation: forward transform,
/// then reconstruction.
#[wasm_bindgen]
pub fn attenuated_round_trip(
    n: usize,
    angles: usize,
    attenuation: f64,
    cx: f64,
    cy: f64,
) -> Result<RoundTrip, JsError> {
    let grid = GridSpec::new(n, 1.0).map_err(js)?;
    let a = make_phantom(
        &PhantomSpec::new(PhantomKind::Disk, 1, 0).amplitude(attenuation),
        grid,
    )
    .and_then(|p| p.into_gauge())
    .map_err(js)?;
    let f = MatrixField::from_fn(grid, 1, 1, |x1, x2, o| {
        o[0] = C64::new(bump(x1, x2, [cx, cy], 0.25, 1.0), 0.0)
    });
    let data = attenuated_radon(&a, &f, angles, &TransportOptions::default()).map_err(js)?;
    let f_hat = invert_attenuated(&a, &data, &InversionOptions::default())
        .map_err(js)?
        .f_hat;
    Ok(RoundTrip {
        truth: Image::of_field(&f),
        recovered: Image::of_field(&f_hat),
        error: f_hat.relative_l2_error(&f),
    })
}

/// Hilbert transform of real samples, from `Hf = i(2Π⁺f - f)`.
#[wasm_bindgen]
pub fn hilbert(samples: Vec<f64>) -> Vec<f64> {
    let line: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    let (plus, _) = riesz_projections(&line);
    plus.iter()
        .zip(&line)
        .map(|(p, f)| (C64::new(0.0, 1.0) * (2.0 * p - f)).re)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hilbert_of_a_cosine_is_a_sine() {
        let n = 512;
        let h = 0.05;
        let samples: Vec<f64> = (0..n)
            .map(|k| {
                let y = (k as f64 - n as f64 / 2.0) * h;
                (-y * y / 4.0).exp() * (3.0 * y).cos()
            })
            .collect();
        let out = hilbert(samples);
        // the envelope is wide against the period, so H cos ≈ sin
        for k in n / 2 - 20..n / 2 + 20 {
            let y = (k as f64 - n as f64 / 2.0) * h;
            let want = (-y * y / 4.0).exp() * (3.0 * y).sin();
            assert!((out[k] - want).abs() < 1e-2, "{k} {} {want}", out[k]);
        }
    }

    #[test]
    fn round_trip_is_accurate() {
        let r = attenuated_round_trip(64, 128, 1.0, 0.1, 0.0).unwrap();
        assert!(r.error() < 0.1, "{}", r.error());
        assert_eq!(r.truth().data().len(), 64 * 64);
    }

    #[test]
    fn zero_amplitude_gives_a_blank_sinogram() {
        let s = sinogram("gaussian_bump", 16, 2, 0.0, 8, 0).unwrap();
        assert_eq!((s.width(), s.height()), (16, 8));
        assert_eq!(s.max(), 0.0);
    }
}
