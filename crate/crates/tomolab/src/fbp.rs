//! Reconstruction engine: ramp filtering and backprojection.
//!
//! The pipeline is the classical filtered backprojection, applied verbatim
//! to whatever sinogram it is given — including sinograms multiplied by an
//! incomplete-data cutoff. Filtering convolves each detector row with the
//! band-limited ramp kernel (the frequency response approaches `|tau|`);
//! backprojection smears the filtered rows over the image with linear
//! interpolation in the offset variable. `reconstruct` composes the two and
//! scales by `1/(4 pi)` so that full-data reconstruction approximates the
//! density itself.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SinogramWeight;

/// Uniform (angle x offset) sampling of the sinogram domain.
///
/// Views cover `[0, pi)` with spacing `pi / n_phi`; offsets cover
/// `[-p_max, p_max]` inclusive with spacing `2 p_max / (n_p - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinogramGrid {
    pub n_phi: usize,
    pub n_p: usize,
    pub p_max: f64,
}

impl SinogramGrid {
    pub fn new(n_phi: usize, n_p: usize, p_max: f64) -> Result<Self> {
        if n_phi < 2 || n_p < 2 {
            return Err(Error::config(format!(
                "sinogram grid needs at least 2 views and 2 bins, got {n_phi} x {n_p}"
            )));
        }
        if !(p_max > 0.0) {
            return Err(Error::config(format!("p_max must be positive, got {p_max}")));
        }
        Ok(SinogramGrid { n_phi, n_p, p_max })
    }

    /// Grid with the conventional offset half-range `sqrt(2)`.
    pub fn standard(n_phi: usize, n_p: usize) -> Result<Self> {
        Self::new(n_phi, n_p, std::f64::consts::SQRT_2)
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.delta_phi()
    }

    pub fn p(&self, i: usize) -> f64 {
        -self.p_max + i as f64 * self.delta_p()
    }

    pub fn delta_phi(&self) -> f64 {
        PI / self.n_phi as f64
    }

    pub fn delta_p(&self) -> f64 {
        2.0 * self.p_max / (self.n_p - 1) as f64
    }
}

/// Samples of a function of `(phi, p)` on a [`SinogramGrid`], row per view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub grid: SinogramGrid,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(grid: SinogramGrid) -> Self {
        Sinogram {
            values: vec![0.0; grid.n_phi * grid.n_p],
            grid,
        }
    }

    pub fn at(&self, view: usize, bin: usize) -> f64 {
        self.values[view * self.grid.n_p + bin]
    }

    pub fn row(&self, view: usize) -> &[f64] {
        &self.values[view * self.grid.n_p..(view + 1) * self.grid.n_p]
    }
}

/// Square pixel grid covering `[-extent, extent]^2`, pixel centers at
/// `-extent + (i + 1/2) * pixel_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub n: usize,
    pub extent: f64,
}

impl ImageGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("image grid needs n >= 2, got {n}")));
        }
        if !(extent > 0.0) {
            return Err(Error::config(format!("extent must be positive, got {extent}")));
        }
        Ok(ImageGrid { n, extent })
    }

    pub fn pixel_size(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// Center coordinate of row/column `i`.
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.pixel_size()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: ImageGrid) -> Self {
        Image {
            values: vec![0.0; grid.n * grid.n],
            grid,
        }
    }

    pub fn at(&self, iy: usize, ix: usize) -> f64 {
        self.values[iy * self.grid.n + ix]
    }

    /// Bilinear sample at a point in image coordinates, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n;
        let to_frac = |c: f64| (c + self.grid.extent) / self.grid.pixel_size() - 0.5;
        let fx = to_frac(x).clamp(0.0, (n - 1) as f64);
        let fy = to_frac(y).clamp(0.0, (n - 1) as f64);
        let ix = (fx.floor() as usize).min(n - 2);
        let iy = (fy.floor() as usize).min(n - 2);
        let ax = fx - ix as f64;
        let ay = fy - iy as f64;
        self.at(iy, ix) * (1.0 - ax) * (1.0 - ay)
            + self.at(iy, ix + 1) * ax * (1.0 - ay)
            + self.at(iy + 1, ix) * (1.0 - ax) * ay
            + self.at(iy + 1, ix + 1) * ax * ay
    }
}

/// Frequency-domain filter choice. The plain band-limited ramp is the
/// default; the Hann-windowed variant trades resolution for smoothness and
/// is provided for visual comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    Ramp,
    Hann,
}

/// Padded FFT length for rows of `n_p` bins: next power of two >= 2 n_p,
/// so row filtering is a linear (not circular) convolution.
fn padded_len(n_p: usize) -> usize {
    (2 * n_p).next_power_of_two()
}

/// Band-limited ramp kernel sampled at the detector spacing.
///
/// `h(0) = pi / (2 dp^2)`, `h(n) = -2 / (pi n^2 dp^2)` for odd `n`, zero for
/// even `n != 0`; this is the inverse Fourier transform of `|tau|` cut off
/// at the Nyquist frequency `pi / dp`, evaluated at the sample points.
pub fn ramp_kernel_tap(lag: i64, dp: f64) -> f64 {
    if lag == 0 {
        PI / (2.0 * dp * dp)
    } else if lag % 2 == 0 {
        0.0
    } else {
        let x = lag as f64 * dp;
        -2.0 / (PI * x * x)
    }
}

/// Frequency response of the wrapped ramp kernel on a padded row of length
/// `m`, including the convolution quadrature weight `dp`.
fn ramp_multiplier(m: usize, dp: f64, kind: FilterKind) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= m / 2 { j as i64 } else { j as i64 - m as i64 };
            Complex::new(ramp_kernel_tap(lag, dp) * dp, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let nyquist = PI / dp;
    (0..m)
        .map(|k| {
            // kernel is even, so the spectrum is real up to roundoff
            let h = buf[k].re;
            match kind {
                FilterKind::Ramp => h,
                FilterKind::Hann => {
                    let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
                    let tau = 2.0 * PI * kk / (m as f64 * dp);
                    h * 0.5 * (1.0 + (PI * tau / nyquist).cos())
                }
            }
        })
        .collect()
}

/// Apply the one-dimensional ramp filter to every view of the sinogram.
///
/// Rows are zero-padded to at least twice their length, transformed,
/// multiplied by the kernel's frequency response, and transformed back.
/// Linear and translation-equivariant in the offset variable.
pub fn lambda_filter(s: &Sinogram) -> Sinogram {
    lambda_filter_with(s, FilterKind::Ramp)
}

pub fn lambda_filter_with(s: &Sinogram, kind: FilterKind) -> Sinogram {
    let n_p = s.grid.n_p;
    let m = padded_len(n_p);
    let dp = s.grid.delta_p();
    let mult = ramp_multiplier(m, dp, kind);

    let mut planner = FftPlanner::new();
    let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(m);
    let ifft: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(m);

    let mut out = Sinogram::zeros(s.grid);
    out.values
        .par_chunks_mut(n_p)
        .zip(s.values.par_chunks(n_p))
        .for_each(|(orow, irow)| {
            let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
            for (b, &v) in buf.iter_mut().zip(irow.iter()) {
                b.re = v;
            }
            fft.process(&mut buf);
            for (b, &h) in buf.iter_mut().zip(mult.iter()) {
                *b *= h;
            }
            ifft.process(&mut buf);
            let scale = 1.0 / m as f64;
            for (o, b) in orow.iter_mut().zip(buf.iter()) {
                *o = b.re * scale;
            }
        });
    out
}

/// Discrete backprojection: `R* g (x) ~ 2 dphi sum_j g(phi_j, x . theta_j)`
/// with linear interpolation in the offset; offsets outside
/// `[-p_max, p_max]` contribute nothing. The factor 2 accounts for summing
/// over the half-range `[0, pi)` of the symmetric parametrization.
pub fn backproject(s: &Sinogram, grid: &ImageGrid) -> Image {
    let n_phi = s.grid.n_phi;
    let n_p = s.grid.n_p;
    let dp = s.grid.delta_p();
    let p_max = s.grid.p_max;
    let dphi = s.grid.delta_phi();
    let trig: Vec<(f64, f64)> = (0..n_phi)
        .map(|j| {
            let phi = s.grid.phi(j);
            (phi.cos(), phi.sin())
        })
        .collect();

    let n = grid.n;
    let mut img = Image::zeros(*grid);
    img.values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(iy, row)| {
            let y = grid.coord(iy);
            for (ix, out) in row.iter_mut().enumerate() {
                let x = grid.coord(ix);
                let mut acc = 0.0;
                for (j, &(c, si)) in trig.iter().enumerate() {
                    let u = (x * c + y * si + p_max) / dp;
                    let i0f = u.floor();
                    let w = u - i0f;
                    let i0 = i0f as i64;
                    let base = j * n_p;
                    if i0 >= 0 && (i0 as usize) < n_p {
                        acc += (1.0 - w) * s.values[base + i0 as usize];
                    }
                    let i1 = i0 + 1;
                    if i1 >= 0 && (i1 as usize) < n_p {
                        acc += w * s.values[base + i1 as usize];
                    }
                }
                *out = 2.0 * dphi * acc;
            }
        });
    img
}

/// Filtered backprojection of a (possibly cutoff-multiplied) sinogram:
/// apply the weight if given, ramp-filter, backproject, scale by
/// `1/(4 pi)`.
pub fn reconstruct(
    s: &Sinogram,
    weight: Option<&dyn SinogramWeight>,
    grid: &ImageGrid,
) -> Image {
    reconstruct_with(s, weight, grid, FilterKind::Ramp)
}

pub fn reconstruct_with(
    s: &Sinogram,
    weight: Option<&dyn SinogramWeight>,
    grid: &ImageGrid,
    kind: FilterKind,
) -> Image {
    let filtered = match weight {
        Some(w) => lambda_filter_with(&crate::mask::apply(w, s), kind),
        None => lambda_filter_with(s, kind),
    };
    let mut img = backproject(&filtered, grid);
    let scale = 1.0 / (4.0 * PI);
    for v in &mut img.values {
        *v *= scale;
    }
    img
}

/// Relative L2 error `|a - b|_2 / |b|_2` over a centered disk
/// (default radius `0.95 * extent`, which excludes boundary ringing).
pub fn l2_error(a: &Image, b: &Image, region_radius: Option<f64>) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::config("l2_error: image grids differ"));
    }
    let r = region_radius.unwrap_or(0.95 * a.grid.extent);
    let r2 = r * r;
    let n = a.grid.n;
    let mut num = 0.0;
    let mut den = 0.0;
    for iy in 0..n {
        let y = a.grid.coord(iy);
        for ix in 0..n {
            let x = a.grid.coord(ix);
            if x * x + y * y <= r2 {
                let d = a.at(iy, ix) - b.at(iy, ix);
                num += d * d;
                let v = b.at(iy, ix);
                den += v * v;
            }
        }
    }
    if den == 0.0 {
        return Err(Error::numerical("l2_error: reference image is zero on region"));
    }
    Ok((num / den).sqrt())
}
