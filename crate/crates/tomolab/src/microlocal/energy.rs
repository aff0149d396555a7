//! Quantifying predicted artifacts on reconstructed images.
//!
//! A predicted geometry (streak line or artifact curve) is scored by the
//! mean high-pass magnitude over a pixel tube around it, compared with the
//! same statistic over randomly placed congruent control tubes. Control
//! placement preserves the geometry's relation to the image center (lines
//! keep their offset and get a random angle; curves are rotated about the
//! center and jittered), so signal and background sample comparable image
//! texture. Pixels near any *other* predicted geometry are excluded from
//! both sides, which keeps tangential contacts between predictions (for
//! instance a streak line touching the end of an artifact curve) from
//! contaminating the measurement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbp::Image;
use crate::phantom::Phantom;

use super::{StreakLine, XbCurve};

/// Pixel tube geometry for energy measurements.
#[derive(Debug, Clone)]
pub enum TubeGeometry {
    /// Full line `x . theta(phi) = p` across the image.
    Line { phi: f64, p: f64 },
    /// One or more polyline chains in image coordinates.
    Curve(Vec<Vec<[f64; 2]>>),
}

impl TubeGeometry {
    fn distance(&self, x: f64, y: f64) -> f64 {
        match self {
            TubeGeometry::Line { phi, p } => (x * phi.cos() + y * phi.sin() - p).abs(),
            TubeGeometry::Curve(chains) => {
                let mut best = f64::INFINITY;
                for chain in chains {
                    for seg in chain.windows(2) {
                        best = best.min(point_segment_distance(x, y, seg[0], seg[1]));
                    }
                }
                best
            }
        }
    }
}

fn point_segment_distance(x: f64, y: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x - a[0]) * vx + (y - a[1]) * vy) / len2).clamp(0.0, 1.0)
    };
    (x - a[0] - t * vx).hypot(y - a[1] - t * vy)
}

/// Options for [`artifact_energy`].
#[derive(Debug, Clone)]
pub struct EnergyOptions {
    /// Tube half-width in pixels.
    pub half_width: f64,
    /// Number of control tubes.
    pub n_controls: usize,
    /// Seed for control placement.
    pub seed: u64,
    /// Angle range from which line-control angles are drawn
    /// (default: all of `[0, pi)`).
    pub control_angles: Option<(f64, f64)>,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions { half_width: 2.0, n_controls: 16, seed: 0, control_angles: None }
    }
}

/// Result of one energy measurement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyMeasurement {
    /// Mean high-pass magnitude over the geometry's tube.
    pub signal: f64,
    /// Mean of the same statistic over the control tubes.
    pub background: f64,
    pub ratio: f64,
    pub n_controls: usize,
    pub signal_pixels: usize,
    pub seed: u64,
}

/// High-pass: image minus its 5x5 mean filter (borders replicated).
pub fn highpass(img: &Image) -> Image {
    let n = img.grid.n as i64;
    let mut out = Image::zeros(img.grid);
    out.values
        .par_chunks_mut(img.grid.n)
        .enumerate()
        .for_each(|(iy, row)| {
            for (ix, v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for dy in -2..=2i64 {
                    for dx in -2..=2i64 {
                        let jy = (iy as i64 + dy).clamp(0, n - 1) as usize;
                        let jx = (ix as i64 + dx).clamp(0, n - 1) as usize;
                        acc += img.at(jy, jx);
                    }
                }
                *v = img.at(iy, ix) - acc / 25.0;
            }
        });
    out
}

/// Measure the artifact energy of `geometry` on `img`.
///
/// `exclusions` are the other predicted geometries (plus, typically, the
/// phantom boundary polylines); pixels within twice the tube half-width of
/// them are dropped from the signal tube and the control tubes, and
/// control placements that lose too many pixels are rejected.
pub fn artifact_energy(
    img: &Image,
    geometry: &TubeGeometry,
    exclusions: &[TubeGeometry],
    opts: &EnergyOptions,
) -> Result<EnergyMeasurement> {
    let n = img.grid.n;
    let px = img.grid.pixel_size();
    let w = opts.half_width * px;
    let hp = highpass(img);

    // distance maps to the measured geometry and to the exclusions
    let mut d_sig = vec![0.0f64; n * n];
    let mut d_exc = vec![f64::INFINITY; n * n];
    d_sig
        .par_chunks_mut(n)
        .zip(d_exc.par_chunks_mut(n))
        .enumerate()
        .for_each(|(iy, (srow, erow))| {
            let y = img.grid.coord(iy);
            for ix in 0..n {
                let x = img.grid.coord(ix);
                srow[ix] = geometry.distance(x, y);
                for e in exclusions {
                    erow[ix] = erow[ix].min(e.distance(x, y));
                }
            }
        });

    let mut signal_sum = 0.0;
    let mut signal_pixels = 0usize;
    for k in 0..n * n {
        if d_sig[k] <= w && d_exc[k] > 2.0 * w {
            signal_sum += hp.values[k].abs();
            signal_pixels += 1;
        }
    }
    if signal_pixels == 0 {
        return Err(Error::numerical("geometry misses the measurable image region"));
    }
    let signal = signal_sum / signal_pixels as f64;

    // congruent control tubes
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let min_pixels = 200.max((0.3 * signal_pixels as f64) as usize);
    let mut backgrounds = vec![];
    let mut tries = 0usize;
    let max_tries = 200 * opts.n_controls;
    while backgrounds.len() < opts.n_controls && tries < max_tries {
        tries += 1;
        let candidate = place_control(geometry, &mut rng, img.grid.extent, opts.control_angles);
        let pixels = tube_pixels(&candidate, img, w);
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for &k in &pixels {
            if d_sig[k] > 2.0 * w && d_exc[k] > 2.0 * w {
                acc += hp.values[k].abs();
                cnt += 1;
            }
        }
        if cnt < min_pixels {
            continue;
        }
        backgrounds.push(acc / cnt as f64);
    }
    if backgrounds.len() < opts.n_controls {
        return Err(Error::numerical(format!(
            "could only place {} of {} control tubes",
            backgrounds.len(),
            opts.n_controls
        )));
    }
    let background = backgrounds.iter().sum::<f64>() / backgrounds.len() as f64;

    Ok(EnergyMeasurement {
        signal,
        background,
        ratio: signal / background,
        n_controls: backgrounds.len(),
        signal_pixels,
        seed: opts.seed,
    })
}

fn place_control(
    geometry: &TubeGeometry,
    rng: &mut ChaCha8Rng,
    extent: f64,
    angles: Option<(f64, f64)>,
) -> TubeGeometry {
    match geometry {
        TubeGeometry::Line { p, .. } => {
            let (lo, hi) = angles.unwrap_or((0.0, std::f64::consts::PI));
            let phi = lo + rng.gen::<f64>() * (hi - lo);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            TubeGeometry::Line { phi, p: sign * p.abs() }
        }
        TubeGeometry::Curve(chains) => {
            let ang = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            let (c, s) = (ang.cos(), ang.sin());
            let dx = (rng.gen::<f64>() - 0.5) * 0.6 * extent;
            let dy = (rng.gen::<f64>() - 0.5) * 0.6 * extent;
            TubeGeometry::Curve(
                chains
                    .iter()
                    .map(|chain| {
                        chain
                            .iter()
                            .map(|q| [c * q[0] - s * q[1] + dx, s * q[0] + c * q[1] + dy])
                            .collect()
                    })
                    .collect(),
            )
        }
    }
}

/// Pixel indices within distance `w` of the geometry, enumerated locally
/// (no full-image scan).
fn tube_pixels(geometry: &TubeGeometry, img: &Image, w: f64) -> Vec<usize> {
    let n = img.grid.n;
    let px = img.grid.pixel_size();
    let mut out = vec![];
    match geometry {
        TubeGeometry::Line { phi, p } => {
            let (c, s) = (phi.cos(), phi.sin());
            if c.abs() >= s.abs() {
                for iy in 0..n {
                    let y = img.grid.coord(iy);
                    let x_mid = (p - y * s) / c;
                    let half = (w / c.abs()).abs();
                    let lo = ((x_mid - half + img.grid.extent) / px - 0.5).floor().max(0.0) as usize;
                    let hi = (((x_mid + half + img.grid.extent) / px - 0.5).ceil() as i64)
                        .clamp(0, n as i64 - 1) as usize;
                    for ix in lo..=hi.min(n - 1) {
                        let x = img.grid.coord(ix);
                        if (x * c + y * s - p).abs() <= w {
                            out.push(iy * n + ix);
                        }
                    }
                }
            } else {
                for ix in 0..n {
                    let x = img.grid.coord(ix);
                    let y_mid = (p - x * c) / s;
                    let half = (w / s.abs()).abs();
                    let lo = ((y_mid - half + img.grid.extent) / px - 0.5).floor().max(0.0) as usize;
                    let hi = (((y_mid + half + img.grid.extent) / px - 0.5).ceil() as i64)
                        .clamp(0, n as i64 - 1) as usize;
                    for iy in lo..=hi.min(n - 1) {
                        let y = img.grid.coord(iy);
                        if (x * c + y * s - p).abs() <= w {
                            out.push(iy * n + ix);
                        }
                    }
                }
            }
        }
        TubeGeometry::Curve(chains) => {
            let mut seen = std::collections::HashSet::new();
            let to_idx = |v: f64| ((v + img.grid.extent) / px - 0.5).round() as i64;
            for chain in chains {
                for seg in chain.windows(2) {
                    let (a, b) = (seg[0], seg[1]);
                    let x_lo = to_idx(a[0].min(b[0]) - w) - 1;
                    let x_hi = to_idx(a[0].max(b[0]) + w) + 1;
                    let y_lo = to_idx(a[1].min(b[1]) - w) - 1;
                    let y_hi = to_idx(a[1].max(b[1]) + w) + 1;
                    for iy in y_lo.max(0)..=y_hi.min(n as i64 - 1) {
                        for ix in x_lo.max(0)..=x_hi.min(n as i64 - 1) {
                            let k = iy as usize * n + ix as usize;
                            if seen.contains(&k) {
                                continue;
                            }
                            let x = img.grid.coord(ix as usize);
                            let y = img.grid.coord(iy as usize);
                            if point_segment_distance(x, y, a, b) <= w {
                                seen.insert(k);
                                out.push(k);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Tube geometry of a predicted streak line.
pub fn streak_geometry(s: &StreakLine) -> TubeGeometry {
    TubeGeometry::Line { phi: s.phi, p: s.p }
}

/// Which samples of an artifact curve to keep when building its tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XbFilter {
    All,
    Realized,
    NotRealized,
}

/// Polyline tube of an artifact curve, restricted to samples matching the
/// filter and lying within the square of the given half-width. Returns
/// `None` when nothing survives.
pub fn xb_geometry(curve: &XbCurve, filter: XbFilter, extent: f64) -> Option<TubeGeometry> {
    let keep = |s: &super::XbSample| {
        let flag = match filter {
            XbFilter::All => true,
            XbFilter::Realized => s.realized,
            XbFilter::NotRealized => !s.realized,
        };
        flag && s.point[0].abs() <= extent && s.point[1].abs() <= extent
    };
    let mut chains: Vec<Vec<[f64; 2]>> = vec![];
    let mut current: Vec<[f64; 2]> = vec![];
    for s in &curve.samples {
        if keep(s) {
            current.push(s.point);
        } else if current.len() >= 2 {
            chains.push(std::mem::take(&mut current));
        } else {
            current.clear();
        }
    }
    if current.len() >= 2 {
        chains.push(current);
    }
    if chains.is_empty() {
        None
    } else {
        Some(TubeGeometry::Curve(chains))
    }
}

/// Boundary polylines of every ellipse in the phantom, as one curve
/// geometry (used to exclude real edges from control tubes).
pub fn phantom_boundary_geometry(ph: &Phantom, n_per_ellipse: usize) -> TubeGeometry {
    TubeGeometry::Curve(
        ph.ellipses
            .iter()
            .map(|e| e.boundary_points(n_per_ellipse))
            .collect(),
    )
}
