//! Ellipse-sum phantoms.
//!
//! A phantom is a finite sum of ellipse indicators. That class is closed
//! under everything this crate needs to verify reconstructions: line
//! integrals have a closed form, boundary normals (the wavefront geometry)
//! are explicit, and the tangent-line curves in the sinogram domain are the
//! support functions of the individual ellipses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{Image, ImageGrid, Sinogram, SinogramGrid};
use crate::geom::{canonical_line, dot, norm, theta};

/// Offset used to probe the density on both sides of a boundary when
/// computing jumps.
const JUMP_PROBE_EPS: f64 = 1e-6;

/// Jumps smaller than this are treated as cancellation and dropped.
const JUMP_ZERO_TOL: f64 = 1e-12;

/// One ellipse with an additive density.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes `(a, b)`, both positive.
    pub axes: [f64; 2],
    /// Rotation of the `a` axis from the x-axis, radians; normalized to `[0, pi)`.
    #[serde(default)]
    pub rotation: f64,
    /// Additive density jump contributed inside the ellipse.
    pub intensity: f64,
}

impl Ellipse {
    pub fn new(center: [f64; 2], axes: [f64; 2], rotation: f64, intensity: f64) -> Result<Self> {
        let e = Ellipse {
            center,
            axes,
            rotation: rotation.rem_euclid(std::f64::consts::PI),
            intensity,
        };
        e.check()?;
        Ok(e)
    }

    fn check(&self) -> Result<()> {
        if !(self.axes[0] > 0.0 && self.axes[1] > 0.0) {
            return Err(Error::config(format!(
                "ellipse semi-axes must be positive, got ({}, {})",
                self.axes[0], self.axes[1]
            )));
        }
        if !self.center.iter().all(|c| c.is_finite()) || !self.intensity.is_finite() {
            return Err(Error::config("ellipse parameters must be finite"));
        }
        Ok(())
    }

    fn normalized(mut self) -> Result<Self> {
        self.rotation = self.rotation.rem_euclid(std::f64::consts::PI);
        self.check()?;
        Ok(self)
    }

    /// Half-width of the ellipse's shadow in direction `theta(phi)`:
    /// `s(phi) = sqrt(a^2 cos^2(phi - rot) + b^2 sin^2(phi - rot))`.
    pub fn support_width(&self, phi: f64) -> f64 {
        let c = (phi - self.rotation).cos();
        let s = (phi - self.rotation).sin();
        let (a, b) = (self.axes[0], self.axes[1]);
        (a * a * c * c + b * b * s * s).sqrt()
    }

    /// The two offsets at which lines of angle `phi` are tangent to the
    /// ellipse: `p = center . theta(phi) +- s(phi)`. Lines between the two
    /// branches cut the ellipse; these are exactly the sinogram points
    /// where the phantom's boundary normals meet the line's normal space.
    pub fn tangent_offsets(&self, phi: f64) -> (f64, f64) {
        let mid = dot(self.center, theta(phi));
        let s = self.support_width(phi);
        (mid + s, mid - s)
    }

    /// Chord length of the line `(phi, p)` through the ellipse, times the
    /// intensity. Closed form; zero for lines missing the ellipse.
    pub fn radon(&self, phi: f64, p: f64) -> f64 {
        let (phi, p) = canonical_line(phi, p);
        self.radon_canonical(phi, p)
    }

    fn radon_canonical(&self, phi: f64, p: f64) -> f64 {
        let c = (phi - self.rotation).cos();
        let s = (phi - self.rotation).sin();
        let (a, b) = (self.axes[0], self.axes[1]);
        let s2 = a * a * c * c + b * b * s * s;
        let pt = p - dot(self.center, theta(phi));
        let rem = s2 - pt * pt;
        if rem <= 0.0 {
            0.0
        } else {
            2.0 * self.intensity * a * b * rem.sqrt() / s2
        }
    }

    /// Whether the point lies in the closed ellipse.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let c = self.rotation.cos();
        let s = self.rotation.sin();
        let u = (dx * c + dy * s) / self.axes[0];
        let v = (-dx * s + dy * c) / self.axes[1];
        u * u + v * v <= 1.0
    }

    /// Boundary point at parameter `t` (not arc length).
    pub fn boundary_point(&self, t: f64) -> [f64; 2] {
        let (a, b) = (self.axes[0], self.axes[1]);
        let (u, v) = (a * t.cos(), b * t.sin());
        let c = self.rotation.cos();
        let s = self.rotation.sin();
        [
            self.center[0] + u * c - v * s,
            self.center[1] + u * s + v * c,
        ]
    }

    /// Outward unit normal at parameter `t`.
    pub fn outward_normal(&self, t: f64) -> [f64; 2] {
        let (a, b) = (self.axes[0], self.axes[1]);
        let (u, v) = (t.cos() / a, t.sin() / b);
        let c = self.rotation.cos();
        let s = self.rotation.sin();
        let g = [u * c - v * s, u * s + v * c];
        let n = norm(g);
        [g[0] / n, g[1] / n]
    }

    /// Closed polyline tracing the boundary, for plotting and measurement.
    pub fn boundary_points(&self, n: usize) -> Vec<[f64; 2]> {
        (0..=n)
            .map(|k| self.boundary_point(2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect()
    }
}

/// A boundary singularity of the phantom: base point, outward unit
/// conormal, and the net density jump across the boundary (inside value
/// minus outside value).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WavefrontElement {
    pub x: [f64; 2],
    pub xi: [f64; 2],
    pub jump: f64,
}

/// Additive list of ellipses, supported in the closed unit disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    /// Build a phantom, checking that every ellipse stays inside the unit
    /// disk (`|center| + max(a, b) <= 1`).
    pub fn new(ellipses: Vec<Ellipse>) -> Result<Self> {
        let ellipses = ellipses
            .into_iter()
            .map(Ellipse::normalized)
            .collect::<Result<Vec<_>>>()?;
        for e in &ellipses {
            let reach = norm(e.center) + e.axes[0].max(e.axes[1]);
            if reach > 1.0 + 1e-12 {
                return Err(Error::config(format!(
                    "ellipse at ({}, {}) reaches {:.6} > 1; phantom support must stay in the unit disk",
                    e.center[0], e.center[1], reach
                )));
            }
        }
        Ok(Phantom { ellipses })
    }

    pub fn empty() -> Self {
        Phantom { ellipses: vec![] }
    }

    /// Centered disk of the given radius and intensity.
    pub fn disk(radius: f64, intensity: f64) -> Result<Self> {
        Phantom::new(vec![Ellipse::new([0.0, 0.0], [radius, radius], 0.0, intensity)?])
    }

    pub fn unit_disk() -> Self {
        Phantom::disk(1.0, 1.0).expect("unit disk is valid")
    }

    /// Built-in head-like default: a bright shell (two nested ellipses)
    /// with three small interior disks.
    pub fn skullish() -> Self {
        Phantom::new(vec![
            Ellipse::new([0.0, 0.0], [0.72, 0.95], 0.0, 1.0).unwrap(),
            Ellipse::new([0.0, 0.0], [0.65, 0.88], 0.0, -0.8).unwrap(),
            Ellipse::new([0.0, -0.35], [0.16, 0.16], 0.0, 0.6).unwrap(),
            Ellipse::new([-0.22, 0.25], [0.12, 0.12], 0.0, 0.5).unwrap(),
            Ellipse::new([0.20, 0.30], [0.10, 0.10], 0.0, 0.4).unwrap(),
        ])
        .expect("built-in phantom is valid")
    }

    /// Parse the phantom definition document. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Phantom = serde_json::from_str(text)?;
        Phantom::new(doc.ellipses)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phantom serializes")
    }

    /// Pointwise density.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.ellipses
            .iter()
            .filter(|e| e.contains(x))
            .map(|e| e.intensity)
            .sum()
    }

    /// Line integral over the line `(phi, p)`; sum of the per-ellipse
    /// closed forms. Canonicalizing the parameters first makes the
    /// symmetry `radon(phi, p) = radon(phi + pi, -p)` hold by construction.
    pub fn radon(&self, phi: f64, p: f64) -> f64 {
        let (phi, p) = canonical_line(phi, p);
        self.ellipses
            .iter()
            .map(|e| e.radon_canonical(phi, p))
            .sum()
    }

    /// Radius beyond which all line integrals vanish.
    pub fn support_radius(&self) -> f64 {
        self.ellipses
            .iter()
            .map(|e| norm(e.center) + e.axes[0].max(e.axes[1]))
            .fold(0.0, f64::max)
    }

    /// Sample the Radon transform on a sinogram grid. Deterministic;
    /// parallel over views.
    pub fn simulate(&self, grid: &SinogramGrid) -> Sinogram {
        let mut s = Sinogram::zeros(*grid);
        let n_p = grid.n_p;
        s.values
            .par_chunks_mut(n_p)
            .enumerate()
            .for_each(|(j, row)| {
                let phi = grid.phi(j);
                for (i, v) in row.iter_mut().enumerate() {
                    *v = self.radon(phi, grid.p(i));
                }
            });
        s
    }

    /// Rasterize the density on a pixel grid. `supersample = 1` evaluates
    /// pixel centers; `k > 1` averages a k x k subgrid per pixel.
    pub fn rasterize(&self, grid: &ImageGrid, supersample: usize) -> Image {
        let k = supersample.max(1);
        let mut img = Image::zeros(*grid);
        let n = grid.n;
        let px = grid.pixel_size();
        img.values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(iy, row)| {
                for (ix, v) in row.iter_mut().enumerate() {
                    let x0 = -grid.extent + ix as f64 * px;
                    let y0 = -grid.extent + iy as f64 * px;
                    let mut acc = 0.0;
                    for sy in 0..k {
                        for sx in 0..k {
                            let x = x0 + (sx as f64 + 0.5) * px / k as f64;
                            let y = y0 + (sy as f64 + 0.5) * px / k as f64;
                            acc += self.eval([x, y]);
                        }
                    }
                    *v = acc / (k * k) as f64;
                }
            });
        img
    }

    /// Sample the phantom's wavefront set: boundary points of every
    /// ellipse with their outward unit normals and net density jumps.
    /// Elements whose jump cancels to zero are dropped.
    ///
    /// Panics if `n_samples < 8`.
    pub fn wavefront(&self, n_samples: usize) -> Vec<WavefrontElement> {
        assert!(n_samples >= 8, "need at least 8 samples per ellipse");
        let mut out = Vec::new();
        for e in &self.ellipses {
            for k in 0..n_samples {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n_samples as f64;
                let x = e.boundary_point(t);
                let xi = e.outward_normal(t);
                let inside = self.eval([x[0] - JUMP_PROBE_EPS * xi[0], x[1] - JUMP_PROBE_EPS * xi[1]]);
                let outside = self.eval([x[0] + JUMP_PROBE_EPS * xi[0], x[1] + JUMP_PROBE_EPS * xi[1]]);
                let jump = inside - outside;
                if jump.abs() > JUMP_ZERO_TOL {
                    out.push(WavefrontElement { x, xi, jump });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn radon_unit_disk_chords() {
        let disk = Ellipse::new([0.0, 0.0], [1.0, 1.0], 0.0, 1.0).unwrap();
        for phi in [0.0, 0.3, 1.1, 2.9] {
            assert_eq!(disk.radon(phi, 0.0), 2.0);
            assert_eq!(disk.radon(phi, 1.0), 0.0);
            assert_eq!(disk.radon(phi, -1.2), 0.0);
        }
    }

    #[test]
    fn radon_minor_axis_chord() {
        let e = Ellipse::new([0.2, 0.0], [0.5, 0.25], 0.0, 1.0).unwrap();
        let v = e.radon(0.0, 0.2);
        assert!((v - 0.5).abs() < 1e-15, "central chord along minor axis: {v}");
    }

    #[test]
    fn radon_empty_and_cancelling() {
        let empty = Phantom::empty();
        assert_eq!(empty.radon(0.7, 0.1), 0.0);

        let cancel = Phantom::new(vec![
            Ellipse::new([0.1, 0.0], [0.4, 0.3], 0.2, 1.0).unwrap(),
            Ellipse::new([0.1, 0.0], [0.4, 0.3], 0.2, -1.0).unwrap(),
        ])
        .unwrap();
        for phi in [0.0, 0.9, 2.2] {
            for p in [-0.3, 0.0, 0.2] {
                assert_eq!(cancel.radon(phi, p), 0.0);
            }
        }
    }

    #[test]
    fn radon_symmetry_under_half_turn() {
        let ph = Phantom::skullish();
        // for x in [pi, 2 pi) the canonical reduction is exact, so the
        // symmetry holds bitwise
        for &(x, p) in &[(3.5, 0.3), (4.7, -0.62), (PI, 0.11), (6.0, 0.9)] {
            assert_eq!(ph.radon(x, p), ph.radon(x - PI, -p));
        }
        // adding pi in floating point perturbs the angle by <= 1 ulp
        for &(phi, p) in &[(0.3, 0.5), (1.2, -0.4), (2.8, 0.05)] {
            let a = ph.radon(phi, p);
            let b = ph.radon(phi + PI, -p);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn radon_linear_in_intensity() {
        let e = Ellipse::new([0.2, -0.1], [0.5, 0.3], 0.7, 0.37).unwrap();
        let e2 = Ellipse { intensity: 2.0 * e.intensity, ..e };
        for &(phi, p) in &[(0.1, 0.0), (1.4, 0.2), (2.0, -0.4)] {
            assert_eq!(e2.radon(phi, p), 2.0 * e.radon(phi, p));
        }
        // two copies sum exactly to twice one copy
        let double = Phantom::new(vec![e, e]).unwrap();
        let single = Phantom::new(vec![e]).unwrap();
        for &(phi, p) in &[(0.1, 0.0), (1.4, 0.2), (2.0, -0.4)] {
            assert_eq!(double.radon(phi, p), 2.0 * single.radon(phi, p));
        }
    }

    #[test]
    fn radon_vanishes_beyond_support() {
        let ph = Phantom::skullish();
        let r = ph.support_radius();
        for phi in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            assert_eq!(ph.radon(phi, r + 1e-9), 0.0);
            assert_eq!(ph.radon(phi, -r - 1e-9), 0.0);
        }
    }

    #[test]
    fn mass_is_angle_independent() {
        // trapezoid of each view equals sum of pi a b intensities; the
        // integrand has sqrt endpoints so the composite error is O(h^1.5):
        // a fine p-grid is needed for 1e-6 relative.
        let ph = Phantom::skullish();
        let expect: f64 = ph
            .ellipses
            .iter()
            .map(|e| e.intensity * PI * e.axes[0] * e.axes[1])
            .sum();
        let n_p = 1 << 17;
        let p_max = std::f64::consts::SQRT_2;
        let dp = 2.0 * p_max / (n_p - 1) as f64;
        for phi in [0.0, 0.37, 1.1, 1.9, 2.6] {
            let mut acc = 0.0;
            for i in 0..n_p {
                let w = if i == 0 || i == n_p - 1 { 0.5 } else { 1.0 };
                acc += w * ph.radon(phi, -p_max + i as f64 * dp);
            }
            acc *= dp;
            assert!(
                (acc - expect).abs() <= 1e-6 * expect.abs(),
                "phi={phi}: mass {acc} vs {expect}"
            );
        }
    }

    #[test]
    fn simulate_trivials() {
        let grid = SinogramGrid::standard(8, 65).unwrap();
        let zeros = Phantom::empty().simulate(&grid);
        assert!(zeros.values.iter().all(|&v| v == 0.0));

        let disk = Phantom::unit_disk().simulate(&grid);
        // n_p = 65 puts a bin exactly at p = 0
        assert_eq!(grid.p(32), 0.0);
        for j in 0..grid.n_phi {
            assert_eq!(disk.at(j, 32), 2.0);
        }
    }

    #[test]
    fn rasterize_trivials_and_area() {
        let empty = Phantom::empty().rasterize(&ImageGrid::new(16, 1.0).unwrap(), 1);
        assert!(empty.values.iter().all(|&v| v == 0.0));

        let grid = ImageGrid::new(33, 1.0).unwrap();
        let img = Phantom::unit_disk().rasterize(&grid, 1);
        assert_eq!(img.at(16, 16), 1.0);

        // disk area from pixel sum within 1% at 512^2, 4x supersampling
        let r = 0.8;
        let grid = ImageGrid::new(512, 1.0).unwrap();
        let img = Phantom::disk(r, 1.0).unwrap().rasterize(&grid, 4);
        let area: f64 = img.values.iter().sum::<f64>() * grid.pixel_size().powi(2);
        let expect = PI * r * r;
        assert!((area - expect).abs() <= 0.01 * expect, "area {area} vs {expect}");
    }

    #[test]
    fn wavefront_disk_normals_point_outward() {
        let wf = Phantom::unit_disk().wavefront(64);
        assert_eq!(wf.len(), 64);
        for el in wf {
            assert!((el.x[0] - el.xi[0]).abs() < 1e-12);
            assert!((el.x[1] - el.xi[1]).abs() < 1e-12);
            assert!((el.jump - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wavefront_nested_and_cancelling() {
        let nested = Phantom::new(vec![
            Ellipse::new([0.0, 0.0], [0.8, 0.8], 0.0, 1.0).unwrap(),
            Ellipse::new([0.0, 0.0], [0.4, 0.4], 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let wf = nested.wavefront(32);
        let inner: Vec<_> = wf.iter().filter(|e| norm(e.x) < 0.6).collect();
        assert!(!inner.is_empty());
        for el in inner {
            assert!((el.jump - 1.0).abs() < 1e-12, "inner jump {}", el.jump);
        }

        let cancel = Phantom::new(vec![
            Ellipse::new([0.0, 0.0], [0.5, 0.5], 0.0, 1.0).unwrap(),
            Ellipse::new([0.0, 0.0], [0.5, 0.5], 0.0, -1.0).unwrap(),
        ])
        .unwrap();
        assert!(cancel.wavefront(32).is_empty());
    }

    #[test]
    fn tangent_offsets_examples() {
        let disk = Ellipse::new([0.0, 0.0], [1.0, 1.0], 0.0, 1.0).unwrap();
        for phi in [0.0, 0.7, 2.4] {
            let (pp, pm) = disk.tangent_offsets(phi);
            assert!((pp - 1.0).abs() < 1e-15 && (pm + 1.0).abs() < 1e-15);
        }

        let off = Ellipse::new([0.2, 0.0], [0.3, 0.3], 0.0, 1.0).unwrap();
        for phi in [0.0, 0.5, 1.3, 3.0] {
            let (pp, pm) = off.tangent_offsets(phi);
            assert!((pp - (0.2 * phi.cos() + 0.3)).abs() < 1e-15);
            assert!((pm - (0.2 * phi.cos() - 0.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn tangent_offsets_match_support_oracle() {
        // independent oracle: max over boundary points of x . theta(phi),
        // coarse scan + golden-section refinement
        let e = Ellipse::new([0.15, -0.2], [0.5, 0.2], 0.9, 1.0).unwrap();
        let support_max = |phi: f64| {
            let th = theta(phi);
            let f = |t: f64| dot(e.boundary_point(t), th);
            let n = 8192;
            let mut best_t = 0.0;
            let mut best = f64::NEG_INFINITY;
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                let v = f(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            // golden-section refine around the coarse argmax
            let (mut lo, mut hi) = (best_t - 2.0 * PI / n as f64, best_t + 2.0 * PI / n as f64);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if f(m1) > f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            f(0.5 * (lo + hi))
        };
        for phi in [0.0, 0.4, 1.0, 1.7, 2.5, 3.0] {
            let (pp, pm) = e.tangent_offsets(phi);
            assert!((pp - support_max(phi)).abs() <= 1e-9, "p+ at {phi}");
            // lower branch is the support max in the opposite direction
            assert!((-pm - support_max(phi + PI)).abs() <= 1e-9, "p- at {phi}");
        }
    }

    #[test]
    fn phantom_json_roundtrip_and_rejects_unknown_keys() {
        let ph = Phantom::skullish();
        let text = ph.to_json();
        let back = Phantom::from_json(&text).unwrap();
        assert_eq!(back.ellipses.len(), ph.ellipses.len());

        let bad = r#"{"ellipses":[{"center":[0,0],"axes":[0.5,0.5],"rotation":0,"intensity":1,"extra":2}]}"#;
        assert!(Phantom::from_json(bad).is_err());
        let bad2 = r#"{"ellipses":[{"center":[0,0],"axes":[-0.5,0.5],"intensity":1}]}"#;
        assert!(Phantom::from_json(bad2).is_err());
        // support constraint
        let bad3 = r#"{"ellipses":[{"center":[0.8,0],"axes":[0.5,0.5],"intensity":1}]}"#;
        assert!(Phantom::from_json(bad3).is_err());
    }
}
