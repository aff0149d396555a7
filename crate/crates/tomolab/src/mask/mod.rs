//! Incomplete-data cutoff regions `A` in the line-parameter cylinder.
//!
//! A mask is a predicate on `(phi, p)` together with an exact decomposition
//! of its boundary into smooth arcs `p = p(phi)` (with slope functions),
//! vertical segments, and corner points. The artifact predictor consumes
//! the decomposition, the reconstruction pipeline consumes the predicate.
//!
//! Masks live on the canonical strip `phi in [0, pi)` and extend to the
//! full cylinder by the identification `(phi, p) ~ (phi + pi, -p)`, so the
//! required symmetry of the cutoff holds by construction.

pub mod raster;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::Sinogram;
use crate::geom::canonical_line;

/// Default half-range of offsets over which unbounded boundary components
/// (full-height vertical lines, unbounded arcs) are recorded; matches the
/// conventional sinogram display range.
pub const DEFAULT_P_EXTENT: f64 = std::f64::consts::SQRT_2;

/// Slope of a one-sided boundary tangent in the `(phi, p)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slope {
    Finite(f64),
    Vertical,
}

/// Which side of an arc belongs to the interior of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcSide {
    /// `int(A)` lies at larger `p`.
    Above,
    /// `int(A)` lies at smaller `p`.
    Below,
}

/// Which side of a vertical segment belongs to the interior of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegSide {
    /// `int(A)` lies at smaller `phi`.
    Left,
    /// `int(A)` lies at larger `phi`.
    Right,
}

/// Smooth, non-vertical piece of the mask boundary: `p = p(phi)` on a
/// closed angle interval, with its derivative available exactly.
#[derive(Clone)]
pub struct BoundaryArc {
    pub id: String,
    pub phi_lo: f64,
    pub phi_hi: f64,
    p: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    dp: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub side: ArcSide,
}

impl BoundaryArc {
    pub fn new(
        id: impl Into<String>,
        phi_lo: f64,
        phi_hi: f64,
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        side: ArcSide,
    ) -> Self {
        BoundaryArc {
            id: id.into(),
            phi_lo,
            phi_hi,
            p: Arc::new(p),
            dp: Arc::new(dp),
            side,
        }
    }

    /// Horizontal line `p = p0` over the angle interval.
    pub fn constant(
        id: impl Into<String>,
        phi_lo: f64,
        phi_hi: f64,
        p0: f64,
        side: ArcSide,
    ) -> Self {
        BoundaryArc::new(id, phi_lo, phi_hi, move |_| p0, |_| 0.0, side)
    }

    pub fn p(&self, phi: f64) -> f64 {
        (self.p)(phi)
    }

    /// Slope `dp/dphi`; may be infinite at an endpoint (for instance where
    /// an arc joins a vertical segment differentiably).
    pub fn slope(&self, phi: f64) -> f64 {
        (self.dp)(phi)
    }
}

impl fmt::Debug for BoundaryArc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryArc")
            .field("id", &self.id)
            .field("phi_lo", &self.phi_lo)
            .field("phi_hi", &self.phi_hi)
            .field("side", &self.side)
            .finish()
    }
}

/// Vertical piece of the boundary: fixed angle, an offset interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalSegment {
    pub phi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub side: SegSide,
}

/// Boundary point where two one-sided tangents differ.
#[derive(Debug, Clone, PartialEq)]
pub struct Corner {
    pub phi: f64,
    pub p: f64,
    pub slopes: (Slope, Slope),
}

/// Anything that multiplies a sinogram pointwise: sharp masks contribute
/// 0/1, apodized masks contribute the smooth transition value.
pub trait SinogramWeight: Sync {
    fn weight(&self, phi: f64, p: f64) -> f64;
}

/// Cutoff region with predicate and exact boundary decomposition.
#[derive(Clone)]
pub struct Mask {
    inside_fn: Arc<dyn Fn(f64, f64) -> bool + Send + Sync>,
    pub arcs: Vec<BoundaryArc>,
    pub verticals: Vec<VerticalSegment>,
    pub corners: Vec<Corner>,
    pub label: String,
    pub p_extent: f64,
    /// True when the boundary decomposition was inferred from a raster
    /// rather than constructed exactly.
    pub approximate: bool,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask")
            .field("label", &self.label)
            .field("arcs", &self.arcs.len())
            .field("verticals", &self.verticals.len())
            .field("corners", &self.corners.len())
            .field("approximate", &self.approximate)
            .finish()
    }
}

impl SinogramWeight for Mask {
    fn weight(&self, phi: f64, p: f64) -> f64 {
        if self.inside(phi, p) {
            1.0
        } else {
            0.0
        }
    }
}

impl Mask {
    /// Membership in the closed set `A`, for any `(phi, p)` on the cylinder.
    pub fn inside(&self, phi: f64, p: f64) -> bool {
        let (f, pc) = canonical_line(phi, p);
        (self.inside_fn)(f, pc)
    }

    /// The trivial full-data mask: everything measured, empty boundary.
    /// Note `validate` rejects it (a cutoff region must be proper); it
    /// exists so complete-data runs flow through the same pipeline.
    pub fn full() -> Mask {
        Mask {
            inside_fn: Arc::new(|_, _| true),
            arcs: vec![],
            verticals: vec![],
            corners: vec![],
            label: "full".into(),
            p_extent: DEFAULT_P_EXTENT,
            approximate: false,
        }
    }

    /// Limited-angle region: lines with angle outside the open interval
    /// `(phi1, phi2)` are measured. Boundary: two full-height vertical
    /// segments; no arcs, no corners.
    pub fn limited_angle(phi1: f64, phi2: f64) -> Result<Mask> {
        if !(0.0 <= phi1 && phi1 < phi2 && phi2 < std::f64::consts::PI) {
            return Err(Error::config(format!(
                "limited_angle requires 0 <= phi1 < phi2 < pi, got ({phi1}, {phi2})"
            )));
        }
        let pe = DEFAULT_P_EXTENT;
        Ok(Mask {
            inside_fn: Arc::new(move |f, _| !(phi1 < f && f < phi2)),
            arcs: vec![],
            verticals: vec![
                VerticalSegment { phi: phi1, p_lo: -pe, p_hi: pe, side: SegSide::Left },
                VerticalSegment { phi: phi2, p_lo: -pe, p_hi: pe, side: SegSide::Right },
            ],
            corners: vec![],
            label: format!("limited_angle({phi1:.6},{phi2:.6})"),
            p_extent: pe,
            approximate: false,
        })
    }

    /// Region-of-interest data: lines with `|p| <= r`. Boundary: two
    /// horizontal arcs with slope identically zero.
    pub fn roi(r: f64) -> Result<Mask> {
        if !(r > 0.0) {
            return Err(Error::config(format!("roi radius must be positive, got {r}")));
        }
        let pe = DEFAULT_P_EXTENT.max(1.5 * r);
        Ok(Mask {
            inside_fn: Arc::new(move |_, p| p.abs() <= r),
            arcs: vec![
                BoundaryArc::constant("roi_top", 0.0, std::f64::consts::PI, r, ArcSide::Below),
                BoundaryArc::constant("roi_bottom", 0.0, std::f64::consts::PI, -r, ArcSide::Above),
            ],
            verticals: vec![],
            corners: vec![],
            label: format!("roi({r:.6})"),
            p_extent: pe,
            approximate: false,
        })
    }

    /// Complement of an open axis-aligned rectangle cut out of the
    /// sinogram. Boundary: two vertical segments, two horizontal arcs,
    /// four corners with slope pairs {0, vertical}.
    pub fn rect_cutout(phi_a: f64, phi_b: f64, p_a: f64, p_b: f64) -> Result<Mask> {
        if !(0.0 <= phi_a && phi_a < phi_b && phi_b <= std::f64::consts::PI) {
            return Err(Error::config(format!(
                "rect_cutout requires 0 <= phi_a < phi_b <= pi, got ({phi_a}, {phi_b})"
            )));
        }
        if !(p_a < p_b) {
            return Err(Error::config(format!(
                "rect_cutout requires p_a < p_b, got ({p_a}, {p_b})"
            )));
        }
        let corners = vec![
            Corner { phi: phi_a, p: p_a, slopes: (Slope::Finite(0.0), Slope::Vertical) },
            Corner { phi: phi_a, p: p_b, slopes: (Slope::Finite(0.0), Slope::Vertical) },
            Corner { phi: phi_b, p: p_a, slopes: (Slope::Finite(0.0), Slope::Vertical) },
            Corner { phi: phi_b, p: p_b, slopes: (Slope::Finite(0.0), Slope::Vertical) },
        ];
        Ok(Mask {
            inside_fn: Arc::new(move |f, p| {
                !(phi_a < f && f < phi_b && p_a < p && p < p_b)
            }),
            arcs: vec![
                BoundaryArc::constant("cutout_top", phi_a, phi_b, p_b, ArcSide::Above),
                BoundaryArc::constant("cutout_bottom", phi_a, phi_b, p_a, ArcSide::Below),
            ],
            verticals: vec![
                VerticalSegment { phi: phi_a, p_lo: p_a, p_hi: p_b, side: SegSide::Left },
                VerticalSegment { phi: phi_b, p_lo: p_a, p_hi: p_b, side: SegSide::Right },
            ],
            corners,
            label: format!("rect_cutout({phi_a:.6},{phi_b:.6},{p_a:.6},{p_b:.6})"),
            p_extent: DEFAULT_P_EXTENT.max(p_a.abs().max(p_b.abs())),
            approximate: false,
        })
    }

    /// Cut between the vertical line `phi = a` and a right boundary that is
    /// vertical at `phi = b` for `p <= 0` and follows `p = c sqrt(phi - b)`
    /// for `p > 0`; the two pieces join differentiably at `(b, 0)`.
    ///
    /// When the curve runs past the canonical strip (`b + (p_ext/c)^2 > pi`)
    /// the excluded band is capped at the seam `phi = pi ~ 0`, which adds a
    /// vertical segment and a genuine corner there.
    pub fn sqrt_boundary(a: f64, b: f64, c: f64) -> Result<Mask> {
        if !(0.0 <= a && a < b && b < std::f64::consts::PI) {
            return Err(Error::config(format!(
                "sqrt_boundary requires 0 <= a < b < pi, got ({a}, {b})"
            )));
        }
        if !(c > 0.0) {
            return Err(Error::config(format!("sqrt_boundary steepness must be positive, got {c}")));
        }
        let pe = DEFAULT_P_EXTENT;
        let pi = std::f64::consts::PI;

        let mut arcs = vec![BoundaryArc::new(
            "sqrt_arc",
            b,
            (b + (pe / c).powi(2)).min(pi),
            move |f| c * (f - b).max(0.0).sqrt(),
            move |f| c / (2.0 * (f - b).max(0.0).sqrt()),
            ArcSide::Below,
        )];
        let mut verticals = vec![
            VerticalSegment { phi: a, p_lo: -pe, p_hi: pe, side: SegSide::Left },
            VerticalSegment { phi: b, p_lo: -pe, p_hi: 0.0, side: SegSide::Right },
        ];
        let mut corners = vec![];
        if b + (pe / c).powi(2) > pi {
            // the curve exits through the seam; record its canonical image
            let p_seam = c * (pi - b).sqrt();
            verticals.push(VerticalSegment {
                phi: 0.0,
                p_lo: -pe,
                p_hi: -p_seam,
                side: SegSide::Right,
            });
            corners.push(Corner {
                phi: 0.0,
                p: -p_seam,
                slopes: (Slope::Finite(-c / (2.0 * (pi - b).sqrt())), Slope::Vertical),
            });
            arcs[0].phi_hi = pi;
        }
        Ok(Mask {
            inside_fn: Arc::new(move |f, p| {
                let rhs = b + (p.max(0.0) / c).powi(2);
                !(a < f && f < rhs)
            }),
            arcs,
            verticals,
            corners,
            label: format!("sqrt_boundary({a:.6},{b:.6},{c:.6})"),
            p_extent: pe,
            approximate: false,
        })
    }

    /// Complement of a union of closed axis-aligned rectangles
    /// (`steps[k] = ((phi_lo, phi_hi), (p_lo, p_hi))`). Shared edges
    /// between adjacent steps are interior and do not appear in the
    /// boundary decomposition; every remaining axis-parallel junction is
    /// enumerated as a corner.
    pub fn staircase(steps: &[((f64, f64), (f64, f64))]) -> Result<Mask> {
        if steps.is_empty() {
            return Err(Error::config("staircase requires at least one step"));
        }
        for (i, &((fl, fh), (pl, ph))) in steps.iter().enumerate() {
            if !(fl < fh && pl < ph) {
                return Err(Error::config(format!(
                    "staircase step {i} has an empty interval: phi ({fl}, {fh}), p ({pl}, {ph})"
                )));
            }
            if !(0.0 <= fl && fh <= std::f64::consts::PI) {
                return Err(Error::config(format!(
                    "staircase step {i} angles must lie in [0, pi], got ({fl}, {fh})"
                )));
            }
        }
        let steps_owned: Vec<((f64, f64), (f64, f64))> = steps.to_vec();

        // A = complement of the interior of the union of closed rectangles.
        // A point is interior iff all four of its infinitesimal quadrants
        // are covered by some rectangle.
        let covered = move |steps: &[((f64, f64), (f64, f64))], f: f64, p: f64, sf: i8, sp: i8| {
            steps.iter().any(|&((fl, fh), (pl, ph))| {
                let f_ok = (fl..=fh).contains(&f) && if sf > 0 { f < fh } else { f > fl };
                let p_ok = (pl..=ph).contains(&p) && if sp > 0 { p < ph } else { p > pl };
                f_ok && p_ok
            })
        };
        let steps_pred = steps_owned.clone();
        let inside_fn = move |f: f64, p: f64| {
            !([(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)]
                .iter()
                .all(|&(sf, sp)| covered(&steps_pred, f, p, sf, sp)))
        };

        let interior = |f: f64, p: f64| !inside_fn(f, p);

        // Candidate edges, split at every event coordinate of overlapping
        // rectangles, retained where the midpoint is on the boundary.
        let mut verticals: Vec<VerticalSegment> = vec![];
        let mut arcs: Vec<BoundaryArc> = vec![];
        let eps = 1e-7;
        let mut vertical_edges: Vec<(f64, f64, f64)> = vec![]; // (phi, p_lo, p_hi)
        let mut horizontal_edges: Vec<(f64, f64, f64)> = vec![]; // (p, phi_lo, phi_hi)
        for &((fl, fh), (pl, ph)) in &steps_owned {
            vertical_edges.push((fl, pl, ph));
            vertical_edges.push((fh, pl, ph));
            horizontal_edges.push((pl, fl, fh));
            horizontal_edges.push((ph, fl, fh));
        }

        for &(phi, lo, hi) in &vertical_edges {
            let mut events: Vec<f64> = vec![lo, hi];
            for &((fl, fh), (pl, ph)) in &steps_owned {
                if (fl..=fh).contains(&phi) {
                    for v in [pl, ph] {
                        if v > lo && v < hi {
                            events.push(v);
                        }
                    }
                }
            }
            events.sort_by(f64::total_cmp);
            events.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            for w in events.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                if interior(phi, mid) {
                    continue;
                }
                let left_in = inside_fn(phi - eps, mid) && !interior(phi - eps, mid);
                let side = if left_in { SegSide::Left } else { SegSide::Right };
                verticals.push(VerticalSegment { phi, p_lo: w[0], p_hi: w[1], side });
            }
        }
        let mut arc_idx = 0usize;
        for &(p0, lo, hi) in &horizontal_edges {
            let mut events: Vec<f64> = vec![lo, hi];
            for &((fl, fh), (pl, ph)) in &steps_owned {
                if (pl..=ph).contains(&p0) {
                    for v in [fl, fh] {
                        if v > lo && v < hi {
                            events.push(v);
                        }
                    }
                }
            }
            events.sort_by(f64::total_cmp);
            events.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            for w in events.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                if interior(mid, p0) {
                    continue;
                }
                let above_in = inside_fn(mid, p0 + eps) && !interior(mid, p0 + eps);
                let side = if above_in { ArcSide::Above } else { ArcSide::Below };
                arcs.push(BoundaryArc::constant(
                    format!("step_edge_{arc_idx}"),
                    w[0],
                    w[1],
                    p0,
                    side,
                ));
                arc_idx += 1;
            }
        }

        // Corners: endpoints where a retained vertical and a retained
        // horizontal piece meet; collinear continuations are not corners.
        let key = |x: f64| (x / 1e-9).round() as i64;
        use std::collections::HashMap;
        let mut incident: HashMap<(i64, i64), (bool, bool)> = HashMap::new(); // (has_vertical, has_horizontal)
        for v in &verticals {
            for p_end in [v.p_lo, v.p_hi] {
                incident.entry((key(v.phi), key(p_end))).or_default().0 = true;
            }
        }
        for a in &arcs {
            let p0 = a.p(a.phi_lo);
            for f_end in [a.phi_lo, a.phi_hi] {
                incident.entry((key(f_end), key(p0))).or_default().1 = true;
            }
        }
        let mut corners: Vec<Corner> = incident
            .iter()
            .filter(|(_, &(v, h))| v && h)
            .map(|(&(kf, kp), _)| Corner {
                phi: kf as f64 * 1e-9,
                p: kp as f64 * 1e-9,
                slopes: (Slope::Finite(0.0), Slope::Vertical),
            })
            .collect();
        // snap corner coordinates back to exact edge values
        for c in &mut corners {
            for &(phi, _, _) in &vertical_edges {
                if (c.phi - phi).abs() < 1e-8 {
                    c.phi = phi;
                }
            }
            for &(p0, _, _) in &horizontal_edges {
                if (c.p - p0).abs() < 1e-8 {
                    c.p = p0;
                }
            }
        }
        corners.sort_by(|a, b| (a.phi, a.p).partial_cmp(&(b.phi, b.p)).unwrap());

        let p_extent = steps_owned
            .iter()
            .map(|&(_, (pl, ph))| pl.abs().max(ph.abs()))
            .fold(DEFAULT_P_EXTENT, f64::max);
        Ok(Mask {
            inside_fn: Arc::new(inside_fn),
            arcs,
            verticals,
            corners,
            label: format!("staircase({} steps)", steps_owned.len()),
            p_extent,
            approximate: false,
        })
    }

    /// Construct from a mask definition document.
    pub fn from_spec(spec: &MaskSpec, base_dir: Option<&std::path::Path>) -> Result<Mask> {
        match spec {
            MaskSpec::LimitedAngle { phi1, phi2 } => Mask::limited_angle(*phi1, *phi2),
            MaskSpec::Roi { radius } => Mask::roi(*radius),
            MaskSpec::RectCutout { phi_a, phi_b, p_a, p_b } => {
                Mask::rect_cutout(*phi_a, *phi_b, *p_a, *p_b)
            }
            MaskSpec::SqrtBoundary { a, b, c } => Mask::sqrt_boundary(*a, *b, *c),
            MaskSpec::Staircase { steps } => {
                let steps: Vec<((f64, f64), (f64, f64))> = steps
                    .iter()
                    .map(|s| ((s.phi[0], s.phi[1]), (s.p[0], s.p[1])))
                    .collect();
                Mask::staircase(&steps)
            }
            MaskSpec::Raster { path } => {
                let full = match base_dir {
                    Some(d) => d.join(path),
                    None => std::path::PathBuf::from(path),
                };
                raster::from_raster_file(&full)
            }
        }
    }

    /// Unsigned distance from `(phi, p)` to the declared boundary, in the
    /// cylinder metric (`p_weight` scales the offset coordinate).
    pub fn boundary_distance_weighted(&self, phi: f64, p: f64, p_weight: f64) -> f64 {
        let (f, pc) = canonical_line(phi, p);
        let mut best = f64::INFINITY;
        for k in -1i64..=1 {
            let qf = f + k as f64 * std::f64::consts::PI;
            let qp = if k % 2 == 0 { pc } else { -pc };
            for seg in &self.verticals {
                let dp = if qp < seg.p_lo {
                    seg.p_lo - qp
                } else if qp > seg.p_hi {
                    qp - seg.p_hi
                } else {
                    0.0
                };
                best = best.min((qf - seg.phi).hypot(p_weight * dp));
            }
            for c in &self.corners {
                best = best.min((qf - c.phi).hypot(p_weight * (qp - c.p)));
            }
            for arc in &self.arcs {
                best = best.min(arc_distance(arc, qf, qp, p_weight));
            }
        }
        best
    }

    pub fn boundary_distance(&self, phi: f64, p: f64) -> f64 {
        self.boundary_distance_weighted(phi, p, 1.0)
    }

    /// Smooth multiplier that is 1 deep inside `A`, 0 outside, with a
    /// `C^inf` ramp of the given width along the boundary.
    pub fn apodize(&self, delta: f64) -> Result<ApodizedMask> {
        ApodizedMask::new(self.clone(), delta, 1.0)
    }

    /// Check the structural assumptions: proper, nonempty interior,
    /// symmetric, closed (boundary adjacent to interior), and boundary
    /// decomposition consistent with the predicate.
    pub fn validate(&self) -> ValidationReport {
        let mut violations: Vec<String> = vec![];
        let pi = std::f64::consts::PI;
        let pe = self.p_extent;

        // proper + nonempty interior, by lattice scan
        let n_scan = 129;
        let mut any_out = false;
        let mut any_int = false;
        for i in 0..n_scan {
            for k in 0..n_scan {
                let f = (i as f64 + 0.5) / n_scan as f64 * pi;
                let p = -pe + (k as f64 + 0.5) / n_scan as f64 * 2.0 * pe;
                let inside = self.inside(f, p);
                any_out |= !inside;
                if inside && !any_int {
                    let e = 1e-4;
                    any_int = [(e, 0.0), (-e, 0.0), (0.0, e), (0.0, -e)]
                        .iter()
                        .all(|&(df, dp)| self.inside(f + df, p + dp));
                }
            }
        }
        if !any_out {
            violations.push("mask is not proper: predicate true everywhere sampled".into());
        }
        if !any_int {
            violations.push("mask interior appears empty".into());
        }

        // symmetry through the public predicate
        for i in 0..33 {
            for k in 0..17 {
                let f = i as f64 / 33.0 * pi;
                let p = -pe + k as f64 / 16.0 * 2.0 * pe;
                if self.inside(f, p) != self.inside(f + pi, -p) {
                    violations.push(format!("symmetry violated at ({f:.4}, {p:.4})"));
                }
            }
        }

        if self.approximate {
            // inferred boundaries are only cell-accurate; pointwise
            // consistency probes are not meaningful for them
            return ValidationReport { passed: violations.is_empty(), violations };
        }

        let eps = 1e-6;
        // arcs: predicate consistency on both sides + closure + slope check
        for arc in &self.arcs {
            let lo = arc.phi_lo;
            let hi = arc.phi_hi;
            let n = 33;
            for k in 1..n {
                let f = lo + (hi - lo) * k as f64 / n as f64;
                let p0 = arc.p(f);
                if p0.abs() > pe {
                    continue;
                }
                let m = arc.slope(f);
                if !m.is_finite() || m.abs() > 1e6 {
                    continue; // near-vertical stretch: probes are meaningless
                }
                let nn = (1.0 + m * m).sqrt();
                let (nf, np) = (-m / nn, 1.0 / nn);
                let above = (self.inside(f + eps * nf, p0 + eps * np), arc.side == ArcSide::Above);
                let below = (self.inside(f - eps * nf, p0 - eps * np), arc.side == ArcSide::Below);
                let (in_probe_ok, out_probe_ok) = match arc.side {
                    ArcSide::Above => (above.0, !below.0),
                    ArcSide::Below => (below.0, !above.0),
                };
                if !in_probe_ok || !out_probe_ok {
                    violations.push(format!(
                        "arc '{}' disagrees with predicate at phi={f:.6} (p={p0:.6})",
                        arc.id
                    ));
                }
                // closure: the interior side stays inside a bit deeper too
                let s = if arc.side == ArcSide::Above { 1.0 } else { -1.0 };
                if !self.inside(f + 8.0 * eps * s * nf, p0 + 8.0 * eps * s * np) {
                    violations.push(format!(
                        "arc '{}' not adjacent to interior at phi={f:.6}",
                        arc.id
                    ));
                }
                // declared slope vs central finite difference
                let h = 1e-6;
                if f - h > lo && f + h < hi {
                    let fd = (arc.p(f + h) - arc.p(f - h)) / (2.0 * h);
                    if (fd - m).abs() > 1e-6 * m.abs().max(1.0) {
                        violations.push(format!(
                            "arc '{}' slope {m:.6e} disagrees with finite difference {fd:.6e} at phi={f:.6}",
                            arc.id
                        ));
                    }
                }
            }
        }

        // verticals
        for seg in &self.verticals {
            let n = 17;
            for k in 1..n {
                let p = seg.p_lo + (seg.p_hi - seg.p_lo) * k as f64 / n as f64;
                if p.abs() > pe + 1e-12 {
                    continue;
                }
                let (sin, sout) = match seg.side {
                    SegSide::Left => (self.inside(seg.phi - eps, p), !self.inside(seg.phi + eps, p)),
                    SegSide::Right => (self.inside(seg.phi + eps, p), !self.inside(seg.phi - eps, p)),
                };
                if !sin || !sout {
                    violations.push(format!(
                        "vertical at phi={:.6} disagrees with predicate at p={p:.6}",
                        seg.phi
                    ));
                }
                let s = if seg.side == SegSide::Left { -1.0 } else { 1.0 };
                if !self.inside(seg.phi + 8.0 * eps * s, p) {
                    violations.push(format!(
                        "vertical at phi={:.6} not adjacent to interior at p={p:.6}",
                        seg.phi
                    ));
                }
            }
        }

        // corners: on the boundary means inside (A closed) with exterior nearby
        for c in &self.corners {
            if !self.inside(c.phi, c.p) {
                violations.push(format!(
                    "corner ({:.6}, {:.6}) not in the closed set",
                    c.phi, c.p
                ));
            }
            let mut any_out = false;
            let mut any_in = false;
            for k in 0..8 {
                let ang = k as f64 / 8.0 * 2.0 * pi;
                let q = self.inside(c.phi + eps * ang.cos(), c.p + eps * ang.sin());
                any_out |= !q;
                any_in |= q;
            }
            if !any_out || !any_in {
                violations.push(format!(
                    "corner ({:.6}, {:.6}) is not a boundary point",
                    c.phi, c.p
                ));
            }
            if c.slopes.0 == c.slopes.1 {
                violations.push(format!(
                    "corner ({:.6}, {:.6}) tangents are not transversal",
                    c.phi, c.p
                ));
            }
        }

        ValidationReport { passed: violations.is_empty(), violations }
    }
}

fn arc_distance(arc: &BoundaryArc, qf: f64, qp: f64, w: f64) -> f64 {
    let d2 = |f: f64| {
        let df = f - qf;
        let dp = w * (arc.p(f) - qp);
        df * df + dp * dp
    };
    let n = 64;
    let span = arc.phi_hi - arc.phi_lo;
    let mut best_f = arc.phi_lo;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let f = arc.phi_lo + span * k as f64 / n as f64;
        let v = d2(f);
        if v < best {
            best = v;
            best_f = f;
        }
    }
    // golden-section refinement around the coarse minimum
    let mut lo = (best_f - span / n as f64).max(arc.phi_lo);
    let mut hi = (best_f + span / n as f64).min(arc.phi_hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if d2(m1) < d2(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    d2(0.5 * (lo + hi)).sqrt().min(best.sqrt())
}

/// Result of [`Mask::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(f, "mask validation passed")
        } else {
            writeln!(f, "mask validation failed:")?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

/// `C^inf` ramp: 0 for `t <= 0`, 1 for `t >= 1`, and the standard
/// bump-quotient `1 / (1 + exp(1/t - 1/(1-t)))` in between (so `q(1/2) = 1/2`).
pub fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

/// Smooth replacement for the sharp cutoff: `psi = q(d / delta)` with `d`
/// the signed boundary distance (positive inside `A`).
#[derive(Clone)]
pub struct ApodizedMask {
    pub base: Mask,
    pub delta: f64,
    /// Relative weight of the offset coordinate in the boundary metric.
    pub p_weight: f64,
}

impl ApodizedMask {
    pub fn new(base: Mask, delta: f64, p_weight: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::config(format!(
                "apodization width must be positive, got {delta}"
            )));
        }
        if !(p_weight > 0.0) {
            return Err(Error::config("p_weight must be positive"));
        }
        Ok(ApodizedMask { base, delta, p_weight })
    }

    pub fn psi(&self, phi: f64, p: f64) -> f64 {
        if !self.base.inside(phi, p) {
            return 0.0;
        }
        let d = self.base.boundary_distance_weighted(phi, p, self.p_weight);
        smooth_ramp(d / self.delta)
    }
}

impl SinogramWeight for ApodizedMask {
    fn weight(&self, phi: f64, p: f64) -> f64 {
        self.psi(phi, p)
    }
}

/// Pointwise multiplication of a sinogram by a cutoff (sharp or smooth).
/// Boundary nodes of a sharp mask take the closed-set value 1.
pub fn apply<W: SinogramWeight + ?Sized>(weight: &W, s: &Sinogram) -> Sinogram {
    let mut out = Sinogram::zeros(s.grid);
    let n_p = s.grid.n_p;
    let grid = s.grid;
    out.values
        .par_chunks_mut(n_p)
        .zip(s.values.par_chunks(n_p))
        .enumerate()
        .for_each(|(j, (orow, irow))| {
            let phi = grid.phi(j);
            for (i, (o, &v)) in orow.iter_mut().zip(irow.iter()).enumerate() {
                *o = v * weight.weight(phi, grid.p(i));
            }
        });
    out
}

/// Step of a staircase mask in a definition document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub phi: [f64; 2],
    pub p: [f64; 2],
}

/// Mask definition document with a `kind` discriminator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    LimitedAngle { phi1: f64, phi2: f64 },
    Roi { radius: f64 },
    RectCutout { phi_a: f64, phi_b: f64, p_a: f64, p_b: f64 },
    SqrtBoundary { a: f64, b: f64, c: f64 },
    Staircase { steps: Vec<Step> },
    Raster { path: String },
}

impl MaskSpec {
    pub fn from_json(text: &str) -> Result<MaskSpec> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const PAPER_PHI1: f64 = 4.0 * PI / 9.0;
    const PAPER_PHI2: f64 = 5.0 * PI / 9.0;

    #[test]
    fn limited_angle_predicate_and_shape() {
        let m = Mask::limited_angle(PAPER_PHI1, PAPER_PHI2).unwrap();
        for p in [-1.0, 0.0, 0.3] {
            assert!(m.inside(0.0, p));
            assert!(!m.inside(PI / 2.0, p));
            // boundary angles are measured (A is closed)
            assert!(m.inside(PAPER_PHI1, p));
        }
        assert!(m.arcs.is_empty());
        assert!(m.corners.is_empty());
        assert_eq!(m.verticals.len(), 2);
        assert!(Mask::limited_angle(1.0, 0.5).is_err());
        assert!(m.validate().passed, "{}", m.validate());
    }

    #[test]
    fn roi_predicate_and_shape() {
        let m = Mask::roi(0.8).unwrap();
        for phi in [0.0, 1.0, 2.0, 3.0] {
            assert!(m.inside(phi, 0.0));
            assert!(m.inside(phi, 0.8));
            assert!(!m.inside(phi, 0.81));
        }
        assert_eq!(m.arcs.len(), 2);
        for arc in &m.arcs {
            for k in 0..8 {
                assert_eq!(arc.slope(arc.phi_lo + k as f64 * 0.3), 0.0);
            }
        }
        assert!(m.verticals.is_empty() && m.corners.is_empty());
        assert!(Mask::roi(0.0).is_err());
        assert!(m.validate().passed, "{}", m.validate());
    }

    #[test]
    fn rect_cutout_predicate_and_shape() {
        let m = Mask::rect_cutout(7.0 * PI / 18.0, 11.0 * PI / 18.0, -0.35, 0.35).unwrap();
        assert_eq!(m.corners.len(), 4);
        assert!(!m.inside(PI / 2.0, 0.0)); // rectangle center
        assert!(m.inside(PI / 2.0, 0.35)); // boundary belongs to A
        assert!(m.inside(0.1, 0.0));
        assert!(Mask::rect_cutout(1.0, 0.5, 0.0, 1.0).is_err());
        assert!(Mask::rect_cutout(0.5, 1.0, 0.3, 0.3).is_err());
        assert!(m.validate().passed, "{}", m.validate());
    }

    #[test]
    fn sqrt_boundary_shape_and_slope() {
        for c in [1.3, 0.65] {
            let m = Mask::sqrt_boundary(PAPER_PHI1, PAPER_PHI2, c).unwrap();
            let arc = &m.arcs[0];
            // slope at p-level p0 is c^2 / (2 p0)
            for p0 in [0.2, 0.5, 0.9] {
                let f = PAPER_PHI2 + (p0 / c).powi(2);
                if f < arc.phi_hi {
                    let expect = c * c / (2.0 * p0);
                    assert!((arc.slope(f) - expect).abs() < 1e-9 * expect);
                }
            }
            // join at (b, 0): vertical below, arc above with infinite slope
            assert!(m.inside(PAPER_PHI2 + 1e-9, -0.5));
            assert!(!m.inside(PAPER_PHI2 - 1e-9, -0.5));
            assert!(m.validate().passed, "c={c}: {}", m.validate());
        }
        // the shallow mask wraps through the seam and gains a corner there
        let shallow = Mask::sqrt_boundary(PAPER_PHI1, PAPER_PHI2, 0.65).unwrap();
        assert_eq!(shallow.corners.len(), 1);
        let steep = Mask::sqrt_boundary(PAPER_PHI1, PAPER_PHI2, 1.3).unwrap();
        assert!(steep.corners.is_empty());
    }

    #[test]
    fn staircase_single_step_equals_rect_cutout() {
        let st = Mask::staircase(&[((1.0, 1.5), (-0.3, 0.2))]).unwrap();
        let rc = Mask::rect_cutout(1.0, 1.5, -0.3, 0.2).unwrap();
        for i in 0..60 {
            for k in 0..60 {
                let f = i as f64 / 60.0 * PI;
                let p = -1.4 + k as f64 / 59.0 * 2.8;
                assert_eq!(st.inside(f, p), rc.inside(f, p), "at ({f}, {p})");
            }
        }
        assert_eq!(st.corners.len(), 4);
        assert!(st.validate().passed, "{}", st.validate());
    }

    #[test]
    fn staircase_shared_edge_is_removed() {
        // two steps sharing the full edge phi = 1.5: same predicate as one
        // wide rectangle, shared edge gone, 4 corners
        let st = Mask::staircase(&[((1.0, 1.5), (-0.3, 0.2)), ((1.5, 2.0), (-0.3, 0.2))]).unwrap();
        let rc = Mask::rect_cutout(1.0, 2.0, -0.3, 0.2).unwrap();
        for i in 0..80 {
            for k in 0..80 {
                let f = i as f64 / 80.0 * PI;
                let p = -1.4 + k as f64 / 79.0 * 2.8;
                assert_eq!(st.inside(f, p), rc.inside(f, p), "at ({f}, {p})");
            }
        }
        assert_eq!(st.corners.len(), 4);
        assert!(!st.verticals.iter().any(|v| (v.phi - 1.5).abs() < 1e-9));
        assert!(st.validate().passed, "{}", st.validate());
    }

    #[test]
    fn staircase_disjoint_steps_have_4n_corners() {
        let st = Mask::staircase(&[
            ((0.5, 0.8), (-0.2, 0.1)),
            ((1.2, 1.5), (-0.4, -0.1)),
            ((2.0, 2.4), (0.1, 0.5)),
        ])
        .unwrap();
        assert_eq!(st.corners.len(), 12);
        assert!(st.validate().passed, "{}", st.validate());
    }

    #[test]
    fn staircase_partial_overlap_corners() {
        // second step extends half as high: an inner L-junction appears
        let st = Mask::staircase(&[((1.0, 1.5), (0.0, 0.4)), ((1.5, 2.0), (0.0, 0.2))]).unwrap();
        assert!(st.validate().passed, "{}", st.validate());
        // corners: (1,0),(1,0.4),(1.5,0.4),(1.5,0.2),(2,0.2),(2,0) = 6
        assert_eq!(st.corners.len(), 6);
    }

    #[test]
    fn full_mask_fails_validation() {
        let report = Mask::full().validate();
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| v.contains("proper")));
    }

    #[test]
    fn inconsistent_declaration_is_caught() {
        // roi predicate with an arc declared at the wrong radius
        let mut m = Mask::roi(0.8).unwrap();
        m.arcs[0] = BoundaryArc::constant("wrong", 0.0, PI, 0.7, ArcSide::Below);
        let report = m.validate();
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| v.contains("wrong")));
    }

    #[test]
    fn symmetry_of_predicate_and_psi() {
        let m = Mask::rect_cutout(1.2, 1.9, -0.35, 0.35).unwrap();
        let ap = m.apodize(0.05).unwrap();
        for i in 0..25 {
            for k in 0..25 {
                let f = i as f64 / 25.0 * PI;
                let p = -1.4 + k as f64 / 24.0 * 2.8;
                assert_eq!(m.inside(f, p), m.inside(f + PI, -p));
                let a = ap.psi(f, p);
                let b = ap.psi(f + PI, -p);
                assert!((a - b).abs() <= 1e-12, "psi asym at ({f}, {p}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn apodization_profile() {
        let m = Mask::roi(0.8).unwrap();
        let delta = 0.06;
        let ap = m.apodize(delta).unwrap();
        // outside A
        assert_eq!(ap.psi(1.0, 0.9), 0.0);
        // deep inside
        assert_eq!(ap.psi(1.0, 0.0), 1.0);
        // half-way through the transition
        let v = ap.psi(1.0, 0.8 - delta / 2.0);
        assert!((v - 0.5).abs() < 1e-9, "psi at half depth: {v}");
        assert!(Mask::roi(0.8).unwrap().apodize(0.0).is_err());
    }

    #[test]
    fn apodization_matches_sharp_beyond_transition() {
        let m = Mask::rect_cutout(1.2, 1.9, -0.35, 0.35).unwrap();
        let delta = 0.04;
        let ap = m.apodize(delta).unwrap();
        for i in 0..40 {
            for k in 0..40 {
                let f = i as f64 / 40.0 * PI;
                let p = -1.4 + k as f64 / 39.0 * 2.8;
                let d = m.boundary_distance(f, p);
                if d > delta * 1.001 {
                    let sharp = if m.inside(f, p) { 1.0 } else { 0.0 };
                    assert_eq!(ap.psi(f, p), sharp, "at ({f}, {p}), d={d}");
                }
            }
        }
    }

    #[test]
    fn psi_gradient_bounded() {
        // |grad psi| <= 4 / delta on a probe grid (the ramp's maximal
        // slope is 2 and the distance field is 1-Lipschitz)
        let m = Mask::roi(0.8).unwrap();
        let delta = 0.05;
        let ap = m.apodize(delta).unwrap();
        let h = 1e-4;
        let mut max_grad = 0.0f64;
        for i in 0..40 {
            for k in 0..60 {
                let f = 0.2 + i as f64 / 40.0 * 2.5;
                let p = 0.7 + k as f64 / 59.0 * 0.2;
                let gx = (ap.psi(f + h, p) - ap.psi(f - h, p)) / (2.0 * h);
                let gy = (ap.psi(f, p + h) - ap.psi(f, p - h)) / (2.0 * h);
                max_grad = max_grad.max(gx.hypot(gy));
            }
        }
        assert!(max_grad <= 4.0 / delta, "max |grad psi| = {max_grad}");
    }

    #[test]
    fn apply_full_mask_is_identity() {
        let ph = crate::phantom::Phantom::skullish();
        let grid = crate::fbp::SinogramGrid::standard(16, 33).unwrap();
        let s = ph.simulate(&grid);
        let applied = apply(&Mask::full(), &s);
        assert_eq!(applied.values, s.values);
    }

    #[test]
    fn apply_roi_unit_radius_keeps_unit_disk_sinogram() {
        // lines with |p| <= 1 carry all of the unit disk's mass, so the
        // roi(1.0) cutoff changes nothing
        let grid = crate::fbp::SinogramGrid::standard(16, 65).unwrap();
        let s = crate::phantom::Phantom::unit_disk().simulate(&grid);
        let masked = apply(&Mask::roi(1.0).unwrap(), &s);
        assert_eq!(masked.values, s.values);
    }

    #[test]
    fn mask_spec_json_roundtrip() {
        let spec = MaskSpec::from_json(r#"{"kind":"roi","radius":0.8}"#).unwrap();
        let m = Mask::from_spec(&spec, None).unwrap();
        assert!(m.inside(0.3, 0.5));
        assert!(!m.inside(0.3, 0.9));

        let spec = MaskSpec::from_json(
            r#"{"kind":"staircase","steps":[{"phi":[1.0,1.5],"p":[-0.3,0.2]}]}"#,
        )
        .unwrap();
        assert!(Mask::from_spec(&spec, None).is_ok());

        assert!(MaskSpec::from_json(r#"{"kind":"roi","radius":0.8,"junk":1}"#).is_err());
        assert!(MaskSpec::from_json(r#"{"kind":"nope"}"#).is_err());
    }
}
