//! Artifact prediction from mask geometry and phantom singularities.
//!
//! Given a phantom and a cutoff region, this module computes which of the
//! phantom's boundary singularities are visible, invisible, or borderline;
//! which lines can carry object-dependent streaks (tangent lines of the
//! phantom whose parameters land on the cutoff boundary); which corner
//! points of the cutoff boundary generate streaks of their own; and the
//! object-independent artifact curves swept out by the smooth, non-vertical
//! parts of the boundary. Everything is geometric: no reconstruction is
//! run to make a prediction, which is what makes the predictions testable
//! against reconstructions.

mod energy;
mod sobolev;

pub use energy::{
    artifact_energy, phantom_boundary_geometry, streak_geometry, xb_geometry, EnergyMeasurement,
    EnergyOptions, TubeGeometry, XbFilter,
};
pub use sobolev::{sobolev_order, SobolevEstimate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonical_direction, cylinder_distance, dot, theta, theta_perp};
use crate::mask::{BoundaryArc, Mask, Slope};
use crate::phantom::{Phantom, WavefrontElement};

/// Distance within which a line parameter is considered to lie on the
/// declared mask boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Line integrals smaller than this count as zero when deciding whether a
/// potential artifact is realized.
pub const RADON_ZERO_TOL: f64 = 1e-12;

const DEFAULT_WAVEFRONT_SAMPLES: usize = 360;
const DEFAULT_CURVE_SAMPLES: usize = 257;
const TANGENT_SCAN_SAMPLES: usize = 512;

/// A cotangent direction at a sinogram point: `alpha` parametrizes the
/// covector `-alpha dtheta + dp`; `Vertical` marks the pure `dtheta`
/// direction, which backprojection maps to nothing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SinoCovector {
    pub phi: f64,
    pub p: f64,
    pub alpha: Slope,
}

/// Where a predicted streak comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreakCause {
    /// A phantom singularity is normal to the line (tangent line of an
    /// ellipse meeting the cutoff boundary).
    ObjectDependent,
    /// A corner of the cutoff boundary.
    Corner,
    /// A non-smooth boundary point without clean one-sided tangents
    /// (only produced by inferred raster boundaries).
    BoundaryNonsmooth,
}

/// Whether the sufficient conditions for the artifact to appear hold, or
/// only the necessary ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreakStatus {
    Guaranteed,
    Potential,
}

/// A line that can carry a streak artifact. Its parameters lie on the
/// cutoff boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreakLine {
    pub phi: f64,
    pub p: f64,
    pub cause: StreakCause,
    pub status: StreakStatus,
    /// What generated this line (ellipse tangency, corner, ...).
    pub witness: String,
}

/// One sample of an object-independent artifact curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct XbSample {
    pub phi: f64,
    pub point: [f64; 2],
    /// The generating boundary point carries data (`R f != 0`), so the
    /// artifact is expected to materialize here.
    pub realized: bool,
    /// The sample lies strictly inside the reference disk (equivalently,
    /// the boundary slope satisfies the small-slope condition).
    pub in_region: bool,
}

/// Object-independent artifact curve `x_b(phi) = p(phi) theta + p'(phi)
/// theta_perp` generated by a smooth non-vertical boundary arc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XbCurve {
    pub arc_id: String,
    pub samples: Vec<XbSample>,
}

/// Partition of the phantom's wavefront samples by the mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityPartition {
    pub visible: Vec<WavefrontElement>,
    pub invisible: Vec<WavefrontElement>,
    pub boundary_cases: Vec<WavefrontElement>,
}

/// Complete prediction: singularity partition, streak lines, artifact
/// curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactPrediction {
    pub visible: Vec<WavefrontElement>,
    pub invisible: Vec<WavefrontElement>,
    pub boundary_cases: Vec<WavefrontElement>,
    pub streaks: Vec<StreakLine>,
    pub curves: Vec<XbCurve>,
}

/// Project a sinogram covector back to image space: the covector
/// `(phi, p, -alpha dtheta + dp)` corresponds to the image covector at
/// `x = p theta + alpha theta_perp` with direction `theta`. Pure `dtheta`
/// covectors map to nothing.
pub fn ct_project(cov: &SinoCovector) -> Option<([f64; 2], [f64; 2])> {
    match cov.alpha {
        Slope::Vertical => None,
        Slope::Finite(alpha) => {
            let th = theta(cov.phi);
            let tp = theta_perp(cov.phi);
            Some((
                [cov.p * th[0] + alpha * tp[0], cov.p * th[1] + alpha * tp[1]],
                th,
            ))
        }
    }
}

/// Classify each sampled phantom singularity by where its line parameters
/// `(angle of xi, x . xi)` fall relative to the mask: interior (visible),
/// exterior (invisible), or on the declared boundary within
/// [`BOUNDARY_TOL`].
pub fn classify_singularities(ph: &Phantom, m: &Mask, n_samples: usize) -> SingularityPartition {
    let mut part = SingularityPartition {
        visible: vec![],
        invisible: vec![],
        boundary_cases: vec![],
    };
    for el in ph.wavefront(n_samples) {
        let (phi, sign) = canonical_direction(el.xi);
        let p = sign * dot(el.x, el.xi);
        if m.boundary_distance(phi, p) <= BOUNDARY_TOL {
            part.boundary_cases.push(el);
        } else if m.inside(phi, p) {
            part.visible.push(el);
        } else {
            part.invisible.push(el);
        }
    }
    part
}

/// Sample the artifact curve of a smooth boundary arc. Samples where the
/// slope is non-finite (an arc running into a vertical join) are skipped;
/// an arc with no finite-slope samples is rejected.
pub fn xb_curve(
    arc: &BoundaryArc,
    ph: &Phantom,
    n_samples: usize,
    region_radius: f64,
) -> Result<XbCurve> {
    let n = n_samples.max(2);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let phi = arc.phi_lo + (arc.phi_hi - arc.phi_lo) * k as f64 / (n - 1) as f64;
        let slope = arc.slope(phi);
        if !slope.is_finite() {
            continue;
        }
        let p = arc.p(phi);
        let th = theta(phi);
        let tp = theta_perp(phi);
        let point = [p * th[0] + slope * tp[0], p * th[1] + slope * tp[1]];
        let realized = ph.radon(phi, p).abs() > RADON_ZERO_TOL;
        let in_region = point[0].hypot(point[1]) < region_radius;
        samples.push(XbSample { phi, point, realized, in_region });
    }
    if samples.is_empty() {
        return Err(Error::config(format!(
            "arc '{}' has no finite-slope samples (vertical boundaries generate no curve)",
            arc.id
        )));
    }
    Ok(XbCurve { arc_id: arc.id.clone(), samples })
}

/// Lines carrying object-dependent streaks: intersections of each
/// ellipse's tangent curve with the mask's boundary decomposition.
/// Arcs are scanned with sign-change bracketing and bisection; vertical
/// segments are solved by direct evaluation of the tangent branches.
pub fn object_streaks(ph: &Phantom, m: &Mask) -> Vec<StreakLine> {
    let mut out = vec![];
    for (ei, e) in ph.ellipses.iter().enumerate() {
        for (branch, name) in [(true, "upper"), (false, "lower")] {
            let tangent = |phi: f64| {
                let (pp, pm) = e.tangent_offsets(phi);
                if branch {
                    pp
                } else {
                    pm
                }
            };
            for arc in &m.arcs {
                let g = |phi: f64| tangent(phi) - arc.p(phi);
                let n = TANGENT_SCAN_SAMPLES;
                let span = arc.phi_hi - arc.phi_lo;
                let mut prev_phi = arc.phi_lo;
                let mut prev = g(prev_phi);
                for k in 1..=n {
                    let phi = arc.phi_lo + span * k as f64 / n as f64;
                    let cur = g(phi);
                    if prev == 0.0 || prev * cur < 0.0 {
                        let root = if prev == 0.0 {
                            prev_phi
                        } else {
                            bisect(&g, prev_phi, phi)
                        };
                        out.push(StreakLine {
                            phi: root,
                            p: arc.p(root),
                            cause: StreakCause::ObjectDependent,
                            status: StreakStatus::Potential,
                            witness: format!("ellipse {ei} {name} tangent on arc '{}'", arc.id),
                        });
                    }
                    prev_phi = phi;
                    prev = cur;
                }
                if prev == 0.0 {
                    out.push(StreakLine {
                        phi: prev_phi,
                        p: arc.p(prev_phi),
                        cause: StreakCause::ObjectDependent,
                        status: StreakStatus::Potential,
                        witness: format!("ellipse {ei} {name} tangent on arc '{}'", arc.id),
                    });
                }
            }
            for seg in &m.verticals {
                let p_t = tangent(seg.phi);
                if p_t >= seg.p_lo && p_t <= seg.p_hi {
                    out.push(StreakLine {
                        phi: seg.phi,
                        p: p_t,
                        cause: StreakCause::ObjectDependent,
                        status: StreakStatus::Potential,
                        witness: format!("ellipse {ei} {name} tangent on vertical at {:.6}", seg.phi),
                    });
                }
            }
        }
    }
    out
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if glo * gm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            glo = gm;
        }
    }
    0.5 * (lo + hi)
}

/// One streak line per boundary corner. Guaranteed when the corner's line
/// carries data (`R f != 0`) and no phantom singularity is normal to it;
/// potential otherwise.
pub fn corner_streaks(m: &Mask, ph: &Phantom) -> Vec<StreakLine> {
    m.corners
        .iter()
        .map(|c| {
            let has_data = ph.radon(c.phi, c.p).abs() > RADON_ZERO_TOL;
            let smooth_normal = ph.ellipses.iter().all(|e| {
                let (pp, pm) = e.tangent_offsets(c.phi);
                (pp - c.p).abs() > BOUNDARY_TOL && (pm - c.p).abs() > BOUNDARY_TOL
            });
            let status = if has_data && smooth_normal {
                StreakStatus::Guaranteed
            } else {
                StreakStatus::Potential
            };
            let cause = if matches!(c.slopes.0, Slope::Finite(_)) || matches!(c.slopes.1, Slope::Finite(_))
            {
                StreakCause::Corner
            } else {
                StreakCause::BoundaryNonsmooth
            };
            StreakLine {
                phi: c.phi,
                p: c.p,
                cause,
                status,
                witness: format!("corner at ({:.6}, {:.6})", c.phi, c.p),
            }
        })
        .collect()
}

/// Full prediction with default sampling parameters.
pub fn predict_all(ph: &Phantom, m: &Mask) -> ArtifactPrediction {
    predict_all_with(ph, m, DEFAULT_WAVEFRONT_SAMPLES, DEFAULT_CURVE_SAMPLES, 1.0)
}

/// Full prediction: singularity partition, curves from every
/// finite-slope arc, object and corner streaks, deduplicated (a corner
/// takes precedence over a coincident tangency).
pub fn predict_all_with(
    ph: &Phantom,
    m: &Mask,
    wavefront_samples: usize,
    curve_samples: usize,
    region_radius: f64,
) -> ArtifactPrediction {
    let part = classify_singularities(ph, m, wavefront_samples);
    let curves: Vec<XbCurve> = m
        .arcs
        .iter()
        .filter_map(|arc| xb_curve(arc, ph, curve_samples, region_radius).ok())
        .collect();

    let mut streaks = corner_streaks(m, ph);
    for s in object_streaks(ph, m) {
        let dup = streaks
            .iter()
            .any(|t| cylinder_distance((t.phi, t.p), (s.phi, s.p), 1.0) <= BOUNDARY_TOL);
        if !dup {
            streaks.push(s);
        }
    }
    streaks.sort_by(|a, b| (a.phi, a.p).partial_cmp(&(b.phi, b.p)).unwrap());

    ArtifactPrediction {
        visible: part.visible,
        invisible: part.invisible,
        boundary_cases: part.boundary_cases,
        streaks,
        curves,
    }
}
