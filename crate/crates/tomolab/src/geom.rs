//! Line parametrization helpers.
//!
//! Lines are parametrized by an angle and a signed offset: the line with
//! parameters `(phi, p)` is `{x : x . theta(phi) = p}`. The pairs
//! `(phi, p)` and `(phi + pi, -p)` describe the same line, so everything
//! downstream works on the canonical strip `phi in [0, pi)` and extends by
//! that identification.

/// Unit direction `(cos phi, sin phi)`.
pub fn theta(phi: f64) -> [f64; 2] {
    [phi.cos(), phi.sin()]
}

/// Unit vector a quarter turn counterclockwise from `theta(phi)`.
pub fn theta_perp(phi: f64) -> [f64; 2] {
    [-phi.sin(), phi.cos()]
}

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Reduce `(phi, p)` to the canonical strip `phi in [0, pi)`, flipping the
/// sign of `p` once per half-turn. Exact when the reduction is a single
/// subtraction of pi (Sterbenz), which keeps the symmetry
/// `R f(phi, p) = R f(phi + pi, -p)` bitwise for angles in `[pi, 2 pi)`.
pub fn canonical_line(phi: f64, p: f64) -> (f64, f64) {
    let mut k = (phi / std::f64::consts::PI).floor() as i64;
    let mut f = phi - (k as f64) * std::f64::consts::PI;
    if f < 0.0 {
        f += std::f64::consts::PI;
        k -= 1;
    }
    if f >= std::f64::consts::PI {
        f -= std::f64::consts::PI;
        k += 1;
    }
    if k.rem_euclid(2) == 0 {
        (f, p)
    } else {
        (f, -p)
    }
}

/// Angle of a nonzero vector reduced to `[0, pi)` together with the sign
/// flip that keeps `(angle, offset)` on the canonical strip.
///
/// Returns `(phi, sign)` such that `theta(phi) = sign * v / |v|`.
pub fn canonical_direction(v: [f64; 2]) -> (f64, f64) {
    let raw = v[1].atan2(v[0]);
    if raw < 0.0 {
        (raw + std::f64::consts::PI, -1.0)
    } else if raw >= std::f64::consts::PI {
        (raw - std::f64::consts::PI, -1.0)
    } else {
        (raw, 1.0)
    }
}

/// Distance between two line parameters on the cylinder, honoring the
/// `(phi, p) ~ (phi + pi, -p)` identification. `p_weight` scales the
/// offset coordinate relative to the angular one.
pub fn cylinder_distance(a: (f64, f64), b: (f64, f64), p_weight: f64) -> f64 {
    let (fa, pa) = canonical_line(a.0, a.1);
    let (fb, pb) = canonical_line(b.0, b.1);
    let mut best = f64::INFINITY;
    for k in -1i32..=1 {
        let phi_b = fb + f64::from(k) * std::f64::consts::PI;
        let p_b = if k % 2 == 0 { pb } else { -pb };
        let d = (fa - phi_b).hypot(p_weight * (pa - p_b));
        best = best.min(d);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn canonical_reduces_to_strip() {
        for &(phi, p) in &[(0.0, 0.5), (3.5, -0.2), (-1.0, 0.7), (9.0, 0.1)] {
            let (f, _) = canonical_line(phi, p);
            assert!((0.0..PI).contains(&f), "phi={phi} -> {f}");
        }
    }

    #[test]
    fn canonical_is_exact_on_second_half_turn() {
        // For x in [pi, 2 pi) the reduction is a single exact subtraction.
        let x = 4.0;
        let (f, p) = canonical_line(x, 0.25);
        assert_eq!(f, x - PI);
        assert_eq!(p, -0.25);
    }

    #[test]
    fn canonical_double_flip_restores_sign() {
        let (f, p) = canonical_line(0.7 + 2.0 * PI, 0.3);
        assert!((f - 0.7).abs() < 1e-15);
        assert_eq!(p, 0.3);
    }

    #[test]
    fn cylinder_distance_sees_wraparound() {
        let d = cylinder_distance((0.01, 0.5), (PI - 0.01, -0.5), 1.0);
        assert!(d < 0.03, "wraparound distance {d}");
    }
}
