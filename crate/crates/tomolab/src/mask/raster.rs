//! Raster-mask import: binary (phi, p) grids with an inferred boundary.
//!
//! The inferred decomposition is approximate by nature: the 0/1 grid is
//! contoured with marching squares, the contour chains are smoothed, and
//! the smoothed runs are classified into near-vertical segments and arcs
//! with finite-difference slopes. Masks built this way carry
//! `approximate = true` and relaxed validation probes.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ArcSide, BoundaryArc, Corner, Mask, SegSide, Slope, VerticalSegment};
use crate::error::{Error, Result};
use crate::fbp::SinogramGrid;

/// Header of a raster mask file; `data` names the companion raw file of
/// `n_phi * n_p` bytes (0 = outside A, nonzero = inside), row per view.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub n_phi: usize,
    pub n_p: usize,
    pub p_max: f64,
    pub data: String,
}

pub fn from_raster_file(path: &Path) -> Result<Mask> {
    let text = std::fs::read_to_string(path)?;
    let header: RasterHeader = serde_json::from_str(&text)?;
    let grid = SinogramGrid::new(header.n_phi, header.n_p, header.p_max)?;
    let raw_path = path
        .parent()
        .map(|d| d.join(&header.data))
        .unwrap_or_else(|| header.data.clone().into());
    let bytes = std::fs::read(&raw_path)?;
    if bytes.len() != grid.n_phi * grid.n_p {
        return Err(Error::config(format!(
            "raster mask {} has {} bytes, expected {}",
            raw_path.display(),
            bytes.len(),
            grid.n_phi * grid.n_p
        )));
    }
    from_raster(grid, &bytes)
}

/// Build a mask from node samples of the indicator of `A` on a sinogram
/// grid. Nearest-node predicate; inferred (approximate) boundary.
pub fn from_raster(grid: SinogramGrid, values: &[u8]) -> Result<Mask> {
    if values.len() != grid.n_phi * grid.n_p {
        return Err(Error::config("raster mask size does not match grid"));
    }
    let flags: Arc<Vec<bool>> = Arc::new(values.iter().map(|&v| v != 0).collect());
    let g = grid;
    let lookup = {
        let flags = flags.clone();
        move |f: f64, p: f64| -> bool {
            if p.abs() > g.p_max + 0.5 * g.delta_p() {
                return false;
            }
            let j = ((f / g.delta_phi()).round() as i64).rem_euclid(g.n_phi as i64) as usize;
            let i = (((p + g.p_max) / g.delta_p()).round() as i64).clamp(0, g.n_p as i64 - 1) as usize;
            flags[j * g.n_p + i]
        }
    };

    let chains = contour_chains(&flags, grid);
    let mut arcs = vec![];
    let mut verticals = vec![];
    let mut corners = vec![];
    for chain in &chains {
        let smooth = smooth_chain(chain, 5);
        let runs = split_runs(&smooth);
        classify_runs(&runs, &lookup, grid, &mut arcs, &mut verticals, &mut corners);
    }

    Ok(Mask {
        inside_fn: Arc::new(lookup),
        arcs,
        verticals,
        corners,
        label: format!("raster({}x{})", grid.n_phi, grid.n_p),
        p_extent: grid.p_max,
        approximate: true,
    })
}

/// Marching squares on the node grid; returns contour chains as point
/// lists in (phi, p) coordinates.
fn contour_chains(flags: &[bool], grid: SinogramGrid) -> Vec<Vec<[f64; 2]>> {
    let (nf, np) = (grid.n_phi, grid.n_p);
    let at = |j: usize, i: usize| flags[j * np + i];
    // edge ids: (j, i, 0) = between nodes (j,i)-(j+1,i); (j, i, 1) = (j,i)-(j,i+1)
    type EdgeId = (usize, usize, u8);
    let midpoint = |e: EdgeId| -> [f64; 2] {
        match e.2 {
            0 => [(e.0 as f64 + 0.5) * grid.delta_phi(), grid.p(e.1)],
            _ => [grid.phi(e.0), grid.p(e.1) + 0.5 * grid.delta_p()],
        }
    };
    let mut segs: Vec<(EdgeId, EdgeId)> = vec![];
    for j in 0..nf - 1 {
        for i in 0..np - 1 {
            let c = [at(j, i), at(j + 1, i), at(j + 1, i + 1), at(j, i + 1)];
            let bottom = (j, i, 0u8);
            let right = (j + 1, i, 1u8);
            let top = (j, i + 1, 0u8);
            let left = (j, i, 1u8);
            let mut crossed = vec![];
            if c[0] != c[1] {
                crossed.push(bottom);
            }
            if c[1] != c[2] {
                crossed.push(right);
            }
            if c[3] != c[2] {
                crossed.push(top);
            }
            if c[0] != c[3] {
                crossed.push(left);
            }
            match crossed.len() {
                2 => segs.push((crossed[0], crossed[1])),
                4 => {
                    // saddle: pair bottom-right and top-left
                    segs.push((crossed[0], crossed[1]));
                    segs.push((crossed[2], crossed[3]));
                }
                _ => {}
            }
        }
    }
    // link segments into chains by shared edge ids
    use std::collections::HashMap;
    let mut adj: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segs.iter().enumerate() {
        adj.entry(a).or_default().push(k);
        adj.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut chains = vec![];
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut pts = vec![segs[start].0, segs[start].1];
        // extend forward from the tail, then backward from the head
        for dir in 0..2 {
            loop {
                let tail = if dir == 0 { *pts.last().unwrap() } else { pts[0] };
                let next = adj
                    .get(&tail)
                    .and_then(|ks| ks.iter().find(|&&k| !used[k]).copied());
                let Some(k) = next else { break };
                used[k] = true;
                let (a, b) = segs[k];
                let other = if a == tail { b } else { a };
                if dir == 0 {
                    pts.push(other);
                } else {
                    pts.insert(0, other);
                }
            }
        }
        if pts.len() >= 3 {
            chains.push(pts.into_iter().map(midpoint).collect());
        }
    }
    chains
}

fn smooth_chain(chain: &[[f64; 2]], window: usize) -> Vec<[f64; 2]> {
    let n = chain.len();
    let w = window / 2;
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(w);
            let hi = (k + w + 1).min(n);
            let m = (hi - lo) as f64;
            [
                chain[lo..hi].iter().map(|p| p[0]).sum::<f64>() / m,
                chain[lo..hi].iter().map(|p| p[1]).sum::<f64>() / m,
            ]
        })
        .collect()
}

struct Run {
    pts: Vec<[f64; 2]>,
    vertical: bool,
}

/// Split a smoothed chain into maximal near-vertical / near-graph runs.
fn split_runs(chain: &[[f64; 2]]) -> Vec<Run> {
    let mut runs: Vec<Run> = vec![];
    let is_vertical = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]).abs() > 4.0 * (b[0] - a[0]).abs();
    for w in chain.windows(2) {
        let v = is_vertical(w[0], w[1]);
        match runs.last_mut() {
            Some(r) if r.vertical == v => r.pts.push(w[1]),
            _ => runs.push(Run { pts: vec![w[0], w[1]], vertical: v }),
        }
    }
    runs.retain(|r| r.pts.len() >= 3);
    runs
}

fn classify_runs(
    runs: &[Run],
    lookup: &impl Fn(f64, f64) -> bool,
    grid: SinogramGrid,
    arcs: &mut Vec<BoundaryArc>,
    verticals: &mut Vec<VerticalSegment>,
    corners: &mut Vec<Corner>,
) {
    let probe = 2.0 * grid.delta_phi().max(grid.delta_p());
    for (ri, run) in runs.iter().enumerate() {
        if run.vertical {
            let phi = run.pts.iter().map(|p| p[0]).sum::<f64>() / run.pts.len() as f64;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &run.pts {
                lo = lo.min(p[1]);
                hi = hi.max(p[1]);
            }
            let mid = 0.5 * (lo + hi);
            let side = if lookup(phi - probe, mid) { SegSide::Left } else { SegSide::Right };
            verticals.push(VerticalSegment { phi, p_lo: lo, p_hi: hi, side });
        } else {
            // sort by phi and keep a strictly increasing subsequence so the
            // run is the graph of a function
            let mut pts = run.pts.clone();
            pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
            pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12);
            if pts.len() < 3 {
                continue;
            }
            let phi_lo = pts[0][0];
            let phi_hi = pts[pts.len() - 1][0];
            let mid_idx = pts.len() / 2;
            let mid = pts[mid_idx];
            let side = if lookup(mid[0], mid[1] + probe) { ArcSide::Above } else { ArcSide::Below };
            let table = Arc::new(pts);
            let t1 = table.clone();
            let t2 = table.clone();
            arcs.push(BoundaryArc::new(
                format!("raster_arc_{ri}"),
                phi_lo,
                phi_hi,
                move |f| interp(&t1, f),
                move |f| interp_slope(&t2, f),
                side,
            ));
        }
    }
    // corners: junctions between consecutive runs of different character
    for w in runs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.vertical == b.vertical {
            continue;
        }
        let pa = *a.pts.last().unwrap();
        let pb = b.pts[0];
        if (pa[0] - pb[0]).abs() < 3.0 * grid.delta_phi() && (pa[1] - pb[1]).abs() < 3.0 * grid.delta_p()
        {
            let (arc_run, _) = if a.vertical { (b, a) } else { (a, b) };
            let k = arc_run.pts.len() / 2;
            let sl = slope_of(&arc_run.pts, k);
            corners.push(Corner {
                phi: 0.5 * (pa[0] + pb[0]),
                p: 0.5 * (pa[1] + pb[1]),
                slopes: (Slope::Finite(sl), Slope::Vertical),
            });
        }
    }
}

fn slope_of(pts: &[[f64; 2]], k: usize) -> f64 {
    let a = pts[k.saturating_sub(1)];
    let b = pts[(k + 1).min(pts.len() - 1)];
    if (b[0] - a[0]).abs() < 1e-12 {
        0.0
    } else {
        (b[1] - a[1]) / (b[0] - a[0])
    }
}

fn interp(pts: &[[f64; 2]], f: f64) -> f64 {
    let n = pts.len();
    if f <= pts[0][0] {
        return pts[0][1];
    }
    if f >= pts[n - 1][0] {
        return pts[n - 1][1];
    }
    let k = pts.partition_point(|q| q[0] < f).max(1);
    let (a, b) = (pts[k - 1], pts[k]);
    let t = (f - a[0]) / (b[0] - a[0]);
    a[1] + t * (b[1] - a[1])
}

fn interp_slope(pts: &[[f64; 2]], f: f64) -> f64 {
    let n = pts.len();
    let k = pts.partition_point(|q| q[0] < f).clamp(1, n - 1);
    let (a, b) = (pts[k - 1], pts[k]);
    (b[1] - a[1]) / (b[0] - a[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_roundtrip_of_roi() {
        let exact = super::super::Mask::roi(0.8).unwrap();
        let grid = SinogramGrid::standard(128, 129).unwrap();
        let mut bytes = vec![0u8; grid.n_phi * grid.n_p];
        for j in 0..grid.n_phi {
            for i in 0..grid.n_p {
                bytes[j * grid.n_p + i] = exact.inside(grid.phi(j), grid.p(i)) as u8;
            }
        }
        let m = from_raster(grid, &bytes).unwrap();
        assert!(m.approximate);
        // predicate reproduces the samples
        for j in (0..grid.n_phi).step_by(7) {
            for i in (0..grid.n_p).step_by(5) {
                assert_eq!(
                    m.inside(grid.phi(j), grid.p(i)),
                    exact.inside(grid.phi(j), grid.p(i))
                );
            }
        }
        // two near-horizontal arcs near p = +-0.8 with small slope
        assert!(m.arcs.len() >= 2, "found {} arcs", m.arcs.len());
        for arc in &m.arcs {
            let mid = 0.5 * (arc.phi_lo + arc.phi_hi);
            assert!(
                (arc.p(mid).abs() - 0.8).abs() < 2.0 * grid.delta_p(),
                "arc level {}",
                arc.p(mid)
            );
            assert!(arc.slope(mid).abs() < 0.1);
        }
        assert!(m.verticals.is_empty());
    }

    #[test]
    fn raster_finds_vertical_cut() {
        let exact = super::super::Mask::limited_angle(1.2, 1.8).unwrap();
        let grid = SinogramGrid::standard(256, 65).unwrap();
        let mut bytes = vec![0u8; grid.n_phi * grid.n_p];
        for j in 0..grid.n_phi {
            for i in 0..grid.n_p {
                bytes[j * grid.n_p + i] = exact.inside(grid.phi(j), grid.p(i)) as u8;
            }
        }
        let m = from_raster(grid, &bytes).unwrap();
        assert!(m.arcs.is_empty(), "spurious arcs: {:?}", m.arcs);
        assert_eq!(m.verticals.len(), 2);
        let mut phis: Vec<f64> = m.verticals.iter().map(|v| v.phi).collect();
        phis.sort_by(f64::total_cmp);
        assert!((phis[0] - 1.2).abs() < 2.0 * grid.delta_phi());
        assert!((phis[1] - 1.8).abs() < 2.0 * grid.delta_phi());
    }
}
